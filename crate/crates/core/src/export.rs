//! Result export: CSV (bit-exact schema), standalone SVG plots, atomic file
//! writes, and the decimal float formatting used by model files.

use std::fs;
use std::path::Path;

use crate::bench::{BenchRow, SerCurve, SerPoint};
use crate::error::{Error, Result};

/// SER results header; parsers rely on this exact string.
pub const SER_CSV_HEADER: &str = "detector,snr_db,trials,symbol_errors,ser,ci_low,ci_high,seed";

/// Runtime table header.
pub const BENCH_CSV_HEADER: &str = "detector,repetitions,mean_seconds,std_seconds";

/// Decimal scientific notation with 18 significant digits — enough for any
/// `f64` to reload bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

/// Writes through a temporary file in the same directory plus rename, so a
/// partial file is never observable at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One CSV row of an SER curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SerRow {
    pub detector: String,
    pub snr_db: f64,
    pub trials: usize,
    pub symbol_errors: u64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

pub fn curves_to_rows(curves: &[SerCurve]) -> Vec<SerRow> {
    curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(|p| SerRow {
                detector: c.detector.clone(),
                snr_db: p.snr_db,
                trials: p.trials,
                symbol_errors: p.symbol_errors,
                ser: p.ser,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
                seed: c.seed,
            })
        })
        .collect()
}

pub fn ser_csv(curves: &[SerCurve]) -> Result<String> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(Error::Empty("curve list"));
    }
    let mut out = String::from(SER_CSV_HEADER);
    out.push('\n');
    for row in curves_to_rows(curves) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.detector,
            row.snr_db,
            row.trials,
            row.symbol_errors,
            row.ser,
            row.ci_low,
            row.ci_high,
            row.seed
        ));
    }
    Ok(out)
}

/// Parses text produced by [`ser_csv`]; `parse_ser_csv(ser_csv(x)?)` gives
/// back exactly `curves_to_rows(x)`.
pub fn parse_ser_csv(text: &str) -> Result<Vec<SerRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SER_CSV_HEADER => {}
        other => {
            return Err(Error::InvalidParam(format!(
                "bad results header: {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::InvalidParam(format!(
                "row {}: expected 8 fields, got {}",
                i + 2,
                f.len()
            )));
        }
        let bad = |what: &str| Error::InvalidParam(format!("row {}: bad {what}", i + 2));
        rows.push(SerRow {
            detector: f[0].to_string(),
            snr_db: f[1].parse().map_err(|_| bad("snr_db"))?,
            trials: f[2].parse().map_err(|_| bad("trials"))?,
            symbol_errors: f[3].parse().map_err(|_| bad("symbol_errors"))?,
            ser: f[4].parse().map_err(|_| bad("ser"))?,
            ci_low: f[5].parse().map_err(|_| bad("ci_low"))?,
            ci_high: f[6].parse().map_err(|_| bad("ci_high"))?,
            seed: f[7].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(rows)
}

pub fn export_ser_csv(curves: &[SerCurve], path: &Path) -> Result<()> {
    write_atomic(path, ser_csv(curves)?.as_bytes())
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Empty("bench table"));
    }
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.detector, r.repetitions, r.mean_seconds, r.std_seconds
        ));
    }
    Ok(out)
}

pub fn export_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    write_atomic(path, bench_csv(rows)?.as_bytes())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const W: f64 = 720.0;
const H: f64 = 480.0;
const ML: f64 = 70.0; // margins
const MR: f64 = 160.0;
const MT: f64 = 30.0;
const MB: f64 = 55.0;

/// Log-y SER-vs-SNR line plot, one series per curve, written as a
/// standalone SVG. Zero-SER points cannot be placed on a log axis and are
/// skipped.
pub fn ser_svg(curves: &[SerCurve]) -> Result<String> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(Error::Empty("curve list"));
    }
    let xs: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.snr_db))
        .collect();
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };

    let positive: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.ser))
        .filter(|&s| s > 0.0)
        .collect();
    let ymin_log = positive
        .iter()
        .fold(-1.0f64, |m, &s| m.min(s.log10()))
        .floor();
    let ymax_log = 0.0;

    let px = |snr: f64| ML + (snr - xmin) / xspan * (W - ML - MR);
    let py = |ser: f64| {
        let l = ser.log10().clamp(ymin_log, ymax_log);
        MT + (ymax_log - l) / (ymax_log - ymin_log) * (H - MT - MB)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Grid and axis labels.
    let mut dec = ymin_log as i64;
    while dec <= ymax_log as i64 {
        let y = py(10f64.powi(dec as i32));
        svg.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            W - MR
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">1e{dec}</text>\n",
            ML - 6.0,
            y + 4.0
        ));
        dec += 1;
    }
    for &snr in &xs {
        let x = px(snr);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{snr}</text>\n",
            H - MB + 18.0
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">SNR (dB)</text>\n",
        (ML + W - MR) / 2.0,
        H - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">SER</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    ));

    for (ci, curve) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let pts: Vec<&SerPoint> = curve.points.iter().filter(|p| p.ser > 0.0).collect();
        if !pts.is_empty() {
            let path = pts
                .iter()
                .map(|p| format!("{:.2},{:.2}", px(p.snr_db), py(p.ser)))
                .collect::<Vec<_>>()
                .join(" ");
            svg.push_str(&format!(
                "<polyline points=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
            ));
            for p in &pts {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    px(p.snr_db),
                    py(p.ser)
                ));
            }
        }
        let ly = MT + 16.0 + 18.0 * ci as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            W - MR + 10.0,
            W - MR + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            W - MR + 40.0,
            ly + 4.0,
            curve.detector
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn export_ser_svg(curves: &[SerCurve], path: &Path) -> Result<()> {
    write_atomic(path, ser_svg(curves)?.as_bytes())
}
