//! Subcommand implementations. Every command is replayable from its config
//! file plus seed, and all output files are written atomically.

use std::path::{Path, PathBuf};

use admm_mimo::bench::{layer_sweep, runtime_bench, ser_sweep, DetectorSpec, SweepSpec};
use admm_mimo::export::{
    export_bench_csv, export_ser_csv, export_ser_svg, write_atomic,
};
use admm_mimo::hnet::{train_hnet, HnetModel};
use admm_mimo::psadmm::PenaltyParams;
use admm_mimo::psnet::{train_psnet, PsnetModel};
use admm_mimo::rng::RngStream;

use crate::config::RunConfig;
use crate::CliError;

/// Stream ids reserved for trainer initialization; dataset samples use ids
/// 0..m, so these stay out of their way.
const PSNET_INIT_STREAM: u64 = (1 << 62) | 1;
const HNET_INIT_STREAM: u64 = (1 << 62) | 2;

fn side_file(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}{suffix}"))
}

pub fn gen_data(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    let spec = cfg.dataset();
    let mut text = serde_json::to_string(&spec)
        .map_err(|e| CliError::Runtime(format!("serialize dataset descriptor: {e}")))?;
    text.push('\n');
    write_atomic(out, text.as_bytes())?;
    println!("wrote dataset descriptor to {}", out.display());
    Ok(())
}

pub fn train_psnet_cmd(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    let init = RngStream::new(cfg.seed, PSNET_INIT_STREAM);
    let (model, history) = train_psnet(&cfg.dataset(), cfg.layers, &cfg.train_config(), init)?;

    model.save(out)?;
    let mut csv = String::from("epoch,loss\n");
    for (e, loss) in history.iter().enumerate() {
        csv.push_str(&format!("{e},{loss}\n"));
    }
    let loss_path = side_file(out, "_loss.csv");
    write_atomic(&loss_path, csv.as_bytes())?;
    println!(
        "trained penalties: rho = {:.6}, alpha = {:?}; final loss {:.6}",
        model.theta.rho(),
        model.theta.alpha(),
        model.training_meta.final_loss
    );
    println!("wrote {} and {}", out.display(), loss_path.display());
    Ok(())
}

pub fn train_hnet_cmd(
    config: &Path,
    penalties: &Path,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    let psnet = PsnetModel::load(penalties)
        .map_err(|e| CliError::Config(format!("{}: {e}", penalties.display())))?;
    if psnet.q != cfg.q {
        return Err(CliError::Config(format!(
            "penalties file has q = {}, config has q = {}",
            psnet.q, cfg.q
        )));
    }
    let init = RngStream::new(cfg.seed, HNET_INIT_STREAM);
    let (model, history) = train_hnet(
        &cfg.dataset(),
        &psnet.theta,
        &cfg.train_config(),
        cfg.n,
        cfg.layers,
        init,
    )?;

    model.save(out)?;
    let mut csv = String::from("layer,epoch,loss\n");
    for row in &history {
        csv.push_str(&format!("{},{},{}\n", row.layer, row.epoch, row.loss));
    }
    let loss_path = side_file(out, "_loss.csv");
    write_atomic(&loss_path, csv.as_bytes())?;
    println!(
        "trained {} layers (n = {}); per-layer final loss {:?}",
        model.depth(),
        model.n,
        model.training_meta.layer_final_loss
    );
    println!("wrote {} and {}", out.display(), loss_path.display());
    Ok(())
}

fn resolve_detector(
    cfg: &RunConfig,
    name: &str,
    model: Option<&Path>,
) -> Result<DetectorSpec, CliError> {
    match name {
        "zf" => Ok(DetectorSpec::Zf),
        "mmse" => Ok(DetectorSpec::Mmse),
        "psadmm" => {
            let theta = PenaltyParams::default_fixed(cfg.q, cfg.rho_init)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(DetectorSpec::PsAdmm {
                theta,
                iters: cfg.layers,
            })
        }
        "psnet" => {
            let path = model.ok_or_else(|| {
                CliError::Config("detector psnet requires --model <psnet model file>".into())
            })?;
            let m = PsnetModel::load(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if m.q != cfg.q {
                return Err(CliError::Config(format!(
                    "model has q = {}, config has q = {}",
                    m.q, cfg.q
                )));
            }
            Ok(DetectorSpec::Psnet { model: m })
        }
        "hnet" => {
            let path = model.ok_or_else(|| {
                CliError::Config("detector hnet requires --model <hnet model file>".into())
            })?;
            let m = HnetModel::load(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if m.q != cfg.q || m.k() != 2 * cfg.kc {
                return Err(CliError::Config(format!(
                    "model built for q = {}, K = {}; config has q = {}, K = {}",
                    m.q,
                    m.k(),
                    cfg.q,
                    2 * cfg.kc
                )));
            }
            Ok(DetectorSpec::hnet(m))
        }
        other => Err(CliError::Config(format!(
            "unknown detector \"{other}\" (expected zf|mmse|psadmm|psnet|hnet)"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    config: &Path,
    detector: &str,
    model: Option<&Path>,
    layers: Option<&str>,
    plot: bool,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    let det = resolve_detector(&cfg, detector, model)?;
    let spec = SweepSpec {
        detector: det,
        cfg: cfg.system()?,
        snr_grid: cfg.snr_db_grid.clone(),
        trials: cfg.trials,
        master_seed: cfg.seed,
    };

    let curves = match layers {
        Some(list) => {
            let depths: Vec<usize> = list
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| CliError::Config(format!("bad layer count \"{tok}\"")))
                })
                .collect::<Result<_, _>>()?;
            layer_sweep(&spec, &depths)?
        }
        None => vec![ser_sweep(&spec)?],
    };

    export_ser_csv(&curves, out)?;
    println!("wrote {}", out.display());
    if plot {
        let svg = out.with_extension("svg");
        export_ser_svg(&curves, &svg)?;
        println!("wrote {}", svg.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn bench(
    config: &Path,
    detectors: &str,
    psnet_model: Option<&Path>,
    hnet_model: Option<&Path>,
    warmup: usize,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    if cfg.trials < 100 {
        return Err(CliError::Config(format!(
            "bench needs trials >= 100, config has {}",
            cfg.trials
        )));
    }
    let mut specs = Vec::new();
    for name in detectors.split(',') {
        let name = name.trim();
        let model = match name {
            "psnet" => psnet_model,
            "hnet" => hnet_model,
            _ => None,
        };
        specs.push(resolve_detector(&cfg, name, model)?);
    }
    let snr_db = cfg.snr_db_grid[cfg.snr_db_grid.len() / 2];
    let rows = runtime_bench(
        &specs,
        &cfg.system()?,
        snr_db,
        cfg.trials,
        warmup,
        cfg.seed,
    )?;
    export_bench_csv(&rows, out)?;
    for r in &rows {
        println!(
            "{:>8}: mean {:.6} s, std {:.6} s over {} detections",
            r.detector, r.mean_seconds, r.std_seconds, r.repetitions
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
