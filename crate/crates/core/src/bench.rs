//! Monte-Carlo SER sweeps, layer sweeps and runtime benchmarks.
//!
//! Every reported number is a pure function of the sweep definition and the
//! master seed. Instance streams depend only on `(master seed, point,
//! trial)` — never on the detector — so curves produced for different
//! detectors from the same definition are paired sample-for-sample.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hnet::{detect_hnet_prefix, HnetModel};
use crate::linalg::Vector;
use crate::model::{
    complex_symbol_errors, generate_sample, noise_variance_real, quantize, RealSample, SnrPolicy,
    SystemConfig,
};
use crate::psadmm::{detect_mmse, detect_psadmm_untraced, detect_zf, PenaltyParams};
use crate::psnet::PsnetModel;
use crate::rng::RngStream;

/// Substream tag for SER evaluation at grid point `p` is `EVAL_TAG_BASE + p`;
/// dataset generation owns tags 0..4, so evaluation never replays training
/// draws even under the same master seed.
const EVAL_TAG_BASE: u64 = 4;
const BENCH_TAG: u64 = 1 << 20;

/// A detector the harness can run. `Oracle` returns the true symbols and
/// exists as a zero-error, near-zero-cost baseline for harness sanity
/// checks.
#[derive(Debug, Clone)]
pub enum DetectorSpec {
    Oracle,
    Zf,
    Mmse,
    PsAdmm { theta: PenaltyParams, iters: usize },
    Psnet { model: PsnetModel },
    Hnet { model: HnetModel, depth: usize },
}

impl DetectorSpec {
    /// Full-depth network detector.
    pub fn hnet(model: HnetModel) -> DetectorSpec {
        let depth = model.depth();
        DetectorSpec::Hnet { model, depth }
    }

    pub fn name(&self) -> String {
        match self {
            DetectorSpec::Oracle => "oracle".into(),
            DetectorSpec::Zf => "zf".into(),
            DetectorSpec::Mmse => "mmse".into(),
            DetectorSpec::PsAdmm { .. } => "psadmm".into(),
            DetectorSpec::Psnet { .. } => "psnet".into(),
            DetectorSpec::Hnet { model, depth } => {
                if *depth == model.depth() {
                    "hnet".into()
                } else {
                    format!("hnet_L{depth}")
                }
            }
        }
    }

    /// Consistency against the system the sweep will generate.
    fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        match self {
            DetectorSpec::Psnet { model } => {
                if model.q != cfg.q() {
                    return Err(Error::InvalidParam(format!(
                        "psnet model has q = {}, system has q = {}",
                        model.q,
                        cfg.q()
                    )));
                }
            }
            DetectorSpec::Hnet { model, depth } => {
                if model.q != cfg.q() || model.k() != cfg.k() {
                    return Err(Error::InvalidParam(format!(
                        "hnet model built for q = {}, K = {}; system has q = {}, K = {}",
                        model.q,
                        model.k(),
                        cfg.q(),
                        cfg.k()
                    )));
                }
                if *depth < 1 || *depth > model.depth() {
                    return Err(Error::InvalidParam(format!(
                        "depth {depth} outside 1..={}",
                        model.depth()
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Unquantized estimate for one instance.
    pub fn detect(&self, cfg: &SystemConfig, sample: &RealSample) -> Result<Vector> {
        match self {
            DetectorSpec::Oracle => Ok(sample.s.clone()),
            DetectorSpec::Zf => detect_zf(&sample.y, &sample.h),
            DetectorSpec::Mmse => {
                let sigma2r = noise_variance_real(cfg, sample.snr_db);
                detect_mmse(&sample.y, &sample.h, sigma2r, cfg.es_real())
            }
            DetectorSpec::PsAdmm { theta, iters } => {
                detect_psadmm_untraced(&sample.y, &sample.h, theta, *iters)
            }
            DetectorSpec::Psnet { model } => {
                detect_psadmm_untraced(&sample.y, &sample.h, &model.theta, model.layers)
            }
            DetectorSpec::Hnet { model, depth } => {
                detect_hnet_prefix(&sample.y, &sample.h, model, *depth)
            }
        }
    }
}

/// Definition of one SER-vs-SNR sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub detector: DetectorSpec,
    pub cfg: SystemConfig,
    /// dB values, strictly increasing.
    pub snr_grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidParam("trials must be >= 1".into()));
        }
        if self.snr_grid.is_empty() {
            return Err(Error::Empty("snr grid"));
        }
        if self.snr_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParam(
                "snr grid must be strictly increasing".into(),
            ));
        }
        self.detector.validate(&self.cfg)
    }
}

/// One measured SER point.
#[derive(Debug, Clone, PartialEq)]
pub struct SerPoint {
    pub snr_db: f64,
    pub trials: usize,
    pub symbol_errors: u64,
    pub symbols: u64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// SER curve of one detector over the SNR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SerCurve {
    pub detector: String,
    pub seed: u64,
    pub points: Vec<SerPoint>,
}

/// 95% Wilson score interval for `errors` out of `total`.
pub fn wilson_interval(errors: u64, total: u64) -> (f64, f64) {
    assert!(total > 0, "wilson interval needs at least one observation");
    let z = 1.959_963_984_540_054_f64;
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At the boundaries the exact endpoints are 0 / 1; don't let fp noise
    // in center - half leak through.
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors == total {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Instance stream for trial `t` at grid point `p`; independent of the
/// detector under test.
pub fn instance_stream(master_seed: u64, point: usize, trial: usize) -> RngStream {
    RngStream::new(master_seed, trial as u64).substream(EVAL_TAG_BASE + point as u64)
}

/// Monte-Carlo SER estimate over the grid. Per-trial seeds derive from
/// `(master seed, trial index)`, so the result is independent of the worker
/// schedule.
pub fn ser_sweep(spec: &SweepSpec) -> Result<SerCurve> {
    spec.validate()?;
    let cfg = &spec.cfg;
    let kc = cfg.kc();
    let mut points = Vec::with_capacity(spec.snr_grid.len());
    for (p, &snr_db) in spec.snr_grid.iter().enumerate() {
        let errors: u64 = (0..spec.trials)
            .into_par_iter()
            .map(|t| -> Result<u64> {
                let stream = instance_stream(spec.master_seed, p, t);
                let sample = generate_sample(cfg, SnrPolicy::Fixed(snr_db), stream);
                let x = spec.detector.detect(cfg, &sample)?;
                let s_hat = quantize(&x, cfg.q())?;
                complex_symbol_errors(&s_hat, &sample.s, kc)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let symbols = (spec.trials * kc) as u64;
        let (ci_low, ci_high) = wilson_interval(errors, symbols);
        points.push(SerPoint {
            snr_db,
            trials: spec.trials,
            symbol_errors: errors,
            symbols,
            ser: errors as f64 / symbols as f64,
            ci_low,
            ci_high,
        });
    }
    Ok(SerCurve {
        detector: spec.detector.name(),
        seed: spec.master_seed,
        points,
    })
}

/// One SER curve per requested depth, sharing instance streams across
/// depths for paired comparisons. For the network detector the depth
/// truncates a trained model; for the unfolded/classical detectors it is
/// the iteration count.
pub fn layer_sweep(spec: &SweepSpec, depths: &[usize]) -> Result<Vec<SerCurve>> {
    if depths.is_empty() {
        return Err(Error::Empty("layer list"));
    }
    let mut curves = Vec::with_capacity(depths.len());
    for &l in depths {
        let detector = match &spec.detector {
            DetectorSpec::Hnet { model, .. } => DetectorSpec::Hnet {
                model: model.clone(),
                depth: l,
            },
            DetectorSpec::Psnet { model } => {
                let mut m = model.clone();
                m.layers = l;
                DetectorSpec::Psnet { model: m }
            }
            DetectorSpec::PsAdmm { theta, .. } => DetectorSpec::PsAdmm {
                theta: theta.clone(),
                iters: l,
            },
            other => {
                return Err(Error::InvalidParam(format!(
                    "layer sweep needs a layered detector, got {}",
                    other.name()
                )))
            }
        };
        let mut curve = ser_sweep(&SweepSpec {
            detector,
            ..spec.clone()
        })?;
        // Keep the depth visible even at full model depth.
        curve.detector = match &spec.detector {
            DetectorSpec::Hnet { .. } => format!("hnet_L{l}"),
            DetectorSpec::Psnet { .. } => format!("psnet_L{l}"),
            _ => format!("psadmm_L{l}"),
        };
        curves.push(curve);
    }
    Ok(curves)
}

/// Mean/stddev of per-detection wall time.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub detector: String,
    pub repetitions: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

/// Wall-clock benchmark over identical instance streams. Every detector
/// sees the same `warmup + repetitions` instances (fresh channel each);
/// the first `warmup` detections are excluded from timing. Detections run
/// sequentially so timings are uncontended.
pub fn runtime_bench(
    detectors: &[DetectorSpec],
    cfg: &SystemConfig,
    snr_db: f64,
    repetitions: usize,
    warmup: usize,
    master_seed: u64,
) -> Result<Vec<BenchRow>> {
    if repetitions < 100 {
        return Err(Error::InvalidParam(format!(
            "need at least 100 repetitions, got {repetitions}"
        )));
    }
    if detectors.is_empty() {
        return Err(Error::Empty("detector list"));
    }
    for d in detectors {
        d.validate(cfg)?;
    }
    let instances: Vec<RealSample> = (0..warmup + repetitions)
        .into_par_iter()
        .map(|i| {
            let stream = RngStream::new(master_seed, i as u64).substream(BENCH_TAG);
            generate_sample(cfg, SnrPolicy::Fixed(snr_db), stream)
        })
        .collect();

    let mut rows = Vec::with_capacity(detectors.len());
    for det in detectors {
        for sample in instances.iter().take(warmup) {
            std::hint::black_box(det.detect(cfg, sample)?);
        }
        let mut times = Vec::with_capacity(repetitions);
        for sample in instances.iter().skip(warmup) {
            let t0 = Instant::now();
            let out = det.detect(cfg, sample)?;
            let dt = t0.elapsed().as_secs_f64();
            std::hint::black_box(out);
            times.push(dt);
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / (times.len().max(2) - 1) as f64;
        rows.push(BenchRow {
            detector: det.name(),
            repetitions,
            mean_seconds: mean,
            std_seconds: var.sqrt(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::new(8, 2, 2, 1).unwrap()
    }

    #[test]
    fn oracle_has_zero_ser() {
        let spec = SweepSpec {
            detector: DetectorSpec::Oracle,
            cfg: cfg(),
            snr_grid: vec![0.0, 5.0, 10.0],
            trials: 200,
            master_seed: 11,
        };
        let curve = ser_sweep(&spec).unwrap();
        assert!(curve.points.iter().all(|p| p.symbol_errors == 0));
        assert!(curve.points.iter().all(|p| p.ser == 0.0));
    }

    #[test]
    fn sweep_is_reproducible() {
        let spec = SweepSpec {
            detector: DetectorSpec::Mmse,
            cfg: cfg(),
            snr_grid: vec![2.0, 6.0],
            trials: 500,
            master_seed: 5,
        };
        let a = ser_sweep(&spec).unwrap();
        let b = ser_sweep(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_must_increase() {
        let mut spec = SweepSpec {
            detector: DetectorSpec::Zf,
            cfg: cfg(),
            snr_grid: vec![4.0, 4.0],
            trials: 10,
            master_seed: 1,
        };
        assert!(ser_sweep(&spec).is_err());
        spec.snr_grid = vec![];
        assert!(ser_sweep(&spec).is_err());
        spec.snr_grid = vec![4.0];
        spec.trials = 0;
        assert!(ser_sweep(&spec).is_err());
    }

    #[test]
    fn ser_nonincreasing_up_to_interval_overlap() {
        let theta = PenaltyParams::default_fixed(2, 1.5).unwrap();
        for det in [
            DetectorSpec::Mmse,
            DetectorSpec::Zf,
            DetectorSpec::PsAdmm { theta, iters: 20 },
        ] {
            let curve = ser_sweep(&SweepSpec {
                detector: det,
                cfg: cfg(),
                snr_grid: vec![0.0, 4.0, 8.0, 12.0],
                trials: 2_000,
                master_seed: 9,
            })
            .unwrap();
            for w in curve.points.windows(2) {
                let ok = w[1].ser <= w[0].ser || w[1].ci_low <= w[0].ci_high;
                assert!(ok, "{}: {:?} then {:?}", curve.detector, w[0], w[1]);
            }
        }
    }

    #[test]
    fn paired_streams_are_detector_independent() {
        let a = instance_stream(3, 1, 7);
        let b = instance_stream(3, 1, 7);
        assert_eq!(a, b);
        assert_ne!(instance_stream(3, 0, 7), instance_stream(3, 1, 7));
        assert_ne!(instance_stream(3, 1, 6), instance_stream(3, 1, 7));
    }

    #[test]
    fn wilson_brackets_and_shrinks() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.06);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && 0.5 < hi);

        // Quadrupling the sample count roughly halves the interval.
        let w1 = {
            let (lo, hi) = wilson_interval(100, 1_000);
            hi - lo
        };
        let w2 = {
            let (lo, hi) = wilson_interval(400, 4_000);
            hi - lo
        };
        let ratio = w1 / w2;
        assert!((1.5..2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn single_layer_sweep_reduces_to_ser_sweep() {
        let theta = PenaltyParams::default_fixed(2, 1.5).unwrap();
        let spec = SweepSpec {
            detector: DetectorSpec::PsAdmm {
                theta,
                iters: 30,
            },
            cfg: cfg(),
            snr_grid: vec![6.0],
            trials: 300,
            master_seed: 21,
        };
        let family = layer_sweep(&spec, &[30]).unwrap();
        let single = ser_sweep(&spec).unwrap();
        assert_eq!(family.len(), 1);
        assert_eq!(family[0].points, single.points);
    }

    #[test]
    fn layer_sweep_rejects_flat_detectors() {
        let spec = SweepSpec {
            detector: DetectorSpec::Zf,
            cfg: cfg(),
            snr_grid: vec![6.0],
            trials: 10,
            master_seed: 2,
        };
        assert!(layer_sweep(&spec, &[1, 2]).is_err());
    }

    #[test]
    fn bench_enforces_minimum_repetitions() {
        let dets = [DetectorSpec::Oracle];
        assert!(runtime_bench(&dets, &cfg(), 10.0, 99, 5, 1).is_err());
    }

    #[test]
    fn bench_oracle_is_near_zero() {
        let rows = runtime_bench(
            &[DetectorSpec::Oracle, DetectorSpec::Mmse],
            &cfg(),
            10.0,
            200,
            10,
            3,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].mean_seconds < rows[1].mean_seconds);
        assert!(rows[0].mean_seconds < 1e-4);
    }
}
