//! Unfolded detector with trainable penalty parameters.
//!
//! The network is the detector of [`crate::psadmm`] read as `L` layers: the
//! sweep argument becomes a linear transform per plane, the box projection
//! becomes the `sgnlin` activation, and the `q + 1` scalars
//! `θ = {α_1..α_q, ρ}` — shared by all layers — are trained end-to-end by
//! SGD on the mean squared error of the final layer against the true
//! symbols. Unfolding changes nothing about the computation:
//! [`psnet_forward`] and [`crate::psadmm::detect_psadmm`] produce
//! bit-identical iterates.
//!
//! Gradients are central finite differences over the `q + 1` scalars; with
//! so few parameters this costs `2(q+1)` forward passes per step and avoids
//! differentiating through `L` chained SPD solves.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{DatasetSpec, RealSample};
use crate::psadmm::{project_box, run_layers, PenaltyParams, Prepared, FEASIBILITY_MARGIN};
use crate::rng::RngStream;

/// Fixed chunk size for parallel batch reductions; chunk boundaries depend
/// only on sample index, so sums are schedule-independent.
const PAR_CHUNK: usize = 32;

/// Samples used for the per-epoch loss history.
const EVAL_SUBSET: usize = 512;

/// Training knobs. `epochs` counts full passes; the learning rate decays
/// multiplicatively per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub samples: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub fd_step: f64,
    pub lr_decay: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 || self.epochs < 1 || self.batch < 1 {
            return Err(Error::InvalidParam(
                "samples, epochs and batch must be >= 1".into(),
            ));
        }
        if self.batch > self.samples {
            return Err(Error::InvalidParam(format!(
                "batch {} exceeds sample count {}",
                self.batch, self.samples
            )));
        }
        if !(self.lr > 0.0) || !(self.fd_step > 0.0) || !(self.lr_decay > 0.0) || self.lr_decay > 1.0
        {
            return Err(Error::InvalidParam(
                "need lr > 0, fd_step > 0 and lr_decay in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub seed: u64,
}

/// Trained penalty parameters with their layer count.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnetModel {
    pub theta: PenaltyParams,
    pub layers: usize,
    pub q: u32,
    pub training_meta: TrainingMeta,
}

/// Pointwise activation `min(max(−1, w), 1)`; identical to the box
/// projection of the classical detector.
pub fn sgnlin(w: &[f64]) -> Vector {
    project_box(w)
}

/// Linear transform feeding plane `i` (1-based):
/// `w_i = c_i (x − Σ_{j≠i} 2^{j−1} z_j + u)`. The caller supplies planes
/// below `i` already updated and planes above `i` from the previous layer,
/// i.e. the same Gauss-Seidel bookkeeping as the sweep.
pub fn w_transform(
    i: usize,
    x: &[f64],
    z: &[Vector],
    u: &[f64],
    theta: &PenaltyParams,
) -> Result<Vector> {
    if i < 1 || i > theta.q() {
        return Err(Error::InvalidParam(format!(
            "plane index {i} outside 1..={}",
            theta.q()
        )));
    }
    if z.len() != theta.q() {
        return Err(Error::dim(
            "w_transform",
            format!("{} planes vs q = {}", z.len(), theta.q()),
        ));
    }
    let c = theta.plane_coefficient(i);
    let k = x.len();
    let mut w = vec![0.0; k];
    for (kk, wk) in w.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, plane) in z.iter().enumerate() {
            if j + 1 != i {
                s += (1u64 << j) as f64 * plane[kk];
            }
        }
        *wk = c * (x[kk] - s + u[kk]);
    }
    Ok(w)
}

/// `L` unfolded layers from zero initialization. Returns the final iterate
/// and the per-layer iterates.
pub fn psnet_forward(
    y: &[f64],
    h: &crate::linalg::Matrix,
    theta: &PenaltyParams,
    layers: usize,
) -> Result<(Vector, Vec<Vector>)> {
    let prep = Prepared::new(y, h)?;
    let mut trace = Vec::with_capacity(layers);
    let state = run_layers(&prep, theta, layers, |_, x, _, _, _| trace.push(x.to_vec()))?;
    Ok((state.x, trace))
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn forward_sq_err(prep: &Prepared, theta: &PenaltyParams, layers: usize, s: &[f64]) -> Result<f64> {
    let state = run_layers(prep, theta, layers, |_, _, _, _, _| {})?;
    Ok(sq_err(&state.x, s))
}

/// Mean squared error of the final layer over a batch:
/// `(1/m) Σ ‖x_L − s‖²`, no quantization.
pub fn psnet_loss(batch: &[RealSample], theta: &PenaltyParams, layers: usize) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let partials: Vec<f64> = batch
        .par_chunks(PAR_CHUNK)
        .map(|chunk| -> Result<f64> {
            let mut acc = 0.0;
            for sample in chunk {
                let prep = Prepared::new(&sample.y, &sample.h)?;
                acc += forward_sq_err(&prep, theta, layers, &sample.s)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(partials.iter().sum::<f64>() / batch.len() as f64)
}

/// Central-difference gradient over `[α_1..α_q, ρ]` with per-component step
/// `h·max(1, |θ_c|)`. A perturbation that exits the feasible region halves
/// its step, at most ten times, before failing.
pub fn grad_fd(
    theta: &PenaltyParams,
    batch: &[RealSample],
    layers: usize,
    h: f64,
) -> Result<Vector> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParam(format!("fd step must be > 0, got {h}")));
    }
    let q = theta.q();
    let dims = q + 1;

    let component = |c: usize| -> f64 {
        if c < q {
            theta.alpha()[c]
        } else {
            theta.rho()
        }
    };
    let perturbed = |c: usize, delta: f64| -> Result<PenaltyParams> {
        let mut alpha = theta.alpha().to_vec();
        let mut rho = theta.rho();
        if c < q {
            alpha[c] += delta;
        } else {
            rho += delta;
        }
        PenaltyParams::new(alpha, rho)
    };

    // Resolve a feasible step per component, then evaluate all sides in one
    // pass over the batch.
    let mut sides = Vec::with_capacity(2 * dims);
    let mut steps = Vec::with_capacity(dims);
    for c in 0..dims {
        let mut hc = h * component(c).abs().max(1.0);
        let mut resolved = None;
        for _ in 0..=10 {
            match (perturbed(c, hc), perturbed(c, -hc)) {
                (Ok(plus), Ok(minus)) => {
                    resolved = Some((plus, minus));
                    break;
                }
                _ => hc *= 0.5,
            }
        }
        let (plus, minus) = resolved.ok_or_else(|| {
            Error::InvalidParam(format!(
                "finite-difference step for component {c} cannot stay feasible"
            ))
        })?;
        sides.push(plus);
        sides.push(minus);
        steps.push(hc);
    }

    let partials: Vec<Vec<f64>> = batch
        .par_chunks(PAR_CHUNK)
        .map(|chunk| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; sides.len()];
            for sample in chunk {
                let prep = Prepared::new(&sample.y, &sample.h)?;
                for (acc_c, side) in acc.iter_mut().zip(sides.iter()) {
                    *acc_c += forward_sq_err(&prep, side, layers, &sample.s)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut totals = vec![0.0; sides.len()];
    for part in &partials {
        for (t, p) in totals.iter_mut().zip(part.iter()) {
            *t += p;
        }
    }
    let m = batch.len() as f64;
    Ok((0..dims)
        .map(|c| (totals[2 * c] - totals[2 * c + 1]) / m / (2.0 * steps[c]))
        .collect())
}

fn project_theta(mut alpha: Vec<f64>, rho: f64) -> PenaltyParams {
    let rho = rho.clamp(1e-3, 1e3);
    for (i, a) in alpha.iter_mut().enumerate() {
        let bound = (1.0 - FEASIBILITY_MARGIN) * 4f64.powi(i as i32) * rho;
        *a = a.clamp(0.0, bound);
    }
    PenaltyParams::new(alpha, rho).expect("projection lands inside the feasible set")
}

/// End-to-end SGD training of the penalty parameters. Returns the model and
/// the loss history (entry 0 is the pre-training loss, then one entry per
/// epoch, evaluated on a fixed subset of the training set).
pub fn train_psnet(
    data: &DatasetSpec,
    layers: usize,
    tc: &TrainConfig,
    init: RngStream,
) -> Result<(PsnetModel, Vec<f64>)> {
    tc.validate()?;
    if layers < 1 {
        return Err(Error::InvalidParam("layer count must be >= 1".into()));
    }
    if tc.samples > data.m {
        return Err(Error::InvalidParam(format!(
            "train config asks for {} samples but the dataset has {}",
            tc.samples, data.m
        )));
    }

    let rho0 = 0.5 + 1.5 * init.rng().gen::<f64>();
    let mut theta = PenaltyParams::default_fixed(data.q, rho0).expect("interior point");

    let mut samples: Vec<RealSample> = (0..tc.samples)
        .into_par_iter()
        .map(|i| data.sample(i))
        .collect();
    let eval: Vec<RealSample> = samples
        .iter()
        .take(EVAL_SUBSET.min(tc.samples))
        .cloned()
        .collect();

    let mut history = Vec::with_capacity(tc.epochs + 1);
    history.push(psnet_loss(&eval, &theta, layers)?);

    let mut lr = tc.lr;
    for epoch in 0..tc.epochs {
        let mut rng = init.substream(1 + epoch as u64).rng();
        samples.shuffle(&mut rng);
        for (b, batch) in samples.chunks(tc.batch).enumerate() {
            let g = grad_fd(&theta, batch, layers, tc.fd_step)?;
            let q = theta.q();
            let alpha: Vec<f64> = theta
                .alpha()
                .iter()
                .zip(g.iter())
                .map(|(a, gi)| a - lr * gi)
                .collect();
            let rho = theta.rho() - lr * g[q];
            if alpha.iter().any(|a| !a.is_finite()) || !rho.is_finite() {
                return Err(Error::NonFiniteLoss {
                    context: format!("epoch {epoch}, batch {b}"),
                    rho: theta.rho(),
                    alpha: theta.alpha().to_vec(),
                });
            }
            theta = project_theta(alpha, rho);
        }
        let loss = psnet_loss(&eval, &theta, layers)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: format!("epoch {epoch} evaluation"),
                rho: theta.rho(),
                alpha: theta.alpha().to_vec(),
            });
        }
        history.push(loss);
        lr *= tc.lr_decay;
    }

    let final_loss = *history.last().expect("history non-empty");
    Ok((
        PsnetModel {
            theta,
            layers,
            q: data.q,
            training_meta: TrainingMeta {
                epochs: tc.epochs,
                final_loss,
                seed: init.seed,
            },
        },
        history,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PsnetModelFile {
    kind: String,
    q: u32,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    alpha: Vec<f64>,
    training_meta: TrainingMeta,
}

impl PsnetModel {
    /// JSON with decimal floats at 18 significant digits, enough to reload
    /// bit-exactly.
    pub fn to_json(&self) -> String {
        use crate::export::fmt_f64;
        let alpha = self
            .theta
            .alpha()
            .iter()
            .map(|a| fmt_f64(*a))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{{\"kind\":\"psnet\",\"q\":{},\"L\":{},\"rho\":{},\"alpha\":[{}],\"training_meta\":{{\"epochs\":{},\"final_loss\":{},\"seed\":{}}}}}\n",
            self.q,
            self.layers,
            fmt_f64(self.theta.rho()),
            alpha,
            self.training_meta.epochs,
            fmt_f64(self.training_meta.final_loss),
            self.training_meta.seed,
        )
    }

    pub fn from_json(text: &str) -> Result<PsnetModel> {
        let file: PsnetModelFile = serde_json::from_str(text)?;
        if file.kind != "psnet" {
            return Err(Error::Model(format!(
                "expected kind \"psnet\", got \"{}\"",
                file.kind
            )));
        }
        if file.layers < 1 {
            return Err(Error::Model("layer count must be >= 1".into()));
        }
        if file.alpha.len() != file.q as usize {
            return Err(Error::Model(format!(
                "alpha has {} entries but q = {}",
                file.alpha.len(),
                file.q
            )));
        }
        let theta = PenaltyParams::new(file.alpha, file.rho)
            .map_err(|e| Error::Model(format!("infeasible penalties: {e}")))?;
        Ok(PsnetModel {
            theta,
            layers: file.layers,
            q: file.q,
            training_meta: file.training_meta,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::export::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<PsnetModel> {
        PsnetModel::from_json(&std::fs::read_to_string(path)?)
    }
}
