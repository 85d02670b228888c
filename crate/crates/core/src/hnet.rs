//! MLP-based detector: each layer replaces the SPD solve of the classical
//! detector with a one-hidden-layer network acting on cheap features, so a
//! full detection needs only matrix-vector products.
//!
//! Per layer, from the previous iterate `x`:
//! residual `r = y − Hx`; matched-filter refinement `a1 = Hᵀr/M + x`;
//! consensus drive `a2 = ρ(Σ 2^{i−1} z_i − u)`; the stacked feature
//! `a = [a1; a2]` (length `d0 = 2K`) feeds `x̂ = W2·relu(W1 a + b1) + b2`.
//! The plane sweep keeps the penalty parameters of a trained
//! [`crate::psnet::PsnetModel`], frozen. Layers are trained greedily, each
//! against the true symbols, then frozen before the next layer starts.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{DatasetSpec, RealSample};
use crate::psadmm::{z_sweep, DetectorState, PenaltyParams};
use crate::psnet::TrainConfig;
use crate::rng::RngStream;

/// Fixed chunk size for schedule-independent parallel reductions.
const PAR_CHUNK: usize = 64;

/// One layer's weights: `W1 (n×d0)`, `b1 (n)`, `W2 (K×n)`, `b2 (K)` with
/// `d0 = 2K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
}

impl MlpWeights {
    pub fn new(w1: Matrix, b1: Vector, w2: Matrix, b2: Vector) -> Result<MlpWeights> {
        let n = w1.rows();
        let k = w2.rows();
        if b1.len() != n || w2.cols() != n || b2.len() != k || w1.cols() != 2 * k {
            return Err(Error::dim(
                "mlp weights",
                format!(
                    "W1 {}x{}, b1 {}, W2 {}x{}, b2 {} (need W1 n x 2K)",
                    w1.rows(),
                    w1.cols(),
                    b1.len(),
                    w2.rows(),
                    w2.cols(),
                    b2.len()
                ),
            ));
        }
        if n < 1 {
            return Err(Error::InvalidParam("hidden width must be >= 1".into()));
        }
        let finite =
            w1.is_finite() && w2.is_finite() && b1.iter().all(|v| v.is_finite()) && b2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("mlp weights".into()));
        }
        Ok(MlpWeights { w1, b1, w2, b2 })
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn output(&self) -> usize {
        self.w2.rows()
    }

    /// Variance-preserving uniform init `±sqrt(6/(fan_in+fan_out))`,
    /// biases zero.
    pub fn init(n: usize, k: usize, stream: RngStream) -> MlpWeights {
        let d0 = 2 * k;
        let mut rng = stream.rng();
        let mut uniform = |fan_in: usize, fan_out: usize, rows: usize, cols: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Matrix::new(
                rows,
                cols,
                (0..rows * cols)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect(),
            )
        };
        let w1 = uniform(d0, n, n, d0);
        let w2 = uniform(n, k, k, n);
        MlpWeights {
            w1,
            b1: vec![0.0; n],
            w2,
            b2: vec![0.0; k],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnetTrainingMeta {
    pub seed: u64,
    pub epochs_per_layer: usize,
    pub layer_final_loss: Vec<f64>,
}

/// Complete detector: `L` trained layers plus frozen penalty parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HnetModel {
    pub layers: Vec<MlpWeights>,
    pub theta: PenaltyParams,
    pub n: usize,
    pub q: u32,
    pub training_meta: HnetTrainingMeta,
}

impl HnetModel {
    pub fn new(
        layers: Vec<MlpWeights>,
        theta: PenaltyParams,
        n: usize,
        q: u32,
        training_meta: HnetTrainingMeta,
    ) -> Result<HnetModel> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        if theta.q() != q as usize {
            return Err(Error::InvalidParam(format!(
                "penalties carry q = {}, model says {q}",
                theta.q()
            )));
        }
        let k = layers[0].output();
        for (l, w) in layers.iter().enumerate() {
            if w.hidden() != n || w.output() != k || w.w1.cols() != 2 * k {
                return Err(Error::dim(
                    "hnet model",
                    format!("layer {} shape differs from (n={n}, K={k})", l + 1),
                ));
            }
        }
        Ok(HnetModel {
            layers,
            theta,
            n,
            q,
            training_meta,
        })
    }

    /// Real transmit dimension the model was built for.
    pub fn k(&self) -> usize {
        self.layers[0].output()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Residual `r = y − Hx`.
pub fn residual(y: &[f64], h: &Matrix, x: &[f64]) -> Result<Vector> {
    if y.len() != h.rows() || x.len() != h.cols() {
        return Err(Error::dim(
            "residual",
            format!(
                "y {} / x {} vs channel {}x{}",
                y.len(),
                x.len(),
                h.rows(),
                h.cols()
            ),
        ));
    }
    let hx = h.matvec(x);
    Ok(y.iter().zip(hx.iter()).map(|(a, b)| a - b).collect())
}

/// Successive noise cancellation feature `a1 = Hᵀr/M + x`.
pub fn feature_a1(h: &Matrix, r: &[f64], x: &[f64]) -> Result<Vector> {
    if r.len() != h.rows() || x.len() != h.cols() {
        return Err(Error::dim(
            "feature_a1",
            format!(
                "r {} / x {} vs channel {}x{}",
                r.len(),
                x.len(),
                h.rows(),
                h.cols()
            ),
        ));
    }
    let m = h.rows() as f64;
    let htr = h.matvec_t(r);
    Ok(htr
        .iter()
        .zip(x.iter())
        .map(|(a, b)| a / m + b)
        .collect())
}

/// Consensus drive feature `a2 = ρ(Σ 2^{i−1} z_i − u)`.
pub fn feature_a2(z: &[Vector], u: &[f64], rho: f64) -> Result<Vector> {
    let s = crate::psadmm::plane_sum(z);
    if s.len() != u.len() {
        return Err(Error::dim(
            "feature_a2",
            format!("plane length {} vs dual length {}", s.len(), u.len()),
        ));
    }
    Ok(s.iter().zip(u.iter()).map(|(si, ui)| rho * (si - ui)).collect())
}

/// Vertical stack `[a1; a2]`, length `d0 = 2K`.
pub fn stack_features(a1: &[f64], a2: &[f64]) -> Result<Vector> {
    if a1.len() != a2.len() {
        return Err(Error::dim(
            "stack_features",
            format!("{} vs {}", a1.len(), a2.len()),
        ));
    }
    let mut a = Vec::with_capacity(2 * a1.len());
    a.extend_from_slice(a1);
    a.extend_from_slice(a2);
    Ok(a)
}

/// Per-layer feature bundle.
#[derive(Debug, Clone)]
pub struct LayerFeatures {
    pub r: Vector,
    pub a1: Vector,
    pub a2: Vector,
    pub a: Vector,
}

/// Features of one layer from the current iterate and sweep output.
pub fn build_features(
    y: &[f64],
    h: &Matrix,
    x: &[f64],
    z: &[Vector],
    u: &[f64],
    rho: f64,
) -> Result<LayerFeatures> {
    let r = residual(y, h, x)?;
    let a1 = feature_a1(h, &r, x)?;
    let a2 = feature_a2(z, u, rho)?;
    let a = stack_features(&a1, &a2)?;
    Ok(LayerFeatures { r, a1, a2, a })
}

/// Forward pass `t = relu(W1 a + b1)`, `x̂ = W2 t + b2`; `t` is returned for
/// the backward pass.
pub fn mlp_forward(a: &[f64], w: &MlpWeights) -> (Vector, Vector) {
    let mut t = w.w1.matvec(a);
    for (ti, bi) in t.iter_mut().zip(w.b1.iter()) {
        *ti = (*ti + bi).max(0.0);
    }
    let mut x = w.w2.matvec(&t);
    for (xi, bi) in x.iter_mut().zip(w.b2.iter()) {
        *xi += bi;
    }
    (x, t)
}

/// Gradient accumulator matching [`MlpWeights`] shape-for-shape.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
}

impl MlpGradients {
    pub fn zeros(w: &MlpWeights) -> MlpGradients {
        MlpGradients {
            w1: Matrix::zeros(w.w1.rows(), w.w1.cols()),
            b1: vec![0.0; w.b1.len()],
            w2: Matrix::zeros(w.w2.rows(), w.w2.cols()),
            b2: vec![0.0; w.b2.len()],
        }
    }

    fn add(&mut self, other: &MlpGradients) {
        let add_mat = |dst: &mut Matrix, src: &Matrix| {
            for r in 0..dst.rows() {
                for c in 0..dst.cols() {
                    dst.set(r, c, dst.get(r, c) + src.get(r, c));
                }
            }
        };
        add_mat(&mut self.w1, &other.w1);
        add_mat(&mut self.w2, &other.w2);
        for (a, b) in self.b1.iter_mut().zip(other.b1.iter()) {
            *a += b;
        }
        for (a, b) in self.b2.iter_mut().zip(other.b2.iter()) {
            *a += b;
        }
    }
}

/// Accumulates one sample's gradient of `‖x̂ − s‖²/batch` into `grads`.
/// `t` must come from the forward pass at `a`; the relu subgradient at
/// exactly zero is taken as zero.
pub fn mlp_backward_into(
    grads: &mut MlpGradients,
    a: &[f64],
    w: &MlpWeights,
    t: &[f64],
    x_hat: &[f64],
    s: &[f64],
    batch: usize,
) {
    let scale = 2.0 / batch as f64;
    let k = w.output();
    let n = w.hidden();

    // Output layer: e = x̂ − s; gb2 += scale e; gW2 += scale e tᵀ.
    let mut dt = vec![0.0; n];
    for kk in 0..k {
        let e = scale * (x_hat[kk] - s[kk]);
        grads.b2[kk] += e;
        let row = w.w2.row(kk);
        for j in 0..n {
            grads.w2.set(kk, j, grads.w2.get(kk, j) + e * t[j]);
            dt[j] += row[j] * e;
        }
    }

    // Hidden layer through the relu mask (t > 0 iff pre-activation > 0).
    for j in 0..n {
        if t[j] > 0.0 {
            let dh = dt[j];
            grads.b1[j] += dh;
            for (c, ac) in a.iter().enumerate() {
                grads.w1.set(j, c, grads.w1.get(j, c) + dh * ac);
            }
        }
    }
}

/// One sample's analytic gradients of `‖x̂ − s‖²/batch`.
pub fn mlp_backward(
    a: &[f64],
    w: &MlpWeights,
    t: &[f64],
    x_hat: &[f64],
    s: &[f64],
    batch: usize,
) -> MlpGradients {
    let mut g = MlpGradients::zeros(w);
    mlp_backward_into(&mut g, a, w, t, x_hat, s, batch);
    g
}

/// Dual ascent against the weighted plane sum; same formula as the
/// classical detector's update.
pub fn hnet_dual_update(u: &[f64], x_hat: &[f64], z: &[Vector]) -> Vector {
    crate::psadmm::u_update(u, x_hat, z)
}

/// Inference cost model `MK + L(MK + 3Kn)` in multiply-accumulates.
pub fn flop_estimate(m: usize, k: usize, l: usize, n: usize) -> u64 {
    let (m, k, l, n) = (m as u64, k as u64, l as u64, n as u64);
    m * k + l * (m * k + 3 * k * n)
}

fn check_model_input(y: &[f64], h: &Matrix, model: &HnetModel, depth: usize) -> Result<()> {
    if y.len() != h.rows() || h.cols() != model.k() {
        return Err(Error::dim(
            "detect_hnet",
            format!(
                "y {} / channel {}x{} vs model K = {}",
                y.len(),
                h.rows(),
                h.cols(),
                model.k()
            ),
        ));
    }
    if depth < 1 || depth > model.depth() {
        return Err(Error::InvalidParam(format!(
            "requested depth {depth} outside 1..={}",
            model.depth()
        )));
    }
    Ok(())
}

/// Runs the first `depth` layers and returns the final iterate together
/// with the multiply-accumulate count of everything except the plane
/// sweeps.
pub fn detect_hnet_counted(
    y: &[f64],
    h: &Matrix,
    model: &HnetModel,
    depth: usize,
) -> Result<(Vector, u64)> {
    check_model_input(y, h, model, depth)?;
    let m = h.rows();
    let k = h.cols();
    let n = model.n;
    let mut macs = 0u64;

    // Matched-filter initialization x̂ = Hᵀy / M. The division form matches
    // the training-time propagation bit-for-bit.
    let mf = m as f64;
    let mut x: Vector = h.matvec_t(y).iter().map(|v| v / mf).collect();
    macs += (m * k + k) as u64;

    let mut state = DetectorState::zeros(model.theta.q(), k);
    for w in model.layers.iter().take(depth) {
        let sum = z_sweep(&mut state, &model.theta, &x)?;

        let feats = build_features(y, h, &x, &state.z, &state.u, model.theta.rho())?;
        macs += (2 * m * k + 2 * k) as u64;

        let (x_new, _t) = mlp_forward(&feats.a, w);
        macs += (n * 2 * k + k * n) as u64;

        for kk in 0..k {
            state.u[kk] += x_new[kk] - sum[kk];
        }
        x = x_new;
    }
    Ok((x, macs))
}

/// Full-depth detection; the caller quantizes.
pub fn detect_hnet(y: &[f64], h: &Matrix, model: &HnetModel) -> Result<Vector> {
    Ok(detect_hnet_counted(y, h, model, model.depth())?.0)
}

/// Detection truncated to the first `depth` layers (layer sweeps).
pub fn detect_hnet_prefix(y: &[f64], h: &Matrix, model: &HnetModel, depth: usize) -> Result<Vector> {
    Ok(detect_hnet_counted(y, h, model, depth)?.0)
}

/// Per-epoch training record: `loss` at `epoch` 0 is the full-set loss at
/// initialization; later epochs record the mean of that epoch's batch
/// losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerEpochLoss {
    pub layer: usize,
    pub epoch: usize,
    pub loss: f64,
}

struct SampleState {
    x: Vector,
    u: Vector,
    z: Vec<Vector>,
}

fn fullset_loss(features: &[Vector], targets: &[&Vector], w: &MlpWeights) -> f64 {
    let partials: Vec<f64> = features
        .par_chunks(PAR_CHUNK)
        .zip(targets.par_chunks(PAR_CHUNK))
        .map(|(fa, ta)| {
            let mut acc = 0.0;
            for (a, s) in fa.iter().zip(ta.iter()) {
                let (x_hat, _) = mlp_forward(a, w);
                acc += x_hat
                    .iter()
                    .zip(s.iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>();
            }
            acc
        })
        .collect();
    partials.iter().sum::<f64>() / features.len() as f64
}

/// Layer-wise greedy training. For each layer: the training set is
/// propagated through the frozen prefix, per-sample features are built
/// once, the layer's network is trained by mini-batch SGD against the true
/// symbols, then frozen. Returns the model and the loss history.
pub fn train_hnet(
    data: &DatasetSpec,
    theta: &PenaltyParams,
    tc: &TrainConfig,
    n: usize,
    layers: usize,
    init: RngStream,
) -> Result<(HnetModel, Vec<LayerEpochLoss>)> {
    tc.validate()?;
    if theta.q() != data.q as usize {
        return Err(Error::InvalidParam(format!(
            "penalties carry q = {}, dataset has q = {}",
            theta.q(),
            data.q
        )));
    }
    if n < 1 || layers < 1 {
        return Err(Error::InvalidParam("need n >= 1 and layers >= 1".into()));
    }
    if tc.samples > data.m {
        return Err(Error::InvalidParam(format!(
            "train config asks for {} samples but the dataset has {}",
            tc.samples, data.m
        )));
    }

    let samples: Vec<RealSample> = (0..tc.samples)
        .into_par_iter()
        .map(|i| data.sample(i))
        .collect();
    let k = samples[0].h.cols();
    let q = theta.q();

    let mut states: Vec<SampleState> = samples
        .par_iter()
        .map(|sm| {
            let mf = sm.h.rows() as f64;
            SampleState {
                x: sm.h.matvec_t(&sm.y).iter().map(|v| v / mf).collect(),
                u: vec![0.0; k],
                z: vec![vec![0.0; k]; q],
            }
        })
        .collect();

    let mut trained: Vec<MlpWeights> = Vec::with_capacity(layers);
    let mut history: Vec<LayerEpochLoss> = Vec::new();
    let mut layer_final = Vec::with_capacity(layers);

    for layer in 1..=layers {
        // Features for the whole set; the prefix is frozen so these are
        // computed exactly once. The sweep advances each sample's planes.
        let plane_sums: Vec<Vector> = states
            .par_iter_mut()
            .zip(samples.par_iter())
            .map(|(st, _)| {
                let x_ref = st.x.clone();
                let mut ds = DetectorState {
                    x: Vec::new(),
                    u: std::mem::take(&mut st.u),
                    z: std::mem::take(&mut st.z),
                    iter: 0,
                };
                let sum = z_sweep(&mut ds, theta, &x_ref).expect("plane count fixed");
                st.u = ds.u;
                st.z = ds.z;
                sum
            })
            .collect();
        let features: Vec<Vector> = states
            .par_iter()
            .zip(samples.par_iter())
            .map(|(st, sm)| {
                build_features(&sm.y, &sm.h, &st.x, &st.z, &st.u, theta.rho())
                    .expect("shapes fixed")
                    .a
            })
            .collect();
        let targets: Vec<&Vector> = samples.iter().map(|sm| &sm.s).collect();

        let mut w = MlpWeights::init(n, k, init.substream(layer as u64));
        history.push(LayerEpochLoss {
            layer,
            epoch: 0,
            loss: fullset_loss(&features, &targets, &w),
        });

        let mut order: Vec<usize> = (0..tc.samples).collect();
        let mut lr = tc.lr;
        for epoch in 0..tc.epochs {
            let mut rng = init
                .substream(layer as u64)
                .substream(1_000 + epoch as u64)
                .rng();
            order.shuffle(&mut rng);

            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for batch in order.chunks(tc.batch) {
                let bsz = batch.len();
                let parts: Vec<(MlpGradients, f64)> = batch
                    .par_chunks(PAR_CHUNK)
                    .map(|idxs| {
                        let mut g = MlpGradients::zeros(&w);
                        let mut loss = 0.0;
                        for &i in idxs {
                            let a = &features[i];
                            let s = &samples[i].s;
                            let (x_hat, t) = mlp_forward(a, &w);
                            loss += x_hat
                                .iter()
                                .zip(s.iter())
                                .map(|(p, q)| (p - q) * (p - q))
                                .sum::<f64>();
                            mlp_backward_into(&mut g, a, &w, &t, &x_hat, s, bsz);
                        }
                        (g, loss)
                    })
                    .collect();

                let mut grads = MlpGradients::zeros(&w);
                let mut batch_loss = 0.0;
                for (g, l) in &parts {
                    grads.add(g);
                    batch_loss += l;
                }
                batch_loss /= bsz as f64;
                if !batch_loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        context: format!("layer {layer}, epoch {epoch}"),
                        rho: theta.rho(),
                        alpha: theta.alpha().to_vec(),
                    });
                }
                epoch_loss += batch_loss;
                batches += 1;

                let step = |dst: &mut Matrix, g: &Matrix| {
                    for r in 0..dst.rows() {
                        for c in 0..dst.cols() {
                            dst.set(r, c, dst.get(r, c) - lr * g.get(r, c));
                        }
                    }
                };
                step(&mut w.w1, &grads.w1);
                step(&mut w.w2, &grads.w2);
                for (b, g) in w.b1.iter_mut().zip(grads.b1.iter()) {
                    *b -= lr * g;
                }
                for (b, g) in w.b2.iter_mut().zip(grads.b2.iter()) {
                    *b -= lr * g;
                }
            }
            history.push(LayerEpochLoss {
                layer,
                epoch: epoch + 1,
                loss: epoch_loss / batches as f64,
            });
            lr *= tc.lr_decay;
        }

        layer_final.push(fullset_loss(&features, &targets, &w));

        // Freeze and advance every sample through the new layer.
        states
            .par_iter_mut()
            .zip(features.par_iter().zip(plane_sums.par_iter()))
            .for_each(|(st, (a, sum))| {
                let (x_new, _) = mlp_forward(a, &w);
                for kk in 0..k {
                    st.u[kk] += x_new[kk] - sum[kk];
                }
                st.x = x_new;
            });
        trained.push(w);
    }

    let model = HnetModel::new(
        trained,
        theta.clone(),
        n,
        data.q,
        HnetTrainingMeta {
            seed: init.seed,
            epochs_per_layer: tc.epochs,
            layer_final_loss: layer_final,
        },
    )?;
    Ok((model, history))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HnetModelFile {
    kind: String,
    q: u32,
    #[serde(rename = "L")]
    depth: usize,
    n: usize,
    theta: ThetaFile,
    layers: Vec<LayerFile>,
    training_meta: MetaFile,
}

#[derive(Debug, Deserialize)]
struct ThetaFile {
    rho: f64,
    alpha: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct LayerFile {
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct MetaFile {
    seed: u64,
    epochs_per_layer: usize,
    layer_final_loss: Vec<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::Model(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Model(format!("{what}: ragged or empty rows")));
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::new(rows.len(), cols, data))
}

impl HnetModel {
    pub fn to_json(&self) -> String {
        use crate::export::fmt_f64;
        let fmt_vec = |v: &[f64]| {
            v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
        };
        let fmt_mat = |m: &Matrix| {
            (0..m.rows())
                .map(|r| format!("[{}]", fmt_vec(m.row(r))))
                .collect::<Vec<_>>()
                .join(",")
        };
        let layers = self
            .layers
            .iter()
            .map(|w| {
                format!(
                    "{{\"W1\":[{}],\"b1\":[{}],\"W2\":[{}],\"b2\":[{}]}}",
                    fmt_mat(&w.w1),
                    fmt_vec(&w.b1),
                    fmt_mat(&w.w2),
                    fmt_vec(&w.b2)
                )
            })
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{{\"kind\":\"hnet\",\"q\":{},\"L\":{},\"n\":{},\"theta\":{{\"rho\":{},\"alpha\":[{}]}},\"layers\":[{}],\"training_meta\":{{\"seed\":{},\"epochs_per_layer\":{},\"layer_final_loss\":[{}]}}}}\n",
            self.q,
            self.depth(),
            self.n,
            fmt_f64(self.theta.rho()),
            fmt_vec(self.theta.alpha()),
            layers,
            self.training_meta.seed,
            self.training_meta.epochs_per_layer,
            fmt_vec(&self.training_meta.layer_final_loss),
        )
    }

    pub fn from_json(text: &str) -> Result<HnetModel> {
        let file: HnetModelFile = serde_json::from_str(text)?;
        if file.kind != "hnet" {
            return Err(Error::Model(format!(
                "expected kind \"hnet\", got \"{}\"",
                file.kind
            )));
        }
        if file.layers.len() != file.depth {
            return Err(Error::Model(format!(
                "L = {} but {} layers serialized",
                file.depth,
                file.layers.len()
            )));
        }
        let theta = PenaltyParams::new(file.theta.alpha, file.theta.rho)
            .map_err(|e| Error::Model(format!("infeasible penalties: {e}")))?;
        if theta.q() != file.q as usize {
            return Err(Error::Model(format!(
                "alpha has {} entries but q = {}",
                theta.q(),
                file.q
            )));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, lf) in file.layers.iter().enumerate() {
            let w1 = matrix_from_rows(&lf.w1, "W1")?;
            let w2 = matrix_from_rows(&lf.w2, "W2")?;
            let w = MlpWeights::new(w1, lf.b1.clone(), w2, lf.b2.clone())
                .map_err(|e| Error::Model(format!("layer {}: {e}", i + 1)))?;
            if w.hidden() != file.n {
                return Err(Error::Model(format!(
                    "layer {} hidden width {} differs from n = {}",
                    i + 1,
                    w.hidden(),
                    file.n
                )));
            }
            layers.push(w);
        }
        HnetModel::new(
            layers,
            theta,
            file.n,
            file.q,
            HnetTrainingMeta {
                seed: file.training_meta.seed,
                epochs_per_layer: file.training_meta.epochs_per_layer,
                layer_final_loss: file.training_meta.layer_final_loss,
            },
        )
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::export::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<HnetModel> {
        HnetModel::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> HnetTrainingMeta {
        HnetTrainingMeta {
            seed: 0,
            epochs_per_layer: 0,
            layer_final_loss: vec![],
        }
    }

    #[test]
    fn residual_cases() {
        let h = Matrix::identity(2);
        let y = vec![1.0, -2.0];
        assert_eq!(residual(&y, &h, &[0.0, 0.0]).unwrap(), y);
        assert_eq!(residual(&y, &h, &y).unwrap(), vec![0.0, 0.0]);
        assert!(residual(&y, &h, &[0.0]).is_err());
    }

    #[test]
    fn feature_a1_cases() {
        let h = Matrix::identity(2);
        let r = residual(&[1.0, 1.0], &h, &[0.0, 0.0]).unwrap();
        let a1 = feature_a1(&h, &r, &[0.0, 0.0]).unwrap();
        assert_eq!(a1, vec![0.5, 0.5]);
        // r = 0 leaves x untouched.
        let a1 = feature_a1(&h, &[0.0, 0.0], &[3.0, -1.0]).unwrap();
        assert_eq!(a1, vec![3.0, -1.0]);
    }

    #[test]
    fn feature_a2_cases() {
        let z = vec![vec![1.0, -1.0]];
        let a2 = feature_a2(&z, &[0.5, 0.0], 2.0).unwrap();
        assert_eq!(a2, vec![1.0, -2.0]);
        // u equal to the plane sum zeroes the feature.
        let a2 = feature_a2(&z, &[1.0, -1.0], 2.0).unwrap();
        assert_eq!(a2, vec![0.0, 0.0]);
        // Linear in rho.
        let a2_1 = feature_a2(&z, &[0.5, 0.0], 1.0).unwrap();
        let a2_3 = feature_a2(&z, &[0.5, 0.0], 3.0).unwrap();
        for i in 0..2 {
            assert!((a2_3[i] - 3.0 * a2_1[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn stack_order_and_length() {
        let a = stack_features(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(a, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.len(), 4);
        assert!(stack_features(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mlp_forward_degenerate_weights() {
        let k = 2;
        let w = MlpWeights::new(
            Matrix::zeros(3, 2 * k),
            vec![0.0; 3],
            Matrix::zeros(k, 3),
            vec![0.7, -0.3],
        )
        .unwrap();
        let (x, t) = mlp_forward(&[1.0, 2.0, 3.0, 4.0], &w);
        assert_eq!(t, vec![0.0; 3]);
        assert_eq!(x, vec![0.7, -0.3]);

        // Negative biases die under the relu.
        let w = MlpWeights::new(
            Matrix::zeros(3, 2 * k),
            vec![-1.0; 3],
            Matrix::zeros(k, 3),
            vec![0.0; 2],
        )
        .unwrap();
        let (_, t) = mlp_forward(&[0.5; 4], &w);
        assert_eq!(t, vec![0.0; 3]);
    }

    #[test]
    fn weights_shape_validation() {
        assert!(MlpWeights::new(
            Matrix::zeros(3, 5), // d0 must be 2K = 4
            vec![0.0; 3],
            Matrix::zeros(2, 3),
            vec![0.0; 2],
        )
        .is_err());
    }

    #[test]
    fn backward_gradients_at_minimum_vanish() {
        let w = MlpWeights::init(3, 2, RngStream::new(8, 0));
        let a = vec![0.3, -0.2, 0.9, 0.1];
        let (x_hat, t) = mlp_forward(&a, &w);
        let g = mlp_backward(&a, &w, &t, &x_hat, &x_hat.clone(), 1);
        assert!(g.b2.iter().all(|v| *v == 0.0));
        assert!(g.w2.data().iter().all(|v| *v == 0.0));
        assert!(g.b1.iter().all(|v| *v == 0.0));
        assert!(g.w1.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_w2_is_scaled_outer_product() {
        // On a 1x1 net: x̂ = w2 t + b2, so dL/dw2 = 2 (x̂ - s) t / batch.
        let w = MlpWeights::new(
            Matrix::new(1, 2, vec![1.0, 0.5]),
            vec![0.2],
            Matrix::new(1, 1, vec![-0.4]),
            vec![0.1],
        )
        .unwrap();
        let a = vec![0.6, -0.3];
        let (x_hat, t) = mlp_forward(&a, &w);
        let s = vec![1.0];
        let g = mlp_backward(&a, &w, &t, &x_hat, &s, 4);
        let expected = 2.0 / 4.0 * (x_hat[0] - s[0]) * t[0];
        assert!((g.w2.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn oracle_rigged_single_layer_returns_target() {
        let k = 2;
        let s = vec![3.0, -1.0];
        let w = MlpWeights::new(
            Matrix::zeros(4, 2 * k),
            vec![0.0; 4],
            Matrix::zeros(k, 4),
            s.clone(),
        )
        .unwrap();
        let theta = PenaltyParams::default_fixed(2, 1.5).unwrap();
        let model = HnetModel::new(vec![w], theta, 4, 2, meta()).unwrap();
        let h = Matrix::new(4, 2, vec![1.0, 0.1, -0.2, 0.8, 0.4, 0.4, 0.0, 1.0]);
        let y = h.matvec(&s);
        let out = detect_hnet(&y, &h, &model).unwrap();
        assert_eq!(out, s);
        let again = detect_hnet(&y, &h, &model).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn flop_estimate_cases() {
        assert_eq!(flop_estimate(128, 32, 20, 128), 331_776);
        assert_eq!(flop_estimate(128, 32, 0, 128), 4096);
        // Linear in n at fixed (M, K, L).
        let base = flop_estimate(64, 16, 10, 1);
        let incr = flop_estimate(64, 16, 10, 2) - base;
        assert_eq!(flop_estimate(64, 16, 10, 5), base + 4 * incr);
    }

    #[test]
    fn model_json_roundtrip_is_bit_exact() {
        let theta = PenaltyParams::default_fixed(2, 1.25).unwrap();
        let w = MlpWeights::init(3, 2, RngStream::new(4, 1));
        let model = HnetModel::new(
            vec![w.clone(), MlpWeights::init(3, 2, RngStream::new(4, 2))],
            theta,
            3,
            2,
            HnetTrainingMeta {
                seed: 9,
                epochs_per_layer: 5,
                layer_final_loss: vec![1.5, 0.25],
            },
        )
        .unwrap();
        let text = model.to_json();
        let back = HnetModel::from_json(&text).unwrap();
        assert_eq!(model, back);
        assert_eq!(text, back.to_json());
    }
}
