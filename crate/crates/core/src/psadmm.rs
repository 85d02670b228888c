//! Penalized-sharing ADMM detector with fixed penalty parameters, plus the
//! ZF/MMSE baselines and residual diagnostics.
//!
//! One iteration, from state `(x, u, {z_i})`:
//!
//! 1. Gauss-Seidel sweep over the `q` planes, ascending `i`:
//!    `z_i ← Π[−1,1]( c_i (x − Σ_{j≠i} 2^{j−1} z_j + u) )` with
//!    `c_i = 2^{i−1}ρ / (4^{i−1}ρ − α_i)`, planes below `i` already updated.
//! 2. `x ← (HᵀH + ρI)⁻¹ (Hᵀy + ρ(Σ 2^{i−1} z_i − u))`, realized through a
//!    cached Cholesky factorization, never an explicit inverse.
//! 3. `u ← u + x − Σ 2^{i−1} z_i` (scaled dual; the unscaled dual is `ρu`
//!    and is never stored).
//!
//! All iterates start at zero.

use crate::error::{Error, Result};
use crate::linalg::{add_ridge, dot, gram, gram_plus_ridge, solve_spd, CholeskyFactor, Matrix, Vector};

/// Feasibility margin on the sweep denominators: `α_i ≤ (1−ε) 4^{i−1} ρ`
/// keeps every `4^{i−1}ρ − α_i` strictly positive.
pub const FEASIBILITY_MARGIN: f64 = 0.01;

/// Penalty parameters `{α_1..α_q, ρ}`, shared by all iterations/layers.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyParams {
    alpha: Vec<f64>,
    rho: f64,
}

impl PenaltyParams {
    /// Validates `ρ > 0` and `0 ≤ α_i ≤ (1−ε) 4^{i−1} ρ`.
    pub fn new(alpha: Vec<f64>, rho: f64) -> Result<PenaltyParams> {
        if alpha.is_empty() {
            return Err(Error::Empty("alpha list"));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParam(format!(
                "rho must be positive and finite, got {rho}"
            )));
        }
        for (i, &a) in alpha.iter().enumerate() {
            let bound = (1.0 - FEASIBILITY_MARGIN) * 4f64.powi(i as i32) * rho;
            if !a.is_finite() || a < 0.0 || a > bound {
                return Err(Error::InvalidParam(format!(
                    "alpha_{} = {a} outside [0, {bound}] for rho = {rho}",
                    i + 1
                )));
            }
        }
        Ok(PenaltyParams { alpha, rho })
    }

    /// Default fixed penalties for un-trained runs: interior-feasible
    /// `α_i = 0.3·4^{i−1}·ρ`.
    pub fn default_fixed(q: u32, rho: f64) -> Result<PenaltyParams> {
        let alpha = (0..q)
            .map(|i| 0.3 * 4f64.powi(i as i32) * rho)
            .collect();
        PenaltyParams::new(alpha, rho)
    }

    /// Deliberately mismatched penalties: all `α_i = 0`.
    pub fn zero_alpha(q: u32, rho: f64) -> Result<PenaltyParams> {
        PenaltyParams::new(vec![0.0; q as usize], rho)
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Sweep coefficient `c_i = 2^{i−1}ρ / (4^{i−1}ρ − α_i)` for the 1-based
    /// plane index `i`.
    pub fn plane_coefficient(&self, i: usize) -> f64 {
        let p = (i - 1) as i32;
        2f64.powi(p) * self.rho / (4f64.powi(p) * self.rho - self.alpha[i - 1])
    }

    pub(crate) fn plane_coefficients(&self) -> Vec<f64> {
        (1..=self.q()).map(|i| self.plane_coefficient(i)).collect()
    }
}

/// Per-iteration detector state.
#[derive(Debug, Clone)]
pub struct DetectorState {
    pub x: Vector,
    /// Scaled dual variable.
    pub u: Vector,
    pub z: Vec<Vector>,
    pub iter: usize,
}

impl DetectorState {
    pub fn zeros(q: usize, k: usize) -> DetectorState {
        DetectorState {
            x: vec![0.0; k],
            u: vec![0.0; k],
            z: vec![vec![0.0; k]; q],
            iter: 0,
        }
    }
}

/// Per-iteration primal residual `‖x − Σ 2^{i−1} z_i‖₂` and augmented
/// Lagrangian value.
#[derive(Debug, Clone, Default)]
pub struct ResidualTrace {
    pub primal: Vec<f64>,
    pub objective: Vec<f64>,
}

/// Entrywise projection onto `[−1, 1]`.
pub fn project_box(v: &[f64]) -> Vector {
    v.iter().map(|&x| x.max(-1.0).min(1.0)).collect()
}

/// Weighted plane sum `Σ 2^{i−1} z_i`.
pub fn plane_sum(z: &[Vector]) -> Vector {
    let k = z.first().map_or(0, |p| p.len());
    let mut s = vec![0.0; k];
    for (i, plane) in z.iter().enumerate() {
        let w = (1u64 << i) as f64;
        for (si, &zi) in s.iter_mut().zip(plane.iter()) {
            *si += w * zi;
        }
    }
    s
}

/// In-place Gauss-Seidel sweep over all planes. `sum` must hold the weighted
/// plane sum of `z` on entry and holds the updated sum on exit. `on_w` sees
/// each pre-projection entry `(plane, index, w)`.
fn sweep_planes(
    z: &mut [Vector],
    sum: &mut [f64],
    x_ref: &[f64],
    u: &[f64],
    coeffs: &[f64],
    mut on_w: impl FnMut(usize, usize, f64),
) {
    for (ip, plane) in z.iter_mut().enumerate() {
        let w_plane = (1u64 << ip) as f64;
        let c = coeffs[ip];
        for (kk, zk) in plane.iter_mut().enumerate() {
            let others = sum[kk] - w_plane * *zk;
            let w = c * (x_ref[kk] - others + u[kk]);
            on_w(ip, kk, w);
            let znew = w.max(-1.0).min(1.0);
            sum[kk] = others + w_plane * znew;
            *zk = znew;
        }
    }
}

/// One full z-sweep of `state` against the reference iterate `x_ref`.
/// Planes are updated strictly in ascending index; each uses the fresh
/// values of the planes below it. Returns the updated weighted plane sum.
pub fn z_sweep(
    state: &mut DetectorState,
    theta: &PenaltyParams,
    x_ref: &[f64],
) -> Result<Vector> {
    if state.z.len() != theta.q() {
        return Err(Error::dim(
            "z_sweep",
            format!("{} planes vs q = {}", state.z.len(), theta.q()),
        ));
    }
    let coeffs = theta.plane_coefficients();
    let mut sum = plane_sum(&state.z);
    sweep_planes(&mut state.z, &mut sum, x_ref, &state.u, &coeffs, |_, _, _| {});
    Ok(sum)
}

/// As [`z_sweep`] but also returns the pre-projection sweep arguments
/// `w_i`, one vector per plane.
pub fn z_sweep_with_args(
    state: &mut DetectorState,
    theta: &PenaltyParams,
    x_ref: &[f64],
) -> Result<(Vector, Vec<Vector>)> {
    if state.z.len() != theta.q() {
        return Err(Error::dim(
            "z_sweep",
            format!("{} planes vs q = {}", state.z.len(), theta.q()),
        ));
    }
    let k = x_ref.len();
    let coeffs = theta.plane_coefficients();
    let mut sum = plane_sum(&state.z);
    let mut args = vec![vec![0.0; k]; theta.q()];
    sweep_planes(&mut state.z, &mut sum, x_ref, &state.u, &coeffs, |ip, kk, w| {
        args[ip][kk] = w;
    });
    Ok((sum, args))
}

/// `x`-update: solves `(HᵀH + ρI) x = Hᵀy + ρ(Σ 2^{i−1} z_i − u)`.
pub fn x_update(h: &Matrix, y: &[f64], z: &[Vector], u: &[f64], rho: f64) -> Result<Vector> {
    let a = gram_plus_ridge(h, rho)?;
    let hty = h.matvec_t(y);
    let s = plane_sum(z);
    let rhs: Vector = hty
        .iter()
        .zip(s.iter().zip(u.iter()))
        .map(|(t, (si, ui))| t + rho * (si - ui))
        .collect();
    solve_spd(&a, &rhs)
}

/// Scaled dual ascent: `u + x − Σ 2^{i−1} z_i`.
pub fn u_update(u: &[f64], x: &[f64], z: &[Vector]) -> Vector {
    let s = plane_sum(z);
    u.iter()
        .zip(x.iter().zip(s.iter()))
        .map(|(ui, (xi, si))| ui + xi - si)
        .collect()
}

/// Augmented Lagrangian value at `(x, {z_i}, u)` (diagnostic):
/// `½‖y−Hx‖² − ½Σ α_i‖z_i‖² + ρuᵀ(x−S) + (ρ/2)‖x−S‖²` with `S` the
/// weighted plane sum.
pub fn augmented_lagrangian(
    y: &[f64],
    h: &Matrix,
    x: &[f64],
    z: &[Vector],
    u: &[f64],
    theta: &PenaltyParams,
) -> f64 {
    let hx = h.matvec(x);
    let fit: f64 = y
        .iter()
        .zip(hx.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let penalty: f64 = theta
        .alpha()
        .iter()
        .zip(z.iter())
        .map(|(a, plane)| a * dot(plane, plane))
        .sum();
    let s = plane_sum(z);
    let gap: Vector = x.iter().zip(s.iter()).map(|(a, b)| a - b).collect();
    0.5 * fit - 0.5 * penalty + theta.rho() * dot(u, &gap) + 0.5 * theta.rho() * dot(&gap, &gap)
}

/// Channel-dependent quantities shared by every iteration (and by repeated
/// detections over the same channel): `HᵀH` without the ridge, and `Hᵀy`.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<'a> {
    pub h: &'a Matrix,
    pub gram: Matrix,
    pub hty: Vector,
}

impl<'a> Prepared<'a> {
    pub fn new(y: &[f64], h: &'a Matrix) -> Result<Prepared<'a>> {
        if y.len() != h.rows() {
            return Err(Error::dim(
                "detector input",
                format!("observation length {} vs channel rows {}", y.len(), h.rows()),
            ));
        }
        Ok(Prepared {
            h,
            gram: gram(h),
            hty: h.matvec_t(y),
        })
    }
}

/// Shared iteration driver. The per-iteration callback observes
/// `(iter, x, u, z, plane_sum)` and must not affect the state, so every
/// caller computes bit-identical iterates.
pub(crate) fn run_layers(
    prep: &Prepared,
    theta: &PenaltyParams,
    layers: usize,
    mut per_layer: impl FnMut(usize, &[f64], &[f64], &[Vector], &[f64]),
) -> Result<DetectorState> {
    if layers < 1 {
        return Err(Error::InvalidParam("iteration count must be >= 1".into()));
    }
    let k = prep.h.cols();
    let coeffs = theta.plane_coefficients();
    let rho = theta.rho();

    let mut a = prep.gram.clone();
    add_ridge(&mut a, rho);
    let factor = CholeskyFactor::new(&a)?;

    let mut state = DetectorState::zeros(theta.q(), k);
    let mut sum = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for t in 1..=layers {
        let x_ref = std::mem::take(&mut state.x);
        sweep_planes(&mut state.z, &mut sum, &x_ref, &state.u, &coeffs, |_, _, _| {});
        for kk in 0..k {
            rhs[kk] = prep.hty[kk] + rho * (sum[kk] - state.u[kk]);
        }
        state.x = factor.solve(&rhs);
        for kk in 0..k {
            state.u[kk] += state.x[kk] - sum[kk];
        }
        state.iter = t;
        per_layer(t, &state.x, &state.u, &state.z, &sum);
    }
    Ok(state)
}

/// Runs the detector for `iters` iterations from zero initialization and
/// returns the final (unquantized) iterate with its residual trace.
pub fn detect_psadmm(
    y: &[f64],
    h: &Matrix,
    theta: &PenaltyParams,
    iters: usize,
) -> Result<(Vector, ResidualTrace)> {
    let prep = Prepared::new(y, h)?;
    let mut trace = ResidualTrace::default();
    let state = run_layers(&prep, theta, iters, |_, x, u, z, sum| {
        let gap2: f64 = x
            .iter()
            .zip(sum.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        trace.primal.push(gap2.sqrt());
        trace.objective.push(augmented_lagrangian(y, h, x, z, u, theta));
    })?;
    Ok((state.x, trace))
}

/// [`detect_psadmm`] without the per-iteration diagnostics; same iterates
/// bit-for-bit. Used in tight Monte-Carlo and timing loops.
pub fn detect_psadmm_untraced(
    y: &[f64],
    h: &Matrix,
    theta: &PenaltyParams,
    iters: usize,
) -> Result<Vector> {
    let prep = Prepared::new(y, h)?;
    Ok(run_layers(&prep, theta, iters, |_, _, _, _, _| {})?.x)
}

/// Zero-forcing baseline: least-squares solve, caller quantizes.
pub fn detect_zf(y: &[f64], h: &Matrix) -> Result<Vector> {
    if y.len() != h.rows() {
        return Err(Error::dim(
            "detect_zf",
            format!("observation length {} vs channel rows {}", y.len(), h.rows()),
        ));
    }
    let g = gram(h);
    solve_spd(&g, &h.matvec_t(y))
}

/// MMSE baseline: ridge `σr²/Es_real`; degenerates to ZF when `σr² = 0`.
pub fn detect_mmse(y: &[f64], h: &Matrix, sigma2r: f64, es_real: f64) -> Result<Vector> {
    if y.len() != h.rows() {
        return Err(Error::dim(
            "detect_mmse",
            format!("observation length {} vs channel rows {}", y.len(), h.rows()),
        ));
    }
    if sigma2r < 0.0 || !(es_real > 0.0) {
        return Err(Error::InvalidParam(format!(
            "need sigma2r >= 0 and es_real > 0, got {sigma2r}, {es_real}"
        )));
    }
    let mut g = gram(h);
    add_ridge(&mut g, sigma2r / es_real);
    solve_spd(&g, &h.matvec_t(y))
}
