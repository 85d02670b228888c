//! System model: complex-to-real transform, Rayleigh channel and QAM symbol
//! generation, bit-plane decomposition, quantization, SER accounting and
//! seeded dataset generation.
//!
//! Conventions. A rectangular `4^q`-QAM complex system with `mc` receive and
//! `kc` transmit antennas is handled in an equivalent real model of size
//! `M = 2 mc`, `K = 2 kc`; real symbols live on the odd-integer grid
//! `{±1, ±3, …, ±(2^q − 1)}` so that each symbol splits into `q` binary
//! planes: `s = Σ 2^{i−1} z_i` with `z_i ∈ {−1, 1}^K`. SNR is defined as
//! `E‖H̃ s̃‖² / E‖υ̃‖² = kc·Es / σc²` with the constellation kept
//! unnormalized and the noise variance adjusted per SNR point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{sample_gaussian, sample_uniform, RngStream};

/// Antenna counts, constellation exponent and layer/iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemConfig {
    mc: usize,
    kc: usize,
    q: u32,
    layers: usize,
}

impl SystemConfig {
    /// `mc > kc >= 1`, `q >= 1`, `layers >= 1`.
    pub fn new(mc: usize, kc: usize, q: u32, layers: usize) -> Result<SystemConfig> {
        if kc < 1 || mc <= kc {
            return Err(Error::InvalidParam(format!(
                "need mc > kc >= 1, got mc={mc}, kc={kc}"
            )));
        }
        if q < 1 || q > 15 {
            return Err(Error::InvalidParam(format!("need 1 <= q <= 15, got {q}")));
        }
        if layers < 1 {
            return Err(Error::InvalidParam("layer count must be >= 1".into()));
        }
        Ok(SystemConfig { mc, kc, q, layers })
    }

    pub fn mc(&self) -> usize {
        self.mc
    }

    pub fn kc(&self) -> usize {
        self.kc
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Real receive dimension `M = 2 mc`.
    pub fn m(&self) -> usize {
        2 * self.mc
    }

    /// Real transmit dimension `K = 2 kc`.
    pub fn k(&self) -> usize {
        2 * self.kc
    }

    /// Largest grid level `2^q − 1`.
    pub fn max_level(&self) -> f64 {
        ((1u64 << self.q) - 1) as f64
    }

    /// Average complex symbol energy `Es = 2 (4^q − 1) / 3` on the
    /// unnormalized grid.
    pub fn es_complex(&self) -> f64 {
        2.0 * ((1u64 << (2 * self.q)) - 1) as f64 / 3.0
    }

    /// Average real-component energy `(4^q − 1) / 3`.
    pub fn es_real(&self) -> f64 {
        ((1u64 << (2 * self.q)) - 1) as f64 / 3.0
    }
}

/// Complex matrix stored as a (re, im) pair of equal shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub re: Matrix,
    pub im: Matrix,
}

impl ComplexMatrix {
    pub fn new(re: Matrix, im: Matrix) -> Result<ComplexMatrix> {
        if re.rows() != im.rows() || re.cols() != im.cols() {
            return Err(Error::dim(
                "complex matrix",
                format!(
                    "re {}x{} vs im {}x{}",
                    re.rows(),
                    re.cols(),
                    im.rows(),
                    im.cols()
                ),
            ));
        }
        Ok(ComplexMatrix { re, im })
    }
}

/// One detection instance in the real model, with the stream that made it.
#[derive(Debug, Clone)]
pub struct RealSample {
    pub y: Vector,
    pub h: Matrix,
    pub s: Vector,
    pub snr_db: f64,
    pub seed: RngStream,
}

/// Real block embedding of a complex channel:
/// `[[Re, Im], [−Im, Re]]`, size `2m × 2k`.
pub fn realify_channel(hc: &ComplexMatrix) -> Matrix {
    let (m, k) = (hc.re.rows(), hc.re.cols());
    Matrix::from_fn(2 * m, 2 * k, |r, c| {
        let (rr, cc) = (r % m, c % k);
        match (r < m, c < k) {
            (true, true) => hc.re.get(rr, cc),
            (true, false) => hc.im.get(rr, cc),
            (false, true) => -hc.im.get(rr, cc),
            (false, false) => hc.re.get(rr, cc),
        }
    })
}

/// Real model of a complex system: returns the block channel
/// `[[Re, Im], [−Im, Re]]` and the stacked observation `[Re(ỹ); Im(ỹ)]`.
pub fn complex_to_real(
    hc: &ComplexMatrix,
    y_re: &[f64],
    y_im: &[f64],
) -> Result<(Matrix, Vector)> {
    if y_re.len() != hc.re.rows() || y_im.len() != hc.re.rows() {
        return Err(Error::dim(
            "complex_to_real",
            format!(
                "observation lengths {}/{} vs channel rows {}",
                y_re.len(),
                y_im.len(),
                hc.re.rows()
            ),
        ));
    }
    let h = realify_channel(hc);
    let mut y = Vec::with_capacity(2 * y_re.len());
    y.extend_from_slice(y_re);
    y.extend_from_slice(y_im);
    Ok((h, y))
}

/// i.i.d. circular complex Gaussian channel, zero mean, unit variance per
/// entry (real/imag parts each with variance 1/2).
pub fn generate_channel(cfg: &SystemConfig, stream: RngStream) -> ComplexMatrix {
    let n = cfg.mc() * cfg.kc();
    let std = 0.5f64.sqrt();
    let re = sample_gaussian(stream.substream(0), n, 0.0, std).expect("std > 0");
    let im = sample_gaussian(stream.substream(1), n, 0.0, std).expect("std > 0");
    ComplexMatrix {
        re: Matrix::new(cfg.mc(), cfg.kc(), re),
        im: Matrix::new(cfg.mc(), cfg.kc(), im),
    }
}

/// `s = Σ 2^{i−1} z_i` from `q` binary planes with entries in `{−1, 1}`.
pub fn compose_symbols(z: &[Vector]) -> Result<Vector> {
    let q = z.len();
    if q == 0 {
        return Err(Error::Empty("plane list"));
    }
    let k = z[0].len();
    let mut s = vec![0.0; k];
    for (i, plane) in z.iter().enumerate() {
        if plane.len() != k {
            return Err(Error::dim(
                "compose_symbols",
                format!("plane {} has length {}, expected {}", i + 1, plane.len(), k),
            ));
        }
        let w = (1u64 << i) as f64;
        for (idx, &v) in plane.iter().enumerate() {
            if v != 1.0 && v != -1.0 {
                return Err(Error::OffGrid { index: idx, value: v });
            }
            s[idx] += w * v;
        }
    }
    Ok(s)
}

/// Unique binary planes of a grid vector; inverse of [`compose_symbols`].
pub fn decompose_symbols(s: &[f64], q: u32) -> Result<Vec<Vector>> {
    let max = ((1u64 << q) - 1) as f64;
    let k = s.len();
    let mut z = vec![vec![0.0; k]; q as usize];
    for (idx, &v) in s.iter().enumerate() {
        let on_grid = v.is_finite() && v.abs() <= max && v.fract() == 0.0 && (v as i64) % 2 != 0;
        if !on_grid {
            return Err(Error::OffGrid { index: idx, value: v });
        }
        // Shift to {0, 2, ..., 2(2^q - 1)} and read the bits of the half.
        let bits = ((v + max) / 2.0) as u64;
        for (i, plane) in z.iter_mut().enumerate() {
            plane[idx] = if (bits >> i) & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
    Ok(z)
}

/// Per-component real noise variance `σr² = σc²/2` at the given SNR, with
/// `σc² = kc·Es / 10^(snr/10)`. `+inf` means noiseless.
pub fn noise_variance_real(cfg: &SystemConfig, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    let sigma_c2 = cfg.kc() as f64 * cfg.es_complex() / 10f64.powf(snr_db / 10.0);
    sigma_c2 / 2.0
}

/// `y = H s + υ` with i.i.d. real Gaussian noise at the configured SNR.
/// `snr_db = +inf` produces the noiseless observation exactly.
pub fn awgn_transmit(
    cfg: &SystemConfig,
    h: &Matrix,
    s: &[f64],
    snr_db: f64,
    stream: RngStream,
) -> Result<Vector> {
    if s.len() != h.cols() {
        return Err(Error::dim(
            "awgn_transmit",
            format!("symbol length {} vs channel cols {}", s.len(), h.cols()),
        ));
    }
    let mut y = h.matvec(s);
    let sigma2 = noise_variance_real(cfg, snr_db);
    if sigma2 > 0.0 {
        let noise = sample_gaussian(stream, y.len(), 0.0, sigma2.sqrt())?;
        for (yi, ni) in y.iter_mut().zip(noise.iter()) {
            *yi += ni;
        }
    }
    Ok(y)
}

fn quantize_one(x: f64, max: f64) -> f64 {
    // Nearest odd integer; ties (even integers) round toward -inf.
    let half = (x + 1.0) / 2.0;
    let v = 2.0 * (half - 0.5).ceil() - 1.0;
    v.clamp(-max, max)
}

/// Hard decision: each entry mapped to the nearest grid level, ties rounding
/// toward `-inf`, then clamped to the grid.
pub fn quantize(x_hat: &[f64], q: u32) -> Result<Vector> {
    let max = ((1u64 << q) - 1) as f64;
    x_hat
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() {
                return Err(Error::OffGrid { index: i, value: v });
            }
            Ok(quantize_one(v, max))
        })
        .collect()
}

/// Number of the `kc` complex symbols whose real or imaginary component
/// differs. Components are stacked `[Re; Im]`, so symbol `j` owns entries
/// `j` and `j + kc`.
pub fn complex_symbol_errors(s_hat: &[f64], s: &[f64], kc: usize) -> Result<u64> {
    if s_hat.len() != s.len() || s.len() != 2 * kc {
        return Err(Error::dim(
            "symbol_error_rate",
            format!("lengths {} / {} vs 2*kc = {}", s_hat.len(), s.len(), 2 * kc),
        ));
    }
    let mut errors = 0u64;
    for j in 0..kc {
        if s_hat[j] != s[j] || s_hat[j + kc] != s[j + kc] {
            errors += 1;
        }
    }
    Ok(errors)
}

/// Fraction of complex symbols decided incorrectly.
pub fn symbol_error_rate(s_hat: &[f64], s: &[f64], kc: usize) -> Result<f64> {
    Ok(complex_symbol_errors(s_hat, s, kc)? as f64 / kc as f64)
}

/// Noise policy of a dataset: a fixed SNR point or a uniform range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrPolicy {
    Fixed(f64),
    UniformRange(f64, f64),
}

impl SnrPolicy {
    fn resolve(&self, stream: RngStream) -> f64 {
        match *self {
            SnrPolicy::Fixed(db) => db,
            SnrPolicy::UniformRange(lo, hi) => sample_uniform(stream, lo, hi),
        }
    }
}

/// Dataset descriptor: enough to regenerate every sample bit-exactly.
/// Serialized as `{ mc, kc, q, snr_db | snr_range, m, seed }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetSpecRepr", into = "DatasetSpecRepr")]
pub struct DatasetSpec {
    pub mc: usize,
    pub kc: usize,
    pub q: u32,
    pub snr: SnrPolicy,
    pub m: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSpecRepr {
    mc: usize,
    kc: usize,
    q: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_db: Option<SnrDbRepr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_range: Option<[f64; 2]>,
    m: usize,
    seed: u64,
}

/// `snr_db` accepts a number or the string `"inf"` for noiseless datasets.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SnrDbRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<DatasetSpecRepr> for DatasetSpec {
    type Error = Error;

    fn try_from(r: DatasetSpecRepr) -> Result<DatasetSpec> {
        let snr = match (r.snr_db, r.snr_range) {
            (Some(db), None) => {
                let v = match db {
                    SnrDbRepr::Num(v) => v,
                    SnrDbRepr::Text(t) if t == "inf" => f64::INFINITY,
                    SnrDbRepr::Text(t) => {
                        return Err(Error::InvalidParam(format!(
                            "snr_db must be a number or \"inf\", got \"{t}\""
                        )))
                    }
                };
                SnrPolicy::Fixed(v)
            }
            (None, Some([lo, hi])) => {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "snr_range must be finite with lo <= hi, got [{lo}, {hi}]"
                    )));
                }
                SnrPolicy::UniformRange(lo, hi)
            }
            _ => {
                return Err(Error::InvalidParam(
                    "dataset needs exactly one of snr_db / snr_range".into(),
                ))
            }
        };
        if r.m < 1 {
            return Err(Error::InvalidParam("dataset size m must be >= 1".into()));
        }
        // Validate antenna counts and q through the config constructor.
        SystemConfig::new(r.mc, r.kc, r.q, 1)?;
        Ok(DatasetSpec {
            mc: r.mc,
            kc: r.kc,
            q: r.q,
            snr,
            m: r.m,
            seed: r.seed,
        })
    }
}

impl From<DatasetSpec> for DatasetSpecRepr {
    fn from(d: DatasetSpec) -> DatasetSpecRepr {
        let (snr_db, snr_range) = match d.snr {
            SnrPolicy::Fixed(v) if v == f64::INFINITY => (Some(SnrDbRepr::Text("inf".into())), None),
            SnrPolicy::Fixed(v) => (Some(SnrDbRepr::Num(v)), None),
            SnrPolicy::UniformRange(lo, hi) => (None, Some([lo, hi])),
        };
        DatasetSpecRepr {
            mc: d.mc,
            kc: d.kc,
            q: d.q,
            snr_db,
            snr_range,
            m: d.m,
            seed: d.seed,
        }
    }
}

impl DatasetSpec {
    pub fn system_config(&self) -> SystemConfig {
        SystemConfig::new(self.mc, self.kc, self.q, 1).expect("validated at construction")
    }

    /// Sample `i`, regenerated from `(seed, i)`.
    pub fn sample(&self, i: usize) -> RealSample {
        generate_sample(
            &self.system_config(),
            self.snr,
            RngStream::new(self.seed, i as u64),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = RealSample> + '_ {
        (0..self.m).map(move |i| self.sample(i))
    }
}

/// One detection instance: fresh channel, uniform symbols, noise per policy.
/// Substreams 0..3 of `stream` drive channel, symbols, SNR draw and noise.
pub fn generate_sample(cfg: &SystemConfig, policy: SnrPolicy, stream: RngStream) -> RealSample {
    let hc = generate_channel(cfg, stream.substream(0));
    let h = realify_channel(&hc);

    let levels = 1u64 << cfg.q();
    let max = cfg.max_level();
    let mut sym_rng = stream.substream(1).rng();
    let s: Vector = (0..cfg.k())
        .map(|_| 2.0 * sym_rng.gen_range(0..levels) as f64 - max)
        .collect();

    let snr_db = policy.resolve(stream.substream(2));
    let y = awgn_transmit(cfg, &h, &s, snr_db, stream.substream(3)).expect("shapes consistent");
    RealSample {
        y,
        h,
        s,
        snr_db,
        seed: stream,
    }
}
