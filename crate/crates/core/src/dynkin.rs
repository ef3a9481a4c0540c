//! Dyn'kin-type extension of a power series with Gevrey-decaying
//! coefficients to a compactly supported `C^1` function on `|z| < 2`,
//!
//! ```text
//! f = sum_m phi_m (S_m - S_{m+1}),   S_m = sum_{k >= N(m)} c_k z^k,
//! ```
//!
//! with `N(0) = 0`, `N(m) = 2^{(2+beta) m} gamma_dyn` and `phi_m` a radial
//! cubic smoothstep falling from 1 at `|z| = 1 + 2^{-m-1}` to 0 at
//! `|z| = 1 + 2^{-m}`. Each `S_m - S_{m+1}` is a polynomial, so on the
//! annulus `1 + 2^{-m-1} <= |z| < 1 + 2^{-m}` the extension is the finite
//! expression `sum_{k < N(m)} c_k z^k + phi_m(|z|) P_m(z)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantsConfig;
use crate::error::{invalid, Error, Result};
use crate::quad::gauss_legendre;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Neglected-tail tolerance that fixes the block cutoff `M_max`.
pub const TAIL_TOL: f64 = 1e-18;
/// Largest coefficient index the construction will materialise.
const MAX_TERMS: usize = 1 << 22;

/// Taylor coefficients together with a certified majorant
/// `|c_k| <= a' exp(-a k^alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    /// `c_k = a' exp(-a k^alpha)`, so the majorant is attained.
    Gevrey { alpha: f64, a: f64, a_prime: f64 },
    /// Finitely many coefficients; all later ones are zero.
    Explicit(Vec<Complex64>),
}

impl CoefficientSource {
    /// `exp(-sqrt(k))`, the standard test series.
    pub fn exp_sqrt() -> Self {
        CoefficientSource::Gevrey { alpha: 0.5, a: 1.0, a_prime: 1.0 }
    }

    pub fn zero() -> Self {
        CoefficientSource::Explicit(Vec::new())
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        match self {
            CoefficientSource::Gevrey { alpha, a, a_prime } => {
                Complex64::new(a_prime * (-a * (k as f64).powf(*alpha)).exp(), 0.0)
            }
            CoefficientSource::Explicit(c) => c.get(k).copied().unwrap_or(ZERO),
        }
    }

    /// Certified bound on `sum_{k >= n} a' exp(-decay k^alpha)`, using
    /// `sum <= g(n) + int_n^inf g` and
    /// `Gamma(s+1, Y) <= Y^s e^{-Y} / (1 - s/Y)` for `Y > s`, `s = 1/alpha - 1`.
    /// Infinite when the estimate does not apply yet.
    pub fn majorant_tail(&self, n: usize, decay: f64) -> f64 {
        match self {
            CoefficientSource::Gevrey { alpha, a_prime, .. } => gevrey_tail(*alpha, decay, *a_prime, n),
            CoefficientSource::Explicit(c) => {
                if n >= c.len() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Majorant decay rate `a`, or `None` for a finite source.
    fn decay(&self) -> Option<f64> {
        match self {
            CoefficientSource::Gevrey { a, .. } => Some(*a),
            CoefficientSource::Explicit(_) => None,
        }
    }
}

fn gevrey_tail(alpha: f64, decay: f64, a_prime: f64, n: usize) -> f64 {
    if decay <= 0.0 {
        return f64::INFINITY;
    }
    let y = decay * (n as f64).powf(alpha);
    let s = 1.0 / alpha - 1.0;
    if y <= s || (n == 0 && s > 0.0) {
        return f64::INFINITY;
    }
    let first = (-y).exp();
    let integral = if y == 0.0 {
        f64::INFINITY
    } else {
        y.powf(s) * (-y).exp() / (alpha * decay.powf(1.0 / alpha) * (1.0 - s / y))
    };
    a_prime * (first + integral)
}

/// `gamma_dyn = (a_f / 2^{2+beta} * (1+beta)/(2+beta))^{2+beta}`.
pub fn dynkin_gamma(beta: f64, a_f: f64) -> f64 {
    (a_f / 2f64.powf(2.0 + beta) * (1.0 + beta) / (2.0 + beta)).powf(2.0 + beta)
}

/// `N(m)`.
pub fn block_index(beta: f64, gamma_dyn: f64, m: usize) -> f64 {
    if m == 0 {
        0.0
    } else {
        2f64.powf((2.0 + beta) * m as f64) * gamma_dyn
    }
}

/// Cubic smoothstep `s(t) = 3t^2 - 2t^3` in `t = (r_out - r)/(r_out - r_in)`;
/// `phi_m = 1` inside `r_in = 1 + 2^{-m-1}` and 0 outside `r_out = 1 + 2^{-m}`.
/// Its radial derivative is bounded by `3 * 2^m`, hence `|dbar phi_m| <= (3/2) 2^m`.
pub fn cutoff(m: usize, r: f64) -> (f64, f64) {
    let (r_in, r_out) = block_radii(m);
    if r <= r_in {
        return (1.0, 0.0);
    }
    if r >= r_out {
        return (0.0, 0.0);
    }
    let w = r_out - r_in;
    let t = (r_out - r) / w;
    (t * t * (3.0 - 2.0 * t), -6.0 * t * (1.0 - t) / w)
}

pub fn block_radii(m: usize) -> (f64, f64) {
    (1.0 + 0.5f64.powi(m as i32 + 1), 1.0 + 0.5f64.powi(m as i32))
}

/// Annulus index `m` with `1 + 2^{-m-1} <= r < 1 + 2^{-m}`, for `1 < r < 2`.
fn annulus_of(r: f64) -> usize {
    let mut m = (-(r - 1.0).log2()).ceil().max(1.0) as usize - 1;
    // guard the floating-point edge cases
    while m > 0 && r >= block_radii(m).1 {
        m -= 1;
    }
    while r < block_radii(m).0 {
        m += 1;
    }
    m
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynkinExtension {
    pub source: CoefficientSource,
    pub beta: f64,
    pub a_f: f64,
    pub a_f_prime: f64,
    pub gamma_dyn: f64,
    /// Last block built explicitly; later blocks are covered by `tail_bound`.
    pub m_max: usize,
    /// `ceil N(m)` for `m = 0..=m_max + 1`.
    pub block_starts: Vec<usize>,
    /// Bound on everything neglected beyond `block_starts[m_max + 1]`, valid on `|z| < 1 + 2^{-m_max-1}`.
    pub tail_bound: f64,
    coeffs: Vec<Complex64>,
}

impl DynkinExtension {
    /// Builds the block structure. `M_max` is the first block whose start
    /// index carries a certified tail below [`TAIL_TOL`]; the tail is
    /// measured with the reduced rate `a - 2 gamma_dyn^{1/(2+beta)}`, which
    /// absorbs the growth `|z|^k <= (1 + 2^{-m})^k` on the blocks beyond.
    pub fn new(source: CoefficientSource, beta: f64, a_f: f64, a_f_prime: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be nonnegative, got {beta}")));
        }
        if !(a_f > 0.0 && a_f_prime > 0.0) {
            return Err(invalid("a_f and a_f_prime must be positive"));
        }
        let gamma_dyn = dynkin_gamma(beta, a_f);
        let start = |m: usize| block_index(beta, gamma_dyn, m).ceil() as usize;
        let reduced = source.decay().map(|a| a - 2.0 * gamma_dyn.powf(1.0 / (2.0 + beta)));
        let mut m = 0usize;
        let tail_bound = loop {
            let n = start(m + 1);
            let tail = match reduced {
                Some(rate) => source.majorant_tail(n, rate),
                None => source.majorant_tail(n, 1.0),
            };
            if tail < TAIL_TOL {
                break tail;
            }
            if n > MAX_TERMS {
                return Err(Error::UncertifiedTail(m));
            }
            m += 1;
        };
        let block_starts: Vec<usize> = (0..=m + 1).map(start).collect();
        let coeffs = (0..block_starts[m + 1]).map(|k| source.coeff(k)).collect();
        Ok(Self { source, beta, a_f, a_f_prime, gamma_dyn, m_max: m, block_starts, tail_bound, coeffs })
    }

    fn horner(&self, lo: usize, hi: usize, z: Complex64) -> Complex64 {
        // sum_{lo <= k < hi} c_k z^k
        let mut acc = ZERO;
        for k in (lo..hi).rev() {
            acc = acc * z + self.coeffs[k];
        }
        acc * z.powu(lo as u32)
    }

    /// Block polynomial `P_m = S_m - S_{m+1}`.
    pub fn block_poly(&self, m: usize, z: Complex64) -> Complex64 {
        self.horner(self.block_starts[m], self.block_starts[m + 1], z)
    }

    /// The extension at `z`.
    pub fn extend(&self, z: Complex64) -> Complex64 {
        let r = z.norm();
        if r >= 2.0 {
            return ZERO;
        }
        let full = self.block_starts[self.m_max + 1];
        if r <= 1.0 {
            return self.horner(0, full, z);
        }
        let m = annulus_of(r);
        if m > self.m_max {
            return self.horner(0, full, z);
        }
        let (phi, _) = cutoff(m, r);
        self.horner(0, self.block_starts[m], z) + phi * self.block_poly(m, z)
    }

    /// Closed-form `dbar f = phi_m'(|z|) z/(2|z|) P_m(z)` for the single
    /// active block `m`; zero off the annulus and beyond `m_max` (where the
    /// neglected value is below `tail_bound`).
    pub fn dbar(&self, z: Complex64) -> Complex64 {
        let r = z.norm();
        if r <= 1.0 || r >= 2.0 {
            return ZERO;
        }
        let m = annulus_of(r);
        if m > self.m_max {
            return ZERO;
        }
        let (_, dphi) = cutoff(m, r);
        dphi * z / (2.0 * r) * self.block_poly(m, z)
    }

    /// Blocks whose cutoff has nonzero gradient at `z`.
    pub fn active_blocks(&self, z: Complex64) -> Vec<usize> {
        let r = z.norm();
        (0..=self.m_max + 1).filter(|&m| cutoff(m, r).1 != 0.0).collect()
    }
}

/// Richardson-extrapolated central differences for `dbar F = (F_x + i F_y)/2`.
pub fn dbar_finite_difference(f: impl Fn(Complex64) -> Complex64, z: Complex64, h: f64) -> Complex64 {
    let central = |h: f64| {
        let fx = (f(z + h) - f(z - h)) / (2.0 * h);
        let fy = (f(z + Complex64::new(0.0, h)) - f(z - Complex64::new(0.0, h))) / (2.0 * h);
        0.5 * (fx + Complex64::i() * fy)
    };
    (4.0 * central(0.5 * h) - central(h)) / 3.0
}

/// `rho_beta(x) = exp(-x^{-(1+beta)})`.
pub fn rho(beta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-x.powf(-(1.0 + beta))).exp()
    }
}

/// The dbar-side class parameters from the constants:
/// `d_f = C a_f^{-(2+beta)/(1+beta)}`, `d'_f = C_1 a'_f a_f^{-2(2+beta)/(1+beta)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyClassParams {
    pub beta: f64,
    pub d_f: f64,
    pub d_f_prime: f64,
}

impl CauchyClassParams {
    pub fn for_extension(ext: &DynkinExtension, consts: &ConstantsConfig) -> Self {
        let p = (2.0 + ext.beta) / (1.0 + ext.beta);
        Self {
            beta: ext.beta,
            d_f: consts.c_dynkin * ext.a_f.powf(-p),
            d_f_prime: consts.c1_dynkin * ext.a_f_prime * ext.a_f.powf(-2.0 * p),
        }
    }

    /// `ln(d'_f rho_beta(d_f (r - 1)))`.
    pub fn log_majorant(&self, r: f64) -> f64 {
        self.d_f_prime.ln() - (self.d_f * (r - 1.0)).powf(-(1.0 + self.beta))
    }
}

/// Tensor grid `r_i = 1 + (i + 1/2)/n_r`, `theta_j = 2 pi j / n_theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_theta: usize,
}

impl PolarGrid {
    pub fn points(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.n_r * self.n_theta);
        for i in 0..self.n_r {
            let r = 1.0 + (i as f64 + 0.5) / self.n_r as f64;
            for j in 0..self.n_theta {
                out.push(Complex64::from_polar(r, 2.0 * PI * j as f64 / self.n_theta as f64));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbarReport {
    pub max_ratio: f64,
    pub worst_point: Complex64,
    pub pass: bool,
    pub params: CauchyClassParams,
    pub grid: PolarGrid,
}

/// Largest `|dbar f| / (d'_f rho_beta(d_f(|z| - 1)))` over the grid.
pub fn verify_dbar_bound(ext: &DynkinExtension, grid: PolarGrid, consts: &ConstantsConfig) -> Result<DbarReport> {
    if grid.n_r == 0 || grid.n_theta == 0 {
        return Err(invalid("grid must be nonempty"));
    }
    let params = CauchyClassParams::for_extension(ext, consts);
    let (log_ratio, worst_point) = grid
        .points()
        .par_iter()
        .map(|&z| {
            let v = ext.dbar(z).norm();
            let lr = if v == 0.0 { f64::NEG_INFINITY } else { v.ln() - params.log_majorant(z.norm()) };
            (lr, z)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::NEG_INFINITY, Complex64::new(1.0, 0.0)), |acc, x| if x.0 > acc.0 { x } else { acc });
    let max_ratio = log_ratio.exp();
    Ok(DbarReport { max_ratio, worst_point, pass: max_ratio <= 1.0, params, grid })
}

/// Smallest `C_1` (for the configured `C`) under which the grid check passes.
pub fn calibrate_dbar(ext: &DynkinExtension, grid: PolarGrid, consts: &ConstantsConfig) -> Result<ConstantsConfig> {
    let mut unit = consts.clone();
    unit.c1_dynkin = 1.0;
    let report = verify_dbar_bound(ext, grid, &unit)?;
    let mut out = consts.clone();
    out.c1_dynkin = if report.max_ratio > 0.0 { report.max_ratio * (1.0 + 1e-9) } else { consts.c1_dynkin };
    Ok(out)
}

/// Calibrates the pair `(C, C_1)` jointly: for each `C` in `ladder` the
/// smallest passing `C_1` is computed, and the pair minimising `max(C, C_1)`
/// wins. A small `C` forces an enormous `C_1` because `rho` collapses near the
/// circle, so neither constant can be chosen alone.
pub fn calibrate_dbar_ladder(
    ext: &DynkinExtension,
    grid: PolarGrid,
    ladder: &[f64],
    consts: &ConstantsConfig,
) -> Result<ConstantsConfig> {
    let mut best: Option<ConstantsConfig> = None;
    for &c in ladder {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("ladder value {c} must be positive")));
        }
        let mut trial = consts.clone();
        trial.c_dynkin = c;
        let cal = calibrate_dbar(ext, grid, &trial)?;
        let score = cal.c_dynkin.max(cal.c1_dynkin);
        if best.as_ref().is_none_or(|b| score < b.c_dynkin.max(b.c1_dynkin)) {
            best = Some(cal);
        }
    }
    best.ok_or_else(|| invalid("empty calibration ladder"))
}

/// Powers of two from 1/4 to 256.
pub fn default_dbar_ladder() -> Vec<f64> {
    (-2..=8).map(|k| 2f64.powi(k)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSpec {
    /// Gauss-Legendre nodes per block at level 0.
    pub radial_nodes: usize,
    /// Minimum angular samples per ring at level 0.
    pub angular_samples: usize,
    pub tol: f64,
    pub max_levels: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { radial_nodes: 4, angular_samples: 256, tol: 1e-10, max_levels: 6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub value: Complex64,
    /// Difference between the last two refinement levels.
    pub error_estimate: f64,
    pub levels: usize,
}

/// `(1/pi) int_{1<|zeta|<2} dbar f(zeta) / (z - zeta) dm_2` by a polar
/// tensor rule: Gauss-Legendre in `r` on each block annulus (geometric
/// toward `|zeta| = 1`) and the trapezoid rule in angle. Ring samples of
/// `P_m` come from one FFT of the coefficients folded modulo the ring size.
pub fn cauchy_green_reconstruct(ext: &DynkinExtension, z: Complex64, quad: &QuadSpec) -> Result<Reconstruction> {
    if !(z.norm() < 1.0) {
        return Err(invalid("reconstruction needs |z| < 1"));
    }
    let mut prev: Option<Complex64> = None;
    let mut last_gap = f64::INFINITY;
    for level in 0..=quad.max_levels {
        let value = reconstruct_level(ext, z, quad, level);
        if let Some(p) = prev {
            last_gap = (value - p).norm();
            if last_gap <= quad.tol * value.norm().max(1.0) {
                return Ok(Reconstruction { value, error_estimate: last_gap, levels: level + 1 });
            }
        }
        prev = Some(value);
    }
    Err(Error::QuadratureNotConverged(last_gap))
}

fn reconstruct_level(ext: &DynkinExtension, z: Complex64, quad: &QuadSpec, level: usize) -> Complex64 {
    let scale = 1usize << level;
    let (xs, ws) = gauss_legendre(quad.radial_nodes * scale);
    let blocks: Vec<Complex64> = (0..=ext.m_max)
        .into_par_iter()
        .map(|m| {
            let (lo, hi) = (ext.block_starts[m], ext.block_starts[m + 1]);
            if lo == hi {
                return ZERO;
            }
            let samples = (2 * hi).max(quad.angular_samples).next_power_of_two() * scale;
            let fft = FftPlanner::new().plan_fft_inverse(samples);
            let (r_in, r_out) = block_radii(m);
            let half = 0.5 * (r_out - r_in);
            let mid = 0.5 * (r_out + r_in);
            let mut total = ZERO;
            for (x, w) in xs.iter().zip(&ws) {
                let r = mid + half * x;
                let (_, dphi) = cutoff(m, r);
                let mut ring = vec![ZERO; samples];
                for k in lo..hi {
                    ring[k % samples] += ext.coeffs[k] * r.powi(k as i32);
                }
                fft.process(&mut ring);
                let mut s = ZERO;
                for (j, p) in ring.iter().enumerate() {
                    let zeta = Complex64::from_polar(r, 2.0 * PI * j as f64 / samples as f64);
                    let dbar = dphi * zeta / (2.0 * r) * p;
                    s += dbar / (z - zeta);
                }
                // area element r dr dtheta
                total += s * (2.0 * PI / samples as f64) * r * w * half;
            }
            total / PI
        })
        .collect();
    blocks.into_iter().sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverRow {
    pub n: usize,
    pub abs_coeff: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverReport {
    pub pass: bool,
    pub params: CauchyClassParams,
    pub rows: Vec<RecoverRow>,
}

/// Checks `|c_n| <= C d'_f exp(-(1/2) d_f^{-(1+beta)/(2+beta)} n^{(1+beta)/(2+beta)})`
/// with `C = C_recover`.
pub fn recover_coeff_bounds(
    ext: &DynkinExtension,
    n_range: std::ops::RangeInclusive<usize>,
    consts: &ConstantsConfig,
) -> RecoverReport {
    let params = CauchyClassParams::for_extension(ext, consts);
    let q = (1.0 + ext.beta) / (2.0 + ext.beta);
    let rows: Vec<RecoverRow> = n_range
        .map(|n| RecoverRow {
            n,
            abs_coeff: ext.source.coeff(n).norm(),
            bound: consts.c_recover * params.d_f_prime * (-0.5 * params.d_f.powf(-q) * (n as f64).powf(q)).exp(),
        })
        .collect();
    RecoverReport { pass: rows.iter().all(|r| r.abs_coeff <= r.bound), params, rows }
}

/// Smallest `C_recover` for which `recover_coeff_bounds` passes on `n_range`.
pub fn calibrate_recover(
    ext: &DynkinExtension,
    n_range: std::ops::RangeInclusive<usize>,
    consts: &ConstantsConfig,
) -> ConstantsConfig {
    let mut unit = consts.clone();
    unit.c_recover = 1.0;
    let worst =
        recover_coeff_bounds(ext, n_range, &unit).rows.iter().map(|r| r.abs_coeff / r.bound).fold(0.0, f64::max);
    let mut out = consts.clone();
    if worst > 0.0 {
        out.c_recover = worst * (1.0 + 1e-9);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ext() -> DynkinExtension {
        DynkinExtension::new(CoefficientSource::exp_sqrt(), 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert!((dynkin_gamma(0.0, 1.0) - 1.0 / 64.0).abs() < 1e-16);
        assert!((dynkin_gamma(0.0, 2.0) - 1.0 / 16.0).abs() < 1e-16);
        assert!((dynkin_gamma(1.0, 1.0) - 1.0 / 1728.0).abs() < 1e-16);
    }

    #[test]
    fn block_layout() {
        let e = ext();
        assert_eq!(&e.block_starts[..8], &[0, 1, 1, 1, 4, 16, 64, 256]);
        assert!(e.tail_bound < TAIL_TOL);
    }

    #[test]
    fn tail_bound_dominates_sum() {
        let src = CoefficientSource::exp_sqrt();
        for n in [10usize, 100, 1000] {
            let direct: f64 = (n..n + 200_000).map(|k| src.coeff(k).re).sum();
            let bound = src.majorant_tail(n, 1.0);
            assert!(bound >= direct && bound < 3.0 * direct, "n={n}");
        }
    }

    #[test]
    fn inside_equals_series_and_outside_vanishes() {
        let e = ext();
        let z = c(0.3, 0.4);
        let series: Complex64 = (0..20_000).map(|k| e.source.coeff(k) * z.powu(k as u32)).sum();
        assert!((e.extend(z) - series).norm() < 1e-14);
        assert_eq!(e.extend(c(2.0, 0.0)), ZERO);
        assert_eq!(e.dbar(c(0.0, 2.5)), ZERO);
        assert_eq!(e.dbar(c(0.5, 0.0)), ZERO);
    }

    #[test]
    fn value_at_one_point_three() {
        // annulus m = 1, where block 1 is empty: only c_0 survives
        let e = ext();
        let z = c(1.3, 0.0);
        let (phi1, _) = cutoff(1, 1.3);
        assert!(phi1 > 0.0 && phi1 < 1.0);
        let want = e.block_poly(0, z) + phi1 * e.block_poly(1, z);
        assert!((e.extend(z) - want).norm() < 1e-15);
    }

    #[test]
    fn cutoff_gradient_bound() {
        for m in 0..6 {
            let (r_in, r_out) = block_radii(m);
            let worst =
                (0..1000).map(|i| cutoff(m, r_in + (r_out - r_in) * i as f64 / 999.0).1.abs()).fold(0.0, f64::max);
            assert!(worst <= 3.0 * 2f64.powi(m as i32) + 1e-9);
        }
    }

    #[test]
    fn at_most_one_active_block() {
        let e = ext();
        for i in 1..2000 {
            let z = Complex64::from_polar(1.0 + i as f64 / 2000.0, 0.3 * i as f64);
            assert!(e.active_blocks(z).len() <= 1);
        }
    }

    #[test]
    fn dbar_matches_finite_differences() {
        let e = ext();
        for z in [c(1.3, 0.0), c(0.0, 1.7), c(-1.07, 0.05), c(1.2, -0.6)] {
            let r = z.norm();
            let h = 1e-5 * (r - 1.0).min(2.0 - r);
            let fd = dbar_finite_difference(|w| e.extend(w), z, h);
            let exact = e.dbar(z);
            assert!((fd - exact).norm() < 1e-6 * exact.norm().max(1.0), "{z}: {fd} vs {exact}");
        }
    }

    #[test]
    fn zero_function() {
        let e = DynkinExtension::new(CoefficientSource::zero(), 0.0, 1.0, 1.0).unwrap();
        let k = ConstantsConfig::default();
        let rep = verify_dbar_bound(&e, PolarGrid { n_r: 8, n_theta: 8 }, &k).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
        assert!(rep.pass);
        let r = cauchy_green_reconstruct(&e, c(0.2, 0.1), &QuadSpec::default()).unwrap();
        assert_eq!(r.value, ZERO);
        assert!(recover_coeff_bounds(&e, 0..=10, &k).pass);
    }

    #[test]
    fn reconstruction_at_origin() {
        let e = ext();
        let r = cauchy_green_reconstruct(&e, c(0.0, 0.0), &QuadSpec::default()).unwrap();
        assert!((r.value - 1.0).norm() < 1e-10, "{r:?}");
    }
}
