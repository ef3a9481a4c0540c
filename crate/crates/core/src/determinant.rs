//! Perturbation determinant `Delta(z) = det((J - E)(J_0 - E)^{-1})`,
//! `E = (z + 1/z)/2`, its Taylor coefficients, and the Jost solution.
//!
//! With `D_k` the leading principal minors of `J - E`, the rescaled minors
//! `q_k = (-2z)^k D_k` obey
//!
//! ```text
//! q_k = (1 - 2 z b_{k-1} + z^2) q_{k-1} - 4 z^2 a_{k-2} c_{k-2} q_{k-2},
//! ```
//!
//! which is analytic at `z = 0`. Past the support the recursion is free,
//! `q_k = alpha + beta z^{2k}`, and the ratio to the free minors tends to
//! `(1 - z^2) alpha = q_n - z^2 q_{n-1}`. That limit is exact once
//! `n > support_end`, so no truncation error enters.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantsConfig;
use crate::error::{invalid, Error, Result};
use crate::model::{joukowski, PotentialSpec};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const RESCALE_ABOVE: f64 = 1e150;

/// Determinant evaluated as `mantissa * 2^exponent` so that strongly
/// coupled specs cannot overflow mid-recursion.
#[derive(Clone, Copy, Debug)]
pub struct ScaledValue {
    pub mantissa: Complex64,
    pub exponent: i32,
}

impl ScaledValue {
    pub fn value(&self) -> Complex64 {
        self.mantissa * 2f64.powi(self.exponent)
    }
}

fn run_minors(spec: &PotentialSpec, z: Complex64, steps: usize) -> (Complex64, Complex64, i32) {
    let z2 = z * z;
    let mut prev = Complex64::new(0.0, 0.0);
    let mut cur = ONE;
    let mut exponent = 0i32;
    for k in 1..=steps {
        let lead = ONE - 2.0 * z * spec.b(k - 1) + z2;
        let coupling = if k >= 2 { 4.0 * z2 * spec.a(k - 2) * spec.c(k - 2) } else { Complex64::new(0.0, 0.0) };
        let next = lead * cur - coupling * prev;
        prev = cur;
        cur = next;
        let size = cur.norm().max(prev.norm());
        if size > RESCALE_ABOVE {
            let shift = size.log2().floor() as i32;
            let factor = 2f64.powi(-shift);
            cur *= factor;
            prev *= factor;
            exponent += shift;
        }
    }
    (prev, cur, exponent)
}

/// `Delta(z)` in scaled form; see the module docs for the recursion.
pub fn delta_eval_scaled(spec: &PotentialSpec, z: Complex64) -> Result<ScaledValue> {
    if !(z.norm() < 1.0) {
        return Err(invalid(format!("delta_eval needs |z| < 1, got |z| = {}", z.norm())));
    }
    let n = spec.support_end() + 1;
    let limit =
        |(prev, cur, exponent): (Complex64, Complex64, i32)| ScaledValue { mantissa: cur - z * z * prev, exponent };
    let first = limit(run_minors(spec, z, n));
    let second = limit(run_minors(spec, z, 2 * n));
    let scale = first.mantissa.norm().max(1.0);
    let shift = 2f64.powi(second.exponent - first.exponent);
    let gap = (first.mantissa - second.mantissa * shift).norm() / scale;
    if !(gap <= 1e-9) {
        return Err(Error::NonConvergence { gap });
    }
    Ok(first)
}

/// The perturbation determinant at `|z| < 1`; `Delta(0) = 1`.
pub fn delta_eval(spec: &PotentialSpec, z: Complex64) -> Result<Complex64> {
    let v = delta_eval_scaled(spec, z)?.value();
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonConvergence { gap: f64::INFINITY });
    }
    Ok(v)
}

/// Jost-type solution normalised by `u_n = z^n v_n`, with `v_n = 1` for
/// `n >= support_end`, run backward through
/// `a_{n-1} v_{n-1} = ((1 + z^2)/2 - b_n z) v_n - c_n z^2 v_{n+1}`.
fn jost_v01(spec: &PotentialSpec, z: Complex64) -> Result<(Complex64, Complex64)> {
    let n0 = spec.support_end();
    let z2 = z * z;
    let mut next = ONE; // v_{n+1}
    let mut cur = ONE; // v_n
    for n in (1..=n0).rev() {
        let a = spec.a(n - 1);
        if a.norm() == 0.0 {
            return Err(Error::VanishingSubdiagonal(n - 1));
        }
        let prev = (((ONE + z2) * 0.5 - spec.b(n) * z) * cur - spec.c(n) * z2 * next) / a;
        next = cur;
        cur = prev;
    }
    if n0 == 0 {
        return Ok((ONE, ONE));
    }
    Ok((cur, next))
}

/// Residual of the Jost solution in row 0: `W(z) = (b_0 - E) u_0 + c_0 u_1`.
/// Vanishes exactly when `E = (z + 1/z)/2` is an eigenvalue.
pub fn jost_wronskian(spec: &PotentialSpec, z: Complex64) -> Result<Complex64> {
    if !(z.norm() > 0.0 && z.norm() < 1.0) {
        return Err(invalid("jost_wronskian needs 0 < |z| < 1"));
    }
    let (v0, v1) = jost_v01(spec, z)?;
    let e = joukowski(z)?;
    Ok((spec.b(0) - e) * v0 + spec.c(0) * z * v1)
}

/// `z W(z)`, a polynomial in `z` with the same zeros as `W` in `0 < |z| < 1`.
pub fn scaled_jost(spec: &PotentialSpec, z: Complex64) -> Result<Complex64> {
    let (v0, v1) = jost_v01(spec, z)?;
    Ok((spec.b(0) * z - (ONE + z * z) * 0.5) * v0 + spec.c(0) * z * z * v1)
}

/// One Taylor coefficient in log-magnitude / phase form. A coefficient below
/// the extraction noise floor is stored as an exact zero
/// (`log_magnitude = -inf`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub log_magnitude: f64,
    pub phase: f64,
    pub reliable: bool,
}

impl Coefficient {
    pub fn from_value(v: Complex64, reliable: bool) -> Self {
        if v.norm() == 0.0 {
            return Self { log_magnitude: f64::NEG_INFINITY, phase: 0.0, reliable };
        }
        Self { log_magnitude: v.norm().ln(), phase: v.arg(), reliable }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(self.log_magnitude.exp(), self.phase)
    }

    pub fn is_zero(&self) -> bool {
        self.log_magnitude == f64::NEG_INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterminantSeries {
    pub coeffs: Vec<Coefficient>,
    pub radius_used: f64,
    /// Largest disagreement between the two extraction radii, relative to
    /// `max(|delta_j|, noise_j)`.
    pub consistency_gap: f64,
    pub threshold: f64,
}

impl DeterminantSeries {
    pub fn is_reliable(&self) -> bool {
        self.consistency_gap <= self.threshold && self.coeffs.iter().all(|c| c.reliable)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self, j: usize) -> Complex64 {
        self.coeffs[j].value()
    }

    /// Horner evaluation of the truncated series.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c.value())
    }

    /// CSV with columns `j, log10_abs_delta, phase_rad, reliable`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "log10_abs_delta", "phase_rad", "reliable"])?;
        for (j, c) in self.coeffs.iter().enumerate() {
            let log10 = if c.is_zero() {
                "-inf".to_string()
            } else {
                format!("{:.17e}", c.log_magnitude / std::f64::consts::LN_10)
            };
            w.write_record([j.to_string(), log10, format!("{:.17e}", c.phase), c.reliable.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TaylorOptions {
    pub radii: (f64, f64),
    /// Samples per circle as a multiple of `J`; at least 4.
    pub oversampling: usize,
    pub threshold: f64,
}

impl Default for TaylorOptions {
    fn default() -> Self {
        Self { radii: (0.75, 0.9), oversampling: 8, threshold: 1e-6 }
    }
}

struct CircleExtraction {
    coeffs: Vec<Complex64>,
    noise: Vec<f64>,
}

fn extract_on_circle(spec: &PotentialSpec, order: usize, r: f64, samples: usize) -> Result<CircleExtraction> {
    let mut buf: Vec<Complex64> = (0..samples)
        .map(|k| delta_eval(spec, Complex64::from_polar(r, 2.0 * PI * k as f64 / samples as f64)))
        .collect::<Result<_>>()?;
    let sup = buf.iter().map(|v| v.norm()).fold(0.0, f64::max);
    FftPlanner::new().plan_fft_forward(samples).process(&mut buf);
    let scale = 1.0 / samples as f64;
    // top half of the spectrum stands in for the aliased tail
    let tail = buf[samples / 2..].iter().map(|v| v.norm() * scale).fold(0.0, f64::max);
    let floor = 8.0 * f64::EPSILON * sup * (samples as f64).sqrt() + tail;
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut noise = Vec::with_capacity(order + 1);
    for (j, v) in buf.iter().take(order + 1).enumerate() {
        let rj = r.powi(j as i32);
        coeffs.push(v * scale / rj);
        noise.push(floor / rj);
    }
    Ok(CircleExtraction { coeffs, noise })
}

/// Taylor coefficients `delta_0..delta_J` of `Delta` by discrete Fourier
/// transform on two circles. The circle with the smaller noise estimate at
/// `j = J` supplies the values; a coefficient is reliable when both circles
/// agree to `threshold` relative accuracy (or within their noise).
pub fn taylor_coeffs(spec: &PotentialSpec, order: usize, opts: &TaylorOptions) -> Result<DeterminantSeries> {
    if order < 1 {
        return Err(invalid("J must be at least 1"));
    }
    let (r1, r2) = opts.radii;
    for r in [r1, r2] {
        if !(r > 0.0 && r < 1.0) {
            return Err(invalid(format!("extraction radius {r} outside (0, 1)")));
        }
    }
    let samples = opts.oversampling.max(4) * order;
    let first = extract_on_circle(spec, order, r1, samples)?;
    let second = extract_on_circle(spec, order, r2, samples)?;
    let (best, other, radius_used) =
        if first.noise[order] <= second.noise[order] { (&first, &second, r1) } else { (&second, &first, r2) };

    let mut gap: f64 = 0.0;
    let mut coeffs = Vec::with_capacity(order + 1);
    for j in 0..=order {
        let v = best.coeffs[j];
        let noise = best.noise[j] + other.noise[j];
        let diff = (v - other.coeffs[j]).norm();
        let rel = diff / v.norm().max(noise);
        let reliable = diff <= opts.threshold * v.norm() + 10.0 * noise;
        if !reliable {
            gap = gap.max(rel);
        } else if v.norm() > 10.0 * noise {
            gap = gap.max(diff / v.norm());
        }
        let value = if v.norm() <= 10.0 * best.noise[j] { Complex64::new(0.0, 0.0) } else { v };
        coeffs.push(Coefficient::from_value(value, reliable));
    }
    // Delta(0) = 1 exactly; a visible deviation can only be aliasing
    let dev0 = (best.coeffs[0] - ONE).norm();
    let reliable0 = dev0 <= opts.threshold + 10.0 * best.noise[0];
    if !reliable0 {
        gap = gap.max(dev0);
    }
    coeffs[0] = Coefficient { log_magnitude: 0.0, phase: 0.0, reliable: reliable0 };
    Ok(DeterminantSeries { coeffs, radius_used, consistency_gap: gap, threshold: opts.threshold })
}

/// `ln D_1` with `D_1 = C_1 D (1 + B^{-1/gamma}) exp(C_2 D (1 + B^{-2/gamma}))`.
pub fn log_d1(b: f64, d: f64, gamma: f64, consts: &ConstantsConfig) -> f64 {
    consts.c1_prop14.ln()
        + d.ln()
        + (1.0 + b.powf(-1.0 / gamma)).ln()
        + consts.c2_prop14 * d * (1.0 + b.powf(-2.0 / gamma))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoeffBoundReport {
    pub pass: bool,
    pub log_d1: f64,
    /// `ln D_1 - (B/4) j^gamma - ln|delta_j|` for `j = 1..=J`; `None` where
    /// the coefficient is zero (vacuous pass) or unreliable (skipped).
    pub margins: Vec<Option<f64>>,
    pub checked: usize,
}

/// Checks `|delta_j| <= D_1 exp(-(B/4) j^gamma)` on every reliable coefficient.
pub fn coeff_bound_check(
    series: &DeterminantSeries,
    b: f64,
    d: f64,
    gamma: f64,
    consts: &ConstantsConfig,
) -> CoeffBoundReport {
    let ld1 = log_d1(b, d, gamma, consts);
    let mut pass = true;
    let mut checked = 0;
    let margins = series
        .coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, c)| {
            if c.is_zero() || !c.reliable {
                return None;
            }
            checked += 1;
            let m = ld1 - 0.25 * b * (j as f64).powf(gamma) - c.log_magnitude;
            pass &= m >= 0.0;
            Some(m)
        })
        .collect();
    CoeffBoundReport { pass, log_d1: ld1, margins, checked }
}

/// Smallest `C_1` (with `C_2` as given) for which every reliable nonzero
/// coefficient of every series satisfies the coefficient bound.
pub fn calibrate_coeff_bound(cases: &[(&DeterminantSeries, f64, f64, f64)], consts: &ConstantsConfig) -> ConstantsConfig {
    let mut probe = consts.clone();
    probe.c1_prop14 = 1.0;
    let mut worst = f64::NEG_INFINITY;
    for (series, b, d, gamma) in cases {
        let report = coeff_bound_check(series, *b, *d, *gamma, &probe);
        for m in report.margins.into_iter().flatten() {
            worst = worst.max(-m);
        }
    }
    let mut out = consts.clone();
    // margins shift by ln C_1; nudge up so rounding keeps them nonnegative
    out.c1_prop14 = if worst.is_finite() { worst.exp() * (1.0 + 1e-9) } else { f64::MIN_POSITIVE };
    out
}

/// Least-squares slope of `-ln|delta_j|` against `j^gamma` over the reliable
/// nonzero coefficients with `lo <= j <= hi`.
pub fn decay_slope(series: &DeterminantSeries, gamma: f64, lo: usize, hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .coeffs
        .iter()
        .enumerate()
        .filter(|(j, c)| *j >= lo && *j <= hi && c.reliable && !c.is_zero())
        .map(|(j, c)| ((j as f64).powf(gamma), -c.log_magnitude))
        .collect();
    least_squares_slope(&pts)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gevrey_potential, PotentialKind};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn free_determinant_is_one() {
        let spec = PotentialSpec::free();
        for z in [c(0.0, 0.0), c(0.3, -0.2), c(-0.9, 0.1)] {
            assert!((delta_eval(&spec, z).unwrap() - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn rank_one_closed_form() {
        let spec = PotentialSpec::rank_one(c(1.0, 0.0));
        assert!((delta_eval(&spec, c(0.25, 0.0)).unwrap() - 0.5).norm() < 1e-15);
        assert!(delta_eval(&spec, c(0.5, 0.0)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn rejects_outside_disc() {
        assert!(delta_eval(&PotentialSpec::free(), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn jost_free_and_rank_one() {
        let z = c(0.3, 0.4);
        let w = jost_wronskian(&PotentialSpec::free(), z).unwrap();
        assert!((w + 1.0 / (2.0 * z)).norm() < 1e-14);
        let t = 0.7;
        let w = jost_wronskian(&PotentialSpec::rank_one(c(t, 0.0)), z).unwrap();
        assert!((w - (t - 1.0 / (2.0 * z))).norm() < 1e-14);
        let w = jost_wronskian(&PotentialSpec::rank_one(c(1.0, 0.0)), c(0.5, 0.0)).unwrap();
        assert!(w.norm() < 1e-15);
    }

    #[test]
    fn jost_rejects_vanishing_subdiagonal() {
        let spec =
            PotentialSpec::new(vec![c(0.0, 0.0), c(0.5, 0.0)], vec![c(0.0, 0.0); 2], vec![c(0.5, 0.0); 2], 2, None)
                .unwrap();
        assert!(matches!(jost_wronskian(&spec, c(0.2, 0.0)), Err(Error::VanishingSubdiagonal(0))));
    }

    #[test]
    fn taylor_free_and_rank_one() {
        let opts = TaylorOptions::default();
        let free = taylor_coeffs(&PotentialSpec::free(), 12, &opts).unwrap();
        assert_eq!(free.value(0), ONE);
        assert!(free.coeffs[1..].iter().all(|c| c.is_zero()));
        let s = taylor_coeffs(&PotentialSpec::rank_one(c(1.0, 0.0)), 12, &opts).unwrap();
        assert!((s.value(1) + 2.0).norm() < 1e-12);
        assert!(s.coeffs[2..].iter().all(|c| c.value().norm() < 1e-12));
        assert!(s.is_reliable());
    }

    #[test]
    fn d1_formula() {
        let consts = ConstantsConfig::default();
        let d1 = log_d1(1.0, 1.0, 0.5, &consts).exp();
        assert!((d1 - 2.0 * 1f64.exp().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn free_spec_passes_bound_check() {
        let s = taylor_coeffs(&PotentialSpec::free(), 20, &TaylorOptions::default()).unwrap();
        let report = coeff_bound_check(&s, 1.0, 1.0, 0.5, &ConstantsConfig::default());
        assert!(report.pass);
        assert_eq!(report.checked, 0);
    }

    #[test]
    fn csv_columns() {
        let spec = gevrey_potential(1.0, 2.0, 0.75, PotentialKind::Diagonal, 1e-6, 0).unwrap();
        let s = taylor_coeffs(&spec, 5, &TaylorOptions::default()).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "j,log10_abs_delta,phase_rad,reliable");
        assert_eq!(lines.count(), 6);
    }
}
