//! Calculators for the eigenvalue and zero-count bounds. Every unnamed
//! absolute constant is read from [`ConstantsConfig`].
//!
//! Where a bound has a case split, [`BoundValue::branch`] records the case
//! that contains the point (first matching case wins on a boundary) and
//! `branch_values` holds every case formula evaluated at the same point.

use serde::{Deserialize, Serialize};

use crate::constants::ConstantsConfig;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub branch: usize,
    pub branch_values: Vec<f64>,
}

impl BoundValue {
    fn single(value: f64) -> Self {
        Self { value, branch: 0, branch_values: vec![value] }
    }
}

/// Taylor-side class parameters `(beta, a_f, a'_f)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub beta: f64,
    pub a_f: f64,
    pub a_f_prime: f64,
}

impl ClassParams {
    pub fn new(beta: f64, a_f: f64, a_f_prime: f64, consts: &ConstantsConfig) -> Result<Self> {
        check_beta(beta, consts, true)?;
        positive("a_f", a_f)?;
        positive("a_f_prime", a_f_prime)?;
        Ok(Self { beta, a_f, a_f_prime })
    }

    /// `d = a_f^{-(2+beta)/(1+beta)}`.
    pub fn d(&self) -> f64 {
        self.a_f.powf(-(2.0 + self.beta) / (1.0 + self.beta))
    }

    /// `A' = A + log(a'_f d^2)`.
    pub fn a_prime(&self, a: f64) -> f64 {
        a + (self.a_f_prime * self.d().powi(2)).ln()
    }
}

/// Jacobi-side parameters `(gamma, B, D)` of the decay envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobiBoundParams {
    pub gamma: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "D")]
    pub d_env: f64,
}

impl JacobiBoundParams {
    pub fn new(gamma: f64, b: f64, d_env: f64, consts: &ConstantsConfig) -> Result<Self> {
        if !(0.5..=consts.gamma0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [1/2, {}], got {gamma}", consts.gamma0)));
        }
        positive("B", b)?;
        positive("D", d_env)?;
        Ok(Self { gamma, b, d_env })
    }

    /// `d = B^{-1/gamma}`.
    pub fn d(&self) -> f64 {
        self.b.powf(-1.0 / self.gamma)
    }

    /// `A' = D (1 + B^{-2/gamma}) + log(D (1 + B^{-1/gamma}) B^{-2/gamma})`.
    pub fn a_prime(&self) -> f64 {
        let g = self.gamma;
        self.d_env * (1.0 + self.b.powf(-2.0 / g))
            + (self.d_env * (1.0 + self.b.powf(-1.0 / g)) * self.b.powf(-2.0 / g)).ln()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_beta(beta: f64, consts: &ConstantsConfig, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { beta >= 0.0 } else { beta > 0.0 };
    if !ok || beta > consts.beta0 || !beta.is_finite() {
        let lo = if allow_zero { "[0" } else { "(0" };
        return Err(invalid(format!("beta must lie in {lo}, {}], got {beta}", consts.beta0)));
    }
    Ok(())
}

fn at_least_one(name: &str, v: f64) -> Result<()> {
    if v >= 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be at least 1, got {v}")))
    }
}

/// Zero-count bound for `d_f, d'_f` of order one.
pub fn bound_main1(beta: f64, a: f64, consts: &ConstantsConfig) -> Result<BoundValue> {
    check_beta(beta, consts, true)?;
    at_least_one("A", a)?;
    let c = consts.c_main1;
    if beta == 0.0 {
        return Ok(BoundValue::single((c * a.sqrt()).exp()));
    }
    let values = vec![
        (c * a.sqrt()).exp(),
        a.powf(2.0 / beta + 1.0) * beta.powf(4.0 / beta + 2.0) * (c / beta).exp(),
        a.powf(1.0 / beta + 1.0) * (c / beta).exp(),
    ];
    let branch = if a <= beta.powi(-2) {
        0
    } else if a <= beta.powi(-4) {
        1
    } else {
        2
    };
    Ok(BoundValue { value: values[branch], branch, branch_values: values })
}

/// General Taylor-class bound in terms of `d` and `A'`.
///
/// For `beta > 0`, `branch_values` is `[linear, small-A' case, large-A' case]`
/// and `value = min(linear, case)`. The branch index refines the large-A'
/// case at `A' d^{1+beta} = beta^{-4}` so that it lines up with
/// [`bound_main1`] when `d = 1`.
pub fn bound_main(params: &ClassParams, a: f64, consts: &ConstantsConfig) -> Result<BoundValue> {
    check_beta(params.beta, consts, true)?;
    let d = params.d();
    let ap = params.a_prime(a);
    at_least_one("A'", ap)?;
    let c = consts.c_main;
    let beta = params.beta;
    if beta == 0.0 {
        let v = c / d * (ap * d).min(1.0) * (c * (ap * d).sqrt()).exp();
        return Ok(BoundValue::single(v));
    }
    let scaled = ap * d.powf(1.0 + beta);
    let linear = c * ap * (1.0 + scaled.powf(1.0 / beta));
    let small = c * d.powf(-(1.0 + beta)) * (c * (ap * d).sqrt()).exp();
    let large = (c / beta).exp() * d.powf(-(1.0 + beta)) * (scaled * beta * beta).powf((2.0 + beta) / beta).max(1.0);
    let branch = if ap <= 1.0 / (d * beta * beta) {
        0
    } else if scaled <= beta.powi(-4) {
        1
    } else {
        2
    };
    let case = if branch == 0 { small } else { large };
    Ok(BoundValue { value: linear.min(case), branch, branch_values: vec![linear, small, large] })
}

/// `c A (1 + A^{1/beta} d_f^{(1+beta)/beta})`; `d_f = 0` is the degenerate limit `cA`.
pub fn bound_t1(beta: f64, a: f64, d_f: f64, consts: &ConstantsConfig) -> Result<f64> {
    check_beta(beta, consts, false)?;
    at_least_one("A", a)?;
    if !(d_f >= 0.0 && d_f.is_finite()) {
        return Err(invalid(format!("d_f must be nonnegative, got {d_f}")));
    }
    Ok(consts.c_t1 * a * (1.0 + a.powf(1.0 / beta) * d_f.powf((1.0 + beta) / beta)))
}

/// `(c/d_f) exp(c sqrt(A d_f))`.
pub fn bound_delta01(a: f64, d_f: f64, consts: &ConstantsConfig) -> Result<f64> {
    at_least_one("A", a)?;
    positive("d_f", d_f)?;
    let c = consts.c_delta01;
    Ok(c / d_f * (c * (a * d_f).sqrt()).exp())
}

pub fn bound_t2(beta: f64, a: f64, d_f: f64, consts: &ConstantsConfig) -> Result<BoundValue> {
    check_beta(beta, consts, false)?;
    at_least_one("A", a)?;
    positive("d_f", d_f)?;
    let c = consts.c_t2;
    let small = c / d_f.powf(1.0 + beta) * (c * (a * d_f).sqrt()).exp();
    let large = (d_f * (a * d_f * beta * beta).powf((2.0 + beta) / beta) * (c / beta).exp())
        .max(c * d_f.powf(-(1.0 + beta)) * (c / beta).exp());
    let branch = if a <= 1.0 / (d_f * beta * beta) { 0 } else { 1 };
    let values = vec![small, large];
    Ok(BoundValue { value: values[branch], branch, branch_values: values })
}

/// Jacobi-matrix eigenvalue bound. For `gamma > 1/2`, `branch_values` is
/// `[linear, small-A' case, large-A' case]` and `value = min(linear, case)`.
pub fn bound_mainso(params: &JacobiBoundParams, consts: &ConstantsConfig) -> Result<BoundValue> {
    let g = params.gamma;
    if !(0.5..=consts.gamma0).contains(&g) {
        return Err(invalid(format!("gamma must lie in [1/2, {}], got {g}", consts.gamma0)));
    }
    let d = params.d();
    let ap = params.a_prime();
    at_least_one("A'", ap)?;
    let c = consts.c_mainso;
    if g == 0.5 {
        return Ok(BoundValue::single(c / d * (c * (ap * d).sqrt()).exp()));
    }
    let k = 2.0 * g - 1.0;
    let p = g / (1.0 - g);
    let linear = c * ap * (1.0 + (ap.powf(1.0 - g) * d.powf(g)).powf(1.0 / k));
    let small = c * d.powf(-p) * (c * (ap * d).sqrt()).exp();
    let large = (c / k).exp() * d.powf(-p) * (ap * d.powf(p) * k * k).powf(1.0 / k).max(1.0);
    let branch = if ap <= 1.0 / (d * k * k) { 0 } else { 1 };
    let case = if branch == 0 { small } else { large };
    Ok(BoundValue { value: linear.min(case), branch, branch_values: vec![linear, small, large] })
}

/// `exp(c sqrt(D))` at `gamma = 1/2`, else `c_gamma D^{gamma/(2 gamma - 1)}`.
pub fn bound_cor(gamma: f64, d: f64, consts: &ConstantsConfig) -> Result<f64> {
    if !(0.5..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [1/2, 1), got {gamma}")));
    }
    at_least_one("D", d)?;
    let c = consts.c_cor;
    if gamma == 0.5 {
        return Ok((c * d.sqrt()).exp());
    }
    Ok(c * d.powf(gamma / (2.0 * gamma - 1.0)))
}

/// `D_1 = C_1 D (1 + B^{-1/gamma}) exp(C_2 D (1 + B^{-2/gamma}))`.
pub fn d1_const(b: f64, d: f64, gamma: f64, consts: &ConstantsConfig) -> f64 {
    consts.c1_prop14 * d * (1.0 + b.powf(-1.0 / gamma)) * (consts.c2_prop14 * d * (1.0 + b.powf(-2.0 / gamma))).exp()
}

/// `sum_{n >= N} e^{-B n^gamma}`, summed until a term drops below `tol`
/// times the partial sum.
pub fn expsum_exact(b: f64, n: u64, gamma: f64, tol: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = n;
    loop {
        let term = (-b * (k as f64).powf(gamma)).exp();
        sum += term;
        if term == 0.0 || term < tol * sum {
            return sum;
        }
        k += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpsumBound {
    /// `C (1 + B^{-1/gamma} (1 + (B N^gamma)^{1/gamma - 1})) e^{-B N^gamma}`.
    pub sharper: f64,
    /// `C (1 + B^{-1/gamma}) e^{-c B N^gamma}`.
    pub simplified: f64,
}

/// Both forms of the exponential-sum bound with prefactor `C_expsum` and
/// exponent fraction `c_expsum`.
pub fn expsum_bound(b: f64, n: u64, gamma: f64, consts: &ConstantsConfig) -> ExpsumBound {
    let big_c = consts.c_expsum_prefactor;
    let x = b * (n as f64).powf(gamma);
    let inv = b.powf(-1.0 / gamma);
    ExpsumBound {
        sharper: big_c * (1.0 + inv * (1.0 + x.powf(1.0 / gamma - 1.0))) * (-x).exp(),
        simplified: big_c * (1.0 + inv) * (-consts.c_expsum * x).exp(),
    }
}

/// Smallest `c` in `[lo, hi]` with `bound(c) >= target`, assuming `bound`
/// nondecreasing in `c`. `None` if even `hi` is not enough.
pub fn smallest_constant(mut bound: impl FnMut(f64) -> f64, target: f64, lo: f64, hi: f64) -> Option<f64> {
    if bound(lo) >= target {
        return Some(lo);
    }
    if !(bound(hi) >= target) {
        return None;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if bound(m.exp()) >= target {
            b = m;
        } else {
            a = m;
        }
    }
    Some(b.exp())
}

/// One measured eigenvalue count on a decay envelope `D e^{-B n^gamma}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCount {
    pub gamma: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub count: usize,
}

/// Fits `c_cor` and `c_mainso` so every measured count lies under both bounds.
/// Cells where a bound does not apply (e.g. `D < 1` or `A' < 1`) are skipped.
pub fn calibrate_counts(cells: &[MeasuredCount], consts: &ConstantsConfig) -> ConstantsConfig {
    let mut out = consts.clone();
    let mut c_cor: f64 = f64::MIN_POSITIVE;
    let mut c_so: f64 = f64::MIN_POSITIVE;
    for cell in cells {
        let target = cell.count as f64;
        let mut probe = consts.clone();
        if let Some(c) = smallest_constant(
            |c| {
                probe.c_cor = c;
                bound_cor(cell.gamma, cell.d, &probe).unwrap_or(f64::INFINITY)
            },
            target,
            1e-9,
            1e9,
        ) {
            c_cor = c_cor.max(c);
        }
        let mut probe = consts.clone();
        if let Ok(params) = JacobiBoundParams::new(cell.gamma, cell.b, cell.d, consts) {
            if let Some(c) = smallest_constant(
                |c| {
                    probe.c_mainso = c;
                    bound_mainso(&params, &probe).map(|v| v.value).unwrap_or(f64::INFINITY)
                },
                target,
                1e-9,
                1e9,
            ) {
                c_so = c_so.max(c);
            }
        }
    }
    out.c_cor = c_cor;
    out.c_mainso = c_so;
    out
}

/// Smallest prefactor `C` for which the chosen form of the exponential-sum
/// bound holds on the grid (with `c_expsum` fixed).
pub fn calibrate_expsum(grid: &[(f64, f64, u64)], sharper: bool, consts: &ConstantsConfig, tol: f64) -> f64 {
    let mut unit = consts.clone();
    unit.c_expsum_prefactor = 1.0;
    grid.iter()
        .map(|&(b, gamma, n)| {
            let form = expsum_bound(b, n, gamma, &unit);
            expsum_exact(b, n, gamma, tol) / if sharper { form.sharper } else { form.simplified }
        })
        .fold(0.0, f64::max)
}
