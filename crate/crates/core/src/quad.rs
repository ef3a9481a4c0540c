//! Gauss-Legendre nodes and adaptive Gauss-Kronrod (7, 15) integration.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Hard cap on panel evaluations per integral, so noisy integrands fail instead of hanging.
const MAX_PANELS: usize = 200_000;

/// Kronrod value, Kronrod-minus-Gauss error, and the Kronrod integral of `|f|`.
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.norm();
    for j in 0..7 {
        let (fl, fr) = (f(c - h * XGK[j]), f(c + h * XGK[j]));
        let s = fl + fr;
        kron += WGK[j] * s;
        abs += WGK[j] * (fl.norm() + fr.norm());
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).norm(), abs * h.abs())
}

/// Integral of a complex `f` over `[a, b]`, split first at `breaks`, then
/// bisected adaptively. A panel of width `h` is accepted once its error
/// estimate is below `tol * max(|panel|, (h / (b - a)) * I)`, where `I` is a
/// coarse estimate of the integral of `|f|`, or below the rounding level of
/// the panel.
pub fn integrate_complex<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<Complex64> {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|x| *x > a && *x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let len = b - a;
    let first: Vec<_> = pts.windows(2).map(|w| (w[0], w[1], gk15(f, w[0], w[1]))).collect();
    let scale = first.iter().map(|p| p.2 .2).sum::<f64>();
    let mut total = Complex64::new(0.0, 0.0);
    let mut unresolved = 0.0;
    let mut stack: Vec<_> = first.into_iter().rev().map(|(lo, hi, est)| (lo, hi, est, 0u32)).collect();
    let mut budget = MAX_PANELS;
    while let Some((lo, hi, (v, err, abs), depth)) = stack.pop() {
        budget = budget.checked_sub(1).ok_or(Error::QuadratureNotConverged(err))?;
        let allowed = (tol * v.norm().max((hi - lo) / len * scale)).max(64.0 * f64::EPSILON * abs);
        let unresolvable = hi - lo <= 64.0 * f64::EPSILON * lo.abs().max(hi.abs());
        if err <= allowed || depth >= 50 || unresolvable {
            if err > allowed {
                unresolved += err;
            }
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, gk15(f, mid, hi), depth + 1));
            stack.push((lo, mid, gk15(f, lo, mid), depth + 1));
        }
    }
    if unresolved > tol * total.norm().max(scale) {
        return Err(Error::QuadratureNotConverged(unresolved));
    }
    Ok(total)
}

/// Real-valued counterpart of [`integrate_complex`].
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    integrate_complex(&|x| Complex64::new(f(x), 0.0), a, b, breaks, tol).map(|v| v.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 16] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((approx - exact).abs() < 1e-13, "n={n}");
            let even: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * (n as i32 - 1))).sum();
            assert!((even - 2.0 / (2 * n - 1) as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn kronrod_handles_singular_scale() {
        let v = integrate(&|x: f64| 1.0 / x.max(1e-3), 0.0, 1.0, &[1e-3], 1e-12).unwrap();
        let exact = 1.0 + (1e3f64).ln();
        assert!((v - exact).abs() < 1e-10);
        let v = integrate(&|x: f64| x.sin(), 0.0, PI, &[], 1e-13).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }
}
