//! Jacobi operators with finitely supported perturbations of the free matrix,
//! the Joukowski map between the disc and the spectral plane, and tail sums of
//! the perturbation size.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const FREE_OFFDIAG: Complex64 = Complex64::new(0.5, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default width of the band around [-1, 1] treated as essential spectrum.
pub const DEFAULT_EPS_ESS: f64 = 1e-6;

/// Decay envelope `|2 b_n| + |4 a_n c_n - 1| <= D exp(-B n^gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub gamma: f64,
}

impl Decay {
    pub fn new(b: f64, d: f64, gamma: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid(format!("B must be positive, got {b}")));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(invalid(format!("D must be positive, got {d}")));
        }
        if !(0.5..=1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [1/2, 1], got {gamma}")));
        }
        Ok(Self { b, d, gamma })
    }

    pub fn envelope(&self, n: usize) -> f64 {
        self.d * (-self.b * (n as f64).powf(self.gamma)).exp()
    }
}

/// Coefficients of a Jacobi matrix that agrees with the free matrix
/// (`a_n = c_n = 1/2`, `b_n = 0`) for every `n >= support_end`.
///
/// `a` is the sub-diagonal, `b` the diagonal and `c` the super-diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialSpecRaw", into = "PotentialSpecRaw")]
pub struct PotentialSpec {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    support_end: usize,
    decay: Option<Decay>,
}

#[derive(Serialize, Deserialize)]
struct PotentialSpecRaw {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    support_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decay: Option<Decay>,
}

impl TryFrom<PotentialSpecRaw> for PotentialSpec {
    type Error = Error;

    fn try_from(raw: PotentialSpecRaw) -> Result<Self> {
        PotentialSpec::new(raw.a, raw.b, raw.c, raw.support_end, raw.decay)
    }
}

impl From<PotentialSpec> for PotentialSpecRaw {
    fn from(s: PotentialSpec) -> Self {
        Self { a: s.a, b: s.b, c: s.c, support_end: s.support_end, decay: s.decay }
    }
}

impl PotentialSpec {
    /// Builds a spec and checks its invariants. Entries stored past
    /// `support_end` must equal the free values exactly.
    pub fn new(
        mut a: Vec<Complex64>,
        mut b: Vec<Complex64>,
        mut c: Vec<Complex64>,
        support_end: usize,
        decay: Option<Decay>,
    ) -> Result<Self> {
        for (name, seq) in [("a", &a), ("b", &b), ("c", &c)] {
            if seq.len() < support_end {
                return Err(invalid(format!("sequence {name} has length {} < support_end {support_end}", seq.len())));
            }
            if seq.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(invalid(format!("sequence {name} contains non-finite entries")));
            }
        }
        let free_tail = a[support_end..].iter().all(|&v| v == FREE_OFFDIAG)
            && c[support_end..].iter().all(|&v| v == FREE_OFFDIAG)
            && b[support_end..].iter().all(|&v| v == ZERO);
        if !free_tail {
            return Err(invalid("entries beyond support_end must be exactly free"));
        }
        a.truncate(support_end);
        b.truncate(support_end);
        c.truncate(support_end);
        let spec = Self { a, b, c, support_end, decay };
        if let Some(env) = decay {
            Decay::new(env.b, env.d, env.gamma)?;
            for n in 0..support_end {
                let value = spec.perturbation_size(n);
                let bound = env.envelope(n);
                if value > bound * (1.0 + 1e-12) + 4.0 * f64::EPSILON {
                    return Err(Error::DecayViolation { n, value, bound });
                }
            }
        }
        Ok(spec)
    }

    /// The free Jacobi matrix `J_0`.
    pub fn free() -> Self {
        Self { a: vec![], b: vec![], c: vec![], support_end: 0, decay: None }
    }

    /// Free matrix with only `b_0` changed.
    pub fn rank_one(b0: Complex64) -> Self {
        if b0 == ZERO {
            return Self::free();
        }
        Self { a: vec![FREE_OFFDIAG], b: vec![b0], c: vec![FREE_OFFDIAG], support_end: 1, decay: None }
    }

    pub fn support_end(&self) -> usize {
        self.support_end
    }

    pub fn decay(&self) -> Option<Decay> {
        self.decay
    }

    pub fn a(&self, n: usize) -> Complex64 {
        self.a.get(n).copied().unwrap_or(FREE_OFFDIAG)
    }

    pub fn b(&self, n: usize) -> Complex64 {
        self.b.get(n).copied().unwrap_or(ZERO)
    }

    pub fn c(&self, n: usize) -> Complex64 {
        self.c.get(n).copied().unwrap_or(FREE_OFFDIAG)
    }

    /// `|2 b_n| + |4 a_n c_n - 1|`.
    pub fn perturbation_size(&self, n: usize) -> f64 {
        (2.0 * self.b(n)).norm() + (4.0 * self.a(n) * self.c(n) - 1.0).norm()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Complex tridiagonal matrix stored by diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    /// `(k+1, k)` entries.
    pub sub: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    /// `(k, k+1)` entries.
    pub sup: Vec<Complex64>,
}

impl Tridiagonal {
    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        if row == col {
            self.diag[row]
        } else if row == col + 1 {
            self.sub[col]
        } else if col == row + 1 {
            self.sup[row]
        } else {
            ZERO
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.order();
        (0..n).map(|i| (0..n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// Leading `n x n` section of the Jacobi matrix of `spec`.
pub fn build_jacobi(spec: &PotentialSpec, n: usize) -> Result<Tridiagonal> {
    if n == 0 {
        return Err(invalid("matrix order must be at least 1"));
    }
    Ok(Tridiagonal {
        sub: (0..n - 1).map(|k| spec.a(k)).collect(),
        diag: (0..n).map(|k| spec.b(k)).collect(),
        sup: (0..n - 1).map(|k| spec.c(k)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `b_n = (D/2) e^{-B n^gamma}`.
    Diagonal,
    /// `c_n = (1 + D e^{-B n^gamma}) / 2`, so that `4 a_n c_n - 1` carries the envelope.
    Offdiagonal,
    /// Diagonal profile rotated by seeded phases `e^{i theta_n}`.
    ComplexPhase,
}

/// Potential that saturates the decay envelope for `n < support_end`, where
/// `support_end` is the first index with `D e^{-B n^gamma} < cutoff_tol`.
///
/// `seed` drives the ChaCha8 phase sequence of [`PotentialKind::ComplexPhase`]
/// (`theta_n` uniform in `[-pi, pi)`); other kinds ignore it.
pub fn gevrey_potential(
    b: f64,
    d: f64,
    gamma: f64,
    kind: PotentialKind,
    cutoff_tol: f64,
    seed: u64,
) -> Result<PotentialSpec> {
    let decay = Decay::new(b, d, gamma)?;
    if !(cutoff_tol > 0.0) {
        return Err(invalid("cutoff_tol must be positive"));
    }
    if cutoff_tol >= d {
        return Err(invalid(format!("cutoff_tol {cutoff_tol} >= D {d} leaves an empty support")));
    }
    let support_end = support_end_for(&decay, cutoff_tol);
    let profile: Vec<f64> = (0..support_end).map(|n| decay.envelope(n)).collect();
    let (a, bd, c) = match kind {
        PotentialKind::Diagonal => (
            vec![FREE_OFFDIAG; support_end],
            profile.iter().map(|&p| Complex64::new(p / 2.0, 0.0)).collect(),
            vec![FREE_OFFDIAG; support_end],
        ),
        PotentialKind::Offdiagonal => (
            vec![FREE_OFFDIAG; support_end],
            vec![ZERO; support_end],
            profile.iter().map(|&p| Complex64::new((1.0 + p) / 2.0, 0.0)).collect(),
        ),
        PotentialKind::ComplexPhase => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bd = profile
                .iter()
                .map(|&p| {
                    let theta: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    Complex64::from_polar(p / 2.0, theta)
                })
                .collect();
            (vec![FREE_OFFDIAG; support_end], bd, vec![FREE_OFFDIAG; support_end])
        }
    };
    PotentialSpec::new(a, bd, c, support_end, Some(decay))
}

fn support_end_for(decay: &Decay, cutoff_tol: f64) -> usize {
    // smallest n with D exp(-B n^gamma) < tol
    let x = ((decay.d / cutoff_tol).ln() / decay.b).powf(1.0 / decay.gamma);
    let mut n = x.floor().max(0.0) as usize;
    while n > 0 && decay.envelope(n - 1) < cutoff_tol {
        n -= 1;
    }
    while decay.envelope(n) >= cutoff_tol {
        n += 1;
    }
    n
}

/// Random non-symmetric spec: for each `n < support_end` the envelope
/// `D e^{-B n^gamma}` is split at random between `|2 b_n|` and
/// `|4 a_n c_n - 1|`, with random phases and a random modulus `|2 a_n|` in
/// `[0.8, 1.25]`.
pub fn random_complex_spec(decay: Decay, support_end: usize, seed: u64) -> Result<PotentialSpec> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(support_end);
    let mut b = Vec::with_capacity(support_end);
    let mut c = Vec::with_capacity(support_end);
    for n in 0..support_end {
        let budget = decay.envelope(n) * (1.0 - 1e-12);
        let share: f64 = rng.random_range(0.0..1.0);
        let bn = Complex64::from_polar(share * budget / 2.0, rng.random_range(-PI..PI));
        let eps = Complex64::from_polar((1.0 - share) * budget, rng.random_range(-PI..PI));
        let an = Complex64::from_polar(0.5 * rng.random_range(0.8..1.25), rng.random_range(-0.3..0.3));
        let cn = (1.0 + eps) / (4.0 * an);
        a.push(an);
        b.push(bn);
        c.push(cn);
    }
    PotentialSpec::new(a, b, c, support_end, Some(decay))
}

/// `H(N) = sum_{n >= N} |2 b_n| + |4 a_n c_n - 1|`, exact for a finite support.
pub fn h_tail(spec: &PotentialSpec, n: usize) -> f64 {
    (n..spec.support_end()).map(|k| spec.perturbation_size(k)).sum()
}

/// Point of the spectral plane together with its disc coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub z: Complex64,
    #[serde(rename = "E")]
    pub e: Complex64,
}

impl SpectralPoint {
    pub fn from_z(z: Complex64) -> Result<Self> {
        Ok(Self { z, e: joukowski(z)? })
    }

    pub fn from_e(e: Complex64, eps_ess: f64) -> Result<Self> {
        Ok(Self { z: inverse_joukowski(e, eps_ess)?, e })
    }
}

/// `E = (z + 1/z) / 2`.
pub fn joukowski(z: Complex64) -> Result<Complex64> {
    if z == ZERO {
        return Err(invalid("joukowski map is singular at z = 0"));
    }
    Ok((z + z.inv()) * 0.5)
}

/// Root of `z^2 - 2 E z + 1 = 0` inside the unit disc.
pub fn inverse_joukowski(e: Complex64, eps_ess: f64) -> Result<Complex64> {
    if distance_to_interval(e) <= eps_ess {
        return Err(Error::EssentialSpectrumAdjacent(e));
    }
    let s = (e * e - 1.0).sqrt();
    // pick the larger of E +- s and invert it; avoids cancellation
    let big = if (e + s).norm() >= (e - s).norm() { e + s } else { e - s };
    Ok(big.inv())
}

/// Euclidean distance from `e` to the segment [-1, 1].
pub fn distance_to_interval(e: Complex64) -> f64 {
    let x = e.re.clamp(-1.0, 1.0);
    Complex64::new(e.re - x, e.im).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn free_section() {
        let m = build_jacobi(&PotentialSpec::free(), 3).unwrap().to_dense();
        let h = c(0.5, 0.0);
        let o = c(0.0, 0.0);
        assert_eq!(m, vec![vec![o, h, o], vec![h, o, h], vec![o, h, o]]);
    }

    #[test]
    fn rank_one_section() {
        let m = build_jacobi(&PotentialSpec::rank_one(c(1.0, 0.0)), 2).unwrap().to_dense();
        assert_eq!(m, vec![vec![c(1.0, 0.0), c(0.5, 0.0)], vec![c(0.5, 0.0), c(0.0, 0.0)]]);
    }

    #[test]
    fn asymmetric_offdiagonal_placement() {
        let spec = PotentialSpec::new(vec![c(0.6, 0.0)], vec![c(0.0, 0.0)], vec![c(0.4, 0.0)], 1, None).unwrap();
        let m = build_jacobi(&spec, 2).unwrap().to_dense();
        assert_eq!(m[0][1], c(0.4, 0.0));
        assert_eq!(m[1][0], c(0.6, 0.0));
        assert_eq!(m[0][0], c(0.0, 0.0));
        assert_eq!(m[1][1], c(0.0, 0.0));
    }

    #[test]
    fn order_zero_rejected() {
        assert!(build_jacobi(&PotentialSpec::free(), 0).is_err());
    }

    #[test]
    fn gevrey_support_formula() {
        let spec = gevrey_potential(1.0, 2.0, 0.5, PotentialKind::Diagonal, 1e-14, 0).unwrap();
        let expected = ((2.0f64 / 1e-14).ln().powi(2)).ceil() as usize;
        assert_eq!(spec.support_end(), expected);
        for n in [0usize, 1, 7, 100] {
            assert!((spec.b(n).re - (-(n as f64).sqrt()).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn gevrey_value_at_five() {
        let spec = gevrey_potential(1.0, 2.0, 0.75, PotentialKind::Diagonal, 1e-14, 0).unwrap();
        let v = spec.perturbation_size(5);
        assert!((v - 2.0 * (-(5f64).powf(0.75)).exp()).abs() < 1e-15);
        assert!((v - 0.0704).abs() < 5e-4);
    }

    #[test]
    fn gevrey_kinds_saturate_envelope() {
        for kind in [PotentialKind::Diagonal, PotentialKind::Offdiagonal, PotentialKind::ComplexPhase] {
            let spec = gevrey_potential(0.7, 3.0, 0.8, kind, 1e-10, 11).unwrap();
            let env = spec.decay().unwrap();
            for n in 0..spec.support_end() {
                // (1 + p)/2 rounds at the level of eps in absolute terms
                let err = (spec.perturbation_size(n) - env.envelope(n)).abs();
                assert!(err < 1e-12 * env.envelope(n) + 4.0 * f64::EPSILON, "{kind:?} n={n} err={err}");
            }
        }
    }

    #[test]
    fn complex_phase_is_reproducible() {
        let a = gevrey_potential(1.0, 2.0, 0.75, PotentialKind::ComplexPhase, 1e-8, 5).unwrap();
        let b = gevrey_potential(1.0, 2.0, 0.75, PotentialKind::ComplexPhase, 1e-8, 5).unwrap();
        let other = gevrey_potential(1.0, 2.0, 0.75, PotentialKind::ComplexPhase, 1e-8, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn tiny_coupling_is_nearly_free() {
        let spec = gevrey_potential(1.0, 2e-14, 0.5, PotentialKind::Diagonal, 1e-14, 0).unwrap();
        assert_eq!(spec.support_end(), 1);
        assert!(h_tail(&spec, 0) <= 2e-14);
        assert!(gevrey_potential(1.0, 1e-14, 0.5, PotentialKind::Diagonal, 1e-14, 0).is_err());
    }

    #[test]
    fn decay_violation_detected() {
        let err = PotentialSpec::new(
            vec![FREE_OFFDIAG],
            vec![c(1.0, 0.0)],
            vec![FREE_OFFDIAG],
            1,
            Some(Decay::new(1.0, 1.0, 0.5).unwrap()),
        );
        assert!(matches!(err, Err(Error::DecayViolation { n: 0, .. })));
    }

    #[test]
    fn h_tail_examples() {
        assert_eq!(h_tail(&PotentialSpec::free(), 0), 0.0);
        assert_eq!(h_tail(&PotentialSpec::free(), 17), 0.0);
        // b_n = e^{-n}/2, i.e. D = 1, B = 1, gamma = 1
        let spec = gevrey_potential(1.0, 1.0, 1.0, PotentialKind::Diagonal, 1e-16, 0).unwrap();
        let direct: f64 = (0..spec.support_end()).map(|n| (-(n as f64)).exp()).sum();
        assert!((h_tail(&spec, 0) - direct).abs() < 1e-15);
        assert!((h_tail(&spec, 0) - 1.0 / (1.0 - (-1f64).exp())).abs() < 1e-14);
        assert_eq!(h_tail(&spec, spec.support_end()), 0.0);
    }

    #[test]
    fn joukowski_examples() {
        assert_eq!(joukowski(c(1.0, 0.0)).unwrap(), c(1.0, 0.0));
        assert_eq!(joukowski(c(0.5, 0.0)).unwrap(), c(1.25, 0.0));
        assert!(joukowski(c(0.0, 1.0)).unwrap().norm() < 1e-16);
        assert!((inverse_joukowski(c(1.25, 0.0), DEFAULT_EPS_ESS).unwrap() - 0.5).norm() < 1e-15);
        assert!(joukowski(c(0.0, 0.0)).is_err());
    }

    #[test]
    fn inverse_flags_essential_band() {
        assert!(matches!(inverse_joukowski(c(0.3, 1e-7), DEFAULT_EPS_ESS), Err(Error::EssentialSpectrumAdjacent(_))));
        assert!(inverse_joukowski(c(1.0 + 5e-7, 0.0), DEFAULT_EPS_ESS).is_err());
        assert!(inverse_joukowski(c(0.3, 1e-3), DEFAULT_EPS_ESS).unwrap().norm() < 1.0);
    }

    #[test]
    fn spec_json_shape() {
        let spec = gevrey_potential(1.0, 2.0, 0.75, PotentialKind::Diagonal, 1e-3, 0).unwrap();
        let text = spec.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["a"][0].is_array());
        assert_eq!(value["support_end"], spec.support_end());
        assert_eq!(value["decay"]["B"], 1.0);
        assert_eq!(PotentialSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn json_rejects_non_free_tail() {
        let text = r#"{"a":[[0.5,0]],"b":[[0,0],[0.1,0]],"c":[[0.5,0]],"support_end":1}"#;
        assert!(PotentialSpec::from_json(text).is_err());
    }
}
