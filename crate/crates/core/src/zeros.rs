//! Zero counting by the argument principle, zero location by recursive
//! subdivision, and the truncated-matrix eigenvalue oracle.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::determinant::delta_eval;
use crate::error::{invalid, Error, Result};
use crate::model::{build_jacobi, distance_to_interval, inverse_joukowski, joukowski, PotentialSpec};

/// Threshold below which `|f|` on the contour is treated as a zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Floor {
    /// Fraction of the largest `|f|` seen on the contour.
    Relative(f64),
    Absolute(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArgOptions {
    pub floor: Floor,
    /// Distance by which a failed contour is moved inward before retrying.
    pub guard: f64,
    pub initial_samples: usize,
    /// Cap on the number of bisections of a single contour piece.
    pub max_depth: u32,
}

impl Default for ArgOptions {
    fn default() -> Self {
        Self { floor: Floor::Relative(1e-13), guard: 1e-4, initial_samples: 256, max_depth: 40 }
    }
}

/// A piece of a closed, positively oriented contour.
#[derive(Clone, Copy, Debug)]
enum Piece {
    Line(Complex64, Complex64),
    Arc { center: Complex64, radius: f64, from: f64, to: f64 },
}

impl Piece {
    fn at(&self, t: f64) -> Complex64 {
        match *self {
            Piece::Line(a, b) => a + (b - a) * t,
            Piece::Arc { center, radius, from, to } => center + Complex64::from_polar(radius, from + (to - from) * t),
        }
    }

    fn length(&self) -> f64 {
        match *self {
            Piece::Line(a, b) => (b - a).norm(),
            Piece::Arc { radius, from, to, .. } => radius * (to - from).abs(),
        }
    }
}

/// Region in which zeros are counted or located.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Disc {
        center: Complex64,
        radius: f64,
    },
    /// Axis-parallel rectangle with corners `lo` and `hi`.
    Rect {
        lo: Complex64,
        hi: Complex64,
    },
    /// `{center + r e^{it} : r0 <= r <= r1, t0 <= t <= t1}`; a pie slice when `r0 = 0`.
    Sector {
        center: Complex64,
        r0: f64,
        r1: f64,
        t0: f64,
        t1: f64,
    },
}

impl Region {
    pub fn disc(radius: f64) -> Self {
        Region::Disc { center: Complex64::new(0.0, 0.0), radius }
    }

    fn pieces(&self) -> Vec<Piece> {
        match *self {
            Region::Disc { center, radius } => vec![Piece::Arc { center, radius, from: 0.0, to: TAU }],
            Region::Rect { lo, hi } => {
                let c = [lo, Complex64::new(hi.re, lo.im), hi, Complex64::new(lo.re, hi.im)];
                (0..4).map(|k| Piece::Line(c[k], c[(k + 1) % 4])).collect()
            }
            Region::Sector { center, r0, r1, t0, t1 } => {
                let mut out = vec![
                    Piece::Line(center + Complex64::from_polar(r0, t0), center + Complex64::from_polar(r1, t0)),
                    Piece::Arc { center, radius: r1, from: t0, to: t1 },
                    Piece::Line(center + Complex64::from_polar(r1, t1), center + Complex64::from_polar(r0, t1)),
                ];
                if r0 > 0.0 {
                    out.push(Piece::Arc { center, radius: r0, from: t1, to: t0 });
                }
                out
            }
        }
    }

    pub fn center(&self) -> Complex64 {
        match *self {
            Region::Disc { center, .. } => center,
            Region::Rect { lo, hi } => (lo + hi) * 0.5,
            Region::Sector { center, r0, r1, t0, t1 } => {
                center + Complex64::from_polar(0.5 * (r0 + r1), 0.5 * (t0 + t1))
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Region::Disc { radius, .. } => 2.0 * radius,
            Region::Rect { lo, hi } => (hi - lo).norm(),
            Region::Sector { r0, r1, t0, t1, .. } => {
                let chord = 2.0 * r1 * (0.5 * (t1 - t0).min(PI)).sin();
                (r1 - r0).max(chord)
            }
        }
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        match *self {
            Region::Disc { center, radius } => (z - center).norm() <= radius + slack,
            Region::Rect { lo, hi } => {
                z.re >= lo.re - slack && z.re <= hi.re + slack && z.im >= lo.im - slack && z.im <= hi.im + slack
            }
            Region::Sector { center, r0, r1, t0, t1 } => {
                let w = z - center;
                let r = w.norm();
                if r < r0 - slack || r > r1 + slack {
                    return false;
                }
                if r <= slack {
                    return true;
                }
                let mut t = w.arg();
                while t < t0 {
                    t += TAU;
                }
                t <= t1 || r * (t - t1).min(t0 + TAU - t) <= slack
            }
        }
    }

    /// Four children split at fraction `s` of each coordinate. A disc splits
    /// into a central disc and four annular quarters.
    fn split(&self, s: f64) -> Vec<Region> {
        match *self {
            Region::Disc { center, radius } => {
                let rm = s * radius;
                let mut out = vec![Region::Disc { center, radius: rm }];
                let phase = 0.1 * s; // quarter cuts rotate with the jitter
                for k in 0..4 {
                    let t0 = phase + k as f64 * PI / 2.0;
                    out.push(Region::Sector { center, r0: rm, r1: radius, t0, t1: t0 + PI / 2.0 });
                }
                out
            }
            Region::Rect { lo, hi } => {
                let mid = Complex64::new(lo.re + s * (hi.re - lo.re), lo.im + s * (hi.im - lo.im));
                vec![
                    Region::Rect { lo, hi: mid },
                    Region::Rect { lo: Complex64::new(mid.re, lo.im), hi: Complex64::new(hi.re, mid.im) },
                    Region::Rect { lo: mid, hi },
                    Region::Rect { lo: Complex64::new(lo.re, mid.im), hi: Complex64::new(mid.re, hi.im) },
                ]
            }
            Region::Sector { center, r0, r1, t0, t1 } => {
                let rm = r0 + s * (r1 - r0);
                let tm = t0 + s * (t1 - t0);
                vec![
                    Region::Sector { center, r0, r1: rm, t0, t1: tm },
                    Region::Sector { center, r0: rm, r1, t0, t1: tm },
                    Region::Sector { center, r0: rm, r1, t0: tm, t1 },
                    Region::Sector { center, r0, r1: rm, t0: tm, t1 },
                ]
            }
        }
    }
}

/// Diagnostics of one winding-number computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub count: i64,
    pub min_modulus: f64,
    pub max_modulus: f64,
    pub samples: usize,
}

fn phase_step(a: Complex64, b: Complex64) -> f64 {
    (b / a).arg()
}

/// Adaptive phase accumulation along one piece. Each segment is bisected
/// until both halves turn by less than `pi/4` (so the whole step is below
/// `pi/2`) and `f` is nearly linear on it.
fn accumulate<F>(f: &F, piece: &Piece, opts: &ArgOptions, floor: f64, stats: &mut Winding) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let n = ((opts.initial_samples as f64) * piece.length() / TAU).ceil().max(8.0) as usize;
    let ts: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let values: Vec<Complex64> = ts.par_iter().map(|&t| f(piece.at(t))).collect::<Result<_>>()?;
    let check = |z: Complex64, v: Complex64, stats: &mut Winding| -> Result<()> {
        let m = v.norm();
        stats.samples += 1;
        stats.min_modulus = stats.min_modulus.min(m);
        stats.max_modulus = stats.max_modulus.max(m);
        if !(m > floor) {
            return Err(Error::ZeroNearContour { at: z, modulus: m, floor });
        }
        Ok(())
    };
    for (t, v) in ts.iter().zip(&values) {
        check(piece.at(*t), *v, stats)?;
    }
    let mut total = 0.0;
    for k in 0..n {
        // explicit stack keeps the refinement order deterministic
        let mut stack = vec![(ts[k], values[k], ts[k + 1], values[k + 1], 0u32)];
        while let Some((ta, va, tb, vb, depth)) = stack.pop() {
            let tm = 0.5 * (ta + tb);
            let zm = piece.at(tm);
            let vm = f(zm)?;
            check(zm, vm, stats)?;
            // a segment is accepted when f is close to linear on it: small
            // phase steps and a midpoint near the chord. The chord test
            // catches a zero passing between two samples.
            let steps = phase_step(va, vm) + phase_step(vm, vb);
            let chord = (vm - 0.5 * (va + vb)).norm();
            let linear = chord <= 0.25 * va.norm().min(vb.norm());
            if linear && phase_step(va, vm).abs() < PI / 4.0 && phase_step(vm, vb).abs() < PI / 4.0 {
                total += steps;
                continue;
            }
            if depth >= opts.max_depth {
                return Err(Error::NonIntegerWinding { residue: 0.5 });
            }
            stack.push((tm, vm, tb, vb, depth + 1));
            stack.push((ta, va, tm, vm, depth + 1));
        }
    }
    Ok(total)
}

fn winding_with_floor<F>(f: &F, region: &Region, opts: &ArgOptions) -> Result<Winding>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let pieces = region.pieces();
    let floor = match opts.floor {
        Floor::Absolute(v) => v,
        Floor::Relative(frac) => {
            // coarse pass fixes the scale before the refined pass
            let mut sup: f64 = 0.0;
            for p in &pieces {
                let n = opts.initial_samples.max(8);
                let vals: Vec<f64> = (0..=n)
                    .into_par_iter()
                    .map(|k| f(p.at(k as f64 / n as f64)).map(|v| v.norm()))
                    .collect::<Result<_>>()?;
                sup = vals.into_iter().fold(sup, f64::max);
            }
            frac * sup
        }
    };
    let mut stats = Winding { count: 0, min_modulus: f64::INFINITY, max_modulus: 0.0, samples: 0 };
    let mut total = 0.0;
    for p in &pieces {
        total += accumulate(f, p, opts, floor, &mut stats)?;
    }
    let turns = total / TAU;
    let residue = (turns - turns.round()).abs();
    if residue >= 0.01 {
        return Err(Error::NonIntegerWinding { residue });
    }
    stats.count = turns.round() as i64;
    Ok(stats)
}

/// Winding number of `f` around the boundary of `region`, with contour diagnostics.
pub fn winding_number<F>(f: &F, region: &Region, opts: &ArgOptions) -> Result<Winding>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    winding_with_floor(f, region, opts)
}

/// Number of zeros of `f` in `|z| < r`, counted with multiplicity.
pub fn count_zeros_argument<F>(f: &F, r: f64, opts: &ArgOptions) -> Result<usize>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("contour radius must be positive, got {r}")));
    }
    let w = winding_number(f, &Region::disc(r), opts)?;
    if w.count < 0 {
        return Err(invalid("negative winding number; f is not analytic inside the contour"));
    }
    Ok(w.count as usize)
}

const SPLIT_FRACTIONS: [f64; 5] = [0.5, 0.43, 0.57, 0.37, 0.61];

fn newton<F>(f: &F, start: Complex64, h: f64) -> Option<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let mut z = start;
    for _ in 0..60 {
        let v = f(z).ok()?;
        if v.norm() == 0.0 {
            return Some(z);
        }
        let hh = Complex64::new(h, 0.0);
        let d = (f(z + hh).ok()? - f(z - hh).ok()?) / (2.0 * hh);
        if d.norm() == 0.0 || !d.re.is_finite() {
            return None;
        }
        let step = v / d;
        z -= step;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1e-3) {
            return Some(z);
        }
    }
    None
}

/// Zeros of `f` in `region`, repeated according to multiplicity. Regions with
/// winding 0 are discarded, simple zeros are polished by Newton's method, and
/// a cluster that survives down to diameter `tol` is reported at its centre
/// with the enclosing winding number as multiplicity.
pub fn locate_zeros<F>(f: &F, region: &Region, tol: f64, opts: &ArgOptions) -> Result<Vec<Complex64>>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    if !(tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    let count = winding_number(f, region, opts)?.count;
    let mut out = Vec::new();
    locate_in(f, region, count, tol, opts, &mut out)?;
    Ok(out)
}

fn locate_in<F>(f: &F, region: &Region, count: i64, tol: f64, opts: &ArgOptions, out: &mut Vec<Complex64>) -> Result<()>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    if count <= 0 {
        return Ok(());
    }
    let diam = region.diameter();
    if count == 1 {
        let h = (1e-6 * diam).max(1e-9);
        if let Some(z) = newton(f, region.center(), h) {
            if region.contains(z, 1e-12 * diam.max(1.0)) {
                out.push(z);
                return Ok(());
            }
        }
    }
    if diam <= tol {
        let c = region.center();
        let polished = if count == 1 { newton(f, c, tol.max(1e-9)).unwrap_or(c) } else { c };
        out.extend(std::iter::repeat_n(polished, count as usize));
        return Ok(());
    }
    let mut last_err = None;
    for s in SPLIT_FRACTIONS {
        let children = region.split(s);
        let counts: Result<Vec<i64>> = children.iter().map(|c| winding_number(f, c, opts).map(|w| w.count)).collect();
        match counts {
            Ok(counts) if counts.iter().sum::<i64>() == count => {
                for (child, k) in children.iter().zip(counts) {
                    locate_in(f, child, k, tol, opts, out)?;
                }
                return Ok(());
            }
            Ok(_) => last_err = Some(Error::NonIntegerWinding { residue: 0.5 }),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(Error::NonIntegerWinding { residue: 0.5 }))
}

/// All eigenvalues of the `n x n` section, by dense complex QR.
pub fn section_eigenvalues(spec: &PotentialSpec, n: usize) -> Result<Vec<Complex64>> {
    let t = build_jacobi(spec, n)?;
    let m = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| t.get(i, j));
    m.eigenvalues().map_err(|_| Error::QrNonConvergence(n))
}

fn off_interval(eigs: Vec<Complex64>, eps_ess: f64) -> Vec<Complex64> {
    eigs.into_iter().filter(|e| distance_to_interval(*e) > eps_ess).collect()
}

/// Members of `coarse` with a partner in `fine` within `tol`, each partner used once.
fn stable_subset(coarse: &[Complex64], fine: &[Complex64], tol: f64) -> Vec<Complex64> {
    let mut used = vec![false; fine.len()];
    let mut out = Vec::new();
    for e in coarse {
        let best = fine
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, f)| (k, (f - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, d)) = best {
            if d <= tol {
                used[k] = true;
                out.push(*e);
            }
        }
    }
    out
}

/// Eigenvalues of the `n x n` section at distance more than `eps_ess` from
/// `[-1, 1]` that reappear in the `2n x 2n` section within `10 eps_ess`.
pub fn truncated_eigenvalues(spec: &PotentialSpec, n: usize, eps_ess: f64) -> Result<Vec<Complex64>> {
    if n < 2 * spec.support_end() || n == 0 {
        return Err(invalid(format!("section order {n} below 2 * support_end = {}", 2 * spec.support_end())));
    }
    let coarse = off_interval(section_eigenvalues(spec, n)?, eps_ess);
    let fine = off_interval(section_eigenvalues(spec, 2 * n)?, eps_ess);
    Ok(stable_subset(&coarse, &fine, 10.0 * eps_ess))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    ArgumentPrinciple,
    Eigensolver,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountOptions {
    pub r_max: f64,
    pub method: CountMethod,
    pub eps_ess: f64,
    pub arg: ArgOptions,
    /// Number of inward retreats by `arg.guard` after a contour failure.
    pub max_retreats: usize,
    /// Locate individual zeros (otherwise only the count is computed).
    pub locate: bool,
    pub locate_tol: f64,
    /// First section order; `None` means `max(200, 2 support_end)`.
    pub eig_order: Option<usize>,
    /// Largest section order the eigensolver may double up to.
    pub eig_max_order: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        Self {
            r_max: 0.999,
            method: CountMethod::Both,
            eps_ess: crate::model::DEFAULT_EPS_ESS,
            arg: ArgOptions::default(),
            max_retreats: 5,
            locate: true,
            locate_tol: 1e-10,
            eig_order: None,
            eig_max_order: 1600,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCountReport {
    pub count: usize,
    pub zeros_z: Vec<Complex64>,
    #[serde(rename = "zeros_E")]
    pub zeros_e: Vec<Complex64>,
    pub method: CountMethod,
    pub contour_radius: f64,
    /// `None` when the contour method did not run.
    pub min_modulus_on_contour: Option<f64>,
    pub argument_count: Option<usize>,
    pub eigensolver_count: Option<usize>,
    /// Section order behind `eigensolver_count`.
    pub eigensolver_order: Option<usize>,
    pub methods_agree: bool,
    pub diagnostics: String,
}

impl ZeroCountReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct ArgumentResult {
    radius: f64,
    count: usize,
    min_modulus: f64,
    zeros: Option<Vec<Complex64>>,
}

fn argument_path(spec: &PotentialSpec, opts: &CountOptions, notes: &mut Vec<String>) -> Result<ArgumentResult> {
    let f = |z: Complex64| delta_eval(spec, z);
    let mut r = opts.r_max;
    let mut last = None;
    for attempt in 0..=opts.max_retreats {
        match winding_number(&f, &Region::disc(r), &opts.arg) {
            Ok(w) => {
                let count = w.count.max(0) as usize;
                let zeros = if opts.locate {
                    Some(locate_zeros(&f, &Region::disc(r), opts.locate_tol, &opts.arg)?)
                } else {
                    None
                };
                if attempt > 0 {
                    notes.push(format!("contour retreated {attempt} time(s) to r = {r}"));
                }
                return Ok(ArgumentResult { radius: r, count, min_modulus: w.min_modulus, zeros });
            }
            Err(e @ (Error::ZeroNearContour { .. } | Error::NonIntegerWinding { .. })) => {
                last = Some(e);
                r -= opts.arg.guard;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Eigenvalues `E` whose disc preimage lies in `|z| <= r`.
fn inside_radius(eigs: &[Complex64], r: f64, eps_ess: f64) -> Vec<Complex64> {
    eigs.iter().filter_map(|e| inverse_joukowski(*e, eps_ess).ok().filter(|z| z.norm() <= r)).collect()
}

/// Counts eigenvalues of `J` off `[-1, 1]` as zeros of `Delta` in
/// `|z| <= r_max`, with the truncated-matrix eigensolver as an independent
/// check. The eigensolver starts at the configured order and doubles (up to
/// `eig_max_order`) only while its count differs from the contour count.
pub fn count_eigenvalues(spec: &PotentialSpec, opts: &CountOptions) -> Result<ZeroCountReport> {
    if !(opts.r_max > 0.0 && opts.r_max < 1.0) {
        return Err(invalid(format!("r_max must lie in (0, 1), got {}", opts.r_max)));
    }
    let mut notes = Vec::new();
    let use_arg = opts.method != CountMethod::Eigensolver;
    let use_eig = opts.method != CountMethod::ArgumentPrinciple;

    let arg = if use_arg { Some(argument_path(spec, opts, &mut notes)?) } else { None };
    let radius = arg.as_ref().map_or(opts.r_max, |a| a.radius);

    let mut eig: Option<(usize, Vec<Complex64>)> = None;
    if use_eig {
        let mut n = opts.eig_order.unwrap_or(200.max(2 * spec.support_end())).max(2 * spec.support_end()).max(1);
        let mut coarse = off_interval(section_eigenvalues(spec, n)?, opts.eps_ess);
        loop {
            let fine = off_interval(section_eigenvalues(spec, 2 * n)?, opts.eps_ess);
            let stable = stable_subset(&coarse, &fine, 10.0 * opts.eps_ess);
            let zs = inside_radius(&stable, radius, opts.eps_ess);
            let settled = arg.as_ref().is_none_or(|a| a.count == zs.len());
            eig = Some((n, zs));
            // the last step is clamped so the fine section stays within the cap
            let next = (2 * n).min(opts.eig_max_order / 2);
            if settled || next <= n {
                break;
            }
            coarse = if next == 2 * n { fine } else { off_interval(section_eigenvalues(spec, next)?, opts.eps_ess) };
            n = next;
        }
    }

    let argument_count = arg.as_ref().map(|a| a.count);
    let eigensolver_count = eig.as_ref().map(|e| e.1.len());
    let methods_agree = match (argument_count, eigensolver_count) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    };
    let (count, zeros_z) = match (&arg, &eig) {
        (Some(a), _) => (a.count, a.zeros.clone().unwrap_or_default()),
        (None, Some((_, zs))) => (zs.len(), zs.clone()),
        (None, None) => unreachable!("at least one method runs"),
    };
    if !methods_agree {
        notes.push(format!(
            "methods disagree: argument principle {} vs eigensolver {}",
            argument_count.unwrap_or(0),
            eigensolver_count.unwrap_or(0)
        ));
        let edge: Vec<String> = zeros_z
            .iter()
            .filter(|z| z.norm() > radius - 1e-2)
            .map(|z| format!("{:.6}{:+.6}i (|z| = {:.6})", z.re, z.im, z.norm()))
            .collect();
        if !edge.is_empty() {
            notes.push(format!("boundary-adjacent zeros: {}", edge.join(", ")));
        }
    }
    let zeros_e = zeros_z.iter().map(|z| joukowski(*z)).collect::<Result<Vec<_>>>()?;
    Ok(ZeroCountReport {
        count,
        zeros_z,
        zeros_e,
        method: opts.method,
        contour_radius: radius,
        min_modulus_on_contour: arg.as_ref().map(|a| a.min_modulus),
        argument_count,
        eigensolver_count,
        eigensolver_order: eig.as_ref().map(|e| e.0),
        methods_agree,
        diagnostics: notes.join("; "),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn opts() -> ArgOptions {
        ArgOptions::default()
    }

    #[test]
    fn winding_examples() {
        let one = |_: Complex64| Ok(c(1.0, 0.0));
        assert_eq!(count_zeros_argument(&one, 0.9, &opts()).unwrap(), 0);
        let cube = |z: Complex64| Ok(z * z * z);
        assert_eq!(count_zeros_argument(&cube, 0.5, &opts()).unwrap(), 3);
        let lin = |z: Complex64| Ok(1.0 - 2.0 * z);
        assert_eq!(count_zeros_argument(&lin, 0.9, &opts()).unwrap(), 1);
    }

    #[test]
    fn zero_on_contour_is_flagged() {
        let lin = |z: Complex64| Ok(1.0 - 2.0 * z);
        assert!(matches!(count_zeros_argument(&lin, 0.5, &opts()), Err(Error::ZeroNearContour { .. })));
    }

    #[test]
    fn locate_examples() {
        let tol = 1e-10;
        let lin = |z: Complex64| Ok(1.0 - 2.0 * z);
        let zs = locate_zeros(&lin, &Region::disc(0.9), tol, &opts()).unwrap();
        assert_eq!(zs.len(), 1);
        assert!((zs[0] - 0.5).norm() < 1e-12);

        let quad = |z: Complex64| Ok((z - 0.3) * (z - c(0.0, 0.3)));
        let mut zs = locate_zeros(&quad, &Region::disc(0.9), tol, &opts()).unwrap();
        zs.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert_eq!(zs.len(), 2);
        assert!((zs[0] - c(0.0, 0.3)).norm() < 1e-12);
        assert!((zs[1] - 0.3).norm() < 1e-12);

        let exp = |z: Complex64| Ok(z.exp());
        assert!(locate_zeros(&exp, &Region::disc(0.9), tol, &opts()).unwrap().is_empty());
    }

    #[test]
    fn locate_double_zero_and_rectangle() {
        let sq = |z: Complex64| Ok((z - c(0.2, 0.1)).powi(2) * (z + 0.6));
        let zs = locate_zeros(&sq, &Region::disc(0.9), 1e-6, &opts()).unwrap();
        assert_eq!(zs.len(), 3);
        assert_eq!(zs.iter().filter(|z| (*z - c(0.2, 0.1)).norm() < 1e-5).count(), 2);

        let rect = Region::Rect { lo: c(-1.0, -1.0), hi: c(0.1, 1.0) };
        let cubic = |z: Complex64| Ok((z - 0.5) * (z + c(0.5, 0.5)) * (z - c(-0.2, 0.7)));
        let zs = locate_zeros(&cubic, &rect, 1e-10, &opts()).unwrap();
        assert_eq!(zs.len(), 2);
    }

    #[test]
    fn free_section_spectrum() {
        let mut ev = section_eigenvalues(&PotentialSpec::free(), 3).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (e, want) in ev.iter().zip([-h, 0.0, h]) {
            assert!((e - want).norm() < 1e-14);
        }
        assert!(truncated_eigenvalues(&PotentialSpec::free(), 3, 1e-6).unwrap().is_empty());
    }

    #[test]
    fn rank_one_sections() {
        let ev = truncated_eigenvalues(&PotentialSpec::rank_one(c(1.0, 0.0)), 400, 1e-6).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0] - 1.25).norm() < 1e-8);
        let ev = truncated_eigenvalues(&PotentialSpec::rank_one(c(0.4, 0.0)), 400, 1e-6).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn count_free_and_rank_one() {
        let o = CountOptions::default();
        let r = count_eigenvalues(&PotentialSpec::free(), &o).unwrap();
        assert_eq!(r.count, 0);
        assert!(r.methods_agree);
        let r = count_eigenvalues(&PotentialSpec::rank_one(c(1.0, 0.0)), &o).unwrap();
        assert_eq!((r.count, r.eigensolver_count), (1, Some(1)));
        assert!((r.zeros_e[0] - 1.25).norm() < 1e-10);
        let back: ZeroCountReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
