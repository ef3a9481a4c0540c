//! Zero planting: subtract from a function that is tiny on a boundary arc its
//! Lagrange interpolant at `N` arc nodes. The difference vanishes at the nodes
//! while its value at the origin barely moves.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, integrate_complex};
use crate::zeros::{locate_zeros, winding_number, ArgOptions, Floor, Region};

const HERGLOTZ_TOL: f64 = 1e-12;

/// Outer function on the disc with boundary log-modulus
/// `w(theta) = -b / max(|theta|, theta_a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOuter {
    pub b: f64,
    pub theta_a: f64,
    /// `log|g(0)| = -a`.
    pub a: f64,
}

fn wrap(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TAU) - PI;
    if t < -PI {
        t + TAU
    } else {
        t
    }
}

impl SurrogateOuter {
    pub fn new(a: f64, theta_a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid(format!("A must be positive, got {a}")));
        }
        if !(theta_a > 0.0 && theta_a < PI / 4.0) {
            return Err(invalid(format!("theta_A must lie in (0, pi/4), got {theta_a}")));
        }
        let b = a * PI / (1.0 + (PI / theta_a).ln());
        Ok(Self { b, theta_a, a })
    }

    pub fn boundary_log_modulus(&self, theta: f64) -> f64 {
        -self.b / wrap(theta).abs().max(self.theta_a)
    }

    /// `(1/2pi) * integral of w`, evaluated by quadrature. Equals `-a`.
    pub fn herglotz_mean(&self) -> Result<f64> {
        let w = |t: f64| self.boundary_log_modulus(t);
        let v = integrate(&w, -PI, PI, &[-self.theta_a, self.theta_a], HERGLOTZ_TOL)?;
        Ok(v / TAU)
    }

    fn floor_angle(&self, theta: f64) -> f64 {
        wrap(theta).abs().max(self.theta_a)
    }

    /// `log g(z)` for `|z| < 1`.
    ///
    /// The kernel mean is 1, so `w(arg z)` is pulled out and only the
    /// Lipschitz remainder `w(theta) - w(arg z)` is integrated, with panels
    /// graded towards `arg z` on the scale `1 - |z|`. Both the kernel and the
    /// remainder are written without cancellation, since near the peak the
    /// kernel amplifies rounding by `1 / (1 - |z|)`.
    pub fn log_eval(&self, z: Complex64) -> Result<Complex64> {
        let r = z.norm();
        if r >= 1.0 {
            return Err(invalid(format!("outer function evaluated at |z| = {r} >= 1")));
        }
        if r == 0.0 {
            return Ok(Complex64::new(-self.a, 0.0));
        }
        let phi = z.arg();
        let delta = 1.0 - r;
        let m_phi = self.floor_angle(phi);
        let d_phi = phi.abs() - self.theta_a;
        // (m(phi + u) - m(phi), m(phi + u)); on phi's side of the origin the
        // difference is formed from u itself so it keeps full relative accuracy
        let m_shift = |u: f64| {
            let t = phi + u;
            if t.abs() <= PI && (phi == 0.0 || t * phi > 0.0) {
                let step = if phi == 0.0 { u.abs() } else { phi.signum() * u };
                let d_t = d_phi + step;
                let diff = match (d_phi > 0.0, d_t > 0.0) {
                    (true, true) => step,
                    (true, false) => -d_phi,
                    (false, true) => d_t,
                    (false, false) => 0.0,
                };
                (diff, m_phi + diff)
            } else {
                let m = self.floor_angle(t);
                (m - m_phi, m)
            }
        };
        let integrand = |u: f64| {
            let s = (0.5 * u).sin();
            let su = u.sin();
            let kernel = Complex64::new(1.0 + r - 2.0 * s * s, su) / Complex64::new(delta - 2.0 * s * s, su);
            let (diff, m) = m_shift(u);
            kernel * (self.b * diff / (m * m_phi))
        };
        let mut breaks = vec![0.0];
        let mut step = delta;
        while step < PI {
            breaks.push(-step);
            breaks.push(step);
            step *= 4.0;
        }
        for base in [0.0, -self.theta_a, self.theta_a, PI] {
            for k in -1..=1 {
                breaks.push(base + k as f64 * TAU - phi);
            }
        }
        let v = integrate_complex(&integrand, -PI, PI, &breaks, HERGLOTZ_TOL)?;
        Ok(v / TAU - self.b / m_phi)
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.log_eval(z).map(|l| l.exp())
    }
}

/// Mantissa and binary exponent, so long products neither overflow nor underflow.
#[derive(Clone, Copy, Debug)]
struct Scaled {
    m: Complex64,
    e: i32,
}

impl Scaled {
    const ONE: Scaled = Scaled { m: Complex64 { re: 1.0, im: 0.0 }, e: 0 };

    fn mul(self, x: Complex64) -> Scaled {
        let mut m = self.m * x;
        let mut e = self.e;
        let n = m.norm();
        if n != 0.0 && !(2f64.powi(-200)..=2f64.powi(200)).contains(&n) {
            let k = n.log2().round() as i32;
            m *= 2f64.powi(-k);
            e += k;
        }
        Scaled { m, e }
    }

    fn value(self) -> Complex64 {
        if self.e.abs() > 1000 {
            self.m * 2f64.powf(self.e as f64)
        } else {
            self.m * 2f64.powi(self.e)
        }
    }
}

/// Degree `N - 1` interpolant in the first barycentric form
/// `L(z) = l(z) sum_j w_j g_j / (z - x_j)`, with distances divided by a
/// capacity-like scale of the node set.
#[derive(Clone, Debug)]
pub struct Interpolant {
    pub nodes: Vec<Complex64>,
    pub values: Vec<Complex64>,
    weights: Vec<Scaled>,
    scale: f64,
}

impl Interpolant {
    pub fn new(nodes: Vec<Complex64>, values: Vec<Complex64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(invalid("node and value counts differ"));
        }
        let n = nodes.len();
        let mut diam: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                let d = (nodes[i] - nodes[j]).norm();
                if d == 0.0 {
                    return Err(Error::NodeCoincidence(j, i));
                }
                diam = diam.max(d);
            }
        }
        let scale = if diam > 0.0 { diam / 4.0 } else { 1.0 };
        let weights = (0..n)
            .map(|j| {
                let mut p = Scaled::ONE;
                for k in (0..n).filter(|&k| k != j) {
                    p = p.mul((nodes[j] - nodes[k]) / scale);
                }
                Scaled { m: 1.0 / p.m, e: -p.e }
            })
            .collect();
        Ok(Self { nodes, values, weights, scale })
    }

    pub fn degree(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        if self.nodes.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        if let Some(j) = self.nodes.iter().position(|&x| x == z) {
            return self.values[j];
        }
        let mut ell = Scaled::ONE;
        for &x in &self.nodes {
            ell = ell.mul((z - x) / self.scale);
        }
        let mut total = Complex64::new(0.0, 0.0);
        for ((&x, &v), w) in self.nodes.iter().zip(&self.values).zip(&self.weights) {
            let term = Scaled { m: ell.m * w.m, e: ell.e + w.e }.mul(v / (z - x));
            total += term.value();
        }
        total * self.scale
    }
}

/// Interpolates `g` at `nodes` and evaluates the interpolant at `z`.
pub fn lagrange_interpolant<G>(g: G, nodes: &[Complex64], z: Complex64) -> Result<Complex64>
where
    G: Fn(Complex64) -> Result<Complex64>,
{
    let values = nodes.iter().map(|&x| g(x)).collect::<Result<Vec<_>>>()?;
    Ok(Interpolant::new(nodes.to_vec(), values)?.eval(z))
}

/// `n` equispaced nodes on `{r e^{i theta} : |theta| <= halfwidth}`.
pub fn arc_nodes(n: usize, halfwidth: f64, radius: f64) -> Vec<Complex64> {
    match n {
        0 => Vec::new(),
        1 => vec![Complex64::new(radius, 0.0)],
        _ => (0..n)
            .map(|j| Complex64::from_polar(radius, -halfwidth + 2.0 * halfwidth * j as f64 / (n - 1) as f64))
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantOptions {
    pub node_radius: f64,
    pub count_radius: f64,
    /// Points on `|z| = 1` used for the sup check of the interpolant.
    pub boundary_samples: usize,
    pub arg: ArgOptions,
    pub locate: bool,
    pub locate_tol: f64,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self {
            node_radius: 0.99,
            count_radius: 1.0 - 1e-4,
            boundary_samples: 4096,
            arg: ArgOptions { floor: Floor::Absolute(1e-300), ..ArgOptions::default() },
            locate: true,
            locate_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantReport {
    #[serde(rename = "A")]
    pub a: f64,
    pub theta_a: f64,
    pub b: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub arc_halfwidth: f64,
    pub node_radius: f64,
    pub count_radius: f64,
    pub g0_abs: f64,
    pub f0_abs: f64,
    /// Largest `|L|` over the boundary samples of `|z| = 1`.
    pub sup_l_boundary: f64,
    pub limit: f64,
    pub max_node_residual: f64,
    /// Largest `| |g(x_j)| - exp(w(arg x_j)) |`, the effect of pulling nodes inside.
    pub node_offset_perturbation: f64,
    pub count: usize,
    pub min_modulus_on_contour: f64,
    pub zeros: Vec<Complex64>,
    pub accepted: bool,
}

impl PlantReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Zero locations as `re,im` rows.
    pub fn write_zeros_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["re", "im"])?;
        for z in &self.zeros {
            w.write_record([format!("{:e}", z.re), format!("{:e}", z.im)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The planted function `f = g - L`.
#[derive(Clone, Debug)]
pub struct Planted {
    pub outer: SurrogateOuter,
    pub interpolant: Interpolant,
}

impl Planted {
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.outer.eval(z)? - self.interpolant.eval(z))
    }
}

/// Interpolant of `g` at the arc nodes, with its sampled boundary sup.
fn build_interpolant(
    g: &SurrogateOuter,
    n: usize,
    arc_halfwidth: f64,
    opts: &PlantOptions,
) -> Result<(Interpolant, f64)> {
    if !(arc_halfwidth > 0.0 && arc_halfwidth < PI) {
        return Err(invalid(format!("arc halfwidth must lie in (0, pi), got {arc_halfwidth}")));
    }
    if !(opts.node_radius > 0.0 && opts.node_radius < 1.0) {
        return Err(invalid("node radius must lie in (0, 1)"));
    }
    let nodes = arc_nodes(n, arc_halfwidth, opts.node_radius);
    let values = nodes.par_iter().map(|&x| g.eval(x)).collect::<Result<Vec<_>>>()?;
    let interp = Interpolant::new(nodes, values)?;
    let m = opts.boundary_samples.max(8 * n).max(16);
    let sup = (0..m)
        .into_par_iter()
        .map(|k| interp.eval(Complex64::from_polar(1.0, TAU * k as f64 / m as f64)).norm())
        .reduce(|| 0.0, f64::max);
    Ok((interp, sup))
}

/// Plants `n` zeros on the arc `|theta| <= arc_halfwidth`.
///
/// Fails with [`Error::InterpolantTooLarge`] when the sampled boundary sup of
/// the interpolant reaches `e^{-A}/2`.
pub fn plant_zeros(
    g: &SurrogateOuter,
    n: usize,
    arc_halfwidth: f64,
    opts: &PlantOptions,
) -> Result<(Planted, PlantReport)> {
    if !(opts.count_radius > 0.0 && opts.count_radius < 1.0) {
        return Err(invalid("count radius must lie in (0, 1)"));
    }
    let (interp, sup) = build_interpolant(g, n, arc_halfwidth, opts)?;
    let limit = (-g.a).exp() / 2.0;
    if sup >= limit {
        return Err(Error::InterpolantTooLarge { sup, limit });
    }
    let planted = Planted { outer: *g, interpolant: interp };
    let max_node_residual = planted
        .interpolant
        .nodes
        .iter()
        .map(|&x| planted.eval(x).map(|v| v.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let node_offset_perturbation = planted
        .interpolant
        .nodes
        .iter()
        .zip(&planted.interpolant.values)
        .map(|(x, v)| (v.norm() - g.boundary_log_modulus(x.arg()).exp()).abs())
        .fold(0.0, f64::max);
    let g0_abs = g.eval(Complex64::new(0.0, 0.0))?.norm();
    let f0_abs = planted.eval(Complex64::new(0.0, 0.0))?.norm();
    let f = |z: Complex64| planted.eval(z);
    let region = Region::disc(opts.count_radius);
    let winding = winding_number(&f, &region, &opts.arg)?;
    if winding.count < 0 {
        return Err(invalid("negative winding number for the planted function"));
    }
    let count = winding.count as usize;
    let zeros =
        if opts.locate && count > 0 { locate_zeros(&f, &region, opts.locate_tol, &opts.arg)? } else { Vec::new() };
    let report = PlantReport {
        a: g.a,
        theta_a: g.theta_a,
        b: g.b,
        n,
        arc_halfwidth,
        node_radius: opts.node_radius,
        count_radius: opts.count_radius,
        g0_abs,
        f0_abs,
        sup_l_boundary: sup,
        limit,
        max_node_residual,
        node_offset_perturbation,
        count,
        min_modulus_on_contour: winding.min_modulus,
        zeros,
        accepted: count >= n && f0_abs >= limit,
    };
    Ok((planted, report))
}

/// Largest `N <= n_max` whose interpolant passes the sup check, scanning
/// upwards from 1 and stopping at the first failure.
pub fn max_feasible_n(g: &SurrogateOuter, arc_halfwidth: f64, n_max: usize, opts: &PlantOptions) -> Result<usize> {
    let limit = (-g.a).exp() / 2.0;
    let mut best = 0;
    for n in 1..=n_max {
        let (_, sup) = build_interpolant(g, n, arc_halfwidth, opts)?;
        if sup >= limit {
            break;
        }
        best = n;
    }
    Ok(best)
}

/// Writes a plant report and its zero table next to each other.
pub fn write_plant_outputs(report: &PlantReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("plant_report.json"))?;
    f.write_all(report.to_json()?.as_bytes())?;
    report.write_zeros_csv(&dir.join("plant_zeros.csv"))
}
