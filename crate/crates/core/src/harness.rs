//! Experiment configuration, grid sweeps with ordered commit and resume,
//! run manifests, and report emission.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    bound_cor, bound_delta01, bound_main, bound_main1, bound_mainso, bound_t1, bound_t2, BoundValue, ClassParams,
    JacobiBoundParams,
};
use crate::constants::ConstantsConfig;
use crate::determinant::{coeff_bound_check, decay_slope, taylor_coeffs, TaylorOptions};
use crate::dynkin::{
    calibrate_dbar_ladder, cauchy_green_reconstruct, default_dbar_ladder, recover_coeff_bounds, verify_dbar_bound,
    CoefficientSource, DynkinExtension, PolarGrid, QuadSpec,
};
use crate::error::{Error, Result};
use crate::extremal::{plant_zeros, PlantOptions, SurrogateOuter};
use crate::model::{gevrey_potential, PotentialKind};
use crate::zeros::{count_eigenvalues, CountOptions};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPECTRA_COUNT_OUT";
const MANIFEST: &str = "manifest.json";
const RESULTS: &str = "results.csv";
const FIXED_COLUMNS: [&str; 4] = ["cell", "manifest_id", "status", "error"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Eigcount,
    Coeffs,
    Bounds,
    Dynkin,
    Plant,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Eigcount => "eigcount",
            ExperimentKind::Coeffs => "coeffs",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::Dynkin => "dynkin",
            ExperimentKind::Plant => "plant",
            ExperimentKind::Sweep => "sweep",
        }
    }

    /// Result columns after the fixed `cell, manifest_id, status, error` prefix.
    pub fn columns(self) -> &'static [&'static str] {
        const COUNT: [&str; 12] = [
            "gamma",
            "B",
            "D",
            "support_end",
            "N_J",
            "argument_count",
            "eigensolver_count",
            "eigensolver_order",
            "methods_agree",
            "contour_radius",
            "min_modulus",
            "zeros_file",
        ];
        match self {
            ExperimentKind::Eigcount => &COUNT,
            ExperimentKind::Sweep => &[
                "gamma",
                "B",
                "D",
                "support_end",
                "N_J",
                "argument_count",
                "eigensolver_count",
                "eigensolver_order",
                "methods_agree",
                "contour_radius",
                "min_modulus",
                "zeros_file",
                "bound_mainso",
                "mainso_branch",
                "bound_cor",
                "margin_mainso",
                "margin_cor",
            ],
            ExperimentKind::Coeffs => &[
                "gamma",
                "B",
                "D",
                "support_end",
                "order",
                "radius_used",
                "consistency_gap",
                "reliable",
                "decay_slope",
                "log_D1",
                "bound_pass",
                "coeffs_file",
            ],
            ExperimentKind::Bounds => &[
                "beta",
                "A",
                "a_f",
                "a_f_prime",
                "d_f",
                "gamma",
                "B",
                "D",
                "main1",
                "main1_branch",
                "main",
                "main_branch",
                "t1",
                "delta01",
                "t2",
                "t2_branch",
                "mainso",
                "mainso_branch",
                "cor",
                "record_file",
            ],
            ExperimentKind::Dynkin => &[
                "beta",
                "a_f",
                "a_f_prime",
                "gamma_dyn",
                "m_max",
                "tail_bound",
                "C_dynkin",
                "C1_dynkin",
                "max_ratio",
                "dbar_pass",
                "recon_error_max",
                "recover_pass",
            ],
            ExperimentKind::Plant => &[
                "A",
                "theta_A",
                "arc",
                "N",
                "b",
                "count",
                "f0_abs",
                "limit",
                "sup_L",
                "min_modulus",
                "accepted",
                "zeros_file",
            ],
        }
    }
}

/// Parameter lists; which ones a kind needs is checked at load.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    #[serde(rename = "B", skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<f64>,
    #[serde(rename = "D", skip_serializing_if = "Vec::is_empty")]
    pub d: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    #[serde(rename = "A", skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub a_f: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub a_f_prime: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub d_f: Vec<f64>,
    #[serde(rename = "N", skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(rename = "theta_A", skip_serializing_if = "Vec::is_empty")]
    pub theta_a: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub arc: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericOptions {
    pub potential_kind: PotentialKind,
    pub cutoff_tol: f64,
    pub seed: u64,
    pub count: CountOptions,
    pub taylor_order: usize,
    pub taylor_radii: (f64, f64),
    pub taylor_oversampling: usize,
    pub taylor_threshold: f64,
    /// Inclusive `j` window of the decay-slope fit.
    pub slope_window: (usize, usize),
    pub dbar_grid: PolarGrid,
    /// Calibrate `(C, C_1)` per dynkin cell instead of using the configured pair.
    pub calibrate_dbar: bool,
    pub quad: QuadSpec,
    pub recover_max_n: usize,
    pub plant: PlantOptions,
    /// Worker threads; 0 means one per core.
    pub parallelism: usize,
}

impl Default for NumericOptions {
    fn default() -> Self {
        let t = TaylorOptions::default();
        Self {
            potential_kind: PotentialKind::Diagonal,
            cutoff_tol: 1e-16,
            seed: 0,
            count: CountOptions::default(),
            taylor_order: 40,
            taylor_radii: t.radii,
            taylor_oversampling: t.oversampling,
            taylor_threshold: t.threshold,
            slope_window: (5, 40),
            dbar_grid: PolarGrid { n_r: 64, n_theta: 64 },
            calibrate_dbar: true,
            quad: QuadSpec::default(),
            recover_max_n: 200,
            plant: PlantOptions::default(),
            parallelism: 0,
        }
    }
}

impl NumericOptions {
    fn taylor(&self) -> TaylorOptions {
        TaylorOptions {
            radii: self.taylor_radii,
            oversampling: self.taylor_oversampling,
            threshold: self.taylor_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub grid: Grid,
    /// JSON file holding a [`ConstantsConfig`]; relative paths are resolved
    /// against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants_file: Option<PathBuf>,
    /// Inline constants; take precedence over `constants_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
    #[serde(default)]
    pub options: NumericOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, grid: Grid) -> Self {
        Self { kind, grid, constants_file: None, constants: None, options: NumericOptions::default(), output_dir: None }
    }

    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if let Some(file) = &cfg.constants_file {
            if file.is_relative() {
                cfg.constants_file = Some(path.parent().unwrap_or(Path::new(".")).join(file));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let need = |name: &str, empty: bool| {
            if empty {
                Err(config_err(format!("{} experiments need a nonempty `{name}` grid", self.kind.name())))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::Eigcount | ExperimentKind::Coeffs | ExperimentKind::Sweep => {
                need("gamma", g.gamma.is_empty())?;
                need("B", g.b.is_empty())?;
                need("D", g.d.is_empty())?;
            }
            ExperimentKind::Dynkin => {
                need("beta", g.beta.is_empty())?;
                need("a_f", g.a_f.is_empty())?;
            }
            ExperimentKind::Plant => {
                need("A", g.a.is_empty())?;
                need("theta_A", g.theta_a.is_empty())?;
                need("arc", g.arc.is_empty())?;
                need("N", g.n.is_empty())?;
            }
            ExperimentKind::Bounds => {
                let all_empty =
                    [&g.beta, &g.a, &g.a_f, &g.a_f_prime, &g.d_f, &g.gamma, &g.b, &g.d].iter().all(|v| v.is_empty());
                if all_empty {
                    return Err(config_err("bounds experiments need at least one nonempty grid"));
                }
            }
        }
        if let Some(file) = &self.constants_file {
            if !file.is_file() {
                return Err(config_err(format!("constants file {} does not exist", file.display())));
            }
        }
        self.constants()?.validate()
    }

    pub fn constants(&self) -> Result<ConstantsConfig> {
        if let Some(c) = &self.constants {
            return Ok(c.clone());
        }
        match &self.constants_file {
            Some(file) => {
                let text = fs::read_to_string(file).map_err(|e| config_err(format!("{}: {e}", file.display())))?;
                serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", file.display())))
            }
            None => Ok(ConstantsConfig::default()),
        }
    }

    /// Directory the run is written under: the config value, then
    /// `$SPECTRA_COUNT_OUT`, then `./spectra-count-out`.
    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("spectra-count-out"))
    }

    /// Content hash of the config with constants resolved, so reruns of the
    /// same experiment find their own manifest.
    pub fn run_id(&self) -> Result<String> {
        let mut snapshot = self.clone();
        snapshot.constants = Some(self.constants()?);
        snapshot.constants_file = None;
        snapshot.output_dir = None;
        let digest = Sha256::digest(serde_json::to_vec(&snapshot)?);
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let g = &self.grid;
        let opt = |v: &Vec<f64>| -> Vec<Option<f64>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        match self.kind {
            ExperimentKind::Eigcount | ExperimentKind::Coeffs | ExperimentKind::Sweep => {
                for &gamma in &g.gamma {
                    for &b in &g.b {
                        for &d in &g.d {
                            out.push(Cell { gamma: Some(gamma), b: Some(b), d: Some(d), ..Cell::default() });
                        }
                    }
                }
            }
            ExperimentKind::Bounds => {
                for beta in opt(&g.beta) {
                    for a in opt(&g.a) {
                        for a_f in opt(&g.a_f) {
                            for a_f_prime in opt(&g.a_f_prime) {
                                for d_f in opt(&g.d_f) {
                                    for gamma in opt(&g.gamma) {
                                        for b in opt(&g.b) {
                                            for d in opt(&g.d) {
                                                out.push(Cell {
                                                    beta,
                                                    a,
                                                    a_f,
                                                    a_f_prime,
                                                    d_f,
                                                    gamma,
                                                    b,
                                                    d,
                                                    ..Cell::default()
                                                });
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            ExperimentKind::Dynkin => {
                let primes = if g.a_f_prime.is_empty() { vec![1.0] } else { g.a_f_prime.clone() };
                for &beta in &g.beta {
                    for &a_f in &g.a_f {
                        for &ap in &primes {
                            out.push(Cell { beta: Some(beta), a_f: Some(a_f), a_f_prime: Some(ap), ..Cell::default() });
                        }
                    }
                }
            }
            ExperimentKind::Plant => {
                for &a in &g.a {
                    for &theta_a in &g.theta_a {
                        for &arc in &g.arc {
                            for &n in &g.n {
                                out.push(Cell {
                                    a: Some(a),
                                    theta_a: Some(theta_a),
                                    arc: Some(arc),
                                    n: Some(n),
                                    ..Cell::default()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One grid point; unused parameters are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_f_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_f: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "theta_A", skip_serializing_if = "Option::is_none")]
    pub theta_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arc: Option<f64>,
}

impl Cell {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                parts.push(format!("{name}={v}"));
            }
        };
        push("gamma", self.gamma);
        push("B", self.b);
        push("D", self.d);
        push("beta", self.beta);
        push("A", self.a);
        push("a_f", self.a_f);
        push("a_f_prime", self.a_f_prime);
        push("d_f", self.d_f);
        push("theta_A", self.theta_a);
        push("arc", self.arc);
        push("N", self.n.map(|n| n as f64));
        parts.join(",")
    }

    fn req(v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| config_err(format!("cell is missing `{name}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Pending,
    Ok,
    /// Completed, but the two counting methods disagree.
    Disagree,
    Failed,
}

impl CellState {
    pub fn name(self) -> &'static str {
        match self {
            CellState::Pending => "pending",
            CellState::Ok => "ok",
            CellState::Disagree => "disagree",
            CellState::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub index: usize,
    pub label: String,
    pub status: CellState,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub id: String,
    pub toolkit_version: String,
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    pub config: ExperimentConfig,
    pub constants: ConstantsConfig,
    pub columns: Vec<String>,
    pub results_file: String,
    pub cells: Vec<CellStatus>,
    pub complete: bool,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Atomic replace: write a sibling temporary file, then rename over.
    pub fn store(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Every bound calculator that applies to the given parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub params: Cell,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub main1: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub main: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta01: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mainso: Option<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cor: Option<f64>,
    /// Why a calculator whose parameters were present did not produce a value.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BoundsRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates the calculators whose inputs are present in `q`. `d_f` defaults
/// to the class value `C a_f^{-...}` when `a_f` is given.
pub fn evaluate_bounds(q: &Cell, consts: &ConstantsConfig) -> BoundsRecord {
    let mut rec = BoundsRecord { params: *q, ..BoundsRecord::default() };
    fn keep<T>(notes: &mut Vec<String>, name: &str, r: Result<T>) -> Option<T> {
        r.map_err(|e| notes.push(format!("{name}: {e}"))).ok()
    }
    let class = match (q.beta, q.a_f) {
        (Some(beta), Some(a_f)) => {
            keep(&mut rec.notes, "class", ClassParams::new(beta, a_f, q.a_f_prime.unwrap_or(1.0), consts))
        }
        _ => None,
    };
    let d_f = q.d_f.or(class.as_ref().map(|c| c.d()));
    if let (Some(beta), Some(a)) = (q.beta, q.a) {
        rec.main1 = keep(&mut rec.notes, "main1", bound_main1(beta, a, consts));
        if let Some(params) = &class {
            rec.main = keep(&mut rec.notes, "main", bound_main(params, a, consts));
        }
        if let Some(d_f) = d_f {
            if beta > 0.0 {
                rec.t1 = keep(&mut rec.notes, "t1", bound_t1(beta, a, d_f, consts));
                rec.t2 = keep(&mut rec.notes, "t2", bound_t2(beta, a, d_f, consts));
            } else {
                rec.delta01 = keep(&mut rec.notes, "delta01", bound_delta01(a, d_f, consts));
            }
        }
    }
    if let (Some(gamma), Some(d)) = (q.gamma, q.d) {
        if let Some(b) = q.b {
            let params = keep(&mut rec.notes, "mainso", JacobiBoundParams::new(gamma, b, d, consts));
            if let Some(p) = params {
                rec.mainso = keep(&mut rec.notes, "mainso", bound_mainso(&p, consts));
            }
        }
        rec.cor = keep(&mut rec.notes, "cor", bound_cor(gamma, d, consts));
    }
    rec
}

fn bound_cols(v: &Option<BoundValue>) -> [String; 2] {
    match v {
        Some(b) => [num(b.value), b.branch.to_string()],
        None => [String::new(), String::new()],
    }
}

struct CellOutcome {
    values: Vec<String>,
    state: CellState,
}

struct CellContext<'a> {
    config: &'a ExperimentConfig,
    consts: &'a ConstantsConfig,
    dir: &'a Path,
}

fn cell_file(index: usize, what: &str) -> String {
    format!("cells/cell-{index:04}-{what}")
}

fn run_cell(ctx: &CellContext, index: usize, cell: &Cell) -> Result<CellOutcome> {
    let opts = &ctx.config.options;
    let consts = ctx.consts;
    match ctx.config.kind {
        ExperimentKind::Eigcount | ExperimentKind::Sweep => {
            let (gamma, b, d) = (Cell::req(cell.gamma, "gamma")?, Cell::req(cell.b, "B")?, Cell::req(cell.d, "D")?);
            let spec = gevrey_potential(b, d, gamma, opts.potential_kind, opts.cutoff_tol, opts.seed)?;
            let rep = count_eigenvalues(&spec, &opts.count)?;
            let zeros_file = cell_file(index, "zeros.csv");
            let mut w = csv::Writer::from_path(ctx.dir.join(&zeros_file))?;
            w.write_record(["E_re", "E_im", "z_re", "z_im"])?;
            for (e, z) in rep.zeros_e.iter().zip(&rep.zeros_z) {
                w.write_record([num(e.re), num(e.im), num(z.re), num(z.im)])?;
            }
            w.flush()?;
            let mut values = vec![
                num(gamma),
                num(b),
                num(d),
                spec.support_end().to_string(),
                rep.count.to_string(),
                rep.argument_count.map(|c| c.to_string()).unwrap_or_default(),
                rep.eigensolver_count.map(|c| c.to_string()).unwrap_or_default(),
                rep.eigensolver_order.map(|c| c.to_string()).unwrap_or_default(),
                rep.methods_agree.to_string(),
                num(rep.contour_radius),
                opt_num(rep.min_modulus_on_contour),
                zeros_file,
            ];
            if ctx.config.kind == ExperimentKind::Sweep {
                values.extend(sweep_bound_values(gamma, b, d, rep.count, consts));
            }
            let state = if rep.methods_agree { CellState::Ok } else { CellState::Disagree };
            Ok(CellOutcome { values, state })
        }
        ExperimentKind::Coeffs => {
            let (gamma, b, d) = (Cell::req(cell.gamma, "gamma")?, Cell::req(cell.b, "B")?, Cell::req(cell.d, "D")?);
            let spec = gevrey_potential(b, d, gamma, opts.potential_kind, opts.cutoff_tol, opts.seed)?;
            let series = taylor_coeffs(&spec, opts.taylor_order, &opts.taylor())?;
            let coeffs_file = cell_file(index, "coeffs.csv");
            series.write_csv(File::create(ctx.dir.join(&coeffs_file))?)?;
            let (lo, hi) = opts.slope_window;
            let slope = decay_slope(&series, gamma, lo, hi);
            let check = coeff_bound_check(&series, b, d, gamma, consts);
            let values = vec![
                num(gamma),
                num(b),
                num(d),
                spec.support_end().to_string(),
                series.order().to_string(),
                num(series.radius_used),
                num(series.consistency_gap),
                series.is_reliable().to_string(),
                opt_num(slope),
                num(check.log_d1),
                check.pass.to_string(),
                coeffs_file,
            ];
            Ok(CellOutcome { values, state: CellState::Ok })
        }
        ExperimentKind::Bounds => {
            let rec = evaluate_bounds(cell, consts);
            let record_file = cell_file(index, "bounds.json");
            fs::write(ctx.dir.join(&record_file), rec.to_json()?)?;
            let [m1, m1b] = bound_cols(&rec.main1);
            let [m, mb] = bound_cols(&rec.main);
            let [t2, t2b] = bound_cols(&rec.t2);
            let [so, sob] = bound_cols(&rec.mainso);
            let d_f = cell.d_f.or_else(|| {
                let (beta, a_f) = (cell.beta?, cell.a_f?);
                ClassParams::new(beta, a_f, cell.a_f_prime.unwrap_or(1.0), consts).ok().map(|c| c.d())
            });
            let values = vec![
                opt_num(cell.beta),
                opt_num(cell.a),
                opt_num(cell.a_f),
                opt_num(cell.a_f_prime),
                opt_num(d_f),
                opt_num(cell.gamma),
                opt_num(cell.b),
                opt_num(cell.d),
                m1,
                m1b,
                m,
                mb,
                opt_num(rec.t1),
                opt_num(rec.delta01),
                t2,
                t2b,
                so,
                sob,
                opt_num(rec.cor),
                record_file,
            ];
            Ok(CellOutcome { values, state: CellState::Ok })
        }
        ExperimentKind::Dynkin => {
            let (beta, a_f, ap) =
                (Cell::req(cell.beta, "beta")?, Cell::req(cell.a_f, "a_f")?, Cell::req(cell.a_f_prime, "a_f_prime")?);
            let alpha = (1.0 + beta) / (2.0 + beta);
            let source = CoefficientSource::Gevrey { alpha, a: a_f, a_prime: ap };
            let ext = DynkinExtension::new(source, beta, a_f, ap)?;
            let consts = if opts.calibrate_dbar {
                calibrate_dbar_ladder(&ext, opts.dbar_grid, &default_dbar_ladder(), consts)?
            } else {
                consts.clone()
            };
            let report = verify_dbar_bound(&ext, opts.dbar_grid, &consts)?;
            let mut recon_err: f64 = 0.0;
            for z in [Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.4), Complex64::new(0.0, 0.5)] {
                let r = cauchy_green_reconstruct(&ext, z, &opts.quad)?;
                recon_err = recon_err.max((r.value - ext.extend(z)).norm());
            }
            let recover = recover_coeff_bounds(&ext, 0..=opts.recover_max_n, &consts);
            let values = vec![
                num(beta),
                num(a_f),
                num(ap),
                num(ext.gamma_dyn),
                ext.m_max.to_string(),
                num(ext.tail_bound),
                num(consts.c_dynkin),
                num(consts.c1_dynkin),
                num(report.max_ratio),
                report.pass.to_string(),
                num(recon_err),
                recover.pass.to_string(),
            ];
            Ok(CellOutcome { values, state: CellState::Ok })
        }
        ExperimentKind::Plant => {
            let (a, theta_a, arc) =
                (Cell::req(cell.a, "A")?, Cell::req(cell.theta_a, "theta_A")?, Cell::req(cell.arc, "arc")?);
            let n = cell.n.ok_or_else(|| config_err("cell is missing `N`"))?;
            let g = SurrogateOuter::new(a, theta_a)?;
            let (_, rep) = plant_zeros(&g, n, arc, &opts.plant)?;
            let zeros_file = cell_file(index, "zeros.csv");
            rep.write_zeros_csv(&ctx.dir.join(&zeros_file))?;
            let values = vec![
                num(a),
                num(theta_a),
                num(arc),
                n.to_string(),
                num(rep.b),
                rep.count.to_string(),
                num(rep.f0_abs),
                num(rep.limit),
                num(rep.sup_l_boundary),
                num(rep.min_modulus_on_contour),
                rep.accepted.to_string(),
                zeros_file,
            ];
            Ok(CellOutcome { values, state: CellState::Ok })
        }
    }
}

/// `bound_mainso, mainso_branch, bound_cor, margin_mainso, margin_cor`; a
/// bound that does not apply leaves its columns empty.
fn sweep_bound_values(gamma: f64, b: f64, d: f64, count: usize, consts: &ConstantsConfig) -> Vec<String> {
    let so = JacobiBoundParams::new(gamma, b, d, consts).and_then(|p| bound_mainso(&p, consts)).ok();
    let cor = bound_cor(gamma, d, consts).ok();
    let measured = count as f64;
    vec![
        opt_num(so.as_ref().map(|v| v.value)),
        so.as_ref().map(|v| v.branch.to_string()).unwrap_or_default(),
        opt_num(cor),
        opt_num(so.map(|v| v.value - measured)),
        opt_num(cor.map(|v| v - measured)),
    ]
}

fn read_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records().map(|rec| Ok(rec?.iter().map(str::to_string).collect())).collect()
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Runs (or resumes) an experiment. Results go to
/// `<output root>/<kind>-<run id>/results.csv` in grid order, and the
/// manifest there is rewritten atomically after every committed cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(RunManifest, PathBuf)> {
    config.validate()?;
    let consts = config.constants()?;
    let id = config.run_id()?;
    let dir = config.output_root().join(format!("{}-{id}", config.kind.name()));
    fs::create_dir_all(dir.join("cells"))?;
    let cells = config.cells();
    let columns: Vec<String> = FIXED_COLUMNS.iter().chain(config.kind.columns()).map(|s| s.to_string()).collect();
    let results = dir.join(RESULTS);

    let mut manifest = match RunManifest::load(&dir) {
        Ok(m) if m.id == id && m.cells.len() == cells.len() => m,
        _ => RunManifest {
            id: id.clone(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: now_unix(),
            finished_unix: None,
            config: config.clone(),
            constants: consts.clone(),
            columns: columns.clone(),
            results_file: RESULTS.to_string(),
            cells: cells
                .iter()
                .enumerate()
                .map(|(index, c)| CellStatus {
                    index,
                    label: c.label(),
                    status: CellState::Pending,
                    wall_seconds: 0.0,
                    error: None,
                })
                .collect(),
            complete: false,
        },
    };
    if manifest.complete && results.is_file() {
        return Ok((manifest, dir));
    }

    // keep only rows whose cell the manifest records as committed
    let done = |m: &RunManifest, i: usize| m.cells[i].status != CellState::Pending;
    let mut kept: Vec<Vec<String>> = if results.is_file() {
        read_rows(&results)?
            .into_iter()
            .filter(|r| {
                r.first().and_then(|s| s.parse::<usize>().ok()).is_some_and(|i| i < cells.len() && done(&manifest, i))
            })
            .collect()
    } else {
        Vec::new()
    };
    kept.dedup_by(|a, b| a[0] == b[0]);
    write_rows(&results, &columns, &kept)?;
    manifest.store(&dir)?;

    let todo: Vec<usize> = (0..cells.len()).filter(|&i| !done(&manifest, i)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.options.parallelism)
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    let ctx = CellContext { config, consts: &consts, dir: &dir };
    let mut sink = OpenOptions::new().append(true).open(&results)?;
    let (tx, rx) = mpsc::channel::<(usize, Result<CellOutcome>, f64)>();

    let commit_result: Result<()> = std::thread::scope(|scope| {
        let todo_ref = &todo;
        let ctx_ref = &ctx;
        let cells_ref = &cells;
        let pool_ref = &pool;
        scope.spawn(move || {
            pool_ref.install(|| {
                todo_ref.par_iter().for_each_with(tx, |tx, &i| {
                    let start = Instant::now();
                    let out = run_cell(ctx_ref, i, &cells_ref[i]);
                    let _ = tx.send((i, out, start.elapsed().as_secs_f64()));
                });
            });
        });
        let mut waiting = BTreeMap::new();
        let mut next = 0;
        for (i, out, secs) in rx {
            waiting.insert(i, (out, secs));
            while next < todo.len() {
                let Some((out, secs)) = waiting.remove(&todo[next]) else { break };
                let idx = todo[next];
                let (state, error, values) = match out {
                    Ok(o) => (o.state, None, o.values),
                    Err(e) => {
                        (CellState::Failed, Some(e.to_string()), vec![String::new(); config.kind.columns().len()])
                    }
                };
                let mut row =
                    vec![idx.to_string(), id.clone(), state.name().to_string(), error.clone().unwrap_or_default()];
                row.extend(values);
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                w.write_record(&row)?;
                let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
                sink.write_all(&bytes)?;
                sink.sync_data()?;
                let status = &mut manifest.cells[idx];
                status.status = state;
                status.error = error;
                status.wall_seconds = secs;
                manifest.store(&dir)?;
                next += 1;
            }
        }
        Ok(())
    });
    commit_result?;

    // final pass restores strict grid order after a resume
    let mut rows = read_rows(&results)?;
    rows.sort_by_key(|r| r[0].parse::<usize>().unwrap_or(usize::MAX));
    write_rows(&results, &columns, &rows)?;
    manifest.complete = true;
    manifest.finished_unix = Some(now_unix());
    manifest.store(&dir)?;
    Ok((manifest, dir))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

/// Serialized form of a json report; [`load_report_json`] reads it back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub manifest_id: String,
    pub kind: ExperimentKind,
    pub constants: ConstantsConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn load_report_json(path: &Path) -> Result<ReportJson> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn column(columns: &[String], name: &str) -> Result<usize> {
    columns.iter().position(|c| c == name).ok_or_else(|| config_err(format!("results lack column `{name}`")))
}

/// Writes `report.{csv,json,md}` for a finished run, sorted by cell index.
/// With `constants`, the bound and margin columns of a sweep are recomputed
/// (for example after calibration).
pub fn emit_report(dir: &Path, format: ReportFormat, constants: Option<&ConstantsConfig>) -> Result<PathBuf> {
    let manifest = RunManifest::load(dir)?;
    let results = dir.join(&manifest.results_file);
    if !results.is_file() {
        return Err(config_err(format!("missing result file {}", results.display())));
    }
    let columns = manifest.columns.clone();
    let mut rows = read_rows(&results)?;
    rows.sort_by_key(|r| r[0].parse::<usize>().unwrap_or(usize::MAX));
    let consts = constants.cloned().unwrap_or_else(|| manifest.constants.clone());
    let kind = manifest.config.kind;
    if kind == ExperimentKind::Sweep && constants.is_some() {
        let (gi, bi, di, ni) =
            (column(&columns, "gamma")?, column(&columns, "B")?, column(&columns, "D")?, column(&columns, "N_J")?);
        let first = column(&columns, "bound_mainso")?;
        for row in rows.iter_mut() {
            let parsed =
                (row[gi].parse::<f64>(), row[bi].parse::<f64>(), row[di].parse::<f64>(), row[ni].parse::<usize>());
            if let (Ok(g), Ok(b), Ok(d), Ok(n)) = parsed {
                for (k, v) in sweep_bound_values(g, b, d, n, &consts).into_iter().enumerate() {
                    row[first + k] = v;
                }
            }
        }
    }
    match format {
        ReportFormat::Csv => {
            let path = dir.join("report.csv");
            write_rows(&path, &columns, &rows)?;
            Ok(path)
        }
        ReportFormat::Json => {
            let path = dir.join("report.json");
            let report = ReportJson { manifest_id: manifest.id.clone(), kind, constants: consts, columns, rows };
            write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            Ok(path)
        }
        ReportFormat::Md => {
            let path = dir.join("report.md");
            let mut md = format!("# {} run `{}`\n\n", kind.name(), manifest.id);
            let shown: Vec<usize> = if kind == ExperimentKind::Sweep {
                ["gamma", "B", "D", "N_J", "bound_cor", "margin_cor", "bound_mainso", "margin_mainso", "status"]
                    .iter()
                    .map(|c| column(&columns, c))
                    .collect::<Result<_>>()?
            } else {
                (0..columns.len()).filter(|&i| i != 1).collect()
            };
            let header: Vec<&str> = shown.iter().map(|&i| columns[i].as_str()).collect();
            md.push_str(&format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len())));
            for row in &rows {
                let cells: Vec<&str> = shown.iter().map(|&i| row[i].as_str()).collect();
                md.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            if kind == ExperimentKind::Sweep {
                md.push_str("\nmargin = bound - measured N_J.\n");
                write_loglog(dir, &columns, &rows)?;
                md.push_str("Plot data: `loglog.csv` (log D, log N_J).\n");
            }
            write_atomic(&path, md.as_bytes())?;
            Ok(path)
        }
    }
}

fn write_loglog(dir: &Path, columns: &[String], rows: &[Vec<String>]) -> Result<()> {
    let (gi, bi, di, ni) =
        (column(columns, "gamma")?, column(columns, "B")?, column(columns, "D")?, column(columns, "N_J")?);
    let header: Vec<String> = ["gamma", "B", "log_D", "log_N_J"].iter().map(|s| s.to_string()).collect();
    let out: Vec<Vec<String>> = rows
        .iter()
        .filter_map(|r| {
            let d = r[di].parse::<f64>().ok()?;
            let n = r[ni].parse::<f64>().ok().filter(|&n| n > 0.0)?;
            Some(vec![r[gi].clone(), r[bi].clone(), num(d.ln()), num(n.ln())])
        })
        .collect();
    write_rows(&dir.join("loglog.csv"), &header, &out)
}

/// Least-squares slope of `log N_J` against `log D` over the cells with
/// `N_J > 0`.
pub fn loglog_slope(points: &[(f64, usize)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|p| p.1 > 0 && p.0 > 0.0).map(|&(d, n)| (d.ln(), (n as f64).ln())).collect();
    crate::determinant::least_squares_slope(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds_config(dir: &Path) -> ExperimentConfig {
        let grid =
            Grid { beta: vec![1.0], a: vec![4.0, 10.0], a_f: vec![1.0], a_f_prime: vec![1.0], ..Grid::default() };
        ExperimentConfig { output_dir: Some(dir.to_path_buf()), ..ExperimentConfig::new(ExperimentKind::Bounds, grid) }
    }

    #[test]
    fn empty_grid_is_rejected() {
        let cfg =
            ExperimentConfig::new(ExperimentKind::Sweep, Grid { gamma: vec![0.75], b: vec![1.0], ..Grid::default() });
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ExperimentConfig::new(ExperimentKind::Bounds, Grid::default());
        assert!(cfg.validate().is_err());
        let text = r#"{"kind": "sweep", "grid": {"B": [1], "D": [2], "gamma": [0.75]}, "bogus": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn missing_constants_file_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("cfg.json");
        fs::write(&path, r#"{"kind": "bounds", "grid": {"beta": [1], "A": [4]}, "constants_file": "nope.json"}"#)
            .unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
        fs::write(tmp.path().join("nope.json"), r#"{"c_main1": 2.0}"#).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.constants().unwrap().c_main1, 2.0);
    }

    #[test]
    fn bounds_run_is_deterministic_and_resumable() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = bounds_config(tmp.path());
        let (m, dir) = run_experiment(&cfg).unwrap();
        assert!(m.complete);
        assert_eq!(m.cells.len(), 2);
        let first = fs::read(dir.join(RESULTS)).unwrap();
        let rows = read_rows(&dir.join(RESULTS)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r[1] == m.id && r[2] == "ok"));

        // the record file matches a direct evaluation
        let direct = evaluate_bounds(&cfg.cells()[0], &ConstantsConfig::default()).to_json().unwrap();
        assert_eq!(fs::read_to_string(dir.join(&rows[0][FIXED_COLUMNS.len() + 19])).unwrap(), direct);

        // simulate a crash after the first commit: reset one cell and drop its row
        let mut m2 = m.clone();
        m2.complete = false;
        m2.cells[1].status = CellState::Pending;
        m2.store(&dir).unwrap();
        let header: Vec<String> = m.columns.clone();
        write_rows(&dir.join(RESULTS), &header, &rows[..1]).unwrap();
        let (m3, _) = run_experiment(&cfg).unwrap();
        assert!(m3.complete);
        assert_eq!(fs::read(dir.join(RESULTS)).unwrap(), first);

        // a fresh directory yields byte-identical results
        let tmp2 = tempfile::tempdir().unwrap();
        let (_, dir2) = run_experiment(&bounds_config(tmp2.path())).unwrap();
        assert_eq!(fs::read(dir2.join(RESULTS)).unwrap(), first);
    }

    #[test]
    fn reports_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let (m, dir) = run_experiment(&bounds_config(tmp.path())).unwrap();
        let csv_path = emit_report(&dir, ReportFormat::Csv, None).unwrap();
        assert_eq!(read_rows(&csv_path).unwrap().len(), 2);
        let json_path = emit_report(&dir, ReportFormat::Json, None).unwrap();
        let rep = load_report_json(&json_path).unwrap();
        assert_eq!(rep.manifest_id, m.id);
        assert_eq!(rep.rows.len(), 2);
        let again = serde_json::to_string_pretty(&rep).unwrap();
        assert_eq!(again, fs::read_to_string(&json_path).unwrap());
        let md = fs::read_to_string(emit_report(&dir, ReportFormat::Md, None).unwrap()).unwrap();
        assert_eq!(md.lines().filter(|l| l.starts_with('|')).count(), 4);
        fs::remove_file(dir.join(RESULTS)).unwrap();
        assert!(emit_report(&dir, ReportFormat::Csv, None).is_err());
    }

    #[test]
    fn failed_cells_do_not_abort() {
        let tmp = tempfile::tempdir().unwrap();
        let grid = Grid { a: vec![16.0], theta_a: vec![0.5], arc: vec![1.5], n: vec![60], ..Grid::default() };
        let cfg = ExperimentConfig {
            output_dir: Some(tmp.path().to_path_buf()),
            ..ExperimentConfig::new(ExperimentKind::Plant, grid)
        };
        let (m, _) = run_experiment(&cfg).unwrap();
        assert_eq!(m.cells[0].status, CellState::Failed);
        assert!(m.cells[0].error.as_deref().unwrap().contains("interpolant too large"));
    }
}
