//! Batch runs driven by a JSON configuration: solve, rh, rh0, verify and convergence.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr};
use crate::fredholm::{
    check_first_type, estimate_contraction, inner_log_slope, picard_solve, relative_error,
    residual_values, solve_main, solve_manufactured, solve_with_pole, Contraction, ProblemSpec,
    SolutionField, SolveInfo, SolverOptions,
};
use crate::mesh::{build_boundary_grid, build_disk_mesh, BoundaryGrid, DiskMesh};
use crate::operators::CoefficientPair;
use crate::rh::{solve_rh, solve_rh0, Defects, RhProblem, RhSolution};
use crate::verify::{verify_suite, VerifyOptions, VerifyReport};
use crate::Complex64 as C;

const MANUFACTURED: &str = "manufactured:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    Rh,
    Rh0,
    Verify,
    Convergence,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| config_err(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Picard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(rename = "R", default = "one")]
    pub radius: f64,
    #[serde(default)]
    pub a: [f64; 2],
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
    #[serde(default = "default_n_b")]
    pub n_b: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            radius: 1.0,
            a: [0.0, 0.0],
            n_r: default_n_r(),
            n_t: default_n_t(),
            grading: default_grading(),
            n_b: default_n_b(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative threshold on RH defects.
    pub solvability: f64,
    /// Stop when successive Picard iterates differ by less than this.
    pub picard: f64,
    pub cond_threshold: f64,
    pub cond_warn: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let o = SolverOptions::default();
        Tolerances { solvability: 1e-6, picard: 1e-12, cond_threshold: o.cond_threshold, cond_warn: o.cond_warn }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iter: usize,
    pub dense_threshold: usize,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverConfig {
            method: Method::Direct,
            max_iter: 500,
            dense_threshold: o.dense_threshold,
            gmres_tol: o.gmres_tol,
            gmres_restart: o.gmres_restart,
            gmres_max_iter: o.gmres_max_iter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub solution: String,
    pub report: String,
    pub convergence: String,
    /// Basis files are `<basis_prefix><i>.csv`.
    pub basis_prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            solution: "solution.csv".into(),
            report: "report.json".into(),
            convergence: "convergence.csv".into(),
            basis_prefix: "basis_".into(),
        }
    }
}

/// Contents of the configuration file. Omitted fields take their defaults, and the
/// report echoes the completed configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(rename = "A0", default = "zero_expr")]
    pub a0: String,
    #[serde(rename = "B0", default = "zero_expr")]
    pub b0: String,
    /// An expression, or `manufactured:<V_exact>`.
    #[serde(rename = "F", default = "zero_expr")]
    pub f: String,
    #[serde(rename = "Phi", default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    /// Replaces the sampled `mu = max|A0| + max|B0|` in contraction estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default)]
    pub k: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i32>,
    /// Boundary data as an expression in `z`, real on the circle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(default)]
    pub free_params: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub solver: SolverConfig,
    /// `[n_r, n_t]` per refinement level for convergence runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<[usize; 2]>>,
    /// Flip the sign of the area kernel (fault injection for verify runs).
    #[serde(default)]
    pub mutate_kernel_sign: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_n_r() -> usize {
    32
}
fn default_n_t() -> usize {
    64
}
fn default_grading() -> f64 {
    2.0
}
fn default_n_b() -> usize {
    1024
}
fn zero_expr() -> String {
    "0".into()
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_field(name: &str, text: &str) -> Result<Expr> {
    parse(text).map_err(|e| config_err(format!("{name}: {e}")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The mode from the command line wins only if the file does not name a different one.
    pub fn resolve_mode(&self, cli: Option<Mode>) -> Result<Mode> {
        match (cli, self.mode) {
            (Some(c), Some(f)) if c != f => Err(config_err(format!(
                "mode {c:?} on the command line disagrees with mode {f:?} in the configuration"
            ))),
            (Some(c), _) => Ok(c),
            (None, Some(f)) => Ok(f),
            (None, None) => Err(config_err("no mode given")),
        }
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        let m = &self.mesh;
        if !(m.radius > 0.0 && m.radius.is_finite()) {
            return Err(config_err(format!("mesh.R must be positive, got {}", m.radius)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(config_err(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if let Some(mu) = self.mu {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(config_err(format!("mu must be finite and >= 0, got {mu}")));
            }
        }
        if mode == Mode::Verify {
            return Ok(());
        }
        parse_field("A0", &self.a0)?;
        parse_field("B0", &self.b0)?;
        match self.f.strip_prefix(MANUFACTURED) {
            Some(v) => parse_field("F", v.trim())?,
            None => parse_field("F", &self.f)?,
        };
        if let Some(p) = &self.phi {
            parse_field("Phi", p)?;
        }
        if let Some(g) = &self.g {
            parse_field("g", g)?;
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(config_err(format!("nu must be positive, got {nu}")));
            }
        }
        if let Some(q) = self.q {
            if !(q > 2.0) {
                return Err(config_err(format!("q must exceed 2, got {q}")));
            }
        }
        match mode {
            Mode::Rh | Mode::Rh0 => {
                if m.a != [0.0, 0.0] {
                    return Err(config_err("rh runs need the singular point at the center, mesh.a = [0, 0]"));
                }
                if self.g.is_none() && !self.is_manufactured() {
                    return Err(config_err("rh runs need g (or a manufactured F to derive it from)"));
                }
                if mode == Mode::Rh && self.m.is_none() {
                    return Err(config_err("rh runs need m"));
                }
                if mode == Mode::Rh0 && (self.nu.is_none() || self.n.is_none()) {
                    return Err(config_err("rh0 runs need nu and n"));
                }
            }
            Mode::Solve => {
                if self.is_manufactured() && self.phi.is_some() {
                    return Err(config_err("Phi is derived from V_exact in manufactured runs; drop it"));
                }
                if self.is_manufactured() && self.k != 0 {
                    return Err(config_err("manufactured runs do not support k != 0"));
                }
                if self.solver.method == Method::Picard && (self.is_manufactured() || self.k != 0) {
                    return Err(config_err("picard runs need an explicit F and Phi and k = 0"));
                }
            }
            Mode::Convergence => {
                if !self.is_manufactured() {
                    return Err(config_err("convergence runs need F = \"manufactured:<V_exact>\""));
                }
                if self.levels().len() < 3 {
                    return Err(config_err("convergence runs need at least 3 levels"));
                }
            }
            Mode::Verify => {}
        }
        Ok(())
    }

    pub fn is_manufactured(&self) -> bool {
        self.f.starts_with(MANUFACTURED)
    }

    fn v_exact(&self) -> Result<Option<Expr>> {
        self.f
            .strip_prefix(MANUFACTURED)
            .map(|v| parse_field("F", v.trim()))
            .transpose()
    }

    pub fn levels(&self) -> Vec<[usize; 2]> {
        let m = &self.mesh;
        self.levels.clone().unwrap_or_else(|| {
            vec![[m.n_r / 2, m.n_t / 2], [m.n_r, m.n_t], [2 * m.n_r, 2 * m.n_t]]
        })
    }

    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            dense_threshold: self.solver.dense_threshold,
            cond_threshold: self.tolerances.cond_threshold,
            cond_warn: self.tolerances.cond_warn,
            gmres_tol: self.solver.gmres_tol,
            gmres_restart: self.solver.gmres_restart,
            gmres_max_iter: self.solver.gmres_max_iter,
            kernel_sign: if self.mutate_kernel_sign { -1.0 } else { 1.0 },
        }
    }

    fn a(&self) -> C {
        C::new(self.mesh.a[0], self.mesh.a[1])
    }

    fn build_mesh(&self, n_r: usize, n_t: usize) -> Result<Arc<DiskMesh>> {
        let m = &self.mesh;
        Ok(Arc::new(build_disk_mesh(m.radius, self.a(), n_r, n_t, m.grading)?))
    }

    fn grid(&self) -> Result<BoundaryGrid> {
        build_boundary_grid(C::new(0.0, 0.0), self.mesh.radius, self.mesh.n_b)
    }

    fn coeffs(&self, mesh: &DiskMesh) -> Result<CoefficientPair> {
        let mut c = CoefficientPair::from_exprs(mesh, parse_field("A0", &self.a0)?, parse_field("B0", &self.b0)?)?;
        if let Some(mu) = self.mu {
            c.mu = mu;
        }
        Ok(c)
    }

    /// `F` as an expression: the configured one, or the manufactured right-hand side.
    fn f_expr(&self) -> Result<Expr> {
        match self.v_exact()? {
            Some(ve) => Ok(crate::fredholm::manufactured_f(
                &ve,
                &parse_field("A0", &self.a0)?,
                &parse_field("B0", &self.b0)?,
            )),
            None => parse_field("F", &self.f),
        }
    }
}

/// Solver metadata for the report.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub provenance: crate::fredholm::Provenance,
    pub nodes: usize,
    #[serde(flatten)]
    pub info: SolveInfo,
}

impl SolverReport {
    fn of(v: &SolutionField) -> Self {
        SolverReport { provenance: v.provenance, nodes: v.mesh.len(), info: v.info.clone() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RhReport {
    pub m: i32,
    pub solvable: bool,
    pub defects: DefectReport,
    pub c0: f64,
    pub boundary_residual: f64,
    pub basis_count: usize,
    pub basis_residuals: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub independence: Option<f64>,
    /// For rh0 runs: `k = [nu]`, the index `n - k` of the problem for `W`, and `beta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substitution: Option<SubstitutionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DefectReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_condition: Option<f64>,
    /// `[Re a_j, Im a_j]`, `j = 0..k`.
    pub a: Vec<[f64; 2]>,
    pub real: Vec<f64>,
    pub max: f64,
    pub scale: f64,
    pub tolerance: f64,
}

impl DefectReport {
    fn of(d: &Defects, tol: f64) -> Self {
        DefectReport {
            mean_condition: d.mean_condition,
            a: d.a.iter().map(|a| [a.re, a.im]).collect(),
            real: d.real.clone(),
            max: d.real.iter().map(|x| x.abs()).fold(0.0, f64::max),
            scale: d.scale,
            tolerance: tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubstitutionReport {
    pub k: i32,
    pub m: i32,
    pub beta: f64,
    pub substituted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n_r: usize,
    pub n_t: usize,
    pub error: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub seconds: f64,
}

/// Everything a run reports. `timing` is the only entry that varies between
/// identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub status: Status,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<Contraction>,
    /// Max residual of the differential equation over interior rings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    /// Relative max error against `V_exact` on `0.1 R <= |z - a| <= 0.9 R`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_type_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_log_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rh: Option<RhReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Vec<ConvergenceRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyReport>,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Unsolvable,
    VerifyFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Unsolvable => 3,
            Status::VerifyFailed => 2,
        }
    }
}

/// Exit code for a failed run.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => 2,
        _ => 1,
    }
}

/// A finished run and the data files it produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub solution: Option<SolutionField>,
    pub basis: Vec<SolutionField>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code()
    }
}

fn empty_report(mode: Mode, config: &RunConfig) -> RunReport {
    RunReport {
        mode,
        status: Status::Ok,
        config: config.clone(),
        solver: None,
        contraction: None,
        residual: None,
        relative_error: None,
        first_type_defect: None,
        inner_log_slope: None,
        rh: None,
        convergence: None,
        verify: None,
        warnings: Vec::new(),
        timing: Timing { seconds: 0.0 },
    }
}

/// Run a validated configuration in memory.
pub fn run(config: &RunConfig, mode: Mode) -> Result<RunOutput> {
    config.validate(mode)?;
    let start = Instant::now();
    let mut out = match mode {
        Mode::Solve => run_solve(config)?,
        Mode::Rh | Mode::Rh0 => run_rh(config, mode)?,
        Mode::Convergence => run_convergence(config)?,
        Mode::Verify => run_verify(config)?,
    };
    out.report.timing.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn run_solve(cfg: &RunConfig) -> Result<RunOutput> {
    let mut report = empty_report(Mode::Solve, cfg);
    let mesh = cfg.build_mesh(cfg.mesh.n_r, cfg.mesh.n_t)?;
    let coeffs = cfg.coeffs(&mesh)?;
    let (spec, v) = if let Some(ve) = cfg.v_exact()? {
        let (spec, v) = solve_manufactured(
            mesh.clone(),
            &ve,
            parse_field("A0", &cfg.a0)?,
            parse_field("B0", &cfg.b0)?,
            cfg.beta,
            cfg.mesh.n_b,
            cfg.options(),
        )?;
        let hi = 0.9 * cfg.mesh.radius - (cfg.a()).norm();
        report.relative_error = Some(relative_error(&mesh, &v.values, &ve, 0.1 * cfg.mesh.radius, hi)?);
        (spec, v)
    } else {
        let phi = parse_field("Phi", cfg.phi.as_deref().unwrap_or("0"))?;
        let mut spec = ProblemSpec::new(mesh.clone(), coeffs.clone())
            .with_f_expr(cfg.f_expr()?)?
            .with_phi(phi)
            .with_beta(cfg.beta);
        spec.k = cfg.k;
        spec.nu = cfg.nu;
        spec.q = cfg.q;
        spec.options = cfg.options();
        let v = match cfg.solver.method {
            Method::Picard => picard_solve(&spec, cfg.solver.max_iter, cfg.tolerances.picard)?,
            Method::Direct if cfg.k != 0 => solve_with_pole(&spec)?,
            Method::Direct => solve_main(&spec)?,
        };
        if cfg.k == 0 {
            let grid = build_boundary_grid(mesh.center, mesh.radius, cfg.mesh.n_b)?;
            report.first_type_defect = Some(check_first_type(&v, &spec, &grid)?);
        }
        (spec, v)
    };
    if !coeffs.is_zero() {
        report.contraction = Some(estimate_contraction(&coeffs, &mesh, cfg.beta)?);
    }
    report.residual = Some(residual_values(&mesh, &v.values, &spec.coeffs, &spec.f.values)?.max);
    report.inner_log_slope = Some(inner_log_slope(&mesh, &v.values));
    report.warnings = v.info.warnings.clone();
    report.solver = Some(SolverReport::of(&v));
    Ok(RunOutput { report, solution: Some(v), basis: Vec::new() })
}

fn run_rh(cfg: &RunConfig, mode: Mode) -> Result<RunOutput> {
    let mut report = empty_report(mode, cfg);
    let mesh = cfg.build_mesh(cfg.mesh.n_r, cfg.mesh.n_t)?;
    let grid = cfg.grid()?;
    let coeffs = cfg.coeffs(&mesh)?;
    let f_expr = cfg.f_expr()?;
    let m_boundary = match mode {
        Mode::Rh0 => cfg.n.unwrap(),
        _ => cfg.m.unwrap(),
    };
    let g = match (&cfg.g, cfg.v_exact()?) {
        (Some(g), _) => RhProblem::g_from_expr(&grid, &parse_field("g", g)?)?,
        (None, Some(ve)) => grid
            .nodes
            .iter()
            .map(|t| Ok((t.powi(-m_boundary) * ve.eval(*t, C::new(0.0, 0.0))?).re))
            .collect::<Result<Vec<f64>>>()?,
        (None, None) => unreachable!("validated"),
    };
    let mut prob = RhProblem::new(m_boundary, mesh.clone(), grid, g, coeffs.clone())?.with_f_expr(f_expr)?;
    prob.free_params = cfg.free_params.clone();
    prob.beta = cfg.beta;
    prob.tol = cfg.tolerances.solvability;
    prob.options = cfg.options();

    let (sol, substitution): (RhSolution, _) = match mode {
        Mode::Rh0 => {
            let s = solve_rh0(cfg.nu.unwrap(), m_boundary, &prob)?;
            let sub = SubstitutionReport { k: s.k, m: s.m, beta: s.beta, substituted: s.substituted };
            (s.solution, Some(sub))
        }
        _ => (solve_rh(&prob)?, None),
    };
    let v = &sol.particular;
    report.residual = Some(residual_values(&mesh, &v.values, &coeffs, &prob.f.values)?.max);
    if let Some(ve) = cfg.v_exact()? {
        report.relative_error = Some(relative_error(&mesh, &v.values, &ve, 0.1 * cfg.mesh.radius, 0.9 * cfg.mesh.radius)?);
    }
    report.inner_log_slope = Some(inner_log_slope(&mesh, &v.values));
    report.solver = Some(SolverReport::of(v));
    report.warnings = sol.warnings.clone();
    report.status = if sol.solvable { Status::Ok } else { Status::Unsolvable };
    report.rh = Some(RhReport {
        m: sol.m,
        solvable: sol.solvable,
        defects: DefectReport::of(&sol.defects, prob.tol),
        c0: sol.c0,
        boundary_residual: sol.boundary_residual,
        basis_count: sol.homogeneous_basis.len(),
        basis_residuals: sol.basis_residuals.clone(),
        independence: sol.independence,
        substitution,
    });
    Ok(RunOutput { report, solution: Some(sol.particular.clone()), basis: sol.homogeneous_basis })
}

fn run_convergence(cfg: &RunConfig) -> Result<RunOutput> {
    let mut report = empty_report(Mode::Convergence, cfg);
    let ve = cfg.v_exact()?.expect("validated");
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut last = None;
    for [n_r, n_t] in cfg.levels() {
        let mesh = cfg.build_mesh(n_r, n_t)?;
        let (_, v) = solve_manufactured(
            mesh.clone(),
            &ve,
            parse_field("A0", &cfg.a0)?,
            parse_field("B0", &cfg.b0)?,
            cfg.beta,
            cfg.mesh.n_b,
            cfg.options(),
        )?;
        let hi = 0.9 * cfg.mesh.radius - cfg.a().norm();
        let error = relative_error(&mesh, &v.values, &ve, 0.1 * cfg.mesh.radius, hi)?;
        let ratio = rows.last().map(|r| r.error / error);
        report.warnings.extend(v.info.warnings.iter().cloned());
        rows.push(ConvergenceRow { n_r, n_t, error, ratio });
        last = Some(v);
    }
    report.relative_error = rows.last().map(|r| r.error);
    report.convergence = Some(rows);
    report.solver = last.as_ref().map(SolverReport::of);
    Ok(RunOutput { report, solution: last, basis: Vec::new() })
}

fn run_verify(cfg: &RunConfig) -> Result<RunOutput> {
    let mut report = empty_report(Mode::Verify, cfg);
    let v = verify_suite(&VerifyOptions { mutate_kernel_sign: cfg.mutate_kernel_sign })?;
    if !v.all_passed() {
        report.status = Status::VerifyFailed;
    }
    report.verify = Some(v);
    Ok(RunOutput { report, solution: None, basis: Vec::new() })
}

/// One line per node: `x,y,r,re_v,im_v` with `r = |z - a|`.
pub fn solution_csv(v: &SolutionField) -> String {
    let mut s = String::from("x,y,r,re_v,im_v\n");
    for (j, (z, val)) in v.mesh.nodes.iter().zip(&v.values).enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", z.re, z.im, v.mesh.dist_to_a(j), val.re, val.im);
    }
    s
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("n_r,n_t,error,ratio\n");
    for r in rows {
        let ratio = r.ratio.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.n_r, r.n_t, r.error, ratio);
    }
    s
}

/// Write the report and data files into `dir`; returns the paths written.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let names = &out.report.config.output;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    if let Some(v) = &out.solution {
        put(&names.solution, solution_csv(v))?;
    }
    for (i, b) in out.basis.iter().enumerate() {
        put(&format!("{}{i}.csv", names.basis_prefix), solution_csv(b))?;
    }
    if let Some(rows) = &out.report.convergence {
        put(&names.convergence, convergence_csv(rows))?;
    }
    put(&names.report, report_json(&out.report) + "\n")?;
    Ok(written)
}

pub fn report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report is serializable")
}

/// Report text without `timing`, for comparing runs.
pub fn report_fingerprint(report: &RunReport) -> String {
    let mut v = serde_json::to_value(report).expect("report is serializable");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
    }
    v.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_json(text).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = cfg("{}");
        assert_eq!(c.mesh.n_r, 32);
        assert_eq!(c.mesh.n_b, 1024);
        assert_eq!(c.beta, 0.5);
        assert_eq!(c.solver.method, Method::Direct);
        assert_eq!(c.levels(), vec![[16, 32], [32, 64], [64, 128]]);
    }

    #[test]
    fn mu_override_replaces_the_sampled_value() {
        let c = cfg(r#"{"A0": "0.3", "B0": "0.2i", "mu": 0.9, "mesh": {"n_r": 4, "n_t": 8}}"#);
        let mesh = c.build_mesh(4, 8).unwrap();
        assert_eq!(c.coeffs(&mesh).unwrap().mu, 0.9);
        assert!(cfg(r#"{"mu": -1}"#).validate(Mode::Solve).is_err());
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_config_errors() {
        assert!(matches!(RunConfig::from_json(r#"{"mseh": {}}"#), Err(Error::Config(_))));
        let c = cfg(r#"{"beta": 1.5}"#);
        assert!(matches!(c.validate(Mode::Solve), Err(Error::Config(_))));
        let c = cfg(r#"{"A0": "z^-1"}"#);
        assert!(matches!(c.validate(Mode::Solve), Err(Error::Config(_))));
        let c = cfg(r#"{"mesh": {"R": -1}}"#);
        assert!(c.validate(Mode::Solve).is_err());
        let c = cfg(r#"{"g": "1"}"#);
        assert!(c.validate(Mode::Rh).is_err(), "m missing");
        let c = cfg(r#"{"m": 0, "g": "1", "mesh": {"a": [0.1, 0]}}"#);
        assert!(c.validate(Mode::Rh).is_err(), "off-center singular point");
    }

    #[test]
    fn mode_resolution() {
        let c = cfg(r#"{"mode": "rh"}"#);
        assert_eq!(c.resolve_mode(None).unwrap(), Mode::Rh);
        assert_eq!(c.resolve_mode(Some(Mode::Rh)).unwrap(), Mode::Rh);
        assert!(c.resolve_mode(Some(Mode::Solve)).is_err());
        assert!(cfg("{}").resolve_mode(None).is_err());
    }

    #[test]
    fn trivial_solve_and_echo_round_trip() {
        let c = cfg(r#"{"mesh": {"n_r": 8, "n_t": 16, "n_b": 64}, "Phi": "1"}"#);
        let out = run(&c, Mode::Solve).unwrap();
        let v = out.solution.as_ref().unwrap();
        for (x, z) in v.values.iter().zip(&v.mesh.nodes) {
            assert!((x - z).norm() <= 1e-12);
        }
        assert!(out.report.residual.unwrap() <= 1e-12);
        let echo = serde_json::to_string(&out.report.config).unwrap();
        let again = run(&RunConfig::from_json(&echo).unwrap(), Mode::Solve).unwrap();
        assert_eq!(report_fingerprint(&out.report), report_fingerprint(&again.report));
    }

    #[test]
    fn rh_mean_one_is_unsolvable() {
        let c = cfg(r#"{"mesh": {"n_r": 8, "n_t": 16, "n_b": 64}, "m": 0, "g": "1"}"#);
        let out = run(&c, Mode::Rh).unwrap();
        assert_eq!(out.exit_code(), 3);
        let d = &out.report.rh.as_ref().unwrap().defects;
        assert!((d.mean_condition.unwrap() - 1.0).abs() < 1e-14);
        assert!((d.real[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_layout() {
        let c = cfg(r#"{"mesh": {"n_r": 4, "n_t": 8, "n_b": 16}, "Phi": "1"}"#);
        let out = run(&c, Mode::Solve).unwrap();
        let text = solution_csv(out.solution.as_ref().unwrap());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,r,re_v,im_v"));
        assert_eq!(lines.count(), 32);
        let rows = [
            ConvergenceRow { n_r: 8, n_t: 16, error: 0.1, ratio: None },
            ConvergenceRow { n_r: 16, n_t: 32, error: 0.05, ratio: Some(2.0) },
        ];
        assert_eq!(convergence_csv(&rows), "n_r,n_t,error,ratio\n8,16,0.1,\n16,32,0.05,2\n");
    }
}
