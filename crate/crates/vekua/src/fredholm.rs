//! The integral equation `V + P_{G,a} V = T_{G,a} F + (z - a) Phi` and the
//! diagnostics built around it.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{arg_half_open, build, Expr, Var};
use crate::linsolve::{gmres, join, split, DenseSolver, RealLinearOperator};
use crate::mesh::{BoundaryGrid, DiskMesh};
use crate::operators::{
    cauchy_boundary_pinned, t_area, AreaOperator, CoefficientPair, FieldOnMesh,
};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Knobs shared by every linear solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolverOptions {
    /// Largest node count solved by dense LU; larger systems use GMRES.
    pub dense_threshold: usize,
    /// Condition estimates above this are reported as a discretization failure.
    pub cond_threshold: f64,
    /// Condition estimates above this add a warning.
    pub cond_warn: f64,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    /// Multiplies the area kernel; `-1` is the fault injected by the mutation check.
    pub kernel_sign: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dense_threshold: 4096,
            cond_threshold: 1e14,
            cond_warn: 1e10,
            gmres_tol: 1e-12,
            gmres_restart: 100,
            gmres_max_iter: 3000,
            kernel_sign: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Direct,
    Gmres,
    Picard,
    Rh,
}

/// How a solution was obtained.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveInfo {
    pub iterations: usize,
    pub condition_estimate: Option<f64>,
    /// `|(I + P) V - rhs| / |rhs|` of the discrete system, max-norm.
    pub discrete_residual: f64,
    pub contraction_ratio: Option<f64>,
    pub warnings: Vec<String>,
}

/// Solution samples on the mesh nodes.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub mesh: Arc<DiskMesh>,
    pub values: Vec<C>,
    /// `V = O(|z - a|^{1 - beta})`.
    pub beta: f64,
    pub provenance: Provenance,
    pub info: SolveInfo,
}

/// Data of the main equation.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub mesh: Arc<DiskMesh>,
    pub coeffs: CoefficientPair,
    pub f: FieldOnMesh,
    /// Expression for `F`, when available; used for off-grid evaluation.
    pub f_expr: Option<Expr>,
    pub phi: Expr,
    pub beta: f64,
    /// Pole/zero order for the substitution `V = (z - a)^k W`.
    pub k: i32,
    pub nu: Option<f64>,
    /// Integrability exponent; stored for bookkeeping only.
    pub q: Option<f64>,
    /// Refuse to solve outside the class window instead of warning.
    pub strict_class: bool,
    pub options: SolverOptions,
}

impl ProblemSpec {
    /// A spec with `F = 0`, `Phi = 0`, `beta = 1/2`.
    pub fn new(mesh: Arc<DiskMesh>, coeffs: CoefficientPair) -> Self {
        let f = FieldOnMesh::zeros(mesh.clone());
        ProblemSpec {
            mesh,
            coeffs,
            f,
            f_expr: Some(Expr::zero()),
            phi: Expr::zero(),
            beta: 0.5,
            k: 0,
            nu: None,
            q: None,
            strict_class: false,
            options: SolverOptions::default(),
        }
    }

    pub fn with_f_expr(mut self, f: Expr) -> Result<Self> {
        self.f = FieldOnMesh::from_expr(self.mesh.clone(), &f)?;
        self.f_expr = Some(f);
        Ok(self)
    }

    pub fn with_phi(mut self, phi: Expr) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Checks the spec and returns warnings about the class window.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.coeffs.a0_nodes.len() != self.mesh.len() || self.f.values.len() != self.mesh.len() {
            return Err(Error::InvalidInput("coefficient or F samples do not match the mesh".into()));
        }
        let mut warnings = self.mesh.warnings.clone();
        let lower = (1.0 - 8.0 * self.coeffs.mu).max(0.0);
        let upper = self.q.map(|q| 2.0 / q).unwrap_or(1.0);
        if !(self.beta > lower && self.beta < upper) {
            let msg = format!(
                "beta = {} is outside the class window ({lower}, {upper}) for mu = {}",
                self.beta, self.coeffs.mu
            );
            if self.strict_class {
                return Err(Error::InvalidInput(msg));
            }
            warnings.push(msg);
        }
        Ok(warnings)
    }

    fn scaled_coeffs(&self) -> (Vec<C>, Vec<C>) {
        let m = &self.mesh;
        let s: Vec<f64> = (0..m.len()).map(|j| 1.0 / m.dist_to_a(j)).collect();
        let sa = self.coeffs.a0_nodes.iter().zip(&s).map(|(a, s)| a * s).collect();
        let sb = self.coeffs.b0_nodes.iter().zip(&s).map(|(b, s)| b * s).collect();
        (sa, sb)
    }

    fn area(&self) -> AreaOperator {
        AreaOperator::pinned(self.mesh.clone(), self.options.kernel_sign)
    }

    /// `T_{G,a} F + (z - a) Phi` at the nodes.
    pub fn rhs(&self, area: &AreaOperator) -> Result<Vec<C>> {
        let tf = area.apply(&self.f.values);
        let m = &self.mesh;
        let mut out = Vec::with_capacity(m.len());
        for (z, t) in m.nodes.iter().zip(tf) {
            out.push(t + (z - m.a) * self.phi.eval(*z, m.a)?);
        }
        Ok(out)
    }
}

fn max_norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Solve `op V = rhs` for several right-hand sides with one factorization.
pub(crate) fn solve_system(
    op: &RealLinearOperator<'_>,
    rhss: &[Vec<C>],
    opts: &SolverOptions,
) -> Result<(Vec<Vec<C>>, SolveInfo, Provenance)> {
    let n = op.len();
    let mut info = SolveInfo::default();
    let mut sols = Vec::with_capacity(rhss.len());
    let prov;
    if n <= opts.dense_threshold {
        prov = Provenance::Direct;
        let lu = DenseSolver::factor(op.assemble())?;
        let cond = lu.condition_estimate();
        info.condition_estimate = Some(cond);
        if !(cond <= opts.cond_threshold) {
            return Err(Error::Numerical(format!(
                "system is singular to working precision (condition estimate {cond:.3e} > {:.1e}); \
                 the continuous problem is uniquely solvable, so this is a discretization failure",
                opts.cond_threshold
            )));
        }
        if cond > opts.cond_warn {
            info.warnings.push(format!("ill-conditioned system: condition estimate {cond:.3e}"));
        }
        for rhs in rhss {
            sols.push(lu.solve(rhs)?);
        }
    } else {
        prov = Provenance::Gmres;
        for rhs in rhss {
            let apply = |x: &[f64]| split(&op.apply(&join(x)));
            let (x, it) = gmres(apply, &split(rhs), opts.gmres_tol, opts.gmres_restart, opts.gmres_max_iter);
            info.iterations = info.iterations.max(it.iterations);
            if !it.converged {
                return Err(Error::Numerical(format!(
                    "GMRES stalled after {} iterations at relative residual {:.3e}",
                    it.iterations, it.relative_residual
                )));
            }
            sols.push(join(&x));
        }
    }
    let mut worst: f64 = 0.0;
    for (v, rhs) in sols.iter().zip(rhss) {
        let av = op.apply(v);
        let diff: Vec<C> = av.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let scale = max_norm(rhs).max(max_norm(v)).max(f64::MIN_POSITIVE);
        worst = worst.max(max_norm(&diff) / scale);
    }
    info.discrete_residual = worst;
    Ok((sols, info, prov))
}

/// Direct (or GMRES, above the dense threshold) solution of the main equation.
pub fn solve_main(spec: &ProblemSpec) -> Result<SolutionField> {
    let warnings = spec.validate()?;
    let area = spec.area();
    let rhs = spec.rhs(&area)?;
    let (sa, sb) = spec.scaled_coeffs();
    let op = RealLinearOperator { area: &area, sa, sb };
    let (mut sols, mut info, prov) = solve_system(&op, &[rhs], &spec.options)?;
    info.warnings.extend(warnings);
    Ok(SolutionField {
        mesh: spec.mesh.clone(),
        values: sols.pop().unwrap(),
        beta: spec.beta,
        provenance: prov,
        info,
    })
}

/// Fixed-point iteration `V <- rhs - P V` from `V_0 = rhs`.
pub fn picard_solve(spec: &ProblemSpec, max_iter: usize, tol: f64) -> Result<SolutionField> {
    let mut warnings = spec.validate()?;
    let area = spec.area();
    let rhs = spec.rhs(&area)?;
    let (sa, sb) = spec.scaled_coeffs();
    let op = RealLinearOperator { area: &area, sa, sb };

    if !spec.coeffs.is_zero() {
        let est = estimate_contraction(&spec.coeffs, &spec.mesh, spec.beta)?;
        if est.product >= 1.0 {
            warnings.push(format!(
                "contraction estimate mu*M_beta = {:.3} >= 1; iteration may diverge",
                est.product
            ));
        }
    }

    let mut v = rhs.clone();
    let mut prev_diff = f64::INFINITY;
    let mut growth = 0;
    let mut ratio = None;
    let mut iterations = 0;
    while iterations < max_iter {
        let pv = op.apply_compact(&v);
        let next: Vec<C> = rhs.iter().zip(&pv).map(|(r, p)| r - p).collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        iterations += 1;
        if prev_diff.is_finite() && prev_diff > 0.0 {
            ratio = Some(diff / prev_diff);
        }
        growth = if diff > prev_diff { growth + 1 } else { 0 };
        v = next;
        if !diff.is_finite() || growth >= 5 {
            return Err(Error::Numerical(format!(
                "Picard iteration diverges: successive differences grew for {growth} steps (last {diff:.3e})"
            )));
        }
        if diff <= tol {
            break;
        }
        prev_diff = diff;
    }
    let av = op.apply(&v);
    let res: Vec<C> = av.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let info = SolveInfo {
        iterations,
        condition_estimate: None,
        discrete_residual: max_norm(&res) / max_norm(&rhs).max(f64::MIN_POSITIVE),
        contraction_ratio: ratio,
        warnings,
    };
    Ok(SolutionField {
        mesh: spec.mesh.clone(),
        values: v,
        beta: spec.beta,
        provenance: Provenance::Picard,
        info,
    })
}

/// `mu`, the mapping constant `M_beta(G)` and their product.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Contraction {
    pub mu: f64,
    pub m_beta: f64,
    pub product: f64,
}

/// Quadrature of `(|z-a|^beta / pi) * area integral of 1/(|zeta-a|^{1+beta} |zeta-z|)`.
///
/// Cells near `z` or `a` are subdivided 8 x 8; the innermost ring is subdivided with
/// quadratic radial grading.
pub fn m_beta_at(mesh: &DiskMesh, beta: f64, z: C) -> f64 {
    const SUB: usize = 8;
    let a = mesh.a;
    let dth = 2.0 * PI / mesh.n_t as f64;
    let mut total = 0.0;
    for i in 0..mesh.n_r {
        let (r0, r1) = (mesh.breaks[i], mesh.breaks[i + 1]);
        let size = mesh.cell_radius[mesh.index(i, 0)].max(r1 - r0).max(mesh.ring_radii[i] * dth);
        for k in 0..mesh.n_t {
            let j = mesh.index(i, k);
            let zc = mesh.nodes[j];
            let near_z = (zc - z).norm() < 3.0 * size;
            let near_a = (zc - a).norm() < 3.0 * size || (i == 0 && mesh.a_is_center());
            if !(near_z || near_a) {
                total += mesh.weights[j] / ((zc - a).norm().powf(1.0 + beta) * (zc - z).norm());
                continue;
            }
            let grade = if near_a { 2.0 } else { 1.0 };
            let rb: Vec<f64> = (0..=SUB)
                .map(|s| r0 + (r1 - r0) * (s as f64 / SUB as f64).powf(grade))
                .collect();
            let t0 = k as f64 * dth;
            let sdt = dth / SUB as f64;
            for p in 0..SUB {
                let rm = 0.5 * (rb[p] + rb[p + 1]);
                let w = 0.5 * (rb[p + 1] * rb[p + 1] - rb[p] * rb[p]) * sdt;
                for q in 0..SUB {
                    let zeta = mesh.center + C::from_polar(rm, t0 + (q as f64 + 0.5) * sdt);
                    let da = (zeta - a).norm().powf(1.0 + beta);
                    let dz = (zeta - z).norm();
                    total += if dz < 1e-14 * mesh.radius {
                        2.0 * PI * (w / PI).sqrt() / da
                    } else {
                        w / (da * dz)
                    };
                }
            }
        }
    }
    (z - a).norm().powf(beta) / PI * total
}

/// `M_beta(G)` as the maximum of [`m_beta_at`] over the nodes. When `a` is the disk
/// center the mesh is rotationally symmetric and one node per ring suffices.
pub fn estimate_m_beta(mesh: &DiskMesh, beta: f64) -> f64 {
    let targets: Vec<C> = if mesh.a_is_center() {
        (0..mesh.n_r).map(|i| mesh.nodes[mesh.index(i, 0)]).collect()
    } else {
        mesh.nodes.clone()
    };
    targets
        .par_iter()
        .map(|&z| m_beta_at(mesh, beta, z))
        .reduce(|| 0.0, f64::max)
}

pub fn estimate_contraction(coeffs: &CoefficientPair, mesh: &DiskMesh, beta: f64) -> Result<Contraction> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    let mu = coeffs.mu;
    if mu == 0.0 {
        return Ok(Contraction { mu, m_beta: estimate_m_beta(mesh, beta), product: 0.0 });
    }
    let m_beta = estimate_m_beta(mesh, beta);
    Ok(Contraction { mu, m_beta, product: mu * m_beta })
}

/// Maps a solution `W` of the transformed problem back to `V = (z - a)^k W`.
#[derive(Debug, Clone, Copy)]
pub struct BackMap {
    pub k: i32,
}

impl BackMap {
    pub fn apply_values(&self, mesh: &DiskMesh, w: &[C]) -> Vec<C> {
        mesh.nodes
            .iter()
            .zip(w)
            .map(|(z, w)| w * (z - mesh.a).powi(self.k))
            .collect()
    }

    pub fn apply(&self, w: &SolutionField) -> SolutionField {
        let mut v = w.clone();
        v.values = self.apply_values(&w.mesh, &w.values);
        v.beta = w.beta - self.k as f64;
        v
    }
}

/// `exp(-2 i k phi)` as an expression.
pub fn phase_factor(k: i32) -> Expr {
    build::call(
        crate::expr::Func::Exp,
        build::mul(Expr::num(0.0, -2.0 * k as f64), Expr::Var(Var::Phi)),
    )
}

/// `(z - a)^{-k}` as an expression.
pub fn inverse_power(k: i32) -> Expr {
    let w = Expr::Var(Var::W);
    if k >= 0 {
        build::div(Expr::one(), build::pow(w, k as u32))
    } else {
        build::pow(w, (-k) as u32)
    }
}

/// The substitution `V = (z - a)^k W`: `B -> B exp(-2ik phi)`, `F -> (z - a)^{-k} F`.
pub fn transform_pole(spec: &ProblemSpec, k: i32) -> Result<(ProblemSpec, BackMap)> {
    let mut out = spec.clone();
    out.k = 0;
    if k == 0 {
        return Ok((out, BackMap { k: 0 }));
    }
    let m = &spec.mesh;
    let phases: Vec<C> = m
        .nodes
        .iter()
        .map(|z| C::from_polar(1.0, -2.0 * k as f64 * arg_half_open(z - m.a)))
        .collect();
    let b0_nodes: Vec<C> = spec.coeffs.b0_nodes.iter().zip(&phases).map(|(b, p)| b * p).collect();
    let mut coeffs = CoefficientPair::from_samples(spec.coeffs.a0_nodes.clone(), b0_nodes)?
        .with_mu(spec.coeffs.mu);
    coeffs.a0 = spec.coeffs.a0.clone();
    coeffs.b0 = spec.coeffs.b0.clone().map(|b| build::mul(b, phase_factor(k)));
    out.coeffs = coeffs;
    let f_values: Vec<C> = m
        .nodes
        .iter()
        .zip(&spec.f.values)
        .map(|(z, f)| f * (z - m.a).powi(-k))
        .collect();
    out.f = FieldOnMesh::new(m.clone(), f_values)?;
    out.f_expr = spec.f_expr.clone().map(|f| build::mul(f, inverse_power(k)));
    Ok((out, BackMap { k }))
}

/// Solve through the substitution when `spec.k != 0`.
pub fn solve_with_pole(spec: &ProblemSpec) -> Result<SolutionField> {
    let (w_spec, back) = transform_pole(spec, spec.k)?;
    let w = solve_main(&w_spec)?;
    Ok(back.apply(&w))
}

// ---------------------------------------------------------------------------
// finite differences on the polar grid

fn check_fd_grid(mesh: &DiskMesh) -> Result<()> {
    if mesh.n_r < 4 || mesh.n_t < 8 {
        return Err(Error::InvalidInput(format!(
            "mesh too coarse for finite differences: n_r = {}, n_t = {}",
            mesh.n_r, mesh.n_t
        )));
    }
    Ok(())
}

/// `d/dzbar` of node samples: `(e^{i theta}/2)(d_r + (i/r) d_theta)` with a
/// three-point non-uniform stencil in `r` (one-sided on the first and last ring) and a
/// spectral derivative in `theta`.
pub fn polar_dbar(mesh: &DiskMesh, v: &[C]) -> Result<Vec<C>> {
    check_fd_grid(mesh)?;
    let (nr, nt) = (mesh.n_r, mesh.n_t);
    let r = &mesh.ring_radii;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let mut dth = vec![ZERO; nr * nt];
    for i in 0..nr {
        let mut buf: Vec<C> = v[i * nt..(i + 1) * nt].to_vec();
        fwd.process(&mut buf);
        for (p, b) in buf.iter_mut().enumerate() {
            let freq = if p < nt / 2 {
                p as f64
            } else if p == nt / 2 && nt % 2 == 0 {
                0.0
            } else {
                p as f64 - nt as f64
            };
            *b *= C::new(0.0, freq / nt as f64);
        }
        inv.process(&mut buf);
        dth[i * nt..(i + 1) * nt].copy_from_slice(&buf);
    }

    let mut out = vec![ZERO; nr * nt];
    for i in 0..nr {
        let (i0, i1, i2) = if i == 0 {
            (0, 1, 2)
        } else if i == nr - 1 {
            (nr - 3, nr - 2, nr - 1)
        } else {
            (i - 1, i, i + 1)
        };
        let w = lagrange_derivative_weights([r[i0], r[i1], r[i2]], r[i]);
        for k in 0..nt {
            let dr = w[0] * v[i0 * nt + k] + w[1] * v[i1 * nt + k] + w[2] * v[i2 * nt + k];
            let th = mesh.angles[k];
            let j = i * nt + k;
            out[j] = 0.5 * C::from_polar(1.0, th) * (dr + C::new(0.0, 1.0 / r[i]) * dth[j]);
        }
    }
    Ok(out)
}

/// Weights of the derivative at `x` of the quadratic through three abscissae.
fn lagrange_derivative_weights(x: [f64; 3], at: f64) -> [f64; 3] {
    let [x0, x1, x2] = x;
    [
        ((at - x1) + (at - x2)) / ((x0 - x1) * (x0 - x2)),
        ((at - x0) + (at - x2)) / ((x1 - x0) * (x1 - x2)),
        ((at - x0) + (at - x1)) / ((x2 - x0) * (x2 - x1)),
    ]
}

fn lagrange_weights(x: [f64; 3], at: f64) -> [f64; 3] {
    let [x0, x1, x2] = x;
    [
        (at - x1) * (at - x2) / ((x0 - x1) * (x0 - x2)),
        (at - x0) * (at - x2) / ((x1 - x0) * (x1 - x2)),
        (at - x0) * (at - x1) / ((x2 - x0) * (x2 - x1)),
    ]
}

/// Rings used for reported maxima: all but the innermost and outermost.
fn interior_ring(mesh: &DiskMesh, j: usize) -> bool {
    let i = mesh.ring_of(j);
    i > 0 && i + 1 < mesh.n_r
}

/// Pointwise residual of `dV/dzbar + A V + B conj(V) - F`.
#[derive(Debug, Clone)]
pub struct Residual {
    /// Max over interior rings.
    pub max: f64,
    pub pointwise: Vec<C>,
}

pub fn residual(v: &SolutionField, spec: &ProblemSpec) -> Result<Residual> {
    residual_values(&spec.mesh, &v.values, &spec.coeffs, &spec.f.values)
}

pub fn residual_values(mesh: &DiskMesh, v: &[C], coeffs: &CoefficientPair, f: &[C]) -> Result<Residual> {
    let d = polar_dbar(mesh, v)?;
    let pointwise: Vec<C> = (0..mesh.len())
        .map(|j| {
            let s = 1.0 / mesh.dist_to_a(j);
            d[j] + (coeffs.a0_nodes[j] * v[j] + coeffs.b0_nodes[j] * v[j].conj()) * s - f[j]
        })
        .collect();
    let max = (0..mesh.len())
        .filter(|&j| interior_ring(mesh, j))
        .map(|j| pointwise[j].norm())
        .fold(0.0, f64::max);
    Ok(Residual { max, pointwise })
}

/// Values on the boundary circle: quadratic extrapolation in `r` from the three
/// outermost rings, then trigonometric interpolation to the grid angles.
pub fn extrapolate_to_boundary(mesh: &DiskMesh, v: &[C], grid: &BoundaryGrid) -> Vec<C> {
    let (nr, nt) = (mesh.n_r, mesh.n_t);
    let rr = [mesh.ring_radii[nr - 3], mesh.ring_radii[nr - 2], mesh.ring_radii[nr - 1]];
    let w = lagrange_weights(rr, mesh.radius);
    let edge: Vec<C> = (0..nt)
        .map(|k| {
            w[0] * v[(nr - 3) * nt + k] + w[1] * v[(nr - 2) * nt + k] + w[2] * v[(nr - 1) * nt + k]
        })
        .collect();
    let half = nt / 2;
    let coef: Vec<(f64, C)> = (0..nt)
        .map(|p| {
            let freq = p as f64 - half as f64;
            let s: C = edge
                .iter()
                .zip(&mesh.angles)
                .map(|(e, th)| e * C::from_polar(1.0, -freq * th))
                .sum();
            let scale = if p == 0 && nt % 2 == 0 { 0.5 } else { 1.0 };
            (freq, s * (scale / nt as f64))
        })
        .collect();
    grid.angles
        .iter()
        .map(|&th| {
            let mut s: C = coef.iter().map(|(f, c)| c * C::from_polar(1.0, f * th)).sum();
            if nt % 2 == 0 {
                s += coef[0].1 * C::from_polar(1.0, half as f64 * th);
            }
            s
        })
        .collect()
}

/// `max |V - (-P_{G,a} V + K_{Γ,a} V + T_{G,a} F)|` over nodes with `|z - c| <= 0.8 R`.
pub fn check_first_type(v: &SolutionField, spec: &ProblemSpec, grid: &BoundaryGrid) -> Result<f64> {
    let m = &spec.mesh;
    let area = spec.area();
    let (sa, sb) = spec.scaled_coeffs();
    let op = RealLinearOperator { area: &area, sa, sb };
    let pv = op.apply_compact(&v.values);
    let tf = area.apply(&spec.f.values);
    let checks: Vec<usize> = (0..m.len())
        .filter(|&j| (m.nodes[j] - m.center).norm() <= 0.8 * m.radius)
        .collect();
    let pts: Vec<C> = checks.iter().map(|&j| m.nodes[j]).collect();
    let edge = extrapolate_to_boundary(m, &v.values, grid);
    let kv = cauchy_boundary_pinned(grid, &edge, &pts, m.a)?;
    Ok(checks
        .iter()
        .zip(kv)
        .map(|(&j, k)| (v.values[j] - (k - pv[j] + tf[j])).norm())
        .fold(0.0, f64::max))
}

/// Output of [`similarity_factor`].
#[derive(Debug, Clone)]
pub struct Similarity {
    pub omega: Vec<C>,
    /// `Phi = V exp(omega)`, holomorphic for solutions of the homogeneous equation.
    pub phi: Vec<C>,
    /// Max of `|dPhi/dzbar|` over unmasked nodes of the interior rings.
    pub holo_defect: f64,
    pub masked: usize,
    pub reliable: bool,
}

/// `omega = T_G(V*/V)`, `Phi = V exp(omega)`; nodes with `|V| < 1e-10 max|V|` are masked.
pub fn similarity_factor(mesh: &DiskMesh, v: &[C], coeffs: &CoefficientPair) -> Result<Similarity> {
    let vmax = max_norm(v);
    let mask: Vec<bool> = v.iter().map(|x| x.norm() < 1e-10 * vmax || vmax == 0.0).collect();
    let star = crate::operators::apply_star(mesh, v, coeffs);
    let hat: Vec<C> = (0..mesh.len())
        .map(|j| if mask[j] { ZERO } else { star[j] / v[j] })
        .collect();
    let omega = if coeffs.is_zero() { vec![ZERO; mesh.len()] } else { t_area(mesh, &hat, &mesh.nodes) };
    let phi: Vec<C> = v.iter().zip(&omega).map(|(v, w)| v * w.exp()).collect();
    let d = polar_dbar(mesh, &phi)?;
    let masked = mask.iter().filter(|m| **m).count();
    let holo_defect = (0..mesh.len())
        .filter(|&j| !mask[j] && interior_ring(mesh, j))
        .map(|j| d[j].norm())
        .fold(0.0, f64::max);
    Ok(Similarity {
        omega,
        phi,
        holo_defect,
        masked,
        reliable: (masked as f64) <= 0.2 * mesh.len() as f64,
    })
}

/// Least-squares slope of `log |V|` against `log |z - a|` over the three innermost
/// rings, using the ring means of `|V|`.
pub fn inner_log_slope(mesh: &DiskMesh, v: &[C]) -> f64 {
    let nt = mesh.n_t;
    let pts: Vec<(f64, f64)> = (0..3)
        .map(|i| {
            let mean = v[i * nt..(i + 1) * nt].iter().map(|x| x.norm()).sum::<f64>() / nt as f64;
            (mesh.ring_radii[i].ln(), mean.ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Off-grid values of a main-equation solution from its defining equation
/// `V = known - (K h + L conj(h))` with `h = V* - F` taken at the nodes.
pub fn evaluate_at(v: &SolutionField, spec: &ProblemSpec, targets: &[C]) -> Result<Vec<C>> {
    let m = &spec.mesh;
    let area = spec.area();
    let (sa, sb) = spec.scaled_coeffs();
    let op = RealLinearOperator { area: &area, sa, sb };
    let star = op.star(&v.values);
    let h: Vec<C> = star.iter().zip(&spec.f.values).map(|(s, f)| s - f).collect();
    let kh = area.apply_product(&h, targets);
    targets
        .iter()
        .zip(kh)
        .map(|(&t, kh)| Ok((t - m.a) * spec.phi.eval(t, m.a)? - kh))
        .collect()
}

/// Manufactured right-hand side `F = dV/dzbar + (A0 V + B0 conj V)/|z - a|`.
pub fn manufactured_f(v_exact: &Expr, a0: &Expr, b0: &Expr) -> Expr {
    use build::*;
    let star = add(mul(a0.clone(), v_exact.clone()), mul(b0.clone(), conj(v_exact.clone())));
    add(v_exact.dbar(), div(star, Expr::Var(Var::AbsW)))
}

/// `K_{Γ,a} V_e` at the nodes, which equals `(z - a) Phi` for the manufactured solution.
pub fn manufactured_boundary_term(mesh: &DiskMesh, v_exact: &Expr, grid: &BoundaryGrid) -> Result<Vec<C>> {
    let h = v_exact.eval_many(&grid.nodes, mesh.a)?;
    cauchy_boundary_pinned(grid, &h, &mesh.nodes, mesh.a)
}

/// Solve the manufactured problem: `F` from `v_exact`, `(z - a) Phi = K_{Γ,a} V_e`.
pub fn solve_manufactured(
    mesh: Arc<DiskMesh>,
    v_exact: &Expr,
    a0: Expr,
    b0: Expr,
    beta: f64,
    n_b: usize,
    options: SolverOptions,
) -> Result<(ProblemSpec, SolutionField)> {
    let grid = crate::mesh::build_boundary_grid(mesh.center, mesh.radius, n_b)?;
    let f = manufactured_f(v_exact, &a0, &b0);
    let coeffs = CoefficientPair::from_exprs(&mesh, a0, b0)?;
    let mut spec = ProblemSpec::new(mesh.clone(), coeffs).with_f_expr(f)?.with_beta(beta);
    spec.options = options;
    let warnings = spec.validate()?;
    let area = spec.area();
    let tf = area.apply(&spec.f.values);
    let kv = manufactured_boundary_term(&mesh, v_exact, &grid)?;
    let rhs: Vec<C> = tf.iter().zip(&kv).map(|(a, b)| a + b).collect();
    let (sa, sb) = spec.scaled_coeffs();
    let op = RealLinearOperator { area: &area, sa, sb };
    let (mut sols, mut info, prov) = solve_system(&op, &[rhs], &spec.options)?;
    info.warnings.extend(warnings);
    let v = SolutionField { mesh, values: sols.pop().unwrap(), beta, provenance: prov, info };
    Ok((spec, v))
}

/// Relative max error `max|V - V_e| / max|V_e|` over nodes with `lo <= |z - a| <= hi`.
pub fn relative_error(mesh: &DiskMesh, v: &[C], v_exact: &Expr, lo: f64, hi: f64) -> Result<f64> {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (j, z) in mesh.nodes.iter().enumerate() {
        let r = mesh.dist_to_a(j);
        if r < lo || r > hi {
            continue;
        }
        let e = v_exact.eval(*z, mesh.a)?;
        num = num.max((v[j] - e).norm());
        den = den.max(e.norm());
    }
    Ok(if den > 0.0 { num / den } else { num })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::mesh::build_disk_mesh;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn unit(n_r: usize, n_t: usize) -> Arc<DiskMesh> {
        Arc::new(build_disk_mesh(1.0, ZERO, n_r, n_t, 2.0).unwrap())
    }

    #[test]
    fn trivial_solve_returns_z() {
        let m = unit(8, 16);
        let spec = ProblemSpec::new(m.clone(), CoefficientPair::zero(&m)).with_phi(Expr::one());
        let v = solve_main(&spec).unwrap();
        for (x, z) in v.values.iter().zip(&m.nodes) {
            assert!((x - z).norm() <= 1e-12);
        }
    }

    #[test]
    fn holomorphic_field_has_zero_residual() {
        let m = unit(8, 16);
        let spec = ProblemSpec::new(m.clone(), CoefficientPair::zero(&m));
        let v: Vec<C> = m.nodes.clone();
        let r = residual_values(&m, &v, &spec.coeffs, &spec.f.values).unwrap();
        assert!(r.max <= 1e-10);
        let zbar: Vec<C> = m.nodes.iter().map(|z| z.conj()).collect();
        let one = vec![c(1.0, 0.0); m.len()];
        let r = residual_values(&m, &zbar, &spec.coeffs, &one).unwrap();
        assert!(r.max <= 1e-10, "{}", r.max);
    }

    #[test]
    fn residual_rejects_coarse_mesh() {
        let m = unit(3, 8);
        let v = vec![ZERO; m.len()];
        assert!(polar_dbar(&m, &v).is_err());
    }

    #[test]
    fn picard_contract() {
        let m = unit(6, 12);
        let spec = ProblemSpec::new(m.clone(), CoefficientPair::zero(&m)).with_phi(Expr::one());
        let v = picard_solve(&spec, 10, 0.0).unwrap();
        assert_eq!(v.info.iterations, 1);
        let coeffs = CoefficientPair::constant(&m, c(0.1, 0.0), ZERO);
        let spec = ProblemSpec::new(m.clone(), coeffs).with_phi(Expr::one());
        let v = picard_solve(&spec, 0, 0.0).unwrap();
        assert_eq!(v.info.iterations, 0);
        let rhs = spec.rhs(&spec.area()).unwrap();
        assert_eq!(v.values, rhs);
    }

    #[test]
    fn transform_examples() {
        let m = unit(6, 12);
        let coeffs = CoefficientPair::constant(&m, c(0.2, 0.0), c(0.3, 0.1));
        let spec = ProblemSpec::new(m.clone(), coeffs)
            .with_f_expr(parse("z*absz + 1").unwrap())
            .unwrap();
        let (same, back) = transform_pole(&spec, 0).unwrap();
        assert_eq!(same.coeffs.b0_nodes, spec.coeffs.b0_nodes);
        assert_eq!(back.k, 0);
        let b = spec.coeffs.b0.clone().unwrap();
        let (t1, _) = transform_pole(&spec, 1).unwrap();
        let bk = t1.coeffs.b0.unwrap().eval(c(0.0, 1.0), ZERO).unwrap();
        assert!((bk + b.eval(c(0.0, 1.0), ZERO).unwrap()).norm() < 1e-15);
        let (t2, _) = transform_pole(&spec, 2).unwrap();
        let (back2, _) = transform_pole(&t2, -2).unwrap();
        for (x, y) in back2.f.values.iter().zip(&spec.f.values) {
            assert!((x - y).norm() <= 1e-13 * y.norm().max(1.0));
        }
        for (x, y) in back2.coeffs.b0_nodes.iter().zip(&spec.coeffs.b0_nodes) {
            assert!((x - y).norm() <= 1e-13);
        }
    }

    #[test]
    fn similarity_with_zero_coefficients_is_identity() {
        let m = unit(8, 16);
        let v: Vec<C> = m.nodes.iter().map(|z| z * z + z.conj()).collect();
        let coeffs = CoefficientPair::zero(&m);
        let s = similarity_factor(&m, &v, &coeffs).unwrap();
        assert!(s.omega.iter().all(|w| *w == ZERO));
        assert_eq!(s.phi, v);
        let d = polar_dbar(&m, &v).unwrap();
        let own = (0..m.len())
            .filter(|&j| interior_ring(&m, j))
            .map(|j| d[j].norm())
            .fold(0.0, f64::max);
        assert_eq!(s.holo_defect, own);
    }

    #[test]
    fn boundary_extrapolation_is_exact_for_linear_fields() {
        let m = unit(8, 16);
        let g = crate::mesh::build_boundary_grid(ZERO, 1.0, 64).unwrap();
        let v: Vec<C> = m.nodes.iter().map(|z| 2.0 * z + z.conj() * 0.5 + 1.0).collect();
        let e = extrapolate_to_boundary(&m, &v, &g);
        for (x, t) in e.iter().zip(&g.nodes) {
            assert!((x - (2.0 * t + t.conj() * 0.5 + 1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn lagrange_weights_are_consistent() {
        let x = [0.1, 0.3, 0.7];
        let w = lagrange_derivative_weights(x, 0.3);
        let f = |t: f64| 2.0 * t * t - t + 3.0;
        let d: f64 = w.iter().zip(x).map(|(w, x)| w * f(x)).sum();
        assert!((d - (4.0 * 0.3 - 1.0)).abs() < 1e-12);
        let w = lagrange_weights(x, 1.0);
        let v: f64 = w.iter().zip(x).map(|(w, x)| w * f(x)).sum();
        assert!((v - f(1.0)).abs() < 1e-12);
    }
}
