//! The Riemann-Hilbert problem `Re[t^{-m} V(t)] = g(t)` on `|t| = R` for solutions of
//! the main equation with the singular point at the disk center, in all index regimes,
//! and its variant with an initial condition at the center.
//!
//! For `m >= 1` the solution solves
//! `V + T_{G,0} V* + z Q_m V* = D_m g + T_{G,0} F + z Q_m F + z Phi_0m`
//! with `Phi_0m` ranging over a `2m - 1` dimensional real family.
//!
//! For `m = -k <= 0` it solves
//! `V + T_{G,0} V* - S_k V* = G_k g + T_{G,0} F - S_k F`, where
//! `G_k g = (z/(pi i)) ∮ g dt / (t^{k+1}(t - z))` and
//! `S_k f = (z/(pi R^{2k})) ∬ conj(f) conj(zeta)^{2k} / (R^2 - conj(zeta) z)`,
//! and is a solution of the boundary problem exactly when `2k + 1` real defects vanish.

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{build, Expr, Var};
use crate::fredholm::{
    phase_factor, inverse_power, solve_system, BackMap, Provenance, SolutionField,
    SolverOptions,
};
use crate::linsolve::RealLinearOperator;
use crate::mesh::{BoundaryGrid, DiskMesh};
use crate::operators::{
    schwarz_dm, schwarz_tail, AreaOperator, CoefficientPair, FieldOnMesh, Reflection, SchwarzModes,
};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Radii (relative to `R`) where solutions are evaluated before extrapolating to `R`.
pub const CHECK_RADII: [f64; 3] = [0.98, 0.97, 0.96];

/// Data of a boundary problem.
#[derive(Debug, Clone)]
pub struct RhProblem {
    pub m: i32,
    pub mesh: Arc<DiskMesh>,
    pub grid: BoundaryGrid,
    /// `g` at the boundary grid nodes.
    pub g: Vec<f64>,
    pub coeffs: CoefficientPair,
    pub f: FieldOnMesh,
    pub f_expr: Option<Expr>,
    /// `alpha_0..alpha_{m-2}, beta_0..beta_{m-2}, beta_m` for `m >= 1`; empty means zeros.
    pub free_params: Vec<f64>,
    pub beta: f64,
    /// Relative solvability tolerance.
    pub tol: f64,
    pub options: SolverOptions,
}

impl RhProblem {
    pub fn new(m: i32, mesh: Arc<DiskMesh>, grid: BoundaryGrid, g: Vec<f64>, coeffs: CoefficientPair) -> Result<Self> {
        if mesh.center != ZERO || mesh.a != ZERO {
            return Err(Error::InvalidInput(
                "the boundary problem needs the disk and the singular point at 0".into(),
            ));
        }
        if grid.center != ZERO || (grid.radius - mesh.radius).abs() > 1e-14 * mesh.radius {
            return Err(Error::InvalidInput("boundary grid must be the disk boundary".into()));
        }
        if g.len() != grid.len() {
            return Err(Error::InvalidInput("g must have one value per boundary node".into()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("g has non-finite values".into()));
        }
        let f = FieldOnMesh::zeros(mesh.clone());
        Ok(RhProblem {
            m,
            mesh,
            grid,
            g,
            coeffs,
            f,
            f_expr: Some(Expr::zero()),
            free_params: Vec::new(),
            beta: 0.5,
            tol: 1e-6,
            options: SolverOptions::default(),
        })
    }

    /// `g` from a real-valued expression.
    pub fn g_from_expr(grid: &BoundaryGrid, g: &Expr) -> Result<Vec<f64>> {
        let vals = g.eval_many(&grid.nodes, ZERO)?;
        let scale = vals.iter().map(|v| v.norm()).fold(1.0, f64::max);
        if vals.iter().any(|v| v.im.abs() > 1e-12 * scale) {
            return Err(Error::InvalidInput("boundary data g must be real on the circle".into()));
        }
        Ok(vals.iter().map(|v| v.re).collect())
    }

    pub fn with_f_expr(mut self, f: Expr) -> Result<Self> {
        self.f = FieldOnMesh::from_expr(self.mesh.clone(), &f)?;
        self.f_expr = Some(f);
        Ok(self)
    }

    fn scaled_coeffs(&self) -> (Vec<C>, Vec<C>) {
        let m = &self.mesh;
        let sa = (0..m.len()).map(|j| self.coeffs.a0_nodes[j] / m.dist_to_a(j)).collect();
        let sb = (0..m.len()).map(|j| self.coeffs.b0_nodes[j] / m.dist_to_a(j)).collect();
        (sa, sb)
    }
}

/// Solvability report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Defects {
    /// `(D_0 g)(0)`, the mean of `g`, for `m = 0`.
    pub mean_condition: Option<f64>,
    /// `a_0..a_k` for `m = -k <= 0` (`a_k` is real).
    pub a: Vec<C>,
    /// `Re a_0, Im a_0, ..., Re a_{k-1}, Im a_{k-1}, Re a_k`: `2k + 1` numbers.
    pub real: Vec<f64>,
    /// Data scale the tolerance is relative to.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct RhSolution {
    pub m: i32,
    pub particular: SolutionField,
    pub homogeneous_basis: Vec<SolutionField>,
    pub defects: Defects,
    pub c0: f64,
    pub solvable: bool,
    /// `max |Re[t^{-m} V(t)] - g(t)|` for the particular solution.
    pub boundary_residual: f64,
    /// The same with `g = 0` for each basis member.
    pub basis_residuals: Vec<f64>,
    /// Smallest singular value of the column-normalized basis sample matrix.
    pub independence: Option<f64>,
    pub warnings: Vec<String>,
}

/// Generators of `Phi_0m`: unit values of `alpha_0..alpha_{m-2}`, then
/// `beta_0..beta_{m-2}`, then `beta_m`.
pub fn phi0m_basis(m: i32, r: f64) -> Result<Vec<Expr>> {
    use build::*;
    if m < 1 {
        return Err(Error::InvalidInput(format!("Phi_0m needs m >= 1, got {m}")));
    }
    let m = m as u32;
    let z = || Expr::Var(Var::Z);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for k in 0..m.saturating_sub(1) {
        let c = r.powi(2 * (k as i32 - m as i32 + 1));
        let lo = pow(z(), k);
        let hi = scale(C::new(c, 0.0), pow(z(), 2 * m - k - 2));
        alphas.push(sub(lo.clone(), hi.clone()));
        betas.push(scale(C::new(0.0, 1.0), add(lo, hi)));
    }
    alphas.extend(betas);
    alphas.push(scale(C::new(0.0, 1.0), pow(z(), m - 1)));
    Ok(alphas)
}

fn real_span_min_singular(fields: &[&[C]]) -> Result<f64> {
    let n = fields[0].len();
    let cols = fields.len();
    let mut a = Mat::<f64>::zeros(2 * n, cols);
    for (j, f) in fields.iter().enumerate() {
        let nrm = f.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for (i, v) in f.iter().enumerate() {
            a[(i, j)] = v.re / nrm;
            a[(n + i, j)] = v.im / nrm;
        }
    }
    let sv = a
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    Ok(sv.into_iter().fold(f64::INFINITY, f64::min))
}

/// Affine description of one field for boundary evaluation: the data term at `t`
/// and whether `F` enters.
struct Known<'a> {
    data: Box<dyn Fn(C) -> Result<C> + 'a>,
    with_f: bool,
}

fn extrapolate(vals: [C; 3]) -> C {
    let [x0, x1, x2] = CHECK_RADII;
    let at = 1.0;
    let l0 = (at - x1) * (at - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (at - x0) * (at - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (at - x0) * (at - x1) / ((x2 - x0) * (x2 - x1));
    vals[0] * l0 + vals[1] * l1 + vals[2] * l2
}

/// Boundary values of an interior solution: evaluation on the circles of
/// radius `0.98R`, `0.97R`, `0.96R` and quadratic extrapolation to `R`.
fn boundary_values(prob: &RhProblem, area: &AreaOperator, v: &[C], known: &Known<'_>) -> Result<Vec<C>> {
    let (sa, sb) = prob.scaled_coeffs();
    let h: Vec<C> = (0..v.len())
        .map(|j| {
            let s = sa[j] * v[j] + sb[j] * v[j].conj();
            if known.with_f { s - prob.f.values[j] } else { s }
        })
        .collect();
    let n = prob.grid.len();
    let targets: Vec<C> = CHECK_RADII
        .iter()
        .flat_map(|&rho| prob.grid.nodes.iter().map(move |&tb| tb * rho))
        .collect();
    let kh = area.apply_product(&h, &targets);
    let vals = targets
        .iter()
        .zip(kh)
        .map(|(&t, kh)| Ok((known.data)(t)? - kh))
        .collect::<Result<Vec<C>>>()?;
    Ok((0..n).map(|l| extrapolate([vals[l], vals[n + l], vals[2 * n + l]])).collect())
}

/// `max_l |Re[t_l^{-m} V(t_l)] - g_l|` for boundary values of `V`.
pub fn boundary_residual(grid: &BoundaryGrid, v_boundary: &[C], m: i32, g: &[f64]) -> f64 {
    grid.nodes
        .iter()
        .zip(v_boundary)
        .zip(g)
        .map(|((t, v), g)| ((t.powi(-m) * v).re - g).abs())
        .fold(0.0, f64::max)
}

fn field(prob: &RhProblem, values: Vec<C>, info: &crate::fredholm::SolveInfo) -> SolutionField {
    SolutionField {
        mesh: prob.mesh.clone(),
        values,
        beta: prob.beta,
        provenance: Provenance::Rh,
        info: info.clone(),
    }
}

/// Index `m >= 1`: always solvable, with a `2m - 1` dimensional homogeneous family.
pub fn solve_rh_positive(prob: &RhProblem) -> Result<RhSolution> {
    if prob.m < 1 {
        return Err(Error::InvalidInput(format!("expected m >= 1, got {}", prob.m)));
    }
    let mesh = &prob.mesh;
    let mu = prob.m as u32;
    let gens = phi0m_basis(prob.m, mesh.radius)?;
    if !prob.free_params.is_empty() && prob.free_params.len() != gens.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} free parameters for m = {}, got {}",
            gens.len(),
            prob.m,
            prob.free_params.len()
        )));
    }
    let phi = gens
        .iter()
        .zip(prob.free_params.iter().chain(std::iter::repeat(&0.0)))
        .fold(Expr::zero(), |acc, (g, p)| build::add(acc, build::scale(C::new(*p, 0.0), g.clone())));

    let area = AreaOperator::new(mesh.clone(), Some(ZERO), Reflection::Positive { m: mu }, prob.options.kernel_sign)?;
    let (sa, sb) = prob.scaled_coeffs();
    let op = RealLinearOperator { area: &area, sa, sb };

    let dm = schwarz_dm(&prob.grid, &prob.g, mu, &mesh.nodes)?;
    let kf = area.apply(&prob.f.values);
    let mut rhss = Vec::with_capacity(gens.len() + 1);
    let mut part = Vec::with_capacity(mesh.len());
    for j in 0..mesh.len() {
        let z = mesh.nodes[j];
        part.push(dm[j] + kf[j] + z * phi.eval(z, ZERO)?);
    }
    rhss.push(part);
    for g in &gens {
        rhss.push(mesh.nodes.iter().map(|&z| Ok(z * g.eval(z, ZERO)?)).collect::<Result<Vec<C>>>()?);
    }
    let (mut sols, info, _) = solve_system(&op, &rhss, &prob.options)?;
    let basis_vals: Vec<Vec<C>> = sols.split_off(1);
    let particular = sols.pop().unwrap();

    let grid = &prob.grid;
    let modes = SchwarzModes::new(grid, &prob.g)?;
    let known = Known {
        data: Box::new(|t: C| Ok(modes.dm(t, mu) + t * phi.eval(t, ZERO)?)),
        with_f: true,
    };
    let pb = boundary_values(prob, &area, &particular, &known)?;
    let boundary_residual = boundary_residual(grid, &pb, prob.m, &prob.g);

    let zeros = vec![0.0; grid.len()];
    let mut basis_residuals = Vec::new();
    for (vals, g) in basis_vals.iter().zip(&gens) {
        let known = Known { data: Box::new(|t: C| Ok(t * g.eval(t, ZERO)?)), with_f: false };
        let b = boundary_values(prob, &area, vals, &known)?;
        basis_residuals.push(self::boundary_residual(grid, &b, prob.m, &zeros));
    }
    let refs: Vec<&[C]> = basis_vals.iter().map(|v| v.as_slice()).collect();
    let independence = Some(real_span_min_singular(&refs)?);

    Ok(RhSolution {
        m: prob.m,
        particular: field(prob, particular, &info),
        homogeneous_basis: basis_vals.into_iter().map(|v| field(prob, v, &info)).collect(),
        defects: Defects::default(),
        c0: 0.0,
        solvable: true,
        boundary_residual,
        basis_residuals,
        independence,
        warnings: info.warnings.clone(),
    })
}

/// Fourier coefficient `(1/n) sum_l g_l e^{-i p theta_l}`.
fn fourier(grid: &BoundaryGrid, g: &[f64], p: i32) -> C {
    let s: C = g
        .iter()
        .zip(&grid.angles)
        .map(|(g, th)| C::from_polar(*g, -(p as f64) * th))
        .sum();
    s / grid.len() as f64
}

/// Moments `c_n = (1/pi) sum_j w_j h_j zeta_j^n` for `n = -1..=2k-1`, indexed by `n + 1`.
fn moments(mesh: &DiskMesh, h: &[C], k: u32) -> Vec<C> {
    let top = 2 * k as i32 - 1;
    (-1..=top.max(-1))
        .map(|n| {
            let s: C = mesh
                .nodes
                .iter()
                .zip(&mesh.weights)
                .zip(h)
                .map(|((z, w), h)| h * z.powi(n) * *w)
                .sum();
            s / PI
        })
        .collect()
}

/// Defects `a_0..a_k` of `V` for index `-k`, and `c_0`.
fn negative_defects(prob: &RhProblem, v: &[C], k: u32) -> (Vec<C>, f64) {
    let mesh = &prob.mesh;
    let r = mesh.radius;
    let star = crate::operators::apply_star(mesh, v, &prob.coeffs);
    let h: Vec<C> = prob.f.values.iter().zip(&star).map(|(f, s)| f - s).collect();
    let c = moments(mesh, &h, k);
    let cn = |n: i32| c[(n + 1) as usize];
    let k = k as i32;
    let mut d = Vec::with_capacity(k as usize + 1);
    d.push(C::new(fourier(&prob.grid, &prob.g, 0).re - cn(k - 1).re, 0.0));
    for p in 1..=k {
        let gp = fourier(&prob.grid, &prob.g, p);
        d.push(gp * (2.0 * r.powi(-p)) - cn(k - 1 - p) - cn(k - 1 + p).conj() * r.powi(-2 * p));
    }
    let a: Vec<C> = (0..=k).map(|j| d[(k - j) as usize]).collect();
    (a, cn(k - 1).im)
}

/// Index `m = -k <= 0`: unique candidate, solvable when `2k + 1` real defects vanish.
pub fn solve_rh_nonpositive(prob: &RhProblem) -> Result<RhSolution> {
    if prob.m > 0 {
        return Err(Error::InvalidInput(format!("expected m <= 0, got {}", prob.m)));
    }
    let k = (-prob.m) as u32;
    let mesh = &prob.mesh;
    let area = AreaOperator::new(mesh.clone(), Some(ZERO), Reflection::Negative { k }, prob.options.kernel_sign)?;
    let (sa, sb) = prob.scaled_coeffs();
    let op = RealLinearOperator { area: &area, sa, sb };
    let gk = schwarz_tail(&prob.grid, &prob.g, k, &mesh.nodes)?;
    let kf = area.apply(&prob.f.values);
    let rhs: Vec<C> = gk.iter().zip(&kf).map(|(a, b)| a + b).collect();
    let (mut sols, info, _) = solve_system(&op, &[rhs], &prob.options)?;
    let v = sols.pop().unwrap();

    let (a, c0) = negative_defects(prob, &v, k);
    let mut real = Vec::with_capacity(2 * k as usize + 1);
    for aj in &a[..k as usize] {
        real.push(aj.re);
        real.push(aj.im);
    }
    real.push(a[k as usize].re);

    let zero_v = vec![ZERO; mesh.len()];
    let (f_only, _) = negative_defects(
        &RhProblem { g: vec![0.0; prob.g.len()], ..prob.clone() },
        &zero_v,
        k,
    );
    let gmax = prob.g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale = f_only.iter().map(|v| v.norm()).fold(gmax, f64::max);
    let solvable = real.iter().all(|d| d.abs() <= prob.tol * scale);

    let grid = &prob.grid;
    let modes = SchwarzModes::new(grid, &prob.g)?;
    let known = Known {
        data: Box::new(|t: C| Ok(modes.tail(t, k))),
        with_f: true,
    };
    let pb = boundary_values(prob, &area, &v, &known)?;
    let boundary_residual = boundary_residual(grid, &pb, prob.m, &prob.g);

    let mut warnings = info.warnings.clone();
    if !solvable {
        warnings.push(format!(
            "solvability conditions fail: max real defect {:.3e} > {:.1e} * scale {:.3e}",
            real.iter().map(|d| d.abs()).fold(0.0, f64::max),
            prob.tol,
            scale
        ));
    }
    Ok(RhSolution {
        m: prob.m,
        particular: field(prob, v, &info),
        homogeneous_basis: Vec::new(),
        defects: Defects {
            mean_condition: (k == 0).then(|| fourier(grid, &prob.g, 0).re),
            a,
            real,
            scale,
        },
        c0: if k == 0 { 0.0 } else { c0 },
        solvable,
        boundary_residual,
        basis_residuals: Vec::new(),
        independence: None,
        warnings,
    })
}

/// Index `0`; `c_0` is pinned to zero.
pub fn solve_rh_zero(prob: &RhProblem) -> Result<RhSolution> {
    if prob.m != 0 {
        return Err(Error::InvalidInput(format!("expected m = 0, got {}", prob.m)));
    }
    solve_rh_nonpositive(prob)
}

/// Index `m <= -1`.
pub fn solve_rh_negative(prob: &RhProblem) -> Result<RhSolution> {
    if prob.m >= 0 {
        return Err(Error::InvalidInput(format!("expected m <= -1, got {}", prob.m)));
    }
    solve_rh_nonpositive(prob)
}

pub fn solve_rh(prob: &RhProblem) -> Result<RhSolution> {
    if prob.m >= 1 {
        solve_rh_positive(prob)
    } else {
        solve_rh_nonpositive(prob)
    }
}

/// Result of the problem with an initial condition at the center.
#[derive(Debug, Clone)]
pub struct Rh0Solution {
    pub nu: f64,
    pub n: i32,
    /// `[nu]`, the power in `V = z^k W`.
    pub k: i32,
    /// Index of the problem for `W`: `n - k`.
    pub m: i32,
    /// `1 - nu + k`.
    pub beta: f64,
    pub substituted: bool,
    /// Solution for `V`, mapped back from `W`.
    pub solution: RhSolution,
}

/// `V = z^k W` with `k = [nu]`: `B -> B exp(-2ik phi)`, `F -> z^{-k} F`, index `n - k`.
pub fn solve_rh0(nu: f64, n: i32, prob: &RhProblem) -> Result<Rh0Solution> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidInput(format!("nu must be positive, got {nu}")));
    }
    let k = nu.floor() as i32;
    let beta = 1.0 - nu + k as f64;
    let mut w = prob.clone();
    w.m = n - k;
    w.beta = beta;
    if k == 0 {
        let solution = solve_rh(&w)?;
        return Ok(Rh0Solution { nu, n, k, m: n, beta, substituted: false, solution });
    }
    let mesh = &prob.mesh;
    let b0_nodes: Vec<C> = mesh
        .nodes
        .iter()
        .zip(&prob.coeffs.b0_nodes)
        .map(|(z, b)| b * C::from_polar(1.0, -2.0 * k as f64 * crate::expr::arg_half_open(*z)))
        .collect();
    let mut coeffs = CoefficientPair::from_samples(prob.coeffs.a0_nodes.clone(), b0_nodes)?;
    coeffs.a0 = prob.coeffs.a0.clone();
    coeffs.b0 = prob.coeffs.b0.clone().map(|b| build::mul(b, phase_factor(k)));
    w.coeffs = coeffs;
    let f_vals: Vec<C> = mesh.nodes.iter().zip(&prob.f.values).map(|(z, f)| f * z.powi(-k)).collect();
    w.f = FieldOnMesh::new(mesh.clone(), f_vals)?;
    w.f_expr = prob.f_expr.clone().map(|f| build::mul(f, inverse_power(k)));
    let mut sol = solve_rh(&w)?;
    let back = BackMap { k };
    sol.particular = back.apply(&sol.particular);
    sol.homogeneous_basis = sol.homogeneous_basis.iter().map(|b| back.apply(b)).collect();
    sol.m = n;
    Ok(Rh0Solution { nu, n, k, m: n - k, beta, substituted: true, solution: sol })
}
