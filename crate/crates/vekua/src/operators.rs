//! Nystrom discretizations of the area Cauchy operator, its pinned variant, the
//! boundary Cauchy and Schwarz operators, the disk reflection operators and the
//! coefficient multiplication `f* = (A0 f + B0 conj f) / |z - a|`.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mesh::{BoundaryGrid, DiskMesh};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Complex samples on the nodes of a mesh.
#[derive(Debug, Clone)]
pub struct FieldOnMesh {
    pub mesh: Arc<DiskMesh>,
    pub values: Vec<C>,
    /// Class exponent, when known.
    pub beta: Option<f64>,
}

impl FieldOnMesh {
    pub fn new(mesh: Arc<DiskMesh>, values: Vec<C>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {} nodes",
                values.len(),
                mesh.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidInput("field has non-finite values".into()));
        }
        Ok(FieldOnMesh { mesh, values, beta: None })
    }

    pub fn zeros(mesh: Arc<DiskMesh>) -> Self {
        let n = mesh.len();
        FieldOnMesh { mesh, values: vec![ZERO; n], beta: None }
    }

    pub fn from_expr(mesh: Arc<DiskMesh>, e: &Expr) -> Result<Self> {
        let values = e.eval_many(&mesh.nodes, mesh.a)?;
        FieldOnMesh::new(mesh, values)
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }
}

/// Bounded numerators of the singular coefficients `A = A0/|z-a|`, `B = B0/|z-a|`.
#[derive(Debug, Clone)]
pub struct CoefficientPair {
    pub a0: Option<Expr>,
    pub b0: Option<Expr>,
    pub a0_nodes: Vec<C>,
    pub b0_nodes: Vec<C>,
    /// `max |A0| + max |B0|` over the nodes, unless overridden.
    pub mu: f64,
}

impl CoefficientPair {
    pub fn from_exprs(mesh: &DiskMesh, a0: Expr, b0: Expr) -> Result<Self> {
        let a0_nodes = a0.eval_many(&mesh.nodes, mesh.a)?;
        let b0_nodes = b0.eval_many(&mesh.nodes, mesh.a)?;
        let mut p = Self::from_samples(a0_nodes, b0_nodes)?;
        p.a0 = Some(a0);
        p.b0 = Some(b0);
        Ok(p)
    }

    pub fn from_samples(a0_nodes: Vec<C>, b0_nodes: Vec<C>) -> Result<Self> {
        if a0_nodes.len() != b0_nodes.len() {
            return Err(Error::InvalidInput("coefficient sample lengths differ".into()));
        }
        let all = a0_nodes.iter().chain(&b0_nodes);
        if all.into_iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidInput("coefficients have non-finite samples".into()));
        }
        let max = |v: &[C]| v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mu = max(&a0_nodes) + max(&b0_nodes);
        Ok(CoefficientPair { a0: None, b0: None, a0_nodes, b0_nodes, mu })
    }

    pub fn constant(mesh: &DiskMesh, a0: C, b0: C) -> Self {
        let p = Self::from_exprs(mesh, Expr::Num(a0), Expr::Num(b0));
        p.expect("constant coefficients always evaluate")
    }

    pub fn zero(mesh: &DiskMesh) -> Self {
        Self::constant(mesh, ZERO, ZERO)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.a0_nodes.iter().chain(&self.b0_nodes).all(|v| *v == ZERO)
    }

    /// Numerators at an arbitrary point; needs the expressions.
    pub fn at(&self, z: C, a: C) -> Result<(C, C)> {
        match (&self.a0, &self.b0) {
            (Some(a0), Some(b0)) => Ok((a0.eval(z, a)?, b0.eval(z, a)?)),
            _ => Err(Error::InvalidInput(
                "coefficients were given as samples; off-grid values unavailable".into(),
            )),
        }
    }
}

/// `f*` at the nodes.
pub fn apply_star(mesh: &DiskMesh, v: &[C], coeffs: &CoefficientPair) -> Vec<C> {
    (0..mesh.len())
        .map(|j| {
            let s = 1.0 / mesh.dist_to_a(j);
            (coeffs.a0_nodes[j] * v[j] + coeffs.b0_nodes[j] * v[j].conj()) * s
        })
        .collect()
}

/// `-(1/pi) w / (zeta - z)`.
#[inline]
fn cauchy_weight(w: f64, zeta: C, z: C) -> C {
    let d = zeta - z;
    d.conj() * (-w / (PI * d.norm_sqr()))
}

/// Discrete `T_G 1` at node `i` without the self cell.
fn plain_t1_at_node(mesh: &DiskMesh, i: usize) -> C {
    let zi = mesh.nodes[i];
    let mut s = ZERO;
    for (j, (&zeta, &w)) in mesh.nodes.iter().zip(&mesh.weights).enumerate() {
        if j != i {
            s += cauchy_weight(w, zeta, zi);
        }
    }
    s
}

/// Which reflection term accompanies the area operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reflection {
    None,
    /// `z Q_m`, the index `m >= 1` problem.
    Positive { m: u32 },
    /// `-(z / (pi R^{2k})) * area integral of conj(f) conj(zeta)^{2k} / (R^2 - conj(zeta) z)`,
    /// the index `m = -k <= 0` problem.
    Negative { k: u32 },
}

/// The discrete operator `h -> K h + L conj(h)` on mesh nodes, where `K` is the
/// (optionally pinned) area Cauchy operator and `L` a reflection term.
///
/// On the nodes the self cell gets the weight that makes `T_G 1 = conj(z - c)` exact.
#[derive(Debug, Clone)]
pub struct AreaOperator {
    pub mesh: Arc<DiskMesh>,
    pub pin: Option<C>,
    pub reflection: Reflection,
    /// `1` normally; `-1` injects the kernel-sign fault used by the mutation check.
    pub sign: f64,
    diag: Vec<C>,
    pin_row: Vec<C>,
    refl_w: Vec<C>,
    /// Product-integrated `1 / (R^2 - conj(zeta) z)` weights between rings, indexed by
    /// `(ring_i * n_r + ring_j) * n_t + (k_j - k_i mod n_t)`.
    refl_table: Vec<C>,
    /// Column phase `exp(-2ik theta_j)` of the negative-index term.
    refl_phase: Vec<C>,
}

impl AreaOperator {
    pub fn new(mesh: Arc<DiskMesh>, pin: Option<C>, reflection: Reflection, sign: f64) -> Result<Self> {
        if reflection != Reflection::None && mesh.center != ZERO {
            return Err(Error::InvalidInput("reflection operators need a disk centered at 0".into()));
        }
        let diag: Vec<C> = (0..mesh.len())
            .into_par_iter()
            .map(|i| (mesh.nodes[i] - mesh.center).conj() - plain_t1_at_node(&mesh, i))
            .collect();
        let pin_row = match pin {
            Some(a) => mesh
                .nodes
                .iter()
                .zip(&mesh.weights)
                .map(|(&zeta, &w)| if zeta == a { ZERO } else { cauchy_weight(w, zeta, a) })
                .collect(),
            None => vec![ZERO; mesh.len()],
        };
        let refl_w = match reflection {
            Reflection::None | Reflection::Negative { .. } => Vec::new(),
            Reflection::Positive { .. } => mesh
                .nodes
                .iter()
                .zip(&mesh.weights)
                .map(|(&zeta, &w)| w / zeta.conj())
                .collect(),

        };
        let (refl_table, refl_phase) = reflection_table(&mesh, reflection);
        Ok(AreaOperator { mesh, pin, reflection, sign, diag, pin_row, refl_w, refl_table, refl_phase })
    }

    /// Plain pinned area operator.
    pub fn pinned(mesh: Arc<DiskMesh>, sign: f64) -> Self {
        let a = mesh.a;
        Self::new(mesh, Some(a), Reflection::None, sign).expect("no reflection, no failure")
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    /// Self-cell weight of node `i`.
    pub fn diag(&self, i: usize) -> C {
        self.sign * self.diag[i]
    }

    /// Entry `(i, j)` of the area part on the nodes.
    #[inline]
    pub fn k_entry(&self, i: usize, j: usize) -> C {
        let m = &self.mesh;
        let raw = if i == j { self.diag[i] } else { cauchy_weight(m.weights[j], m.nodes[j], m.nodes[i]) };
        (raw - self.pin_row[j]) * self.sign
    }

    /// Per-target factors of the reflection kernel at `z`.
    #[inline]
    fn refl_factors(&self, z: C) -> (C, C) {
        let r = self.mesh.radius;
        match self.reflection {
            Reflection::None => (ZERO, ZERO),
            Reflection::Positive { m } => {
                let r2m = r.powi(2 * m as i32);
                let z2m = z.powu(2 * m);
                (-(z2m * z) / (PI * r2m), -z2m / (PI * r2m))
            }
            Reflection::Negative { k } => (-z / (PI * r.powi(2 * k as i32)), ZERO),
        }
    }

    #[inline]
    fn l_entry_with(&self, f: (C, C), i: usize, j: usize) -> C {
        let m = &self.mesh;
        let (nr, nt) = (m.n_r, m.n_t);
        let (a, ka) = (i / nt, i % nt);
        let (b, kb) = (j / nt, j % nt);
        let w = self.refl_table[(a * nr + b) * nt + (kb + nt - ka) % nt];
        match self.reflection {
            Reflection::None => ZERO,
            Reflection::Positive { .. } => f.0 * w + f.1 * self.refl_w[j],
            Reflection::Negative { .. } => f.0 * w * self.refl_phase[j],
        }
    }

    /// Entry `(i, j)` of the reflection part on the nodes.
    pub fn l_entry(&self, i: usize, j: usize) -> C {
        self.l_entry_with(self.refl_factors(self.mesh.nodes[i]), i, j)
    }

    /// `K h + L conj(h)` at the nodes.
    pub fn apply(&self, h: &[C]) -> Vec<C> {
        let n = self.len();
        let refl = self.reflection != Reflection::None;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = ZERO;
                for (j, hj) in h.iter().enumerate() {
                    s += self.k_entry(i, j) * hj;
                }
                if refl {
                    let f = self.refl_factors(self.mesh.nodes[i]);
                    for (j, hj) in h.iter().enumerate() {
                        s += self.l_entry_with(f, i, j) * hj.conj();
                    }
                }
                s
            })
            .collect()
    }

    /// Fourier coefficients of `h` on each ring, modes `-q..=q` with `q = (n_t - 1) / 2`,
    /// stored at index `n + q`. The Nyquist mode is dropped.
    pub fn ring_modes(&self, h: &[C]) -> Vec<Vec<C>> {
        let m = &self.mesh;
        let q = (m.n_t as i64 - 1) / 2;
        let nt = m.n_t as f64;
        (0..m.n_r)
            .map(|i| {
                let ring = &h[i * m.n_t..(i + 1) * m.n_t];
                (-q..=q)
                    .map(|n| {
                        let mut c = ZERO;
                        for (&hk, &th) in ring.iter().zip(&m.angles) {
                            c += hk * C::from_polar(1.0, -(n as f64) * th);
                        }
                        c / nt
                    })
                    .collect()
            })
            .collect()
    }

    /// `K h + L conj(h)` at interior off-grid points.
    ///
    /// Each ring carries the trigonometric interpolant of its samples, constant in `r`
    /// across the ring; both kernels are then integrated exactly in angle and radius, so
    /// no weight is near-singular however close `t` sits to a node. The pin and the
    /// `1 / conj(zeta)` reflection part keep the node quadrature of the system matrix.
    pub fn apply_product(&self, h: &[C], targets: &[C]) -> Vec<C> {
        let m = &self.mesh;
        let modes = self.ring_modes(h);
        let q = (m.n_t as i64 - 1) / 2;
        let pin: C = self.pin_row.iter().zip(h).map(|(p, x)| p * x).sum();
        let refl1: C = match self.reflection {
            Reflection::Positive { .. } => self.refl_w.iter().zip(h).map(|(w, x)| w * x.conj()).sum(),
            _ => ZERO,
        };
        targets
            .par_iter()
            .map(|&t| {
                let u = t - m.center;
                let rho = u.norm();
                let mut cauchy = ZERO;
                for (i, c) in modes.iter().enumerate() {
                    let (b0, b1) = (m.breaks[i], m.breaks[i + 1]);
                    if b0 < rho {
                        // Inner piece: only modes n = -p <= 0 see the pole.
                        let hi = b1.min(rho);
                        let (rh, rl) = (hi / u, b0 / u);
                        let (mut ph, mut pl) = (rh, rl);
                        for p in 0..=q {
                            let k = p as f64 + 2.0;
                            cauchy -= 2.0 * PI * c[(q - p) as usize] * (ph * hi - pl * b0) / k;
                            ph *= rh;
                            pl *= rl;
                        }
                    }
                    if b1 > rho && rho > 0.0 {
                        let lo = b0.max(rho);
                        let (uh, ul) = (u / b1, u / lo);
                        let (mut ph, mut pl) = (C::new(1.0, 0.0), C::new(1.0, 0.0));
                        for n in 1..=q {
                            let term = if n == 2 {
                                u * (b1 / lo).ln()
                            } else {
                                // u^{n-1} r^{2-n} = (u / r)^{n-1} r
                                (ph * b1 - pl * lo) / (2.0 - n as f64)
                            };
                            cauchy += 2.0 * PI * c[(q + n) as usize] * term;
                            ph *= uh;
                            pl *= ul;
                        }
                    } else if b1 > rho {
                        // t at the center: only n = 1 survives.
                        cauchy += 2.0 * PI * c[(q + 1) as usize] * (b1 - b0);
                    }
                }
                let mut s = self.sign * (-cauchy / PI - pin);
                if self.reflection != Reflection::None {
                    let f = self.refl_factors(t);
                    let shift = match self.reflection {
                        Reflection::Negative { k } => 2 * k as i64,
                        _ => 0,
                    };
                    let r2 = m.radius * m.radius;
                    let mut refl = ZERO;
                    for (i, c) in modes.iter().enumerate() {
                        let (b0, b1) = (m.breaks[i], m.breaks[i + 1]);
                        // conj(h) has mode p equal to conj of mode -p of h.
                        let mut tp = C::new(1.0, 0.0);
                        for p in 0..=(q - shift) {
                            let e = p + shift;
                            let k = e as f64 + 2.0;
                            let radial = (b1.powi(e as i32 + 2) - b0.powi(e as i32 + 2)) / k;
                            refl += tp * c[(q - e) as usize].conj() * radial;
                            tp *= t / r2;
                        }
                    }
                    s += f.0 * 2.0 * PI * refl / r2 + f.1 * refl1;
                }
                s
            })
            .collect()
    }
}

/// Node weights of the reflection kernel by the same ring-wise product integration as
/// [`AreaOperator::apply_product`]. The kernel is nearly singular when both points sit
/// close to the circle, where plain node quadrature loses accuracy.
fn reflection_table(mesh: &DiskMesh, reflection: Reflection) -> (Vec<C>, Vec<C>) {
    let shift = match reflection {
        Reflection::None => return (Vec::new(), Vec::new()),
        Reflection::Positive { .. } => 0,
        Reflection::Negative { k } => 2 * k as usize,
    };
    let (nr, nt) = (mesh.n_r, mesh.n_t);
    let q = (nt - 1) / 2;
    let r2 = mesh.radius * mesh.radius;
    let scale = 2.0 * PI / (nt as f64 * r2);
    let phase = mesh
        .angles
        .iter()
        .map(|&th| C::from_polar(1.0, -(shift as f64) * th))
        .cycle()
        .take(nr * nt)
        .collect();
    let table = (0..nr * nr)
        .into_par_iter()
        .flat_map_iter(|ab| {
            let (a, b) = (ab / nr, ab % nr);
            let (b0, b1) = (mesh.breaks[b], mesh.breaks[b + 1]);
            let x = mesh.ring_radii[a] / r2;
            let coef: Vec<f64> = (0..=q.saturating_sub(shift))
                .map(|p| {
                    let e = (p + shift) as i32;
                    x.powi(p as i32) * (b1.powi(e + 2) - b0.powi(e + 2)) / (e as f64 + 2.0)
                })
                .collect();
            (0..nt).map(move |d| {
                let step = -2.0 * PI * d as f64 / nt as f64;
                let s: C = coef
                    .iter()
                    .enumerate()
                    .map(|(p, c)| c * C::from_polar(1.0, step * p as f64))
                    .sum();
                s * scale
            })
        })
        .collect();
    (table, phase)
}

/// Area Cauchy transform `T_G f` at arbitrary targets.
///
/// Targets that coincide with a node use the node's self-cell weight; other targets
/// drop any cell whose node lies within half its equal-area radius.
pub fn t_area(mesh: &DiskMesh, f: &[C], targets: &[C]) -> Vec<C> {
    targets
        .par_iter()
        .map(|&t| {
            let mut s = ZERO;
            let mut hit = None;
            for (j, (&zeta, &w)) in mesh.nodes.iter().zip(&mesh.weights).enumerate() {
                let d = (zeta - t).norm();
                if d == 0.0 {
                    hit = Some(j);
                } else if d >= 0.5 * mesh.cell_radius[j] {
                    s += cauchy_weight(w, zeta, t) * f[j];
                }
            }
            if let Some(j) = hit {
                let delta = (mesh.nodes[j] - mesh.center).conj() - plain_t1_at_node(mesh, j);
                s += delta * f[j];
            }
            s
        })
        .collect()
}

/// `T_G f` at targets where the value of `f` is also known, by subtracting the
/// singularity: `sum_j k_j (f_j - f(t)) + f(t) conj(t - c)`.
pub fn t_area_with_values(mesh: &DiskMesh, f: &[C], targets: &[C], f_at: &[C]) -> Vec<C> {
    targets
        .par_iter()
        .zip(f_at)
        .map(|(&t, &ft)| {
            let mut s = ZERO;
            for (j, (&zeta, &w)) in mesh.nodes.iter().zip(&mesh.weights).enumerate() {
                if zeta != t {
                    s += cauchy_weight(w, zeta, t) * (f[j] - ft);
                }
            }
            s + ft * (t - mesh.center).conj()
        })
        .collect()
}

/// `T_{G,a} f = T_G f - (T_G f)(a)`; exactly zero at `a`.
pub fn t_area_pinned(mesh: &DiskMesh, f: &[C], targets: &[C], a: C) -> Vec<C> {
    let at_a = t_area(mesh, f, &[a])[0];
    t_area(mesh, f, targets)
        .into_iter()
        .zip(targets)
        .map(|(v, &t)| if t == a { ZERO } else { v - at_a })
        .collect()
}

/// `P_{G,a} V = T_{G,a}(V*)`.
pub fn p_pinned(mesh: &DiskMesh, v: &[C], coeffs: &CoefficientPair, a: C, targets: &[C]) -> Vec<C> {
    let star = apply_star(mesh, v, coeffs);
    t_area_pinned(mesh, &star, targets, a)
}

fn check_inside(grid: &BoundaryGrid, targets: &[C]) -> Result<()> {
    for &z in targets {
        if (z - grid.center).norm() >= grid.radius {
            return Err(Error::InvalidInput(format!("target {z} is not inside the circle")));
        }
    }
    Ok(())
}

/// Boundary Cauchy integral `(1/(2 pi i)) ∮ h(t) dt / (t - z)` by the trapezoid rule.
///
/// Accuracy degrades for targets within about one node spacing of the circle.
pub fn cauchy_boundary(grid: &BoundaryGrid, h: &[C], targets: &[C]) -> Result<Vec<C>> {
    check_inside(grid, targets)?;
    let n = grid.len() as f64;
    Ok(targets
        .par_iter()
        .map(|&z| {
            let mut s = ZERO;
            for (&t, &hl) in grid.nodes.iter().zip(h) {
                s += hl * (t - grid.center) / (t - z);
            }
            s / n
        })
        .collect())
}

/// `K_{Γ,a} h = K_Γ h - (K_Γ h)(a)`.
pub fn cauchy_boundary_pinned(grid: &BoundaryGrid, h: &[C], targets: &[C], a: C) -> Result<Vec<C>> {
    let at_a = cauchy_boundary(grid, h, &[a])?[0];
    Ok(cauchy_boundary(grid, h, targets)?
        .into_iter()
        .zip(targets)
        .map(|(v, &t)| if t == a { ZERO } else { v - at_a })
        .collect())
}

fn check_origin(grid: &BoundaryGrid) -> Result<()> {
    if grid.center != ZERO {
        return Err(Error::InvalidInput("Schwarz operators need a circle centered at 0".into()));
    }
    Ok(())
}

/// Schwarz integral `(1/(2 pi i)) ∮ g(t) (t + z)/(t - z) dt/t`.
pub fn schwarz(grid: &BoundaryGrid, g: &[f64], targets: &[C]) -> Result<Vec<C>> {
    check_origin(grid)?;
    check_inside(grid, targets)?;
    let n = grid.len() as f64;
    Ok(targets
        .par_iter()
        .map(|&z| {
            let mut s = ZERO;
            for (&t, &gl) in grid.nodes.iter().zip(g) {
                s += gl * (t + z) / (t - z);
            }
            s / n
        })
        .collect())
}

/// `D_m g = z^m * schwarz(g)`.
pub fn schwarz_dm(grid: &BoundaryGrid, g: &[f64], m: u32, targets: &[C]) -> Result<Vec<C>> {
    Ok(schwarz(grid, g, targets)?
        .into_iter()
        .zip(targets)
        .map(|(s, &z)| z.powu(m) * s)
        .collect())
}

/// `(z/(pi i)) ∮ g(t) dt / (t^{k+1} (t - z))`: the Schwarz integral with its Taylor
/// terms of degree `<= k` removed, divided by `z^k`.
pub fn schwarz_tail(grid: &BoundaryGrid, g: &[f64], k: u32, targets: &[C]) -> Result<Vec<C>> {
    check_origin(grid)?;
    check_inside(grid, targets)?;
    let n = grid.len() as f64;
    let tk: Vec<C> = grid.nodes.iter().map(|t| t.powu(k).inv()).collect();
    Ok(targets
        .par_iter()
        .map(|&z| {
            let mut s = ZERO;
            for ((&t, &gl), &ik) in grid.nodes.iter().zip(g).zip(&tk) {
                s += gl * ik / (t - z);
            }
            s * z * (2.0 / n)
        })
        .collect())
}

/// Fourier modes of boundary data, for evaluating [`schwarz_dm`] and [`schwarz_tail`]
/// on the trigonometric interpolant of `g`. Unlike the trapezoidal sums these stay
/// accurate as the target approaches the circle. The Nyquist mode is dropped.
pub struct SchwarzModes {
    radius: f64,
    /// `c[n] = (1/N) sum_l g_l e^{-i n theta_l}` for `0 <= n < N/2`.
    c: Vec<C>,
}

impl SchwarzModes {
    pub fn new(grid: &BoundaryGrid, g: &[f64]) -> Result<Self> {
        check_origin(grid)?;
        let n = grid.len();
        let c = (0..n.div_ceil(2))
            .into_par_iter()
            .map(|k| {
                let s: C = grid.angles.iter().zip(g).map(|(&th, &gl)| gl * C::from_polar(1.0, -(k as f64) * th)).sum();
                s / n as f64
            })
            .collect();
        Ok(Self { radius: grid.radius, c })
    }

    /// `z^m * schwarz(g)(z)`.
    pub fn dm(&self, z: C, m: u32) -> C {
        let u = z / self.radius;
        let mut s = ZERO;
        for cn in self.c[1..].iter().rev() {
            s = (s + cn * 2.0) * u;
        }
        z.powu(m) * (s + self.c[0])
    }

    /// The tail operator of [`schwarz_tail`] with Taylor degree `k`.
    pub fn tail(&self, z: C, k: u32) -> C {
        let k = k as usize;
        if k + 1 >= self.c.len() {
            return ZERO;
        }
        let u = z / self.radius;
        let mut s = ZERO;
        for cn in self.c[k + 1..].iter().rev() {
            s = (s + cn * 2.0) * u;
        }
        s / self.radius.powi(k as i32)
    }
}

/// Reflection operator `Q_m f` at targets, for a mesh centered at 0.
pub fn qm_area(mesh: &DiskMesh, f: &[C], m: u32, targets: &[C]) -> Result<Vec<C>> {
    if m == 0 {
        return Err(Error::InvalidInput("Q_m needs m >= 1".into()));
    }
    if mesh.center != ZERO {
        return Err(Error::InvalidInput("Q_m needs a disk centered at 0".into()));
    }
    let r2 = mesh.radius * mesh.radius;
    let r2m = mesh.radius.powi(2 * m as i32);
    let moment: C = mesh
        .nodes
        .iter()
        .zip(&mesh.weights)
        .zip(f)
        .map(|((zeta, &w), fj)| fj.conj() * w / zeta.conj())
        .sum();
    Ok(targets
        .par_iter()
        .map(|&z| {
            let mut s = ZERO;
            for ((zeta, &w), fj) in mesh.nodes.iter().zip(&mesh.weights).zip(f) {
                s += fj.conj() * w / (r2 - zeta.conj() * z);
            }
            -(z.powu(2 * m) * s + z.powu(2 * m - 1) * moment) / (PI * r2m)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_boundary_grid, build_disk_mesh};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn unit(n_r: usize, n_t: usize) -> Arc<DiskMesh> {
        Arc::new(build_disk_mesh(1.0, ZERO, n_r, n_t, 2.0).unwrap())
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let m = unit(8, 16);
        let f = vec![ZERO; m.len()];
        let v = t_area(&m, &f, &[c(0.3, 0.1), m.nodes[5]]);
        assert!(v.iter().all(|x| *x == ZERO));
    }

    #[test]
    fn t_one_is_exact_on_nodes() {
        let m = unit(12, 24);
        let f = vec![c(1.0, 0.0); m.len()];
        let v = t_area(&m, &f, &m.nodes);
        for (x, z) in v.iter().zip(&m.nodes) {
            assert!((x - z.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn pinned_vanishes_at_a() {
        let m = unit(8, 16);
        let f: Vec<C> = m.nodes.iter().map(|z| z * z.conj() + 1.0).collect();
        let v = t_area_pinned(&m, &f, &[ZERO, c(0.5, 0.0)], ZERO);
        assert_eq!(v[0], ZERO);
    }

    #[test]
    fn operator_matches_free_functions() {
        let m = unit(6, 12);
        let f: Vec<C> = m.nodes.iter().map(|z| z.conj() * z.norm() + c(0.2, -0.1)).collect();
        let op = AreaOperator::pinned(m.clone(), 1.0);
        let a = op.apply(&f);
        let b = t_area_pinned(&m, &f, &m.nodes, ZERO);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn star_examples() {
        let m = unit(6, 12);
        let v: Vec<C> = m.nodes.clone();
        let z = CoefficientPair::zero(&m);
        assert!(apply_star(&m, &v, &z).iter().all(|x| *x == ZERO));
        let a1 = CoefficientPair::constant(&m, c(1.0, 0.0), ZERO);
        for x in apply_star(&m, &v, &a1) {
            assert!((x.norm() - 1.0).abs() < 1e-14);
        }
        let real: Vec<C> = m.nodes.iter().map(|z| c(z.re, 0.0)).collect();
        let b1 = CoefficientPair::constant(&m, ZERO, c(1.0, 0.0));
        assert_eq!(apply_star(&m, &real, &a1), apply_star(&m, &real, &b1));
    }

    #[test]
    fn mu_is_sum_of_maxima() {
        let m = unit(6, 12);
        let p = CoefficientPair::constant(&m, c(0.3, 0.0), c(0.0, 0.2));
        assert!((p.mu - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cauchy_examples() {
        let g = build_boundary_grid(ZERO, 1.0, 256).unwrap();
        let targets = [c(0.1, 0.2), c(-0.5, 0.4), c(0.0, -0.7)];
        let k = cauchy_boundary(&g, &vec![c(2.0, -1.0); 256], &targets).unwrap();
        assert!(k.iter().all(|v| (v - c(2.0, -1.0)).norm() < 1e-12));
        let k = cauchy_boundary(&g, &g.nodes, &targets).unwrap();
        for (v, z) in k.iter().zip(&targets) {
            assert!((v - z).norm() <= 1e-10);
        }
        let conj: Vec<C> = g.nodes.iter().map(|t| t.conj()).collect();
        let k = cauchy_boundary(&g, &conj, &targets).unwrap();
        assert!(k.iter().all(|v| v.norm() <= 1e-10));
        assert!(cauchy_boundary(&g, &conj, &[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn schwarz_examples() {
        let g = build_boundary_grid(ZERO, 1.0, 256).unwrap();
        let targets = [c(0.1, 0.2), c(-0.5, 0.4), c(0.0, -0.7)];
        let one = vec![1.0; 256];
        for v in schwarz_dm(&g, &one, 0, &targets).unwrap() {
            assert!((v - 1.0).norm() <= 1e-10);
        }
        let cos: Vec<f64> = g.angles.iter().map(|t| t.cos()).collect();
        for (v, z) in schwarz_dm(&g, &cos, 0, &targets).unwrap().iter().zip(&targets) {
            assert!((v - z).norm() <= 1e-10);
        }
        let zero = vec![0.0; 256];
        assert!(schwarz_dm(&g, &zero, 3, &targets).unwrap().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn dm_shift_identity() {
        let g = build_boundary_grid(ZERO, 1.0, 128).unwrap();
        let gv: Vec<f64> = g.angles.iter().map(|t| (2.0 * t).sin() + 0.3 * t.cos()).collect();
        let targets = [c(0.2, 0.1), c(-0.4, 0.3)];
        let d1 = schwarz_dm(&g, &gv, 1, &targets).unwrap();
        let d2 = schwarz_dm(&g, &gv, 2, &targets).unwrap();
        for ((a, b), z) in d1.iter().zip(&d2).zip(&targets) {
            assert!((z * a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn tail_removes_low_modes() {
        // g = Re(t^3) + Re(t): keep only degree > 1, divided by z.
        let g = build_boundary_grid(ZERO, 1.0, 128).unwrap();
        let gv: Vec<f64> = g.angles.iter().map(|t| (3.0 * t).cos() + t.cos()).collect();
        let z = c(0.3, -0.2);
        let v = schwarz_tail(&g, &gv, 1, &[z]).unwrap()[0];
        assert!((v - z * z).norm() < 1e-12);
        let v0 = schwarz_tail(&g, &gv, 0, &[z]).unwrap()[0];
        let s = schwarz(&g, &gv, &[z, ZERO]).unwrap();
        assert!((v0 - (s[0] - s[1])).norm() < 1e-12);
    }

    #[test]
    fn qm_examples() {
        let m = unit(6, 12);
        let f: Vec<C> = m.nodes.iter().map(|z| z.conj() + c(0.5, 0.5)).collect();
        let zero = vec![ZERO; m.len()];
        assert!(qm_area(&m, &zero, 2, &[c(0.3, 0.1)]).unwrap()[0] == ZERO);
        assert_eq!(qm_area(&m, &f, 1, &[ZERO]).unwrap()[0], ZERO);
        let alpha = c(0.7, -1.3);
        let fa: Vec<C> = f.iter().map(|v| v * alpha).collect();
        let t = [c(0.3, 0.1), c(-0.2, 0.5)];
        let q = qm_area(&m, &f, 2, &t).unwrap();
        let qa = qm_area(&m, &fa, 2, &t).unwrap();
        for (x, y) in q.iter().zip(&qa) {
            assert!((x * alpha.conj() - y).norm() < 1e-13);
        }
        assert!(qm_area(&m, &f, 0, &t).is_err());
    }

    #[test]
    fn reflection_entries_match_qm_away_from_the_circle() {
        let m = unit(6, 12);
        let f: Vec<C> = m.nodes.iter().map(|z| z * z.norm() + c(0.1, 0.0)).collect();
        let op = AreaOperator::new(m.clone(), Some(ZERO), Reflection::Positive { m: 2 }, 1.0).unwrap();
        for i in [5, 17] {
            let lv: C = (0..m.len()).map(|j| op.l_entry(i, j) * f[j].conj()).sum();
            let q = qm_area(&m, &f, 2, &[m.nodes[i]]).unwrap()[0] * m.nodes[i];
            assert!((lv - q).norm() < 1e-8 * q.norm());
        }
    }

    #[test]
    fn node_entries_agree_with_product_evaluation() {
        let m = unit(6, 12);
        let h: Vec<C> = m.nodes.iter().map(|z| z.conj() * z + c(0.2, -0.1) * z).collect();
        for refl in [Reflection::Positive { m: 2 }, Reflection::Negative { k: 1 }] {
            let op = AreaOperator::new(m.clone(), Some(ZERO), refl, 1.0).unwrap();
            let plain = AreaOperator::new(m.clone(), Some(ZERO), Reflection::None, 1.0).unwrap();
            for i in [3, 30, 70] {
                let lv: C = (0..m.len()).map(|j| op.l_entry(i, j) * h[j].conj()).sum();
                // Reflection part only: drop the Cauchy part evaluated the same way.
                let pv = op.apply_product(&h, &[m.nodes[i]])[0] - plain.apply_product(&h, &[m.nodes[i]])[0];
                assert!((lv - pv).norm() < 1e-12, "{refl:?} row {i}: {lv} vs {pv}");
            }
        }
    }

    #[test]
    fn product_evaluation_meets_the_boundary_condition() {
        // On |t| = R the pinned Cauchy part and the Q_m reflection cancel in Re[t^-m .].
        let m = unit(8, 16);
        let h: Vec<C> = m.nodes.iter().map(|z| (z * 3.0).exp() + z.conj() * c(0.3, 0.7)).collect();
        for mm in 1..=3u32 {
            let op = AreaOperator::new(m.clone(), Some(ZERO), Reflection::Positive { m: mm }, 1.0).unwrap();
            let ts: Vec<C> = (0..7).map(|k| C::from_polar(1.0, 0.9 * k as f64 + 0.1)).collect();
            for (t, v) in ts.iter().zip(op.apply_product(&h, &ts)) {
                assert!((t.powi(-(mm as i32)) * v).re.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn schwarz_modes_agree_with_trapezoid_sums() {
        let grid = build_boundary_grid(ZERO, 1.5, 128).unwrap();
        let g: Vec<f64> = grid.nodes.iter().map(|t| (t * t * t).re + t.im.exp()).collect();
        let modes = SchwarzModes::new(&grid, &g).unwrap();
        let pts = [c(0.2, -0.1), c(-0.5, 0.7), c(0.0, 0.0)];
        let dm = schwarz_dm(&grid, &g, 2, &pts).unwrap();
        let tail = schwarz_tail(&grid, &g, 1, &pts).unwrap();
        for (j, &z) in pts.iter().enumerate() {
            assert!((modes.dm(z, 2) - dm[j]).norm() < 1e-12);
            assert!((modes.tail(z, 1) - tail[j]).norm() < 1e-12);
        }
        // Near the circle the series stays close to the boundary data.
        let t = C::from_polar(1.5 * 0.999, 0.3);
        let want = (t * t * t).re + t.im.exp();
        assert!((modes.dm(t, 0).re - want).abs() < 1e-2);
    }
}
