//! Real-linear systems `V + K h + L conj(h) = rhs` with `h = sA V + sB conj(V)`,
//! solved over the stacked real and imaginary parts.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::{AreaOperator, Reflection};

type C = Complex64;

/// The operator `V -> V + K h + L conj(h)`.
pub struct RealLinearOperator<'a> {
    pub area: &'a AreaOperator,
    /// `A0 / |z - a|` at the nodes.
    pub sa: Vec<C>,
    /// `B0 / |z - a|` at the nodes.
    pub sb: Vec<C>,
}

impl<'a> RealLinearOperator<'a> {
    pub fn len(&self) -> usize {
        self.sa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sa.is_empty()
    }

    pub fn star(&self, v: &[C]) -> Vec<C> {
        v.iter()
            .zip(self.sa.iter().zip(&self.sb))
            .map(|(x, (a, b))| a * x + b * x.conj())
            .collect()
    }

    /// `K h + L conj(h)` for `h = star(v)`.
    pub fn apply_compact(&self, v: &[C]) -> Vec<C> {
        self.area.apply(&self.star(v))
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        let mut out = self.apply_compact(v);
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
        out
    }

    /// Dense `2N x 2N` real matrix acting on `[Re V; Im V]`.
    pub fn assemble(&self) -> Mat<f64> {
        let n = self.len();
        let refl = self.area.reflection != Reflection::None;
        let cols: Vec<Vec<(C, C)>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let (sa, sb) = (self.sa[j], self.sb[j]);
                (0..n)
                    .map(|i| {
                        let k = self.area.k_entry(i, j);
                        let (mut cc, mut dd) = (k * sa, k * sb);
                        if refl {
                            let l = self.area.l_entry(i, j);
                            cc += l * sb.conj();
                            dd += l * sa.conj();
                        }
                        (cc, dd)
                    })
                    .collect()
            })
            .collect();
        let mut m = Mat::<f64>::zeros(2 * n, 2 * n);
        for (j, col) in cols.into_iter().enumerate() {
            for (i, (cc, dd)) in col.into_iter().enumerate() {
                m[(i, j)] = cc.re + dd.re;
                m[(i, n + j)] = -cc.im + dd.im;
                m[(n + i, j)] = cc.im + dd.im;
                m[(n + i, n + j)] = cc.re - dd.re;
            }
            m[(j, j)] += 1.0;
            m[(n + j, n + j)] += 1.0;
        }
        m
    }
}

pub fn split(v: &[C]) -> Vec<f64> {
    v.iter().map(|x| x.re).chain(v.iter().map(|x| x.im)).collect()
}

pub fn join(x: &[f64]) -> Vec<C> {
    let n = x.len() / 2;
    (0..n).map(|i| C::new(x[i], x[n + i])).collect()
}

/// LU factorization of the real matrix with a 1-norm condition estimate.
pub struct DenseSolver {
    lu: PartialPivLu<f64>,
    dim: usize,
    norm1: f64,
}

impl DenseSolver {
    pub fn factor(m: Mat<f64>) -> Result<Self> {
        let dim = m.nrows();
        let norm1 = (0..dim)
            .map(|j| (0..dim).map(|i| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if !norm1.is_finite() {
            return Err(Error::Numerical("system matrix has non-finite entries".into()));
        }
        let lu = m.partial_piv_lu();
        Ok(DenseSolver { lu, dim, norm1 })
    }

    pub fn solve_real(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(self.dim, 1, |i, _| b[i]);
        self.lu.solve_in_place(&mut x);
        (0..self.dim).map(|i| x[(i, 0)]).collect()
    }

    fn solve_real_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(self.dim, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(&mut x);
        (0..self.dim).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve(&self, rhs: &[C]) -> Result<Vec<C>> {
        let x = self.solve_real(&split(rhs));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("singular system: solution is not finite".into()));
        }
        Ok(join(&x))
    }

    /// Estimate of the 1-norm condition number (Hager's method with Higham's
    /// alternating-sign safeguard).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim;
        let norm1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve_real(&x);
            est = norm1(&y);
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_real_transpose(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            x = vec![0.0; n];
            x[j] = 1.0;
            last_j = j;
        }
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        let alt_est = 2.0 * norm1(&self.solve_real(&alt)) / (3.0 * n as f64);
        let inv = est.max(alt_est);
        if inv.is_finite() {
            self.norm1 * inv
        } else {
            f64::INFINITY
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct IterInfo {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Restarted GMRES on the stacked real system, matrix-free.
pub fn gmres<F>(apply: F, b: &[f64], tol: f64, restart: usize, max_iter: usize) -> (Vec<f64>, IterInfo)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let nrm = |u: &[f64]| dot(u, u).sqrt();
    let bnorm = nrm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, IterInfo { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = nrm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            return (x, IterInfo { iterations: total, relative_residual: rel, converged: true });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        for _ in 0..restart {
            if total >= max_iter {
                break;
            }
            total += 1;
            let mut w = apply(basis.last().unwrap());
            let mut col = Vec::with_capacity(basis.len() + 1);
            for v in &basis {
                let hij = dot(&w, v);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * vi;
                }
                col.push(hij);
            }
            let hn = nrm(&w);
            col.push(hn);
            for k in 0..cs.len() {
                let t = cs[k] * col[k] + sn[k] * col[k + 1];
                col[k + 1] = -sn[k] * col[k] + cs[k] * col[k + 1];
                col[k] = t;
            }
            let k = cs.len();
            let d = col[k].hypot(col[k + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (col[k] / d, col[k + 1] / d) };
            col[k] = d;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[k]);
            g[k] *= c;
            h.push(col);
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let m = h.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for j in i + 1..m {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
    }
    let ax = apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    rel = rel.max(nrm(&r) / bnorm);
    let converged = rel <= tol;
    (x, IterInfo { iterations: total, relative_residual: rel, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;
    use std::sync::Arc;

    #[test]
    fn assembled_matrix_matches_operator() {
        let mesh = Arc::new(build_disk_mesh(1.0, C::new(0.0, 0.0), 4, 8, 2.0).unwrap());
        let area = AreaOperator::new(mesh.clone(), Some(mesh.a), Reflection::Positive { m: 1 }, 1.0).unwrap();
        let n = mesh.len();
        let sa: Vec<C> = mesh.nodes.iter().map(|z| C::new(0.3, 0.1) / z.norm()).collect();
        let sb: Vec<C> = mesh.nodes.iter().map(|z| C::new(-0.1, 0.2) * z / z.norm()).collect();
        let op = RealLinearOperator { area: &area, sa, sb };
        let v: Vec<C> = (0..n).map(|i| C::new((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
        let direct = op.apply(&v);
        let m = op.assemble();
        let x = split(&v);
        let y: Vec<f64> = (0..2 * n).map(|i| (0..2 * n).map(|j| m[(i, j)] * x[j]).sum()).collect();
        for (a, b) in join(&y).iter().zip(&direct) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn lu_and_gmres_agree() {
        let n = 40;
        let m = Mat::from_fn(n, n, |i, j| {
            if i == j {
                3.0
            } else {
                ((i * 7 + j * 3) % 11) as f64 / 40.0 - 0.1
            }
        });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let apply = |x: &[f64]| (0..n).map(|i| (0..n).map(|j| m[(i, j)] * x[j]).sum()).collect();
        let (xg, info) = gmres(apply, &b, 1e-13, 10, 200);
        assert!(info.converged);
        let lu = DenseSolver::factor(m.clone()).unwrap();
        let xl = lu.solve_real(&b);
        for (p, q) in xg.iter().zip(&xl) {
            assert!((p - q).abs() < 1e-11);
        }
        let k = lu.condition_estimate();
        assert!(k > 1.0 && k < 10.0, "{k}");
    }

    #[test]
    fn condition_estimate_sees_near_singularity() {
        let n = 10;
        let mut m = Mat::<f64>::identity(n, n);
        m[(3, 3)] = 1e-9;
        let k = DenseSolver::factor(m).unwrap().condition_estimate();
        assert!(k >= 1e9 * 0.99, "{k}");
    }
}
