//! Operator values against oracles computed here without the crate's quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use vekua::fredholm::m_beta_at;
use vekua::mesh::build_disk_mesh;
use vekua::operators::{AreaOperator, Reflection};
use vekua::Complex64 as C;

const ORIGIN: C = C::new(0.0, 0.0);

fn agm(mut a: f64, mut b: f64) -> f64 {
    while (a - b).abs() > 1e-15 * a {
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    a
}

/// Tanh-sinh quadrature on `[a, b]`; tolerates integrable endpoint singularities.
fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, d) = (0.5 * (a + b), 0.5 * (b - a));
    let h = 1.0 / 64.0;
    let mut s = 0.0;
    for k in -256i32..=256 {
        let t = k as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let x = c + d * u.tanh();
        let w = d * 0.5 * PI * t.cosh() / (u.cosh() * u.cosh());
        if x > a && x < b {
            s += w * f(x);
        }
    }
    s * h
}

/// `M_beta` at `x > 0` on the unit disk with `a = 0`. The angular integral of
/// `1 / |r e^{i theta} - x|` is `4 K(k) / (r + x)`, `K` from the AGM.
fn m_beta_oracle(beta: f64, x: f64) -> f64 {
    let g = |r: f64| {
        let kprime = (r - x).abs() / (r + x);
        let kk = PI / (2.0 * agm(1.0, kprime));
        r.powf(-beta) * 4.0 * kk / (r + x)
    };
    x.powf(beta) / PI * (tanh_sinh(g, 0.0, x) + tanh_sinh(g, x, 1.0))
}

/// `T_G f` for a polynomial `f` in `conj(zeta)` by polar coordinates about `z`; the
/// radial integral is done exactly and the periodic angular one by the trapezoidal rule.
fn t_conj_oracle(z: C) -> C {
    let n = 2000;
    let mut s = ORIGIN;
    for k in 0..n {
        let phi = 2.0 * PI * k as f64 / n as f64;
        let e = C::from_polar(1.0, phi);
        let p = (z.conj() * e).re;
        let rho = -p + (p * p + 1.0 - z.norm_sqr()).sqrt();
        // integral over [0, rho] of conj(z + t e) dt
        let inner = z.conj() * rho + e.conj() * (rho * rho / 2.0);
        s += e.conj() * inner;
    }
    -s * (2.0 / n as f64)
}

#[test]
fn m_beta_against_elliptic_integral_oracle() {
    let mesh = build_disk_mesh(1.0, ORIGIN, 24, 48, 2.0).unwrap();
    for &x in &[0.05, 0.2, 0.5, 0.8, 0.95] {
        let want = m_beta_oracle(0.5, x);
        let got = m_beta_at(&mesh, 0.5, C::new(x, 0.0));
        assert!((got - want).abs() <= 2e-2 * want, "x = {x}: {got} vs {want}");
    }
}

#[test]
fn m_beta_oracle_approaches_the_plane_value_near_the_center() {
    // Far from the boundary the disk looks like the plane: (Gamma(1/4)/Gamma(3/4))^2.
    let plane = 8.753_802_379_7;
    let v = m_beta_oracle(0.5, 1e-6);
    assert!((v - plane).abs() / plane < 2e-3, "{v}");
}

#[test]
fn cauchy_transform_of_conj_zeta() {
    let mesh = Arc::new(build_disk_mesh(1.0, ORIGIN, 32, 64, 2.0).unwrap());
    let area = AreaOperator::new(mesh.clone(), None, Reflection::None, 1.0).unwrap();
    let f: Vec<C> = mesh.nodes.iter().map(|z| z.conj()).collect();
    let t = area.apply(&f);
    let mut worst: f64 = 0.0;
    for (j, z) in mesh.nodes.iter().enumerate() {
        if z.norm() > 0.9 {
            continue;
        }
        if j % 61 == 0 {
            let want = t_conj_oracle(*z);
            assert!((want - z.conj() * z.conj() / 2.0).norm() < 1e-12);
        }
        worst = worst.max((t[j] - z.conj() * z.conj() / 2.0).norm());
    }
    assert!(worst < 5e-3, "{worst}");
}
