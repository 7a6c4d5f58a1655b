//! Graded polar quadrature on a disk and uniform quadrature on its boundary circle.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Midpoint rule on a polar grid about the disk center, graded toward the center.
///
/// Node `(i, k)` lives at flat index `i * n_t + k`: ring `i` runs outward, angle `k`
/// counter-clockwise from `pi / n_t`.
#[derive(Debug, Clone)]
pub struct DiskMesh {
    pub center: Complex64,
    /// Singular point. Equals `center` unless the caller asked otherwise.
    pub a: Complex64,
    pub radius: f64,
    pub n_r: usize,
    pub n_t: usize,
    pub grading: f64,
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
    /// Radius of the disk with the same area as the cell.
    pub cell_radius: Vec<f64>,
    /// Radial breakpoints `r_0 = 0 < r_1 < ... < r_{n_r} = R`.
    pub breaks: Vec<f64>,
    /// Radial midpoints, one per ring.
    pub ring_radii: Vec<f64>,
    /// Angular midpoints, one per sector.
    pub angles: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DiskMesh {
    /// Disk of radius `radius` centered at the origin with the singular point there too.
    pub fn centered(radius: f64, n_r: usize, n_t: usize, grading: f64) -> Result<Self> {
        build_disk_mesh(radius, Complex64::new(0.0, 0.0), n_r, n_t, grading)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, ring: usize, sector: usize) -> usize {
        ring * self.n_t + sector
    }

    pub fn ring_of(&self, j: usize) -> usize {
        j / self.n_t
    }

    /// Distance from the singular point.
    pub fn dist_to_a(&self, j: usize) -> f64 {
        (self.nodes[j] - self.a).norm()
    }

    pub fn a_is_center(&self) -> bool {
        self.a == self.center
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.radius
    }
}

/// Build the graded polar mesh. The grading is applied about the disk center; an
/// off-center `a` only gets a warning recorded on the mesh.
pub fn build_disk_mesh(
    radius: f64,
    a: Complex64,
    n_r: usize,
    n_t: usize,
    grading: f64,
) -> Result<DiskMesh> {
    build_disk_mesh_about(Complex64::new(0.0, 0.0), radius, a, n_r, n_t, grading)
}

/// As [`build_disk_mesh`] for a disk centered at `center`.
pub fn build_disk_mesh_about(
    center: Complex64,
    radius: f64,
    a: Complex64,
    n_r: usize,
    n_t: usize,
    grading: f64,
) -> Result<DiskMesh> {
    let finite = radius.is_finite()
        && grading.is_finite()
        && a.re.is_finite()
        && a.im.is_finite()
        && center.re.is_finite()
        && center.im.is_finite();
    if !finite {
        return Err(Error::InvalidInput("mesh parameters must be finite".into()));
    }
    if radius <= 0.0 {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    if n_r < 2 || n_t < 4 {
        return Err(Error::InvalidInput(format!(
            "need n_r >= 2 and n_t >= 4, got n_r={n_r}, n_t={n_t}"
        )));
    }
    if grading < 1.0 {
        return Err(Error::InvalidInput(format!("grading must be >= 1, got {grading}")));
    }
    if (a - center).norm() >= radius {
        return Err(Error::InvalidInput(format!(
            "singular point {a} is not strictly inside the disk"
        )));
    }

    let mut warnings = Vec::new();
    if a != center {
        warnings.push(format!(
            "singular point {a} differs from the disk center {center}; grading is applied about the center"
        ));
    }

    let breaks: Vec<f64> = (0..=n_r)
        .map(|i| radius * (i as f64 / n_r as f64).powf(grading))
        .collect();
    let ring_radii: Vec<f64> = breaks.windows(2).map(|b| 0.5 * (b[0] + b[1])).collect();
    let dth = 2.0 * PI / n_t as f64;
    let angles: Vec<f64> = (0..n_t).map(|k| (k as f64 + 0.5) * dth).collect();

    let mut nodes = Vec::with_capacity(n_r * n_t);
    let mut weights = Vec::with_capacity(n_r * n_t);
    let mut cell_radius = Vec::with_capacity(n_r * n_t);
    for i in 0..n_r {
        let w = 0.5 * (breaks[i + 1] * breaks[i + 1] - breaks[i] * breaks[i]) * dth;
        let rho = (w / PI).sqrt();
        for &th in &angles {
            nodes.push(center + Complex64::from_polar(ring_radii[i], th));
            weights.push(w);
            cell_radius.push(rho);
        }
    }

    if let Some(j) = nodes.iter().position(|&z| (z - a).norm() == 0.0) {
        return Err(Error::InvalidInput(format!(
            "singular point coincides with quadrature node {j}"
        )));
    }

    Ok(DiskMesh {
        center,
        a,
        radius,
        n_r,
        n_t,
        grading,
        nodes,
        weights,
        cell_radius,
        breaks,
        ring_radii,
        angles,
        warnings,
    })
}

/// Uniform trapezoid rule on the circle `|t - center| = R`.
#[derive(Debug, Clone)]
pub struct BoundaryGrid {
    pub center: Complex64,
    pub radius: f64,
    pub n_b: usize,
    pub nodes: Vec<Complex64>,
    pub angles: Vec<f64>,
    /// `d theta` per node.
    pub weights: Vec<f64>,
}

impl BoundaryGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub fn build_boundary_grid(center: Complex64, radius: f64, n_b: usize) -> Result<BoundaryGrid> {
    if !(radius.is_finite() && center.re.is_finite() && center.im.is_finite()) {
        return Err(Error::InvalidInput("boundary grid parameters must be finite".into()));
    }
    if radius <= 0.0 {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    if n_b < 8 || n_b % 2 != 0 {
        return Err(Error::InvalidInput(format!("n_b must be even and >= 8, got {n_b}")));
    }
    let dth = 2.0 * PI / n_b as f64;
    let angles: Vec<f64> = (0..n_b).map(|l| l as f64 * dth).collect();
    let nodes = angles
        .iter()
        .map(|&th| center + Complex64::from_polar(radius, th))
        .collect();
    Ok(BoundaryGrid {
        center,
        radius,
        n_b,
        nodes,
        angles,
        weights: vec![dth; n_b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn tiny_mesh_has_exact_area() {
        let m = build_disk_mesh(1.0, c(0.0, 0.0), 2, 4, 1.0).unwrap();
        assert_eq!(m.len(), 8);
        let s: f64 = m.weights.iter().sum();
        assert!((s - PI).abs() < 1e-14);
    }

    #[test]
    fn area_of_radius_two_disk() {
        let m = build_disk_mesh(2.0, c(0.0, 0.0), 17, 30, 2.0).unwrap();
        let s: f64 = m.weights.iter().sum();
        assert!((s - 4.0 * PI).abs() <= 1e-12 * 4.0 * PI);
    }

    #[test]
    fn innermost_break_follows_grading() {
        let m = build_disk_mesh(1.0, c(0.0, 0.0), 32, 64, 2.0).unwrap();
        assert_eq!(m.breaks[1], 1.0 / 1024.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_disk_mesh(1.0, c(1.0, 0.0), 4, 8, 2.0).is_err());
        assert!(build_disk_mesh(1.0, c(0.0, 0.0), 1, 8, 2.0).is_err());
        assert!(build_disk_mesh(1.0, c(0.0, 0.0), 4, 3, 2.0).is_err());
        assert!(build_disk_mesh(1.0, c(0.0, 0.0), 4, 8, 0.5).is_err());
        assert!(build_disk_mesh(f64::NAN, c(0.0, 0.0), 4, 8, 2.0).is_err());
        assert!(build_disk_mesh(-1.0, c(0.0, 0.0), 4, 8, 2.0).is_err());
    }

    #[test]
    fn off_center_point_warns() {
        let m = build_disk_mesh(1.0, c(0.2, 0.1), 4, 8, 2.0).unwrap();
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn boundary_examples() {
        let b = build_boundary_grid(c(0.0, 0.0), 1.0, 8).unwrap();
        assert!((b.nodes[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((b.nodes[2] - c(0.0, 1.0)).norm() < 1e-15);
        let s: f64 = b.weights.iter().sum();
        assert!((s - 2.0 * PI).abs() < 1e-14);
        let b = build_boundary_grid(c(0.0, 0.0), 3.0, 16).unwrap();
        assert!((b.nodes[4] - c(0.0, 3.0)).norm() < 1e-14);
        assert!(build_boundary_grid(c(0.0, 0.0), 1.0, 10).is_ok());
        assert!(build_boundary_grid(c(0.0, 0.0), 1.0, 9).is_err());
        assert!(build_boundary_grid(c(0.0, 0.0), 0.0, 8).is_err());
    }

    #[test]
    fn boundary_nodes_on_circle() {
        let b = build_boundary_grid(c(0.3, -0.2), 2.5, 64).unwrap();
        for t in &b.nodes {
            assert!(((t - b.center).norm() - 2.5).abs() <= 1e-13 * 2.5);
        }
    }
}
