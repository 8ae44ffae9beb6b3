//! Periodic unit-cell corrector problem and the effective tensor.
//!
//! The reference cell is `[0,1]²` minus the open disk of radius `γ̂`
//! centred at `(0.5, 0.5)`. Correctors `μ_i` satisfy
//! `∫_{Y¹} (e_i + ∇μ_i)·∇φ = 0` for all periodic P1 test functions `φ`,
//! with the natural (zero-flux) condition on the circle and zero mean
//! over `Y¹`. The effective tensor is `Π_ij = ∫_{Y¹} (δ_ij + ∂_j μ_i)`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg::{conjugate_gradient, norm, CsrMatrix};

const CENTER: [f64; 2] = [0.5, 0.5];

/// Normalized exclusion radius and target resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCellGeometry {
    /// `γ/δ`, in `[0, 0.5)`.
    pub gamma_hat: f64,
    /// Elements per cell edge.
    pub resolution: usize,
}

impl UnitCellGeometry {
    pub fn new(gamma_hat: f64, resolution: usize) -> Result<Self> {
        if !(0.0..0.5).contains(&gamma_hat) {
            return Err(invalid("gamma_hat", "exclusion radius must lie in [0, 0.5)"));
        }
        if resolution < 2 {
            return Err(invalid("resolution", "need at least 2 elements per edge"));
        }
        Ok(UnitCellGeometry { gamma_hat, resolution })
    }
}

/// `|Y¹| = 1 - π γ̂²`.
pub fn fluid_fraction(gamma_hat: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&gamma_hat) {
        return Err(invalid("gamma_hat", "exclusion radius must lie in [0, 0.5)"));
    }
    Ok(1.0 - PI * gamma_hat * gamma_hat)
}

/// Conforming P1 triangulation of the perforated cell with periodic
/// identification of opposite edges.
#[derive(Debug, Clone)]
pub struct CellMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// `master[i]` is the representative of node `i`'s periodic class.
    pub master: Vec<usize>,
    /// Nodes on the exclusion boundary.
    pub circle_nodes: Vec<usize>,
    pub gamma_hat: f64,
}

fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Square perimeter point `k` of `4n`, counter-clockwise from corner `(1, 0)`.
fn perimeter_point(k: usize, n: usize) -> [f64; 2] {
    let k = k % (4 * n);
    let (edge, j) = (k / n, (k % n) as f64 / n as f64);
    match edge {
        0 => [1.0, j],
        1 => [1.0 - j, 1.0],
        2 => [0.0, 1.0 - j],
        _ => [j, 0.0],
    }
}

/// Quad `(a, b, c, d)` in counter-clockwise order split into four triangles
/// around its centroid, which is appended to `nodes`.
fn split_quad(nodes: &mut Vec<[f64; 2]>, tris: &mut Vec<[usize; 3]>, q: [usize; 4]) {
    let mut c = [0.0, 0.0];
    for &i in &q {
        c[0] += 0.25 * nodes[i][0];
        c[1] += 0.25 * nodes[i][1];
    }
    let ci = nodes.len();
    nodes.push(c);
    for e in 0..4 {
        tris.push([q[e], q[(e + 1) % 4], ci]);
    }
}

fn lattice_key(p: [f64; 2], n: usize) -> (i64, i64) {
    let scale = n as f64 * 4096.0;
    (libm::round(p[0] * scale) as i64, libm::round(p[1] * scale) as i64)
}

/// Triangulates the perforated unit cell.
///
/// Rays at uniform angles join `4n` nodes on the circle to the `4n`
/// uniformly spaced perimeter points; the resulting quads are split about
/// their centroids. The mesh is invariant under the full square symmetry
/// group, so mirror and rotation identities of the correctors hold exactly.
pub fn triangulate_cell(geom: &UnitCellGeometry) -> Result<CellMesh> {
    let n = geom.resolution;
    let g = geom.gamma_hat;
    let mut nodes = Vec::new();
    let mut tris = Vec::new();
    let mut circle_nodes = Vec::new();

    if g == 0.0 {
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                split_quad(&mut nodes, &mut tris, [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    } else {
        let ring = 4 * n;
        if ring < 16 {
            return Err(Error::MeshTooCoarse { circle_nodes: ring });
        }
        let layers = {
            let span = core::f64::consts::FRAC_1_SQRT_2 - g;
            libm::ceil(n as f64 * span).max(2.0) as usize
        };
        for j in 0..=layers {
            let t = j as f64 / layers as f64;
            for k in 0..ring {
                let theta = -PI / 4.0 + 2.0 * PI * k as f64 / ring as f64;
                let (s, c) = (libm::sin(theta), libm::cos(theta));
                let p = perimeter_point(k, n);
                nodes.push([
                    CENTER[0] + (1.0 - t) * g * c + t * (p[0] - CENTER[0]),
                    CENTER[1] + (1.0 - t) * g * s + t * (p[1] - CENTER[1]),
                ]);
            }
        }
        circle_nodes.extend(0..ring);
        let id = |k: usize, j: usize| j * ring + (k % ring);
        for j in 0..layers {
            for k in 0..ring {
                split_quad(&mut nodes, &mut tris, [id(k, j), id(k, j + 1), id(k + 1, j + 1), id(k + 1, j)]);
            }
        }
    }

    // periodic classes: wrap x = 1 -> 0 and y = 1 -> 0
    let mut master: Vec<usize> = (0..nodes.len()).collect();
    let mut first: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let on = |v: f64, target: f64| libm::fabs(v - target) < 1e-12;
    for (i, p) in nodes.iter().enumerate() {
        let boundary = on(p[0], 0.0) || on(p[0], 1.0) || on(p[1], 0.0) || on(p[1], 1.0);
        if !boundary {
            continue;
        }
        let wrapped = [if on(p[0], 1.0) { 0.0 } else { p[0] }, if on(p[1], 1.0) { 0.0 } else { p[1] }];
        let key = lattice_key(wrapped, n);
        let m = *first.entry(key).or_insert(i);
        master[i] = m;
    }

    let mesh = CellMesh { nodes, triangles: tris, master, circle_nodes, gamma_hat: g };
    for t in &mesh.triangles {
        if triangle_area(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]) <= 0.0 {
            return Err(Error::Singular { what: "cell triangulation (inverted element)" });
        }
    }
    Ok(mesh)
}

impl CellMesh {
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.tri_area(t)).sum()
    }

    fn tri_area(&self, t: &[usize; 3]) -> f64 {
        triangle_area(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]])
    }

    /// Gradients of the three barycentric basis functions and the area.
    fn basis_gradients(&self, t: &[usize; 3]) -> ([[f64; 2]; 3], f64) {
        let p = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]];
        let area = self.tri_area(t);
        let mut g = [[0.0; 2]; 3];
        for a in 0..3 {
            let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
            g[a] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
        }
        (g, area)
    }

    /// Index of the node at `p` (after periodic wrapping), if any.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let n = self.nodes.len();
        let mut best = None;
        let mut best_d = 1e-9;
        for i in 0..n {
            let q = self.nodes[i];
            let d = libm::hypot(q[0] - p[0], q[1] - p[1]);
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        best
    }
}

/// A solved corrector, stored per mesh node.
#[derive(Debug, Clone)]
pub struct Corrector {
    pub direction: usize,
    pub values: Vec<f64>,
    /// Relative residual of the assembled system.
    pub residual: f64,
}

/// Solves the periodic corrector problem for unit direction `e_direction`.
pub fn solve_corrector(mesh: &CellMesh, direction: usize) -> Result<Corrector> {
    if direction > 1 {
        return Err(invalid("direction", "axis index must be 0 or 1"));
    }
    let nn = mesh.nodes.len();
    // compact numbering of periodic classes
    let mut dof = vec![usize::MAX; nn];
    let mut ndof = 0;
    for i in 0..nn {
        let m = mesh.master[i];
        if dof[m] == usize::MAX {
            dof[m] = ndof;
            ndof += 1;
        }
        dof[i] = dof[m];
    }
    let mut trip = Vec::with_capacity(mesh.triangles.len() * 9);
    let mut rhs = vec![0.0; ndof];
    let mut mass = vec![0.0; ndof];
    for t in &mesh.triangles {
        let (g, area) = mesh.basis_gradients(t);
        for a in 0..3 {
            let da = dof[t[a]];
            rhs[da] -= area * g[a][direction];
            mass[da] += area / 3.0;
            for b in 0..3 {
                let k = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                trip.push((da, dof[t[b]], k));
            }
        }
    }
    let k = CsrMatrix::from_triplets(ndof, trip);
    let mut x = vec![0.0; ndof];
    let b_norm = norm(&rhs);
    if b_norm > 0.0 {
        conjugate_gradient(&k, &rhs, &mut x, 1e-13, 20 * ndof + 100, &|_| {})?;
    }
    let total: f64 = mass.iter().sum();
    let mean = x.iter().zip(&mass).map(|(v, m)| v * m).sum::<f64>() / total;
    x.iter_mut().for_each(|v| *v -= mean);
    let mut kx = vec![0.0; ndof];
    k.mul(&x, &mut kx);
    let res: Vec<f64> = kx.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let residual = if b_norm > 0.0 { norm(&res) / b_norm } else { norm(&res) };
    let values = (0..nn).map(|i| x[dof[i]]).collect();
    Ok(Corrector { direction, values, residual })
}

/// Homogenized diffusion scaling and fluid fraction of the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTensor {
    pub pi: [[f64; 2]; 2],
    /// `|Y¹|`.
    pub fluid_fraction: f64,
}

impl EffectiveTensor {
    /// The tensor of a cell with no exclusion: `Π = I`, `|Y¹| = 1`.
    pub fn identity() -> Self {
        EffectiveTensor { pi: [[1.0, 0.0], [0.0, 1.0]], fluid_fraction: 1.0 }
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [c, d]] = self.pi;
        let tr = a + d;
        let det = a * d - b * c;
        let disc = libm::sqrt((0.25 * tr * tr - det).max(0.0));
        [0.5 * tr - disc, 0.5 * tr + disc]
    }

    /// Scalar conductivity factor used by the radial solver.
    pub fn scalar(&self) -> f64 {
        0.5 * (self.pi[0][0] + self.pi[1][1])
    }
}

/// `Π_ij = ∫_{Y¹} (δ_ij + ∂_j μ_i)` by one-point quadrature per triangle.
pub fn effective_tensor(mesh: &CellMesh, correctors: [&Corrector; 2]) -> Result<EffectiveTensor> {
    let mut pi = [[0.0; 2]; 2];
    for t in &mesh.triangles {
        let (g, area) = mesh.basis_gradients(t);
        for (i, corr) in correctors.iter().enumerate() {
            let mut grad = [0.0; 2];
            for a in 0..3 {
                let v = corr.values[t[a]];
                grad[0] += v * g[a][0];
                grad[1] += v * g[a][1];
            }
            for j in 0..2 {
                let kron = if i == j { 1.0 } else { 0.0 };
                pi[i][j] += area * (kron + grad[j]);
            }
        }
    }
    let off = 0.5 * (pi[0][1] + pi[1][0]);
    pi[0][1] = off;
    pi[1][0] = off;
    Ok(EffectiveTensor { pi, fluid_fraction: fluid_fraction(mesh.gamma_hat)? })
}

/// Mesh, both correctors and the tensor for one geometry.
pub fn compute_effective_tensor(geom: &UnitCellGeometry) -> Result<EffectiveTensor> {
    if geom.gamma_hat == 0.0 {
        return Ok(EffectiveTensor::identity());
    }
    let mesh = triangulate_cell(geom)?;
    let mu1 = solve_corrector(&mesh, 0)?;
    let mu2 = solve_corrector(&mesh, 1)?;
    effective_tensor(&mesh, [&mu1, &mu2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_square_has_no_circle() {
        let mesh = triangulate_cell(&UnitCellGeometry::new(0.0, 8).unwrap()).unwrap();
        assert!(mesh.circle_nodes.is_empty());
        assert!((mesh.area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nodes_outside_disk() {
        let mesh = triangulate_cell(&UnitCellGeometry::new(0.45, 32).unwrap()).unwrap();
        for p in &mesh.nodes {
            assert!(libm::hypot(p[0] - 0.5, p[1] - 0.5) >= 0.45 - 1e-12);
        }
        assert_eq!(mesh.circle_nodes.len(), 128);
    }

    #[test]
    fn area_matches_perforated_square() {
        let mesh = triangulate_cell(&UnitCellGeometry::new(0.45, 64).unwrap()).unwrap();
        let exact = 1.0 - PI * 0.45 * 0.45;
        assert!((exact - 0.36383).abs() < 1e-5);
        assert!((mesh.area() - exact).abs() < 2e-3);
    }

    #[test]
    fn coarse_resolution_rejected() {
        let g = UnitCellGeometry::new(0.3, 3).unwrap();
        assert_eq!(triangulate_cell(&g).unwrap_err(), Error::MeshTooCoarse { circle_nodes: 12 });
    }

    #[test]
    fn geometry_validation() {
        assert!(UnitCellGeometry::new(0.6, 16).is_err());
        assert!(UnitCellGeometry::new(0.5, 16).is_err());
        assert!(UnitCellGeometry::new(-0.1, 16).is_err());
    }

    #[test]
    fn periodic_partners() {
        let mesh = triangulate_cell(&UnitCellGeometry::new(0.3, 8).unwrap()).unwrap();
        let mut classes: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, p) in mesh.nodes.iter().enumerate() {
            let on_edge = p[0] < 1e-12 || p[0] > 1.0 - 1e-12 || p[1] < 1e-12 || p[1] > 1.0 - 1e-12;
            if on_edge {
                *classes.entry(mesh.master[i]).or_default() += 1;
            } else {
                assert_eq!(mesh.master[i], i);
            }
        }
        let corners = classes.values().filter(|&&c| c == 4).count();
        let pairs = classes.values().filter(|&&c| c == 2).count();
        assert_eq!(corners, 1);
        assert_eq!(pairs + corners, classes.len());
        assert_eq!(pairs, 2 * (8 - 1));
    }

    #[test]
    fn fluid_fraction_values() {
        assert_eq!(fluid_fraction(0.0).unwrap(), 1.0);
        assert!((fluid_fraction(0.45).unwrap() - 0.36383).abs() < 5e-6);
        assert!((fluid_fraction(0.25).unwrap() - 0.80365).abs() < 5e-6);
        assert!(fluid_fraction(0.5).is_err());
    }

    #[test]
    fn no_hole_gives_zero_corrector_and_identity() {
        let mesh = triangulate_cell(&UnitCellGeometry::new(0.0, 8).unwrap()).unwrap();
        let mu1 = solve_corrector(&mesh, 0).unwrap();
        let mu2 = solve_corrector(&mesh, 1).unwrap();
        assert!(mu1.values.iter().all(|v| v.abs() < 1e-14));
        let t = effective_tensor(&mesh, [&mu1, &mu2]).unwrap();
        assert!((t.pi[0][0] - 1.0).abs() < 1e-13 && (t.pi[1][1] - 1.0).abs() < 1e-13);
        assert!(t.pi[0][1].abs() < 1e-13);
    }

    #[test]
    fn corrector_symmetries() {
        let mesh = triangulate_cell(&UnitCellGeometry::new(0.35, 12).unwrap()).unwrap();
        let mu1 = solve_corrector(&mesh, 0).unwrap();
        let mu2 = solve_corrector(&mesh, 1).unwrap();
        assert!(mu1.residual <= 1e-10);
        for (i, p) in mesh.nodes.iter().enumerate() {
            let mirror = mesh.locate([1.0 - p[0], p[1]]).expect("mirror node");
            assert!((mu1.values[i] + mu1.values[mirror]).abs() < 1e-8);
            // μ_2(c + v) = μ_1(c + (v_2, -v_1))
            let v = [p[0] - 0.5, p[1] - 0.5];
            let rot = mesh.locate([0.5 + v[1], 0.5 - v[0]]).expect("rotated node");
            assert!((mu2.values[i] - mu1.values[rot]).abs() < 1e-8);
        }
    }
}
