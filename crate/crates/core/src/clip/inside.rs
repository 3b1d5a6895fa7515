//! Inside/outside tests by ray parity.

use crate::mesh::{aabb_of, TriangleMesh, Vec3};

/// Ray directions with no rational relation to the coordinate axes, so rays
/// from lattice points rarely graze edges of axis-aligned geometry. Some
/// digits echo familiar constants; only their irrationality matters.
#[allow(clippy::approx_constant)]
const DIRECTIONS: [[f64; 3]; 5] = [
    [0.577_215_664_9, 0.318_309_886_2, 0.751_988_769_3],
    [-0.414_213_562_4, 0.732_050_807_6, 0.540_302_305_9],
    [0.236_067_977_5, -0.645_751_311_1, 0.726_542_528_0],
    [0.841_470_984_8, 0.909_297_426_8, -0.141_120_008_1],
    [-0.693_147_180_6, -0.301_029_995_7, -0.434_294_481_9],
];

enum Cast {
    Crossings(usize),
    Ambiguous,
}

fn cast(mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3, t_tol: f64) -> Cast {
    const BARY_TOL: f64 = 1e-9;
    let mut hits = 0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let e1 = b - a;
        let e2 = c - a;
        let pvec = dir.cross(&e2);
        let det = e1.dot(&pvec);
        if det.abs() <= 1e-14 * e1.norm() * e2.norm() {
            // Parallel; a ray sliding inside this face also meets its edges.
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&pvec) * inv;
        if !(-BARY_TOL..=1.0 + BARY_TOL).contains(&u) {
            continue;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < -BARY_TOL || u + v > 1.0 + BARY_TOL {
            continue;
        }
        let dist = e2.dot(&q) * inv;
        if dist < -t_tol {
            continue;
        }
        if dist.abs() <= t_tol || u < BARY_TOL || v < BARY_TOL || u + v > 1.0 - BARY_TOL {
            return Cast::Ambiguous;
        }
        hits += 1;
    }
    Cast::Crossings(hits)
}

fn vote(mesh: &TriangleMesh, p: &Vec3, dir: &Vec3, scale: f64) -> Option<bool> {
    match cast(mesh, p, dir, 1e-9 * scale) {
        Cast::Crossings(n) => Some(n % 2 == 1),
        Cast::Ambiguous => None,
    }
}

fn dir(k: usize) -> Vec3 {
    Vec3::from(DIRECTIONS[k % DIRECTIONS.len()]).normalize()
}

/// Parity test for a closed mesh. Rays that hit an edge, a vertex or start
/// on the surface are recast along another direction, then from slightly
/// perturbed origins.
pub fn point_in_mesh(mesh: &TriangleMesh, p: &Vec3) -> bool {
    let b = aabb_of(mesh);
    if b.is_empty() || (0..3).any(|a| p[a] < b.min[a] || p[a] > b.max[a]) {
        return false;
    }
    let scale = b.diagonal().max(f64::MIN_POSITIVE);
    for k in 0..DIRECTIONS.len() {
        if let Some(inside) = vote(mesh, p, &dir(k), scale) {
            return inside;
        }
    }
    for k in 0..DIRECTIONS.len() {
        let q = p + dir(k + 2) * (1e-7 * scale);
        if let Some(inside) = vote(mesh, &q, &dir(k), scale) {
            return inside;
        }
    }
    false
}

/// Majority of three parity votes, for meshes that may have holes.
pub fn point_in_mesh_majority(mesh: &TriangleMesh, p: &Vec3) -> bool {
    let b = aabb_of(mesh);
    if b.is_empty() || (0..3).any(|a| p[a] < b.min[a] || p[a] > b.max[a]) {
        return false;
    }
    let scale = b.diagonal().max(f64::MIN_POSITIVE);
    let mut yes = 0;
    let mut votes = 0;
    let mut k = 0;
    while votes < 3 && k < 3 * DIRECTIONS.len() {
        let origin = if k < DIRECTIONS.len() {
            *p
        } else {
            p + dir(k + 1) * (1e-7 * scale * (k / DIRECTIONS.len()) as f64)
        };
        if let Some(inside) = vote(mesh, &origin, &dir(k), scale) {
            votes += 1;
            yes += inside as usize;
        }
        k += 1;
    }
    votes > 0 && 2 * yes > votes
}
