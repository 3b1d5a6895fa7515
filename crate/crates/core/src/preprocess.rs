//! Symmetry detection, optional symmetric pre-cut, and orientation.

use rstar::{PointDistance, RTree};
use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::clip::{cut_by_plane, Plane};
use crate::error::Result;
use crate::mesh::{aabb_of, TriangleMesh, Vec3};

/// Default symmetry threshold (fraction of the bbox diagonal).
pub const DEFAULT_SYMMETRY_THRESHOLD: f64 = 0.01;

/// Offsets, as fractions of the extent along the normal, tried for each
/// principal plane. The centred plane comes first so it wins ties.
const PLANE_OFFSETS: [f64; 5] = [0.0, -0.05, 0.05, -0.1, 0.1];

/// Eigenvalue gap, relative to the largest, below which two principal axes
/// are treated as interchangeable. Axes that close are set by noise.
const EIGEN_GAP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryPlane {
    pub normal: Vec3,
    pub offset: f64,
    /// Mean nearest-neighbour distance of reflected vertices, over the bbox diagonal.
    pub error_score: f64,
}

impl SymmetryPlane {
    pub fn plane(&self) -> Plane {
        Plane::new(self.normal, self.offset)
    }
}

/// Rigid transform `p' = rotation * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        mesh.transformed(&self.rotation, &self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

fn vertex_mean(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len().max(1) as f64
}

/// Rows are the principal axes, by descending variance, forming a proper
/// rotation. Axes spanning a degenerate eigenspace are snapped to the
/// coordinate axes closest to that space.
pub fn principal_axes(points: &[Vec3]) -> Matrix3<f64> {
    let c = vertex_mean(points);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= points.len().max(1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut axes: Vec<Vec3> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let scale = vals[0].abs().max(f64::MIN_POSITIVE);
    let close = |a: f64, b: f64| (a - b).abs() <= EIGEN_GAP * scale;
    let (c01, c12) = (close(vals[0], vals[1]), close(vals[1], vals[2]));
    if c01 && c12 {
        return Matrix3::identity();
    }
    if c01 || c12 {
        // One distinct axis; pick in-plane axes nearest the coordinate axes.
        let (distinct, pair) = if c01 { (2, [0, 1]) } else { (0, [1, 2]) };
        let e = axes[distinct];
        let coords = [Vec3::x(), Vec3::y(), Vec3::z()];
        let snapped = |k: usize| {
            let mut d = coords[k];
            d -= e * e.dot(&d);
            d
        };
        let first = (0..3)
            .max_by(|&a, &b| snapped(a).norm().total_cmp(&snapped(b).norm()).then(b.cmp(&a)))
            .unwrap();
        let u = snapped(first).normalize();
        let v = e.cross(&u).normalize();
        axes[pair[0]] = u;
        axes[pair[1]] = v;
    }
    for a in axes.iter_mut() {
        let k = (0..3)
            .max_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()).then(j.cmp(&i)))
            .unwrap();
        if a[k] < 0.0 {
            *a = -*a;
        }
    }
    if axes[0].cross(&axes[1]).dot(&axes[2]) < 0.0 {
        axes[2] = -axes[2];
    }
    Matrix3::from_rows(&[axes[0].transpose(), axes[1].transpose(), axes[2].transpose()])
}

/// Mean distance from each reflected vertex to its nearest original vertex,
/// divided by [`principal_diagonal`].
pub fn symmetry_error(mesh: &TriangleMesh, plane: &Plane) -> f64 {
    let pts: Vec<[f64; 3]> = mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect();
    let tree = RTree::bulk_load(pts);
    reflected_error(mesh, &tree, plane, principal_diagonal(mesh))
}

/// Diagonal of the bounding box in the principal frame, so the score does
/// not change when the mesh is moved rigidly.
pub fn principal_diagonal(mesh: &TriangleMesh) -> f64 {
    let axes = principal_axes(&mesh.vertices);
    let rotated = mesh.transformed(&axes, &Vec3::zeros());
    aabb_of(&rotated).diagonal()
}

fn reflected_error(mesh: &TriangleMesh, tree: &RTree<[f64; 3]>, plane: &Plane, diag: f64) -> f64 {
    let diag = diag.max(f64::MIN_POSITIVE);
    let total: f64 = mesh
        .vertices
        .iter()
        .map(|p| {
            let r = p - plane.normal * (2.0 * plane.signed_distance(p));
            let q = [r.x, r.y, r.z];
            tree.nearest_neighbor(&q).map_or(0.0, |n| n.distance_2(&q).sqrt())
        })
        .sum();
    total / mesh.vertices.len().max(1) as f64 / diag
}

/// The candidate planes in evaluation order: the three principal planes by
/// descending variance, each at five offsets about the vertex mean.
pub fn candidate_planes(mesh: &TriangleMesh) -> Vec<Plane> {
    let axes = principal_axes(&mesh.vertices);
    let c = vertex_mean(&mesh.vertices);
    let mut out = Vec::with_capacity(15);
    for k in 0..3 {
        let n: Vec3 = axes.row(k).transpose();
        let proj = mesh.vertices.iter().map(|v| n.dot(v));
        let (lo, hi) = proj.fold((f64::MAX, f64::MIN), |(l, h), x| (l.min(x), h.max(x)));
        let extent = hi - lo;
        for f in PLANE_OFFSETS {
            out.push(Plane::new(n, n.dot(&c) + f * extent));
        }
    }
    out
}

pub fn find_best_symmetry_plane(mesh: &TriangleMesh) -> SymmetryPlane {
    let pts: Vec<[f64; 3]> = mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect();
    let tree = RTree::bulk_load(pts);
    let diag = principal_diagonal(mesh);
    let mut best: Option<SymmetryPlane> = None;
    for plane in candidate_planes(mesh) {
        let err = reflected_error(mesh, &tree, &plane, diag);
        if best.is_none_or(|b| err < b.error_score) {
            best = Some(SymmetryPlane {
                normal: plane.normal,
                offset: plane.offset,
                error_score: err,
            });
        }
    }
    best.expect("fifteen candidates")
}

/// Halves of `mesh` at its best symmetry plane when the plane's error is at
/// most `threshold`, else the mesh itself.
pub fn maybe_symmetry_cut(mesh: &TriangleMesh, threshold: f64) -> Result<Vec<TriangleMesh>> {
    let plane = find_best_symmetry_plane(mesh);
    if plane.error_score > threshold {
        return Ok(vec![mesh.clone()]);
    }
    symmetry_halves(mesh, &plane)
}

/// Both halves at `plane` (negative side first); drops an empty half.
pub fn symmetry_halves(mesh: &TriangleMesh, plane: &SymmetryPlane) -> Result<Vec<TriangleMesh>> {
    let (pos, neg) = cut_by_plane(mesh, &plane.plane())?;
    let mut out = Vec::new();
    for (half, tag) in [(neg, "a"), (pos, "b")] {
        if !half.is_empty() {
            let name = format!("{}_{tag}", mesh.name);
            out.push(half.with_name(name));
        }
    }
    Ok(out)
}

/// The 24 rotation matrices mapping axes to signed axes, identity first.
pub fn axis_rotations() -> Vec<Matrix3<f64>> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for perm in PERMS {
        for signs in 0..8u32 {
            let mut m = Matrix3::zeros();
            for (row, &col) in perm.iter().enumerate() {
                m[(row, col)] = if signs & (1 << row) == 0 { 1.0 } else { -1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// Area of faces whose unit normal satisfies `n . (-up) > sin(tolerance)`.
pub fn overhang_area(mesh: &TriangleMesh, up: &Vec3, tolerance_deg: f64) -> f64 {
    let s = tolerance_deg.to_radians().sin();
    (0..mesh.triangles.len())
        .filter_map(|t| {
            let c = mesh.triangle_cross(t);
            let len = c.norm();
            (len > 0.0 && -c.dot(up) / len > s).then_some(len / 2.0)
        })
        .sum()
}

/// Centres the vertex mean at the origin, aligns principal axes with the
/// coordinate axes, then picks the axis-aligned rotation with least overhang
/// (build direction +Z). Ties go to the rotation that best aligns the
/// symmetry normal with X, then the lowest height, then rotation order.
pub fn optimize_orientation(
    mesh: &TriangleMesh,
    symmetry: Option<&SymmetryPlane>,
    overhang_tolerance_deg: f64,
) -> (TriangleMesh, Pose) {
    let c = vertex_mean(&mesh.vertices);
    let pca = principal_axes(&mesh.vertices);
    let aligned = mesh.transformed(&pca, &-(pca * c));
    let total_area: f64 = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).sum();
    let tol_area = 1e-9 * total_area.max(f64::MIN_POSITIVE);
    let sym_normal = symmetry.map(|s| pca * s.normal);

    struct Cand {
        index: usize,
        overhang: f64,
        align: f64,
        height: f64,
    }
    let up = Vec3::z();
    let cands: Vec<Cand> = axis_rotations()
        .iter()
        .enumerate()
        .map(|(index, q)| {
            let rotated = aligned.transformed(q, &Vec3::zeros());
            let b = aabb_of(&rotated);
            Cand {
                index,
                overhang: overhang_area(&rotated, &up, overhang_tolerance_deg),
                align: sym_normal.map_or(0.0, |n| (q * n).x.abs()),
                height: b.max.z - b.min.z,
            }
        })
        .collect();
    let height_tol = 1e-9 * aabb_of(mesh).diagonal().max(f64::MIN_POSITIVE);
    let mut best = &cands[0];
    for c in &cands[1..] {
        let better = if (c.overhang - best.overhang).abs() > tol_area {
            c.overhang < best.overhang
        } else if (c.align - best.align).abs() > 1e-9 {
            c.align > best.align
        } else if (c.height - best.height).abs() > height_tol {
            c.height < best.height
        } else {
            false
        };
        if better {
            best = c;
        }
    }
    let rotation = axis_rotations()[best.index] * pca;
    let pose = Pose {
        rotation,
        translation: -(rotation * c),
    };
    (pose.apply_mesh(mesh), pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mesh::measure;

    #[test]
    fn cube_is_symmetric() {
        let p = find_best_symmetry_plane(&fixtures::unit_cube());
        assert!(p.error_score < 1e-6);
        assert!((p.normal.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blob_is_not_symmetric() {
        let p = find_best_symmetry_plane(&fixtures::asymmetric_blob());
        assert!(p.error_score > DEFAULT_SYMMETRY_THRESHOLD, "{}", p.error_score);
        let out = maybe_symmetry_cut(&fixtures::asymmetric_blob(), DEFAULT_SYMMETRY_THRESHOLD).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn cube_cut_gives_equal_halves() {
        let out = maybe_symmetry_cut(&fixtures::unit_cube(), 0.01).unwrap();
        assert_eq!(out.len(), 2);
        let (a, b) = (measure(&out[0]).volume, measure(&out[1]).volume);
        assert!((a - b).abs() < 1e-6 * (a + b));
    }

    #[test]
    fn sphere_cut_gives_hemispheres() {
        let out = maybe_symmetry_cut(&fixtures::icosphere(10.0, 3), 0.01).unwrap();
        assert_eq!(out.len(), 2);
        let half = 2.0 / 3.0 * std::f64::consts::PI * 1000.0;
        for h in &out {
            assert!((measure(h).volume - half).abs() < 0.02 * half);
        }
    }

    #[test]
    fn rotations_are_proper_and_distinct() {
        let rs = axis_rotations();
        assert_eq!(rs.len(), 24);
        assert_eq!(rs[0], Matrix3::identity());
        for (i, a) in rs.iter().enumerate() {
            assert!((a.determinant() - 1.0).abs() < 1e-12);
            for b in &rs[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn centred_cube_gets_identity_pose() {
        let cube = fixtures::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5));
        let sym = find_best_symmetry_plane(&cube);
        let (_, pose) = optimize_orientation(&cube, Some(&sym), 1.0);
        assert!((pose.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(pose.translation.norm() < 1e-12);
    }

    #[test]
    fn translated_cube_is_recentred() {
        let cube = fixtures::box_mesh(Vec3::new(9.5, -0.5, -0.5), Vec3::new(10.5, 0.5, 0.5));
        let (out, pose) = optimize_orientation(&cube, None, 1.0);
        assert!((pose.translation - Vec3::new(-10.0, 0.0, 0.0)).norm() < 1e-9);
        let c = out.vertices.iter().sum::<Vec3>() / 8.0;
        assert!(c.amax() < 1e-9);
    }

    #[test]
    fn pose_inverse_round_trips() {
        let blob = fixtures::asymmetric_blob();
        let (out, pose) = optimize_orientation(&blob, None, 1.0);
        let back = pose.inverse().apply_mesh(&out);
        for (a, b) in back.vertices.iter().zip(&blob.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!((pose.rotation.determinant() - 1.0).abs() < 1e-9);
    }
}
