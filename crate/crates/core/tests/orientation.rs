use nalgebra::{Matrix3, Rotation3, Unit};
use proptest::prelude::*;

use partbox_core::preprocess::{
    axis_rotations, candidate_planes, find_best_symmetry_plane, maybe_symmetry_cut, optimize_orientation,
    principal_diagonal,
};
use partbox_core::{aabb_of, fixtures, measure, Plane, TriangleMesh, Vec3};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Mean nearest-neighbour distance of reflected vertices, all pairs, over
/// the principal-frame diagonal.
fn brute_symmetry_error(mesh: &TriangleMesh, plane: &Plane) -> f64 {
    let total: f64 = mesh
        .vertices
        .iter()
        .map(|p| {
            let r = p - plane.normal * (2.0 * (plane.normal.dot(p) - plane.offset));
            mesh.vertices.iter().map(|q| (r - q).norm()).fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / mesh.vertices.len() as f64 / principal_diagonal(mesh)
}

/// Area of faces pointing more than `deg` below the horizontal for build direction +Z.
fn brute_overhang(mesh: &TriangleMesh, deg: f64) -> f64 {
    let s = deg.to_radians().sin();
    mesh.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            if n.norm() > 0.0 && -n.z / n.norm() > s {
                n.norm() / 2.0
            } else {
                0.0
            }
        })
        .sum()
}

fn vertex_mean(mesh: &TriangleMesh) -> Vec3 {
    mesh.vertices.iter().sum::<Vec3>() / mesh.vertices.len() as f64
}

fn displaced_corner_cube() -> TriangleMesh {
    let mut cube = fixtures::voxel_solid([4, 4, 4], 2.5, |_, _, _| true);
    let diag = aabb_of(&cube).diagonal();
    let corner = cube
        .vertices
        .iter()
        .position(|v| *v == Vec3::repeat(10.0))
        .expect("corner vertex");
    // a direction that leaves no mirror plane exact
    cube.vertices[corner] += Vec3::new(1.0, 0.3, 0.1).normalize() * (0.1 * diag);
    cube
}

#[test]
fn displaced_corner_keeps_an_axis_plane() {
    let mesh = displaced_corner_cube();
    let best = find_best_symmetry_plane(&mesh);
    assert!(best.error_score > 0.0);
    let along_axis = (0..3).any(|a| best.normal[a].abs() > 10f64.to_radians().cos());
    assert!(along_axis, "normal {:?}", best.normal);
    let oracle = brute_symmetry_error(&mesh, &best.plane());
    assert!(rel(best.error_score, oracle) < 1e-9, "{} vs {oracle}", best.error_score);
    // no candidate does better under the brute-force score
    for plane in candidate_planes(&mesh) {
        assert!(brute_symmetry_error(&mesh, &plane) >= oracle - 1e-12);
    }
}

#[test]
fn blob_error_matches_brute_force_and_exceeds_threshold() {
    let mesh = fixtures::asymmetric_blob();
    let best = find_best_symmetry_plane(&mesh);
    let oracle = candidate_planes(&mesh)
        .iter()
        .map(|p| brute_symmetry_error(&mesh, p))
        .fold(f64::INFINITY, f64::min);
    assert!(rel(best.error_score, oracle) < 1e-9);
    assert!(oracle > 0.01);
}

#[test]
fn sphere_halves_are_near_half_the_ball() {
    let halves = maybe_symmetry_cut(&fixtures::icosphere(10.0, 3), 0.01).unwrap();
    assert_eq!(halves.len(), 2);
    let half_ball = 2.0 / 3.0 * std::f64::consts::PI * 1000.0;
    for h in &halves {
        assert!(rel(measure(h).volume, half_ball) < 0.02);
    }
}

#[test]
fn wedge_orientation_minimises_overhang_over_all_rotations() {
    let wedge = fixtures::wedge(10.0);
    for tol in [0.0, 1.0, 30.0] {
        let (out, pose) = optimize_orientation(&wedge, None, tol);
        let chosen = brute_overhang(&out, tol);
        let best = axis_rotations()
            .iter()
            .map(|q| brute_overhang(&out.transformed(q, &Vec3::zeros()), tol))
            .fold(f64::INFINITY, f64::min);
        assert!(chosen <= best + 1e-9 * measure(&wedge).surface_area, "tol {tol}: {chosen} vs {best}");
        assert!((pose.rotation.determinant() - 1.0).abs() < 1e-9);
    }
}

fn motion(axis: [f64; 3], angle: f64, shift: [f64; 3]) -> (Matrix3<f64>, Vec3) {
    let axis = Vec3::new(axis[0], axis[1], axis[2]);
    let axis = if axis.norm() < 1e-3 { Vec3::x() } else { axis };
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    (*r.matrix(), Vec3::new(shift[0], shift[1], shift[2]))
}

fn fixture(which: usize) -> TriangleMesh {
    match which {
        0 => fixtures::unit_cube(),
        1 => fixtures::icosphere(10.0, 2),
        2 => fixtures::dumbbell(),
        3 => fixtures::l_bracket(),
        4 => fixtures::hollow_box(),
        5 => fixtures::wedge(10.0),
        _ => fixtures::asymmetric_blob(),
    }
}

/// Meshes whose vertex covariance has three well-separated eigenvalues, so
/// the principal planes are unique.
fn distinct_axes_fixture(which: usize) -> TriangleMesh {
    match which {
        0 => fixtures::box_mesh(Vec3::zeros(), Vec3::new(10.0, 20.0, 30.0)),
        1 => fixtures::l_bracket(),
        _ => fixtures::asymmetric_blob(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn orientation_centres_and_preserves_measures(
        which in 0usize..7,
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in 0.0f64..std::f64::consts::TAU,
        shift in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let (r, t) = motion(axis, angle, shift);
        let mesh = fixture(which).transformed(&r, &t);
        let sym = find_best_symmetry_plane(&mesh);
        let (out, pose) = optimize_orientation(&mesh, Some(&sym), 1.0);
        prop_assert!(vertex_mean(&out).amax() < 1e-9);
        let (a, b) = (measure(&mesh), measure(&out));
        prop_assert!(rel(b.volume, a.volume) < 1e-9);
        prop_assert!(rel(b.surface_area, a.surface_area) < 1e-9);
        prop_assert!((pose.rotation.determinant() - 1.0).abs() < 1e-9);
        let back = pose.inverse().apply(&out.vertices[0]);
        prop_assert!((back - mesh.vertices[0]).norm() < 1e-9 * (1.0 + mesh.vertices[0].norm()));
    }

    #[test]
    fn symmetry_error_ignores_rigid_motion(
        which in 0usize..3,
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in 0.0f64..std::f64::consts::TAU,
        shift in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let mesh = distinct_axes_fixture(which);
        let (r, t) = motion(axis, angle, shift);
        let moved = mesh.transformed(&r, &t);
        let (a, b) = (find_best_symmetry_plane(&mesh), find_best_symmetry_plane(&moved));
        prop_assert!((a.error_score - b.error_score).abs() < 1e-6, "{} vs {}", a.error_score, b.error_score);
        prop_assert!((b.normal.norm() - 1.0).abs() < 1e-9);
        // the moved plane maps back onto a plane with the same score
        let back = Plane::new(r.transpose() * b.normal, b.offset - b.normal.dot(&t));
        prop_assert!((brute_symmetry_error(&mesh, &back) - b.error_score).abs() < 1e-6);
    }
}
