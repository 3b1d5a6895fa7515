use std::collections::HashMap;

use nalgebra::{Rotation3, Unit};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use partbox_core::{
    aabb_of, clip_to_box, cut_by_plane, fixtures, measure, point_in_mesh, validate_watertight, Aabb, ClipMode,
    Plane, TriangleMesh, Vec3,
};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn closed_fixtures() -> Vec<TriangleMesh> {
    vec![
        fixtures::unit_cube(),
        fixtures::icosphere(10.0, 2),
        fixtures::dumbbell(),
        fixtures::l_bracket(),
        fixtures::hollow_box(),
        fixtures::wedge(10.0),
        fixtures::asymmetric_blob(),
    ]
}

fn rigid(axis: [f64; 3], angle: f64, shift: [f64; 3]) -> (nalgebra::Matrix3<f64>, Vec3) {
    let axis = Vec3::new(axis[0], axis[1], axis[2]);
    let axis = if axis.norm() < 1e-3 { Vec3::z() } else { axis };
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    (*r.matrix(), Vec3::new(shift[0], shift[1], shift[2]))
}

/// Separating-axis test for a closed box against a triangle.
fn triangle_hits_box(tri: &[Vec3; 3], b: &Aabb) -> bool {
    let c = b.center();
    let h = b.extent() / 2.0;
    let v = tri.map(|p| p - c);
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let separated = |axis: Vec3| {
        if axis.norm_squared() < 1e-24 {
            return false;
        }
        let p = v.map(|q| q.dot(&axis));
        let r = h.x * axis.x.abs() + h.y * axis.y.abs() + h.z * axis.z.abs();
        let (lo, hi) = (p[0].min(p[1]).min(p[2]), p[0].max(p[1]).max(p[2]));
        lo > r || hi < -r
    };
    let units = [Vec3::x(), Vec3::y(), Vec3::z()];
    for u in units {
        if separated(u) {
            return false;
        }
    }
    if separated(e[0].cross(&e[1])) {
        return false;
    }
    for u in units {
        for edge in e {
            if separated(u.cross(&edge)) {
                return false;
            }
        }
    }
    true
}

/// Cut positions along one axis of `b`, including both ends.
fn splits(lo: f64, hi: f64, fractions: &[f64]) -> Vec<f64> {
    let mut f: Vec<f64> = fractions.to_vec();
    f.sort_by(f64::total_cmp);
    let mut out = vec![lo];
    out.extend(f.iter().map(|t| lo + t * (hi - lo)));
    out.push(hi);
    out
}

#[test]
fn edges_are_used_twice_on_closed_fixtures() {
    for mesh in closed_fixtures() {
        let mut uses: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(uses.values().all(|&n| n == 2), "{}", mesh.name);
        assert!(validate_watertight(&mesh).is_watertight, "{}", mesh.name);
    }
}

#[test]
fn aabb_survives_rewelding() {
    for mesh in closed_fixtures() {
        let once = mesh.cleaned(1e-6);
        assert_eq!(aabb_of(&once), aabb_of(&mesh), "{}", mesh.name);
        assert_eq!(aabb_of(&once.cleaned(1e-6)), aabb_of(&once), "{}", mesh.name);
    }
}

#[test]
fn two_disjoint_cubes_bound() {
    let a = fixtures::unit_cube();
    let b = a.translated(&Vec3::new(3.0, 0.0, 0.0));
    let both = TriangleMesh::merged([&a, &b]);
    let bb = aabb_of(&both);
    assert_eq!(bb.min, Vec3::zeros());
    assert_eq!(bb.max, Vec3::new(4.0, 1.0, 1.0));
}

#[test]
fn random_points_match_box_test() {
    let cube = fixtures::unit_cube();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let p = Vec3::new(
            rng.random_range(-0.5..1.5),
            rng.random_range(-0.5..1.5),
            rng.random_range(-0.5..1.5),
        );
        let inside = (0..3).all(|a| p[a] > 0.0 && p[a] < 1.0);
        assert_eq!(point_in_mesh(&cube, &p), inside, "{p:?}");
    }
}

#[test]
fn hollow_box_halves_meet_in_measure_zero() {
    let mesh = fixtures::hollow_box();
    let plane = Plane::new(Vec3::new(1.0, 1.0, 0.5).normalize(), 30.0);
    let (pos, neg) = cut_by_plane(&mesh, &plane).unwrap();
    assert!(validate_watertight(&pos).is_watertight);
    assert!(validate_watertight(&neg).is_watertight);
    let total = measure(&mesh).volume;
    assert!(rel(measure(&pos).volume + measure(&neg).volume, total) < 1e-6);
    assert!(pos.vertices.iter().all(|v| plane.signed_distance(v) > -1e-7));
    assert!(neg.vertices.iter().all(|v| plane.signed_distance(v) < 1e-7));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn rigid_motion_keeps_volume(
        which in 0usize..7,
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in 0.0f64..std::f64::consts::TAU,
        shift in prop::array::uniform3(-100.0f64..100.0),
    ) {
        let mesh = &closed_fixtures()[which];
        let (r, t) = rigid(axis, angle, shift);
        let moved = mesh.transformed(&r, &t);
        let (a, b) = (measure(mesh), measure(&moved));
        prop_assert!(rel(b.volume, a.volume) < 1e-9);
        prop_assert!(rel(b.surface_area, a.surface_area) < 1e-9);
    }

    #[test]
    fn reindexing_keeps_area(which in 0usize..7, seed in any::<u64>()) {
        let mesh = &closed_fixtures()[which];
        let mut order: Vec<usize> = (0..mesh.vertices.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut new_index = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new as u32;
        }
        let vertices = order.iter().map(|&i| mesh.vertices[i]).collect();
        let triangles = mesh.triangles.iter().map(|t| t.map(|i| new_index[i as usize])).collect();
        let shuffled = TriangleMesh::new(vertices, triangles);
        prop_assert!(rel(measure(&shuffled).surface_area, measure(mesh).surface_area) < 1e-12);
        prop_assert!(validate_watertight(&shuffled).is_watertight);
    }

    #[test]
    fn box_partition_conserves_volume_and_surface(
        which in 1usize..5,
        fx in prop::collection::vec(0.05f64..0.95, 0..3),
        fy in prop::collection::vec(0.05f64..0.95, 0..3),
        fz in prop::collection::vec(0.05f64..0.95, 0..3),
    ) {
        let mesh = &closed_fixtures()[which];
        let m = measure(mesh);
        let bb = aabb_of(mesh).scaled(1.001);
        let xs = splits(bb.min.x, bb.max.x, &fx);
        let ys = splits(bb.min.y, bb.max.y, &fy);
        let zs = splits(bb.min.z, bb.max.z, &fz);
        let (mut volume, mut area) = (0.0, 0.0);
        for i in 0..xs.len() - 1 {
            for j in 0..ys.len() - 1 {
                for k in 0..zs.len() - 1 {
                    if xs[i + 1] - xs[i] <= 0.0 || ys[j + 1] - ys[j] <= 0.0 || zs[k + 1] - zs[k] <= 0.0 {
                        continue;
                    }
                    let b = Aabb::new(Vec3::new(xs[i], ys[j], zs[k]), Vec3::new(xs[i + 1], ys[j + 1], zs[k + 1]));
                    let r = clip_to_box(mesh, &b, ClipMode::Volumetric).unwrap();
                    if !r.is_empty() {
                        prop_assert!(validate_watertight(&r.mesh).is_watertight);
                    }
                    volume += measure(&r.mesh).volume;
                    area += r.surface_area();
                }
            }
        }
        prop_assert!(rel(volume, m.volume) < 1e-6, "volume {volume} vs {}", m.volume);
        prop_assert!(rel(area, m.surface_area) < 1e-6, "area {area} vs {}", m.surface_area);
    }

    #[test]
    fn surface_vertices_iff_a_triangle_meets_the_box(
        which in 0usize..7,
        a in prop::array::uniform3(0.0f64..1.0),
        b in prop::array::uniform3(0.0f64..1.0),
    ) {
        let mesh = &closed_fixtures()[which];
        let bb = aabb_of(mesh).scaled(1.2);
        let corner = |t: [f64; 3]| bb.min + bb.extent().component_mul(&Vec3::new(t[0], t[1], t[2]));
        let (p, q) = (corner(a), corner(b));
        let lo = p.inf(&q);
        let hi = p.sup(&q);
        prop_assume!((0..3).all(|k| hi[k] - lo[k] > 1e-3));
        let bx = Aabb::new(lo, hi);
        let r = clip_to_box(mesh, &bx, ClipMode::SurfaceOnly).unwrap();
        let hit = (0..mesh.triangles.len()).any(|t| triangle_hits_box(&mesh.triangle(t), &bx));
        prop_assert_eq!(r.surface_vertex_count > 0, hit);
    }
}
