//! Procedural watertight test solids.
//!
//! Voxel-built shapes share lattice vertices between faces, so they are
//! closed 2-manifolds as long as no two voxels touch along an edge only.

use std::collections::HashMap;

use crate::mesh::{TriangleMesh, Vec3};

/// Axis-aligned box with 8 vertices and 12 triangles.
pub fn box_mesh(min: Vec3, max: Vec3) -> TriangleMesh {
    let v = |x: bool, y: bool, z: bool| {
        Vec3::new(
            if x { max.x } else { min.x },
            if y { max.y } else { min.y },
            if z { max.z } else { min.z },
        )
    };
    let vertices = vec![
        v(false, false, false),
        v(true, false, false),
        v(true, true, false),
        v(false, true, false),
        v(false, false, true),
        v(true, false, true),
        v(true, true, true),
        v(false, true, true),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriangleMesh::new(vertices, triangles).with_name("box")
}

pub fn unit_cube() -> TriangleMesh {
    box_mesh(Vec3::zeros(), Vec3::repeat(1.0)).with_name("unit_cube")
}

/// Geodesic sphere centred at the origin: 20 * 4^subdivisions faces.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let p = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(p);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    orient_outward(TriangleMesh::new(vertices, faces)).with_name("sphere")
}

/// Star-shaped lumpy sphere with no mirror symmetry.
pub fn asymmetric_blob() -> TriangleMesh {
    let base = icosphere(1.0, 2);
    let vertices = base
        .vertices
        .iter()
        .map(|d| {
            let r = 10.0
                * (1.0 + 0.35 * d.x * d.y + 0.3 * d.z.max(0.0).powi(2) + 0.2 * d.x
                    - 0.15 * d.y * d.z
                    + 0.1 * (3.0 * d.x + 2.0 * d.z).sin());
            d * r
        })
        .collect();
    TriangleMesh::new(vertices, base.triangles).with_name("blob")
}

/// Right prism whose cross-section is the triangle (0,0),(s,0),(0,s) in XZ,
/// extruded along Y; one face is slanted at 45 degrees.
pub fn wedge(size: f64) -> TriangleMesh {
    let s = size;
    let vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(s, 0.0, 0.0),
        Vec3::new(0.0, 0.0, s),
        Vec3::new(0.0, s, 0.0),
        Vec3::new(s, s, 0.0),
        Vec3::new(0.0, s, s),
    ];
    let triangles = vec![
        [0, 1, 2],
        [3, 5, 4],
        [0, 3, 4],
        [0, 4, 1],
        [0, 2, 5],
        [0, 5, 3],
        [1, 4, 5],
        [1, 5, 2],
    ];
    orient_outward_convex(TriangleMesh::new(vertices, triangles)).with_name("wedge")
}

/// Closed surface of the union of filled voxels on an integer lattice.
pub fn voxel_solid(
    dims: [usize; 3],
    voxel: f64,
    filled: impl Fn(usize, usize, usize) -> bool,
) -> TriangleMesh {
    let is_filled = |i: i64, j: i64, k: i64| {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < dims[0]
            && (j as usize) < dims[1]
            && (k as usize) < dims[2]
            && filled(i as usize, j as usize, k as usize)
    };
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut vid = |p: [i64; 3], vertices: &mut Vec<Vec3>| -> u32 {
        *index.entry(p).or_insert_with(|| {
            vertices.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) * voxel);
            (vertices.len() - 1) as u32
        })
    };
    for i in 0..dims[0] as i64 {
        for j in 0..dims[1] as i64 {
            for k in 0..dims[2] as i64 {
                if !is_filled(i, j, k) {
                    continue;
                }
                let cell = [i, j, k];
                for axis in 0..3 {
                    for positive in [true, false] {
                        let mut n = cell;
                        n[axis] += if positive { 1 } else { -1 };
                        if is_filled(n[0], n[1], n[2]) {
                            continue;
                        }
                        let b = (axis + 1) % 3;
                        let c = (axis + 2) % 3;
                        let corner = |db: i64, dc: i64| {
                            let mut p = cell;
                            if positive {
                                p[axis] += 1;
                            }
                            p[b] += db;
                            p[c] += dc;
                            p
                        };
                        let mut quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                        if !positive {
                            quad.reverse();
                        }
                        let q = quad.map(|p| vid(p, &mut vertices));
                        triangles.push([q[0], q[1], q[2]]);
                        triangles.push([q[0], q[2], q[3]]);
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Two 20 mm cubes joined by a centred 20 x 10 x 10 mm bar; 60 mm long.
pub fn dumbbell() -> TriangleMesh {
    voxel_solid([12, 4, 4], 5.0, |i, j, k| {
        !(4..8).contains(&i) || ((1..3).contains(&j) && (1..3).contains(&k))
    })
    .with_name("dumbbell")
}

/// 60 x 20 mm base plate, 5 mm thick, with a 45 mm upright at one end.
pub fn l_bracket() -> TriangleMesh {
    voxel_solid([12, 4, 9], 5.0, |i, _j, k| k == 0 || i == 0).with_name("l_bracket")
}

/// 40 mm cube with a fully enclosed 30 mm cavity (5 mm walls).
pub fn hollow_box() -> TriangleMesh {
    voxel_solid([8, 8, 8], 5.0, |i, j, k| {
        let inner = |v: usize| (1..7).contains(&v);
        !(inner(i) && inner(j) && inner(k))
    })
    .with_name("hollow_box")
}

fn orient_outward(mut mesh: TriangleMesh) -> TriangleMesh {
    if crate::mesh::measure(&mesh).volume < 0.0 {
        for t in &mut mesh.triangles {
            t.swap(1, 2);
        }
    }
    mesh
}

fn orient_outward_convex(mut mesh: TriangleMesh) -> TriangleMesh {
    let c = mesh.vertices.iter().sum::<Vec3>() / mesh.vertices.len() as f64;
    for t in 0..mesh.triangles.len() {
        let [a, ..] = mesh.triangle(t);
        if mesh.triangle_cross(t).dot(&(a - c)) < 0.0 {
            mesh.triangles[t].swap(1, 2);
        }
    }
    mesh
}
