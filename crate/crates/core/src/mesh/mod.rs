//! Indexed triangle meshes and the geometric measures every later stage uses.
//!
//! Units are millimetres throughout. Triangles wind counter-clockwise when
//! seen from outside, so the right-hand normal points out of the solid.

mod io;

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use io::{load_mesh, parse_mesh, write_binary_stl, write_stl_bytes, MeshFormat};

pub type Vec3 = Vector3<f64>;

/// Distance under which two vertices are merged on load.
pub const WELD_TOLERANCE: f64 = 1e-6;

/// Triangles with area at or below this are dropped on load.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshMeasures {
    pub volume: f64,
    pub surface_area: f64,
    /// Arithmetic mean of the vertex positions (not the volumetric centroid).
    pub centroid: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatertightReport {
    pub is_watertight: bool,
    /// Undirected edges used by exactly one triangle.
    pub open_edge_count: usize,
    /// Undirected edges used by more than two triangles, or twice with the same orientation.
    pub bad_edge_count: usize,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.include(p);
        }
        b
    }

    pub fn include(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            let e = self.extent();
            e.x * e.y * e.z
        }
    }

    /// Scales the box about its own center.
    pub fn scaled(&self, factor: f64) -> Aabb {
        let c = self.center();
        let h = self.extent() * (0.5 * factor);
        Aabb::new(c - h, c + h)
    }

    pub fn translated(&self, t: &Vec3) -> Aabb {
        Aabb::new(self.min + t, self.max + t)
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.sup(&other.min), self.max.inf(&other.max))
    }

    pub fn overlaps(&self, other: &Aabb, eps: f64) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] + eps && other.min[a] <= self.max[a] + eps)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        TriangleMesh {
            vertices,
            triangles,
            name: String::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Area-weighted normal (length = 2 * area).
    pub fn triangle_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle(t);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.triangle_cross(t).norm()
    }

    pub fn translated(&self, t: &Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + t).collect(),
            triangles: self.triangles.clone(),
            name: self.name.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            triangles: self.triangles.clone(),
            name: self.name.clone(),
        }
    }

    /// Applies `p -> rotation * p + translation`. A reflection (negative
    /// determinant) also flips the winding so normals stay outward.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> TriangleMesh {
        let flip = rotation.determinant() < 0.0;
        TriangleMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| rotation * v + translation)
                .collect(),
            triangles: if flip {
                self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect()
            } else {
                self.triangles.clone()
            },
            name: self.name.clone(),
        }
    }

    /// Welds vertices closer than `tolerance`, drops degenerate triangles and
    /// unreferenced vertices. Welding is order-stable: the first vertex of a
    /// cluster keeps its position.
    pub fn cleaned(&self, tolerance: f64) -> TriangleMesh {
        let remap = weld_map(&self.vertices, tolerance);
        let mut triangles = Vec::with_capacity(self.triangles.len());
        for tri in &self.triangles {
            let t = tri.map(|i| remap[i as usize]);
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            let [a, b, c] = t.map(|i| self.vertices[i as usize]);
            if 0.5 * (b - a).cross(&(c - a)).norm() <= DEGENERATE_AREA {
                continue;
            }
            triangles.push(t);
        }
        TriangleMesh::new(self.vertices.clone(), triangles)
            .with_name(self.name.clone())
            .compacted()
    }

    /// Removes vertices no triangle references, preserving relative order.
    pub fn compacted(&self) -> TriangleMesh {
        let mut new_index = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(self.triangles.len());
        for tri in &self.triangles {
            let mut out = [0u32; 3];
            for (k, &i) in tri.iter().enumerate() {
                let slot = &mut new_index[i as usize];
                if *slot == u32::MAX {
                    *slot = vertices.len() as u32;
                    vertices.push(self.vertices[i as usize]);
                }
                out[k] = *slot;
            }
            triangles.push(out);
        }
        TriangleMesh::new(vertices, triangles).with_name(self.name.clone())
    }

    /// Concatenates meshes without welding.
    pub fn merged<'a>(meshes: impl IntoIterator<Item = &'a TriangleMesh>) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        for m in meshes {
            let base = out.vertices.len() as u32;
            out.vertices.extend_from_slice(&m.vertices);
            out.triangles
                .extend(m.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        out
    }
}

fn weld_map(vertices: &[Vec3], tolerance: f64) -> Vec<u32> {
    let key = |v: &Vec3| -> [i64; 3] {
        [
            (v.x / tolerance).floor() as i64,
            (v.y / tolerance).floor() as i64,
            (v.z / tolerance).floor() as i64,
        ]
    };
    let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    let mut remap = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let k = key(v);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in list {
                            if (vertices[j as usize] - v).norm() <= tolerance {
                                found = Some(j);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        match found {
            Some(j) => remap.push(j),
            None => {
                buckets.entry(k).or_default().push(i as u32);
                remap.push(i as u32);
            }
        }
    }
    remap
}

pub fn measure(mesh: &TriangleMesh) -> MeshMeasures {
    let mut volume = 0.0;
    let mut area = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        volume += a.dot(&b.cross(&c));
        area += 0.5 * (b - a).cross(&(c - a)).norm();
    }
    let centroid = if mesh.vertices.is_empty() {
        Vec3::zeros()
    } else {
        mesh.vertices.iter().sum::<Vec3>() / mesh.vertices.len() as f64
    };
    MeshMeasures {
        volume: volume / 6.0,
        surface_area: area,
        centroid,
    }
}

pub fn aabb_of(mesh: &TriangleMesh) -> Aabb {
    Aabb::from_points(&mesh.vertices)
}

pub fn validate_watertight(mesh: &TriangleMesh) -> WatertightReport {
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for &[a, b, c] in &mesh.triangles {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            *directed.entry((u, v)).or_insert(0) += 1;
        }
    }
    let mut open = 0;
    let mut bad = 0;
    for (&(u, v), &fwd) in &directed {
        let bwd = directed.get(&(v, u)).copied().unwrap_or(0);
        if bwd == 0 {
            if fwd == 1 {
                open += 1;
            } else {
                bad += 1;
            }
            continue;
        }
        // Each undirected edge with both directions present is visited twice.
        if u < v && (fwd != 1 || bwd != 1) {
            bad += 1;
        }
    }
    WatertightReport {
        is_watertight: open == 0 && bad == 0 && !mesh.triangles.is_empty(),
        open_edge_count: open,
        bad_edge_count: bad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn unit_cube_measures() {
        let m = measure(&fixtures::unit_cube());
        assert_relative_eq!(m.volume, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.surface_area, 6.0, epsilon = 1e-12);
        assert_relative_eq!(m.centroid, Vec3::repeat(0.5), epsilon = 1e-12);
    }

    #[test]
    fn scaled_cube_follows_scaling_law() {
        let m = measure(&fixtures::unit_cube().scaled(2.0));
        assert_relative_eq!(m.volume, 8.0, epsilon = 1e-12);
        assert_relative_eq!(m.surface_area, 24.0, epsilon = 1e-12);
    }

    #[test]
    fn icosphere_volume_close_to_analytic() {
        let s = fixtures::icosphere(10.0, 3);
        assert_eq!(s.triangles.len(), 1280);
        let v = measure(&s).volume;
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
        assert!((v - exact).abs() / exact < 0.02, "volume {v}");
    }

    #[test]
    fn aabb_cases() {
        let cube = fixtures::unit_cube();
        let b = aabb_of(&cube);
        assert_eq!(b.min, Vec3::zeros());
        assert_eq!(b.max, Vec3::repeat(1.0));
        let t = Vec3::new(5.0, 0.0, 0.0);
        assert_eq!(aabb_of(&cube.translated(&t)), b.translated(&t));
        let two = TriangleMesh::merged([&cube, &cube.translated(&Vec3::new(3.0, 0.0, 0.0))]);
        let b2 = aabb_of(&two);
        assert_eq!(b2.min, Vec3::zeros());
        assert_eq!(b2.max, Vec3::new(4.0, 1.0, 1.0));
    }

    #[test]
    fn watertight_reports() {
        let cube = fixtures::unit_cube();
        let r = validate_watertight(&cube);
        assert!(r.is_watertight);
        assert_eq!(r.open_edge_count, 0);

        // Drop the two triangles of one face.
        let mut open = cube.clone();
        let normals: Vec<Vec3> = (0..open.triangles.len())
            .map(|t| open.triangle_cross(t).normalize())
            .collect();
        open.triangles = open
            .triangles
            .iter()
            .zip(&normals)
            .filter(|(_, n)| n.z > -0.5)
            .map(|(t, _)| *t)
            .collect();
        assert_eq!(open.triangles.len(), 10);
        let r = validate_watertight(&open);
        assert_eq!((r.is_watertight, r.open_edge_count), (false, 4));

        let single = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        );
        let r = validate_watertight(&single);
        assert_eq!((r.is_watertight, r.open_edge_count), (false, 3));
    }

    #[test]
    fn cleanup_welds_and_drops_degenerates() {
        let soup = TriangleMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::x(),
                Vec3::y(),
                Vec3::x() + Vec3::repeat(1e-8),
                Vec3::y(),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::zeros(),
                Vec3::x() * 0.5,
                Vec3::x(),
            ],
            vec![[0, 1, 2], [3, 5, 4], [6, 7, 8]],
        );
        let clean = soup.cleaned(WELD_TOLERANCE);
        assert_eq!(clean.vertices.len(), 4);
        assert_eq!(clean.triangles.len(), 2);
    }

    #[test]
    fn reflection_keeps_outward_winding() {
        let cube = fixtures::unit_cube();
        let mirror = Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        let m = cube.transformed(&mirror, &Vec3::zeros());
        assert_relative_eq!(measure(&m).volume, 1.0, epsilon = 1e-12);
    }
}
