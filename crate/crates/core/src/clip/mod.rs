//! Mesh cutting against planes and axis-aligned boxes.
//!
//! Every cut is a half-space clip of the indexed mesh. Cut vertices are
//! cached per edge so both triangles sharing an edge reference the same new
//! vertex; in volumetric mode the open edges left on the cutting plane are
//! chained into loops and capped, which keeps a watertight input watertight.

mod cap;
mod inside;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{validate_watertight, Aabb, TriangleMesh, Vec3};

pub use inside::{point_in_mesh, point_in_mesh_majority};

/// Vertices closer than this to a cutting plane are snapped onto it.
pub const SNAP_EPS: f64 = 1e-9;

/// The plane `normal . p = offset`; the positive side is where `normal . p > offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        Plane { normal, offset }
    }

    pub fn through(point: &Vec3, normal: Vec3) -> Self {
        Plane {
            normal,
            offset: normal.dot(point),
        }
    }

    /// `sign * x_axis = value`.
    pub fn axis(axis: usize, sign: f64, value: f64) -> Self {
        let mut n = Vec3::zeros();
        n[axis] = sign;
        Plane {
            normal: n,
            offset: sign * value,
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn flipped(&self) -> Plane {
        Plane {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    /// `Some((axis, sign))` when the normal is exactly a signed coordinate axis.
    fn axis_aligned(&self) -> Option<(usize, f64)> {
        let n = self.normal;
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            if n[b] == 0.0 && n[c] == 0.0 && n[a].abs() == 1.0 {
                return Some((a, n[a]));
            }
        }
        None
    }

    fn project(&self, p: &Vec3) -> Vec3 {
        match self.axis_aligned() {
            Some((a, s)) => {
                let mut q = *p;
                q[a] = s * self.offset;
                q
            }
            None => p - self.normal * self.signed_distance(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipMode {
    /// Clip surface triangles only; the result is an open shell.
    SurfaceOnly,
    /// Also synthesize caps on the cutting planes; the result is a solid.
    Volumetric,
}

#[derive(Clone, Debug, Default)]
pub struct ClipResult {
    /// Surface-derived triangles first, then cap triangles.
    pub mesh: TriangleMesh,
    /// Vertices referenced by surface-derived (non-cap) triangles.
    pub surface_vertex_count: usize,
    pub surface_triangle_count: usize,
    pub capped: bool,
}

impl ClipResult {
    pub fn is_empty(&self) -> bool {
        self.mesh.triangles.is_empty()
    }

    /// Area of the triangles that came from the input surface.
    pub fn surface_area(&self) -> f64 {
        (0..self.surface_triangle_count)
            .map(|t| self.mesh.triangle_area(t))
            .sum()
    }

    pub fn surface_triangles(&self) -> std::ops::Range<usize> {
        0..self.surface_triangle_count
    }
}

/// A mesh under construction with a per-triangle cap flag.
#[derive(Clone, Debug, Default)]
pub(crate) struct TaggedMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub is_cap: Vec<bool>,
}

impl TaggedMesh {
    pub fn from_mesh(mesh: &TriangleMesh) -> Self {
        TaggedMesh {
            vertices: mesh.vertices.clone(),
            triangles: mesh.triangles.clone(),
            is_cap: vec![false; mesh.triangles.len()],
        }
    }

    fn subset(mesh: &TriangleMesh, selected: impl IntoIterator<Item = usize>) -> Self {
        let mut map: HashMap<u32, u32> = HashMap::new();
        let mut vertices = Vec::new();
        let triangles: Vec<[u32; 3]> = selected
            .into_iter()
            .map(|t| {
                mesh.triangles[t].map(|i| {
                    *map.entry(i).or_insert_with(|| {
                        vertices.push(mesh.vertices[i as usize]);
                        (vertices.len() - 1) as u32
                    })
                })
            })
            .collect();
        TaggedMesh {
            vertices,
            is_cap: vec![false; triangles.len()],
            triangles,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn compacted(self) -> Self {
        let mut map = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let triangles = self
            .triangles
            .iter()
            .map(|t| {
                t.map(|i| {
                    let slot = &mut map[i as usize];
                    if *slot == u32::MAX {
                        *slot = vertices.len() as u32;
                        vertices.push(self.vertices[i as usize]);
                    }
                    *slot
                })
            })
            .collect();
        TaggedMesh {
            vertices,
            triangles,
            is_cap: self.is_cap,
        }
    }

    pub fn into_result(self, capped: bool) -> ClipResult {
        let mut order: Vec<usize> = (0..self.triangles.len()).collect();
        order.sort_by_key(|&t| self.is_cap[t]);
        let surface_triangle_count = self.is_cap.iter().filter(|c| !**c).count();
        let triangles: Vec<[u32; 3]> = order.iter().map(|&t| self.triangles[t]).collect();
        let mesh = TriangleMesh::new(self.vertices, triangles).compacted();
        let surface_vertex_count = mesh.triangles[..surface_triangle_count]
            .iter()
            .flatten()
            .collect::<HashSet<_>>()
            .len();
        ClipResult {
            mesh,
            surface_vertex_count,
            surface_triangle_count,
            capped,
        }
    }

    /// Keeps the part of the mesh with `plane.signed_distance <= 0`.
    ///
    /// Triangles lying in the plane are kept when their normal points to the
    /// removed side (the solid is on the kept side), so a face on a shared
    /// boundary goes to exactly one of the two halves.
    pub fn clip(&self, plane: &Plane, cap: bool) -> TaggedMesh {
        let mut vertices = self.vertices.clone();
        let mut dist: Vec<f64> = Vec::with_capacity(vertices.len());
        let mut any_neg = false;
        let mut any_pos = false;
        for v in vertices.iter_mut() {
            let mut d = plane.signed_distance(v);
            if d.abs() <= SNAP_EPS {
                *v = plane.project(v);
                d = 0.0;
            }
            any_neg |= d < 0.0;
            any_pos |= d > 0.0;
            dist.push(d);
        }
        if !any_pos {
            // Nothing crosses; only coplanar faces can be affected.
            if dist.iter().all(|d| *d < 0.0) {
                return self.clone();
            }
        }
        if !any_neg && any_pos && dist.iter().all(|d| *d > 0.0) {
            return TaggedMesh::default();
        }

        let mut on_plane: Vec<bool> = dist.iter().map(|d| *d == 0.0).collect();
        let mut cut_cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut triangles = Vec::with_capacity(self.triangles.len());
        let mut is_cap = Vec::with_capacity(self.triangles.len());

        for (t, tri) in self.triangles.iter().enumerate() {
            let d = tri.map(|i| dist[i as usize]);
            let has_neg = d.iter().any(|x| *x < 0.0);
            let has_pos = d.iter().any(|x| *x > 0.0);
            if !has_pos {
                if !has_neg {
                    let [a, b, c] = tri.map(|i| vertices[i as usize]);
                    if (b - a).cross(&(c - a)).dot(&plane.normal) <= 0.0 {
                        continue;
                    }
                }
                triangles.push(*tri);
                is_cap.push(self.is_cap[t]);
                continue;
            }
            if !has_neg {
                continue;
            }
            let mut poly: Vec<u32> = Vec::with_capacity(4);
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                let (di, dj) = (d[k], d[(k + 1) % 3]);
                if di <= 0.0 {
                    poly.push(i);
                }
                if (di < 0.0 && dj > 0.0) || (di > 0.0 && dj < 0.0) {
                    let key = (i.min(j), i.max(j));
                    let idx = *cut_cache.entry(key).or_insert_with(|| {
                        let (lo, hi) = key;
                        let (dl, dh) = (dist[lo as usize], dist[hi as usize]);
                        let s = dl / (dl - dh);
                        let p = vertices[lo as usize] + (vertices[hi as usize] - vertices[lo as usize]) * s;
                        vertices.push(plane.project(&p));
                        on_plane.push(true);
                        (vertices.len() - 1) as u32
                    });
                    poly.push(idx);
                }
            }
            for k in 1..poly.len().saturating_sub(1) {
                let tri = [poly[0], poly[k], poly[k + 1]];
                if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                    triangles.push(tri);
                    is_cap.push(self.is_cap[t]);
                }
            }
        }

        let mut out = TaggedMesh {
            vertices,
            triangles,
            is_cap,
        };
        if cap && !out.triangles.is_empty() {
            let caps = cap::cap_open_edges(&out, &on_plane, &plane.normal);
            out.is_cap.extend(std::iter::repeat_n(true, caps.len()));
            out.triangles.extend(caps);
        }
        out.compacted()
    }
}

fn check_box(b: &Aabb) -> Result<()> {
    let e = b.extent();
    if (0..3).any(|a| e[a] <= 0.0 || !e[a].is_finite()) {
        return Err(Error::DegenerateBox(format!(
            "min {:?} max {:?}",
            b.min.as_slice(),
            b.max.as_slice()
        )));
    }
    Ok(())
}

fn box_planes(b: &Aabb) -> [Plane; 6] {
    [
        Plane::axis(0, 1.0, b.max.x),
        Plane::axis(0, -1.0, b.min.x),
        Plane::axis(1, 1.0, b.max.y),
        Plane::axis(1, -1.0, b.min.y),
        Plane::axis(2, 1.0, b.max.z),
        Plane::axis(2, -1.0, b.min.z),
    ]
}

/// Intersects `mesh` with the box. Surface-only mode returns the clipped open
/// shell; volumetric mode returns the solid `mesh ∩ box` and needs a
/// watertight input.
pub fn clip_to_box(mesh: &TriangleMesh, bbox: &Aabb, mode: ClipMode) -> Result<ClipResult> {
    check_box(bbox)?;
    match mode {
        ClipMode::SurfaceOnly => Ok(clip_surface(mesh, bbox)),
        ClipMode::Volumetric => {
            let report = validate_watertight(mesh);
            if !report.is_watertight {
                return Err(Error::NonWatertightInput {
                    open_edges: report.open_edge_count + report.bad_edge_count,
                });
            }
            Ok(clip_solid(&TaggedMesh::from_mesh(mesh), bbox))
        }
    }
}

/// Surface-only clip; triangles whose bounds miss the box are skipped up front.
pub(crate) fn clip_surface(mesh: &TriangleMesh, bbox: &Aabb) -> ClipResult {
    let work = TaggedMesh::subset(
        mesh,
        (0..mesh.triangles.len()).filter(|&t| {
            let [a, b, c] = mesh.triangle(t);
            Aabb::from_points([&a, &b, &c]).overlaps(bbox, SNAP_EPS)
        }),
    );
    clip_surface_work(work, bbox)
}

/// Surface-only clip of the listed triangles; the caller guarantees that every
/// triangle touching the box is listed.
pub(crate) fn clip_surface_subset(mesh: &TriangleMesh, triangles: &[u32], bbox: &Aabb) -> ClipResult {
    let work = TaggedMesh::subset(mesh, triangles.iter().map(|&t| t as usize));
    clip_surface_work(work, bbox)
}

fn clip_surface_work(mut work: TaggedMesh, bbox: &Aabb) -> ClipResult {
    for plane in box_planes(bbox) {
        if work.is_empty() {
            break;
        }
        work = work.clip(&plane, false);
    }
    work.into_result(false)
}

/// Volumetric clip of an already-validated closed mesh.
pub(crate) fn clip_solid(mesh: &TaggedMesh, bbox: &Aabb) -> ClipResult {
    let mut work = mesh.clone();
    for plane in box_planes(bbox) {
        if work.is_empty() {
            break;
        }
        work = work.clip(&plane, true);
    }
    let capped = work.is_cap.iter().any(|c| *c);
    work.into_result(capped)
}

/// The surface of `mesh` on the kept (`signed_distance <= 0`) side of
/// every plane, without caps.
pub(crate) fn restrict_surface(mesh: &TriangleMesh, planes: &[Plane]) -> TriangleMesh {
    let mut work = TaggedMesh::from_mesh(mesh);
    for p in planes {
        work = work.clip(p, false);
    }
    work.into_result(false).mesh
}

/// Splits a watertight mesh along `plane` into (positive side, negative side),
/// each capped to a closed solid. Either half may be empty.
pub fn cut_by_plane(mesh: &TriangleMesh, plane: &Plane) -> Result<(TriangleMesh, TriangleMesh)> {
    let report = validate_watertight(mesh);
    if !report.is_watertight {
        return Err(Error::NonWatertightInput {
            open_edges: report.open_edge_count + report.bad_edge_count,
        });
    }
    let work = TaggedMesh::from_mesh(mesh);
    let (pos, neg) = split(&work, plane);
    let finish = |t: TaggedMesh| {
        let mut m = t.into_result(true).mesh;
        m.name = mesh.name.clone();
        m
    };
    Ok((finish(pos), finish(neg)))
}

/// (positive side, negative side), both capped.
pub(crate) fn split(mesh: &TaggedMesh, plane: &Plane) -> (TaggedMesh, TaggedMesh) {
    let neg = mesh.clip(plane, true);
    let pos = mesh.clip(&plane.flipped(), true);
    (pos, neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mesh::measure;
    use std::f64::consts::PI;

    fn cube() -> TriangleMesh {
        fixtures::unit_cube()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn half_cube_volumetric() {
        let r = clip_to_box(
            &cube(),
            &Aabb::new(Vec3::zeros(), Vec3::new(0.5, 1.0, 1.0)),
            ClipMode::Volumetric,
        )
        .unwrap();
        assert!(r.capped);
        assert!(validate_watertight(&r.mesh).is_watertight);
        let m = measure(&r.mesh);
        assert!(rel(m.volume, 0.5) < 1e-12);
        assert!(rel(m.surface_area, 4.0) < 1e-12);
        assert!(rel(r.surface_area(), 3.0) < 1e-12);
    }

    #[test]
    fn interior_box_has_no_surface() {
        let sphere = fixtures::icosphere(10.0, 3);
        let b = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let r = clip_to_box(&sphere, &b, ClipMode::SurfaceOnly).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.surface_vertex_count, 0);
    }

    #[test]
    fn disjoint_box_is_empty_in_both_modes() {
        let b = Aabb::new(Vec3::repeat(5.0), Vec3::repeat(6.0));
        for mode in [ClipMode::SurfaceOnly, ClipMode::Volumetric] {
            let r = clip_to_box(&cube(), &b, mode).unwrap();
            assert!(r.is_empty());
            assert_eq!(r.surface_vertex_count, 0);
        }
    }

    #[test]
    fn identity_clip_preserves_measures() {
        for mesh in [fixtures::icosphere(10.0, 3), fixtures::hollow_box(), fixtures::dumbbell()] {
            let b = crate::mesh::aabb_of(&mesh).scaled(1.5);
            let r = clip_to_box(&mesh, &b, ClipMode::Volumetric).unwrap();
            let (a, c) = (measure(&mesh), measure(&r.mesh));
            assert!(rel(c.volume, a.volume) < 1e-9);
            assert!(rel(c.surface_area, a.surface_area) < 1e-9);
            assert!(!r.capped);
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        let b = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0));
        assert!(matches!(
            clip_to_box(&cube(), &b, ClipMode::SurfaceOnly),
            Err(Error::DegenerateBox(_))
        ));
    }

    #[test]
    fn volumetric_needs_watertight() {
        let mut open = cube();
        open.triangles.pop();
        let b = Aabb::new(Vec3::zeros(), Vec3::repeat(0.5));
        assert!(matches!(
            clip_to_box(&open, &b, ClipMode::Volumetric),
            Err(Error::NonWatertightInput { .. })
        ));
        assert!(matches!(
            cut_by_plane(&open, &Plane::axis(0, 1.0, 0.5)),
            Err(Error::NonWatertightInput { .. })
        ));
    }

    #[test]
    fn cube_cut_in_half() {
        let (p, n) = cut_by_plane(&cube(), &Plane::axis(0, 1.0, 0.5)).unwrap();
        for h in [&p, &n] {
            assert!(validate_watertight(h).is_watertight);
            assert!(rel(measure(h).volume, 0.5) < 1e-12);
        }
    }

    #[test]
    fn plane_missing_mesh() {
        let (p, n) = cut_by_plane(&cube(), &Plane::axis(2, 1.0, 3.0)).unwrap();
        assert!(p.is_empty());
        assert!(rel(measure(&n).volume, 1.0) < 1e-12);
        assert_eq!(n.triangles.len(), 12);
    }

    #[test]
    fn sphere_cap_volume() {
        let sphere = fixtures::icosphere(10.0, 3);
        let (cap, rest) = cut_by_plane(&sphere, &Plane::axis(2, 1.0, 5.0)).unwrap();
        assert!(validate_watertight(&cap).is_watertight);
        assert!(validate_watertight(&rest).is_watertight);
        let h = 5.0;
        let exact = PI / 3.0 * h * h * (3.0 * 10.0 - h);
        assert!(rel(measure(&cap).volume, exact) < 0.02);
        let total = measure(&sphere).volume;
        assert!(rel(measure(&cap).volume + measure(&rest).volume, total) < 1e-6);
    }

    #[test]
    fn oblique_cut_through_hollow_box_makes_annular_caps() {
        let mesh = fixtures::hollow_box();
        let n = Vec3::new(0.3, 0.2, 1.0).normalize();
        let plane = Plane::through(&Vec3::new(20.0, 20.0, 21.3), n);
        let (p, q) = cut_by_plane(&mesh, &plane).unwrap();
        assert!(validate_watertight(&p).is_watertight);
        assert!(validate_watertight(&q).is_watertight);
        let total = measure(&mesh).volume;
        assert!(rel(measure(&p).volume + measure(&q).volume, total) < 1e-6);
    }

    #[test]
    fn coplanar_faces_go_to_exactly_one_side() {
        // The dumbbell's lobe faces lie on x = 20, exactly on the cut plane.
        let mesh = fixtures::dumbbell();
        let (p, n) = cut_by_plane(&mesh, &Plane::axis(0, 1.0, 20.0)).unwrap();
        assert!(validate_watertight(&p).is_watertight);
        assert!(validate_watertight(&n).is_watertight);
        assert!(rel(measure(&n).volume, 8000.0) < 1e-12);
        assert!(rel(measure(&p).volume, 10000.0) < 1e-12);
    }

    #[test]
    fn partition_conserves_volume_and_surface() {
        let mesh = fixtures::icosphere(10.0, 3);
        let whole = measure(&mesh);
        let b = crate::mesh::aabb_of(&mesh).scaled(1.01);
        let n = 3;
        let step = b.extent() / n as f64;
        let (mut vol, mut area) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lo = b.min + Vec3::new(i as f64 * step.x, j as f64 * step.y, k as f64 * step.z);
                    let cell = Aabb::new(lo, lo + step);
                    let r = clip_to_box(&mesh, &cell, ClipMode::Volumetric).unwrap();
                    assert!(validate_watertight(&r.mesh).is_watertight || r.is_empty());
                    vol += measure(&r.mesh).volume;
                    area += r.surface_area();
                    let s = clip_to_box(&mesh, &cell, ClipMode::SurfaceOnly).unwrap();
                    assert!((s.surface_area() - r.surface_area()).abs() < 1e-9);
                }
            }
        }
        assert!(rel(vol, whole.volume) < 1e-6);
        assert!(rel(area, whole.surface_area) < 1e-6);
    }
}
