//! Regular cubic grid over a mesh, cell classification and per-cell measures.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip::{self, point_in_mesh, point_in_mesh_majority, Plane, TaggedMesh, SNAP_EPS};
use crate::error::{Error, Result};
use crate::mesh::{aabb_of, validate_watertight, Aabb, TriangleMesh, Vec3};

/// The bounding box is grown by this factor before gridding.
pub const BBOX_SCALE: f64 = 1.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Coarse,
    Medium,
    Fine,
    VeryFine,
}

impl Granularity {
    /// Cells along the longest axis.
    pub fn cells(self) -> usize {
        match self {
            Granularity::Coarse => 8,
            Granularity::Medium => 10,
            Granularity::Fine => 12,
            Granularity::VeryFine => 15,
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Granularity::Coarse),
            "medium" => Ok(Granularity::Medium),
            "fine" => Ok(Granularity::Fine),
            "very_fine" | "very-fine" => Ok(Granularity::VeryFine),
            other => Err(Error::Config(format!("unknown granularity '{other}'"))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Coarse => "coarse",
            Granularity::Medium => "medium",
            Granularity::Fine => "fine",
            Granularity::VeryFine => "very_fine",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Boundary,
    Internal,
    External,
}

impl CellClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::Boundary => "boundary",
            CellClass::Internal => "internal",
            CellClass::External => "external",
        }
    }
}

pub type Coord = [usize; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub coord: Coord,
    pub classification: CellClass,
    pub owner: Option<usize>,
    pub clipped_surface_vertex_count: usize,
}

/// Per-cell geometry of `mesh ∩ cell`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMeasures {
    pub volume: f64,
    /// Area of input surface inside the cell (no cap faces).
    pub surface_area: f64,
    /// Overhang area of that surface for each build direction
    /// +X, -X, +Y, -Y, +Z, -Z.
    pub overhang: [f64; 6],
}

impl std::ops::AddAssign<&CellMeasures> for CellMeasures {
    fn add_assign(&mut self, o: &CellMeasures) {
        self.volume += o.volume;
        self.surface_area += o.surface_area;
        for d in 0..6 {
            self.overhang[d] += o.overhang[d];
        }
    }
}

/// Unit build directions in the fixed order +X, -X, +Y, -Y, +Z, -Z.
pub const DIRECTIONS: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Vec3,
    pub cell_size: f64,
    pub dims: [usize; 3],
    /// Dense, indexed `(x * dims[1] + y) * dims[2] + z`.
    pub cells: Vec<Cell>,
    /// Filled by [`measure_cells`]; empty before.
    pub measures: Vec<CellMeasures>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, c: Coord) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    pub fn coord(&self, i: usize) -> Coord {
        let z = i % self.dims[2];
        let y = (i / self.dims[2]) % self.dims[1];
        [i / (self.dims[1] * self.dims[2]), y, z]
    }

    pub fn cell(&self, c: Coord) -> &Cell {
        &self.cells[self.index(c)]
    }

    pub fn cell_mut(&mut self, c: Coord) -> &mut Cell {
        let i = self.index(c);
        &mut self.cells[i]
    }

    pub fn in_bounds(&self, c: [i64; 3]) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }

    /// Physical box of the inclusive cell range `lo..=hi`.
    pub fn box_of(&self, lo: Coord, hi: Coord) -> Aabb {
        let at = |c: [usize; 3], add: usize| {
            Vec3::new(
                self.origin.x + (c[0] + add) as f64 * self.cell_size,
                self.origin.y + (c[1] + add) as f64 * self.cell_size,
                self.origin.z + (c[2] + add) as f64 * self.cell_size,
            )
        };
        Aabb::new(at(lo, 0), at(hi, 1))
    }

    pub fn cell_box(&self, c: Coord) -> Aabb {
        self.box_of(c, c)
    }

    pub fn cell_center(&self, c: Coord) -> Vec3 {
        self.cell_box(c).center()
    }

    /// Coordinate of the cell containing `p`, clamped into the grid.
    pub fn locate(&self, p: &Vec3) -> Coord {
        let mut c = [0; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.cell_size).floor();
            c[a] = f.clamp(0.0, (self.dims[a] - 1) as f64) as usize;
        }
        c
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|c| c.classification == class).count()
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.len()).map(|i| self.coord(i))
    }

    /// Clears every owner.
    pub fn reset_owners(&mut self) {
        for c in &mut self.cells {
            c.owner = None;
        }
    }

    /// Writes `x,y,z,class,owner` rows (owner empty when unowned).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{other:?}")),
        })?;
        w.write_record(["x", "y", "z", "class", "owner"])?;
        for c in &self.cells {
            w.write_record([
                c.coord[0].to_string(),
                c.coord[1].to_string(),
                c.coord[2].to_string(),
                c.classification.as_str().to_string(),
                c.owner.map(|o| o.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Lays a cubic lattice over the mesh's bounding box scaled by 1.001 about
/// its centre. The longest axis gets exactly `granularity.cells()` cells.
pub fn build_grid(mesh: &TriangleMesh, granularity: Granularity) -> Grid {
    let b = aabb_of(mesh).scaled(BBOX_SCALE);
    let e = b.extent();
    let n = granularity.cells();
    let longest = e.max();
    let cell_size = if longest > 0.0 { longest / n as f64 } else { 1.0 };
    let mut dims = [1usize; 3];
    for a in 0..3 {
        dims[a] = if e[a] == longest {
            n
        } else {
            ((e[a] / cell_size - 1e-9).ceil() as usize).max(1)
        };
    }
    let total = dims[0] * dims[1] * dims[2];
    let mut grid = Grid {
        origin: b.min,
        cell_size,
        dims,
        cells: Vec::with_capacity(total),
        measures: Vec::new(),
    };
    for i in 0..total {
        let coord = grid.coord(i);
        grid.cells.push(Cell {
            coord,
            classification: CellClass::External,
            owner: None,
            clipped_surface_vertex_count: 0,
        });
    }
    grid
}

/// Triangle indices per cell, for every cell the triangle's bounds touch.
fn bin_triangles(grid: &Grid, mesh: &TriangleMesh) -> Vec<Vec<u32>> {
    let mut bins = vec![Vec::new(); grid.len()];
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let bb = Aabb::from_points([&a, &b, &c]);
        let range = |a: usize| {
            let lo = ((bb.min[a] - SNAP_EPS - grid.origin[a]) / grid.cell_size).floor();
            let hi = ((bb.max[a] + SNAP_EPS - grid.origin[a]) / grid.cell_size).floor();
            let top = (grid.dims[a] - 1) as f64;
            (lo.clamp(0.0, top) as usize, hi.clamp(0.0, top) as usize)
        };
        let (rx, ry, rz) = (range(0), range(1), range(2));
        for x in rx.0..=rx.1 {
            for y in ry.0..=ry.1 {
                for z in rz.0..=rz.1 {
                    bins[grid.index([x, y, z])].push(t as u32);
                }
            }
        }
    }
    bins
}

fn surface_clip(grid: &Grid, mesh: &TriangleMesh, bins: &[Vec<u32>], i: usize) -> clip::ClipResult {
    if bins[i].is_empty() {
        return clip::ClipResult::default();
    }
    clip::clip_surface_subset(mesh, &bins[i], &grid.cell_box(grid.coord(i)))
}

/// Boundary when the surface-only clip of the cell keeps any vertex,
/// otherwise internal when the cell centre is inside the solid, else external.
/// Open meshes use a three-ray majority vote for the inside test.
pub fn classify_cells(mut grid: Grid, mesh: &TriangleMesh) -> Grid {
    let bins = bin_triangles(&grid, mesh);
    let watertight = validate_watertight(mesh).is_watertight;
    let results: Vec<(CellClass, usize)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let count = surface_clip(&grid, mesh, &bins, i).surface_vertex_count;
            let class = if count > 0 {
                CellClass::Boundary
            } else {
                let centre = grid.cell_center(grid.coord(i));
                let inside = if watertight {
                    point_in_mesh(mesh, &centre)
                } else {
                    point_in_mesh_majority(mesh, &centre)
                };
                if inside {
                    CellClass::Internal
                } else {
                    CellClass::External
                }
            };
            (class, count)
        })
        .collect();
    for (cell, (class, count)) in grid.cells.iter_mut().zip(results) {
        cell.classification = class;
        cell.clipped_surface_vertex_count = count;
    }
    grid
}

/// Cross-section of `mesh` on the plane `x = at` as cap triangles facing +X.
fn cross_section(mesh: &TriangleMesh, at: f64) -> TriangleMesh {
    let cut = TaggedMesh::from_mesh(mesh).clip(&Plane::axis(0, 1.0, at), true);
    let caps = (0..cut.triangles.len()).filter(|&t| cut.is_cap[t]).map(|t| cut.triangles[t]).collect();
    TriangleMesh::new(cut.vertices, caps).compacted()
}

/// Per-cell volume of a closed mesh by the divergence theorem with the field
/// `(x - x0, 0, 0)`, where `x0` is the cell's low X face: the flux through the
/// clipped surface plus `cell_size` times the solid's cross-section area on
/// the cell's high X face. Every cut is made on the original mesh, so cap
/// triangulations never compound.
fn divergence_volumes(grid: &Grid, mesh: &TriangleMesh, surface_flux: &[f64]) -> Vec<f64> {
    let [dx, dy, dz] = grid.dims;
    let s = grid.cell_size;
    let mut vols = surface_flux.to_vec();
    let (lo, hi) = mesh
        .vertices
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v.x), h.max(v.x)));
    let per_slab: Vec<(usize, Vec<f64>)> = (0..dx.saturating_sub(1))
        .into_par_iter()
        .filter_map(|k| {
            let at = grid.origin.x + (k + 1) as f64 * s;
            if at <= lo || at >= hi {
                return None;
            }
            let section = cross_section(mesh, at);
            if section.triangles.is_empty() {
                return None;
            }
            let mut bins = vec![Vec::new(); dy * dz];
            for t in 0..section.triangles.len() {
                let [a, b, c] = section.triangle(t);
                let bb = Aabb::from_points([&a, &b, &c]);
                let range = |a: usize, n: usize| {
                    let l = ((bb.min[a] - SNAP_EPS - grid.origin[a]) / s).floor().clamp(0.0, (n - 1) as f64);
                    let h = ((bb.max[a] + SNAP_EPS - grid.origin[a]) / s).floor().clamp(0.0, (n - 1) as f64);
                    l as usize..=h as usize
                };
                for y in range(1, dy) {
                    for z in range(2, dz) {
                        bins[y * dz + z].push(t as u32);
                    }
                }
            }
            let areas = (0..dy * dz)
                .map(|yz| {
                    if bins[yz].is_empty() {
                        return 0.0;
                    }
                    let cell = grid.cell_box([k, yz / dz, yz % dz]);
                    clip::clip_surface_subset(&section, &bins[yz], &cell).surface_area()
                })
                .collect();
            Some((k, areas))
        })
        .collect();
    for (k, areas) in per_slab {
        for (yz, area) in areas.into_iter().enumerate() {
            vols[grid.index([k, yz / dz, yz % dz])] += s * area;
        }
    }
    vols
}

/// Volume fraction by 4x4x4 point sampling, for meshes that are not closed.
fn sampled_volume(grid: &Grid, mesh: &TriangleMesh, c: Coord) -> f64 {
    let b = grid.cell_box(c);
    let n = 4;
    let mut inside = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let f = |q: usize| (q as f64 + 0.5) / n as f64;
                let p = b.min + Vec3::new(f(i), f(j), f(k)) * grid.cell_size;
                inside += point_in_mesh_majority(mesh, &p) as usize;
            }
        }
    }
    b.volume() * inside as f64 / (n * n * n) as f64
}

/// Fills `grid.measures`: volume of `mesh ∩ cell`, cap-free surface area and
/// per-direction overhang area. Requires classified cells.
pub fn measure_cells(grid: &mut Grid, mesh: &TriangleMesh, overhang_tolerance_deg: f64) {
    let bins = bin_triangles(grid, mesh);
    let sin_tol = overhang_tolerance_deg.to_radians().sin();
    let g = &*grid;
    let per_cell: Vec<(CellMeasures, f64)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let mut m = CellMeasures::default();
            let mut flux = 0.0;
            if g.cells[i].classification != CellClass::Boundary {
                return (m, flux);
            }
            let x0 = g.cell_box(g.coord(i)).min.x;
            let r = surface_clip(g, mesh, &bins, i);
            for t in r.surface_triangles() {
                let cross = r.mesh.triangle_cross(t);
                let len = cross.norm();
                if len == 0.0 {
                    continue;
                }
                let [a, b, c] = r.mesh.triangle(t);
                flux += cross.x / 2.0 * ((a.x + b.x + c.x) / 3.0 - x0);
                let area = len / 2.0;
                m.surface_area += area;
                let n = cross / len;
                for (d, dir) in DIRECTIONS.iter().enumerate() {
                    let up = Vec3::new(dir[0] as f64, dir[1] as f64, dir[2] as f64);
                    if -n.dot(&up) > sin_tol {
                        m.overhang[d] += area;
                    }
                }
            }
            (m, flux)
        })
        .collect();
    let (mut measures, flux): (Vec<CellMeasures>, Vec<f64>) = per_cell.into_iter().unzip();

    let cube = grid.cell_size.powi(3);
    if validate_watertight(mesh).is_watertight {
        let vols = divergence_volumes(grid, mesh, &flux);
        for (i, m) in measures.iter_mut().enumerate() {
            m.volume = match grid.cells[i].classification {
                CellClass::External => 0.0,
                _ => vols[i],
            };
        }
    } else {
        for (i, m) in measures.iter_mut().enumerate() {
            m.volume = match grid.cells[i].classification {
                CellClass::External => 0.0,
                CellClass::Internal => cube,
                CellClass::Boundary => sampled_volume(grid, mesh, grid.coord(i)),
            };
        }
    }
    grid.measures = measures;
}

/// Builds, classifies and measures in one go.
pub fn prepare_grid(mesh: &TriangleMesh, granularity: Granularity, overhang_tolerance_deg: f64) -> Grid {
    let mut grid = classify_cells(build_grid(mesh, granularity), mesh);
    measure_cells(&mut grid, mesh, overhang_tolerance_deg);
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mesh::measure;

    #[test]
    fn presets() {
        let cube = fixtures::unit_cube();
        assert_eq!(build_grid(&cube, Granularity::VeryFine).dims, [15, 15, 15]);
        assert_eq!(build_grid(&cube, Granularity::Coarse).dims, [8, 8, 8]);
        let slab = fixtures::box_mesh(Vec3::zeros(), Vec3::new(30.0, 10.0, 10.0));
        assert_eq!(build_grid(&slab, Granularity::VeryFine).dims, [15, 5, 5]);
        let tall = fixtures::box_mesh(Vec3::zeros(), Vec3::new(3.0, 4.0, 17.0));
        assert_eq!(build_grid(&tall, Granularity::Coarse).dims[2], 8);
    }

    #[test]
    fn grid_covers_scaled_bbox() {
        let m = fixtures::l_bracket();
        let g = build_grid(&m, Granularity::Medium);
        let b = aabb_of(&m).scaled(BBOX_SCALE);
        let top = g.box_of([0, 0, 0], [g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1]);
        for a in 0..3 {
            assert!(top.max[a] >= b.max[a] - 1e-9);
            assert!((top.min[a] - b.min[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn index_round_trip() {
        let g = build_grid(&fixtures::l_bracket(), Granularity::Fine);
        for i in 0..g.len() {
            assert_eq!(g.index(g.coord(i)), i);
        }
    }

    #[test]
    fn thin_plate_has_no_internal_cells() {
        let plate = fixtures::box_mesh(Vec3::zeros(), Vec3::new(100.0, 100.0, 1.0));
        let g = classify_cells(build_grid(&plate, Granularity::VeryFine), &plate);
        assert_eq!(g.count(CellClass::Internal), 0);
        assert!(g.count(CellClass::Boundary) > 0);
    }

    #[test]
    fn cell_volumes_sum_to_mesh_volume() {
        for mesh in [fixtures::icosphere(10.0, 3), fixtures::hollow_box(), fixtures::dumbbell()] {
            let g = prepare_grid(&mesh, Granularity::VeryFine, 1.0);
            let whole = measure(&mesh);
            let v: f64 = g.measures.iter().map(|m| m.volume).sum();
            let a: f64 = g.measures.iter().map(|m| m.surface_area).sum();
            assert!((v - whole.volume).abs() < 1e-6 * whole.volume, "{}: {v} vs {}", mesh.name, whole.volume);
            assert!((a - whole.surface_area).abs() < 1e-6 * whole.surface_area);
            let cube = g.cell_size.powi(3);
            for (c, m) in g.cells.iter().zip(&g.measures) {
                if c.classification == CellClass::Internal {
                    assert!((m.volume - cube).abs() < 1e-9 * cube);
                }
            }
        }
    }

    #[test]
    fn csv_dump() {
        let g = classify_cells(build_grid(&fixtures::unit_cube(), Granularity::Coarse), &fixtures::unit_cube());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("grid.csv");
        g.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().count(), 1 + 512);
        assert!(text.starts_with("x,y,z,class,owner\n0,0,0,boundary,\n"));
    }
}
