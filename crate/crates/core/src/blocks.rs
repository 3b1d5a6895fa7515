//! Seed blocks and objective-driven block growth.

use std::collections::BTreeSet;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clip::clip_to_box;
use crate::clip::ClipMode;
use crate::error::{Error, Result};
use crate::grid::{CellClass, CellMeasures, Coord, Grid, DIRECTIONS};
use crate::mesh::{Aabb, TriangleMesh, Vec3};

/// Growth / build directions in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
        Direction::PosZ,
        Direction::NegZ,
    ];

    pub fn axis(self) -> usize {
        self as usize / 2
    }

    pub fn positive(self) -> bool {
        (self as usize).is_multiple_of(2)
    }

    pub fn step(self) -> [i64; 3] {
        DIRECTIONS[self as usize]
    }

    pub fn label(self) -> &'static str {
        ["+X", "-X", "+Y", "-Y", "+Z", "-Z"][self as usize]
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Axis-aligned run of grid cells `lo..=hi` and the cells it owns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub lo: Coord,
    pub hi: Coord,
    pub owned_cells: BTreeSet<Coord>,
}

impl Block {
    pub fn unit(id: usize, at: Coord) -> Self {
        Block {
            id,
            lo: at,
            hi: at,
            owned_cells: BTreeSet::new(),
        }
    }

    /// Cells along each axis.
    pub fn extent(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.hi[a] - self.lo[a] + 1)
    }

    /// Box centre in grid units.
    pub fn centroid(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| (self.lo[a] + self.hi[a] + 1) as f64 / 2.0)
    }

    /// Half the L1 extent, in grid units.
    pub fn size(&self) -> f64 {
        self.extent().iter().sum::<usize>() as f64 / 2.0
    }

    pub fn contains(&self, c: Coord) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] <= self.hi[a])
    }

    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        let (lo, hi) = (self.lo, self.hi);
        (lo[0]..=hi[0]).flat_map(move |x| (lo[1]..=hi[1]).flat_map(move |y| (lo[2]..=hi[2]).map(move |z| [x, y, z])))
    }

    pub fn physical_box(&self, grid: &Grid) -> Aabb {
        grid.box_of(self.lo, self.hi)
    }

    /// The box grown by one layer, or `None` when that leaves the grid.
    pub fn expanded(&self, dir: Direction, dims: [usize; 3]) -> Option<(Coord, Coord)> {
        let a = dir.axis();
        let (mut lo, mut hi) = (self.lo, self.hi);
        if dir.positive() {
            if hi[a] + 1 >= dims[a] {
                return None;
            }
            hi[a] += 1;
        } else {
            if lo[a] == 0 {
                return None;
            }
            lo[a] -= 1;
        }
        Some((lo, hi))
    }

    /// Cells of the layer added by growing in `dir` (assumes it is in bounds).
    pub fn layer(&self, dir: Direction) -> Vec<Coord> {
        let a = dir.axis();
        let at = if dir.positive() { self.hi[a] + 1 } else { self.lo[a] - 1 };
        let (mut lo, mut hi) = (self.lo, self.hi);
        lo[a] = at;
        hi[a] = at;
        Block::span(lo, hi)
    }

    fn span(lo: Coord, hi: Coord) -> Vec<Coord> {
        Block {
            id: 0,
            lo,
            hi,
            owned_cells: BTreeSet::new(),
        }
        .cells()
        .collect()
    }
}

/// Whether a box of `cells` cells of `cell_size` fits the printer when both
/// dimension lists are sorted (parts may be turned before printing).
pub fn fits_printer(cells: [usize; 3], cell_size: f64, printer_dims: [f64; 3]) -> bool {
    let mut part = cells.map(|c| c as f64 * cell_size);
    dims_fit(&mut part, printer_dims)
}

pub fn dims_fit(part: &mut [f64; 3], printer_dims: [f64; 3]) -> bool {
    let mut printer = printer_dims;
    part.sort_by(f64::total_cmp);
    printer.sort_by(f64::total_cmp);
    (0..3).all(|a| part[a] <= printer[a] * (1.0 + 1e-9))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    /// mm/s
    pub speed_infill: f64,
    /// mm/s
    pub speed_shell: f64,
    pub infill_fraction: f64,
    /// degrees
    pub overhang_tolerance: f64,
    /// mm
    pub printer_dims: [f64; 3],
    pub overhang_weight: f64,
    /// grid units
    pub proximity_floor: f64,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        ObjectiveParams {
            speed_infill: 20.0,
            speed_shell: 20.0,
            infill_fraction: 0.05,
            overhang_tolerance: 1.0,
            printer_dims: [250.0; 3],
            overhang_weight: 1.0,
            proximity_floor: 1.0,
        }
    }
}

/// `speed_infill * infill_fraction * volume + speed_shell * surface_area`.
pub fn print_score(volume: f64, surface_area: f64, params: &ObjectiveParams) -> f64 {
    params.speed_infill * (params.infill_fraction * volume) + params.speed_shell * surface_area
}

/// Least overhang area over the six build directions of the surface of
/// `mesh` inside `bbox`.
pub fn overhang_score(mesh: &TriangleMesh, bbox: &Aabb, params: &ObjectiveParams) -> Result<f64> {
    let clip = clip_to_box(mesh, bbox, ClipMode::SurfaceOnly)?;
    let s = params.overhang_tolerance.to_radians().sin();
    let mut per_dir = [0.0f64; 6];
    for t in clip.surface_triangles() {
        let c = clip.mesh.triangle_cross(t);
        let len = c.norm();
        if len == 0.0 {
            continue;
        }
        for (d, dir) in DIRECTIONS.iter().enumerate() {
            let up = Vec3::new(dir[0] as f64, dir[1] as f64, dir[2] as f64);
            if -c.dot(&up) / len > s {
                per_dir[d] += len / 2.0;
            }
        }
    }
    Ok(min_overhang(&per_dir))
}

fn min_overhang(per_dir: &[f64; 6]) -> f64 {
    per_dir.iter().copied().fold(f64::INFINITY, f64::min)
}

/// k-means++ on the mesh vertices, then each centroid is moved to a
/// distinct boundary cell: its own cell when that is boundary, else the
/// nearest free boundary cell by centre distance.
pub fn select_seed_blocks(grid: &Grid, mesh: &TriangleMesh, k: usize, rng_seed: u64) -> Result<Vec<Block>> {
    let boundary: Vec<Coord> = grid
        .cells
        .iter()
        .filter(|c| c.classification == CellClass::Boundary)
        .map(|c| c.coord)
        .collect();
    if k == 0 || boundary.len() < k {
        return Err(Error::InsufficientBoundaryCells {
            needed: k,
            available: boundary.len(),
        });
    }
    let centroids = kmeans(&mesh.vertices, k, rng_seed, 1e-4 * grid.cell_size);
    let mut taken: BTreeSet<Coord> = BTreeSet::new();
    let mut seeds = Vec::with_capacity(k);
    for (id, c) in centroids.iter().enumerate() {
        let own = grid.locate(c);
        let cell = if grid.cell(own).classification == CellClass::Boundary && !taken.contains(&own) {
            own
        } else {
            let d2 = |b: &Coord| (grid.cell_center(*b) - c).norm_squared();
            *boundary
                .iter()
                .filter(|b| !taken.contains(*b))
                .min_by(|a, b| d2(a).total_cmp(&d2(b)))
                .expect("at least k boundary cells")
        };
        taken.insert(cell);
        seeds.push(Block::unit(id, cell));
    }
    Ok(seeds)
}

/// D²-seeded k-means with Lloyd iterations until no centre moves more than
/// `tol` (at most 100 rounds).
pub fn kmeans(points: &[Vec3], k: usize, seed: u64, tol: f64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = Vec::with_capacity(k);
    centres.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centres[0]).norm_squared()).collect();
    while centres.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => points[w.sample(&mut rng)],
            // Every point already sits on a centre.
            Err(_) => points[rng.random_range(0..points.len())],
        };
        centres.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - next).norm_squared());
        }
    }
    for _ in 0..100 {
        let mut sums = vec![Vec3::zeros(); k];
        let mut counts = vec![0usize; k];
        for p in points {
            let j = nearest(&centres, p);
            sums[j] += p;
            counts[j] += 1;
        }
        let mut moved = 0.0f64;
        for j in 0..k {
            if counts[j] > 0 {
                let c = sums[j] / counts[j] as f64;
                moved = moved.max((c - centres[j]).norm());
                centres[j] = c;
            }
        }
        if moved < tol {
            break;
        }
    }
    centres
}

fn nearest(centres: &[Vec3], p: &Vec3) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (j, c) in centres.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < bd {
            bd = d;
            best = j;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthOption {
    pub block: usize,
    pub direction: Direction,
    /// Cost > 0, or -1 when a hard constraint fails.
    pub score: f64,
}

/// One applied growth step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub block: usize,
    pub direction: Direction,
    pub score: f64,
}

/// Grid ownership plus the blocks growing over it.
#[derive(Clone, Debug)]
pub struct GrowthState {
    pub grid: Grid,
    pub blocks: Vec<Block>,
    /// Summed cell measures of each block's owned cells.
    pub sums: Vec<CellMeasures>,
}

impl GrowthState {
    /// Places the seeds, claiming their cells. Requires measured cells.
    pub fn new(mut grid: Grid, seeds: Vec<Block>) -> Self {
        let mut blocks = Vec::with_capacity(seeds.len());
        let mut sums = Vec::with_capacity(seeds.len());
        for mut b in seeds {
            let mut sum = CellMeasures::default();
            let cells: Vec<Coord> = b.cells().collect();
            for c in cells {
                let i = grid.index(c);
                if grid.cells[i].classification != CellClass::External {
                    grid.cells[i].owner = Some(b.id);
                    b.owned_cells.insert(c);
                    if let Some(m) = grid.measures.get(i) {
                        sum += m;
                    }
                }
            }
            blocks.push(b);
            sums.push(sum);
        }
        GrowthState { grid, blocks, sums }
    }

    pub fn unassigned_boundary(&self) -> usize {
        self.grid
            .cells
            .iter()
            .filter(|c| c.classification == CellClass::Boundary && c.owner.is_none())
            .count()
    }

    /// Adds `block` and claims its non-external cells.
    pub fn push_block(&mut self, block: Block) {
        let id = block.id;
        self.blocks.push(Block {
            owned_cells: BTreeSet::new(),
            ..block
        });
        self.sums.push(CellMeasures::default());
        let idx = self.blocks.len() - 1;
        let cells: Vec<Coord> = self.blocks[idx].cells().collect();
        for c in cells {
            self.claim(idx, id, c);
        }
    }

    fn claim(&mut self, idx: usize, id: usize, c: Coord) {
        let i = self.grid.index(c);
        if self.grid.cells[i].classification == CellClass::External {
            return;
        }
        debug_assert!(self.grid.cells[i].owner.is_none());
        self.grid.cells[i].owner = Some(id);
        self.blocks[idx].owned_cells.insert(c);
        if let Some(m) = self.grid.measures.get(i) {
            let m = *m;
            self.sums[idx] += &m;
        }
    }

    fn apply(&mut self, idx: usize, dir: Direction) {
        let layer = self.blocks[idx].layer(dir);
        let (lo, hi) = self.blocks[idx].expanded(dir, self.grid.dims).expect("checked growth");
        self.blocks[idx].lo = lo;
        self.blocks[idx].hi = hi;
        let id = self.blocks[idx].id;
        for c in layer {
            self.claim(idx, id, c);
        }
    }
}

/// Cost of growing block `idx` one layer in `dir`:
/// `(P + w * O) / max(S_prox, floor)`, or -1 when the grown box leaves the
/// grid, does not fit the printer, adds no solid cell, or overlaps an owned cell.
pub fn score_growth(state: &GrowthState, idx: usize, dir: Direction, params: &ObjectiveParams) -> GrowthOption {
    let block = &state.blocks[idx];
    let forbidden = GrowthOption {
        block: block.id,
        direction: dir,
        score: -1.0,
    };
    let grid = &state.grid;
    let Some((lo, hi)) = block.expanded(dir, grid.dims) else {
        return forbidden;
    };
    let grown = Block {
        id: block.id,
        lo,
        hi,
        owned_cells: BTreeSet::new(),
    };
    if !fits_printer(grown.extent(), grid.cell_size, params.printer_dims) {
        return forbidden;
    }
    let mut m = state.sums[idx];
    let mut any_solid = false;
    for c in block.layer(dir) {
        let i = grid.index(c);
        let cell = &grid.cells[i];
        if cell.classification == CellClass::External {
            continue;
        }
        if cell.owner.is_some() {
            return forbidden;
        }
        any_solid = true;
        if let Some(cm) = grid.measures.get(i) {
            m += cm;
        }
    }
    if !any_solid {
        return forbidden;
    }
    let p = print_score(m.volume, m.surface_area, params);
    let o = min_overhang(&m.overhang);
    let prox = state
        .blocks
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != idx)
        .map(|(_, n)| proximity(&grown, n))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
    let divisor = prox.map_or(params.proximity_floor, |d| d.max(params.proximity_floor));
    GrowthOption {
        block: block.id,
        direction: dir,
        score: (p + params.overhang_weight * o) / divisor,
    }
}

/// L1 distance between box centres minus both sizes, in grid units.
pub fn proximity(a: &Block, b: &Block) -> f64 {
    let (ca, cb) = (a.centroid(), b.centroid());
    let l1: f64 = (0..3).map(|k| (ca[k] - cb[k]).abs()).sum();
    l1 - (a.size() + b.size())
}

/// Applies the cheapest positive-cost option (ties: lowest block id, then
/// direction order) and returns it, or `None` when nothing can grow.
pub fn grow_step(state: &mut GrowthState, params: &ObjectiveParams) -> Option<GrowthOption> {
    let mut best: Option<(usize, GrowthOption)> = None;
    for idx in 0..state.blocks.len() {
        for dir in Direction::ALL {
            let opt = score_growth(state, idx, dir, params);
            if opt.score > 0.0 && best.is_none_or(|(_, b)| opt.score < b.score) {
                best = Some((idx, opt));
            }
        }
    }
    let (idx, opt) = best?;
    state.apply(idx, opt.direction);
    Some(opt)
}

/// Serial growth until every boundary cell is owned or nothing can grow.
pub fn grow_blocks(state: &mut GrowthState, params: &ObjectiveParams, mut trace: Option<&mut Vec<TraceRow>>) {
    let mut iteration = 0;
    while state.unassigned_boundary() > 0 {
        let Some(opt) = grow_step(state, params) else { break };
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRow {
                iteration,
                block: opt.block,
                direction: opt.direction,
                score: opt.score,
            });
        }
        iteration += 1;
    }
}

/// Writes `iteration,block,direction,score` rows.
pub fn write_trace_csv(rows: &[TraceRow], path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_record(["iteration", "block", "direction", "score"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.block.to_string(),
            r.direction.label().to_string(),
            format!("{:.17e}", r.score),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::{prepare_grid, Granularity};

    #[test]
    fn print_score_values() {
        let p = ObjectiveParams::default();
        assert_eq!(print_score(0.0, 0.0, &p), 0.0);
        assert_eq!(print_score(1000.0, 600.0, &p), 13000.0);
        assert_eq!(print_score(8000.0, 2400.0, &p), 8.0 * 20.0 * 50.0 + 4.0 * 20.0 * 600.0);
    }

    #[test]
    fn cube_overhang_is_one_face() {
        let cube = fixtures::unit_cube();
        let o = overhang_score(&cube, &Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(2.0)), &ObjectiveParams::default())
            .unwrap();
        assert!((o - 1.0).abs() < 1e-12);
        let empty = overhang_score(&cube, &Aabb::new(Vec3::repeat(5.0), Vec3::repeat(6.0)), &ObjectiveParams::default())
            .unwrap();
        assert_eq!(empty, 0.0);
    }

    #[test]
    fn direction_geometry() {
        let b = Block {
            id: 0,
            lo: [1, 1, 1],
            hi: [2, 3, 4],
            owned_cells: BTreeSet::new(),
        };
        assert_eq!(b.extent(), [2, 3, 4]);
        assert_eq!(b.expanded(Direction::PosY, [10; 3]), Some(([1, 1, 1], [2, 4, 4])));
        assert_eq!(b.layer(Direction::PosY).len(), 2 * 4);
        assert_eq!(b.expanded(Direction::NegX, [10; 3]), Some(([0, 1, 1], [2, 3, 4])));
        assert_eq!(b.expanded(Direction::PosZ, [10, 10, 5]), None);
        assert!((b.size() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn single_seed_near_mean() {
        let mesh = fixtures::icosphere(10.0, 3);
        let grid = prepare_grid(&mesh, Granularity::Coarse, 1.0);
        let seeds = select_seed_blocks(&grid, &mesh, 1, 7).unwrap();
        assert_eq!(seeds.len(), 1);
        let mean = mesh.vertices.iter().sum::<Vec3>() / mesh.vertices.len() as f64;
        let d = |c: &Coord| (grid.cell_center(*c) - mean).norm();
        let best = grid
            .cells
            .iter()
            .filter(|c| c.classification == CellClass::Boundary)
            .map(|c| d(&c.coord))
            .fold(f64::INFINITY, f64::min);
        assert!((d(&seeds[0].lo) - best).abs() < 1e-9);
    }

    #[test]
    fn too_few_boundary_cells() {
        let mesh = fixtures::unit_cube();
        let grid = prepare_grid(&mesh, Granularity::Coarse, 1.0);
        let n = grid.count(CellClass::Boundary);
        assert!(matches!(
            select_seed_blocks(&grid, &mesh, n + 1, 0),
            Err(Error::InsufficientBoundaryCells { .. })
        ));
    }

    #[test]
    fn single_block_covers_small_convex_mesh() {
        let mesh = fixtures::icosphere(10.0, 3);
        let grid = prepare_grid(&mesh, Granularity::Coarse, 1.0);
        let seeds = select_seed_blocks(&grid, &mesh, 1, 1).unwrap();
        let mut state = GrowthState::new(grid, seeds);
        let mut trace = Vec::new();
        grow_blocks(&mut state, &ObjectiveParams::default(), Some(&mut trace));
        assert_eq!(state.unassigned_boundary(), 0);
        assert!(!trace.is_empty());
        assert!(trace.iter().all(|r| r.score > 0.0));
    }

    #[test]
    fn hard_constraints() {
        let mesh = fixtures::unit_cube();
        let grid = prepare_grid(&mesh, Granularity::Coarse, 1.0);
        let state = GrowthState::new(grid, vec![Block::unit(0, [0, 0, 0])]);
        let p = ObjectiveParams::default();
        assert_eq!(score_growth(&state, 0, Direction::NegX, &p).score, -1.0);
        assert!(score_growth(&state, 0, Direction::PosX, &p).score > 0.0);
        let tiny = ObjectiveParams {
            printer_dims: [0.1, 0.1, 0.1],
            ..p
        };
        assert_eq!(score_growth(&state, 0, Direction::PosX, &tiny).score, -1.0);
    }
}
