//! Restart search over printer budgets and seeds, plus the recursive
//! symmetry-cut baseline.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    dims_fit, grow_blocks, print_score, select_seed_blocks, Block, GrowthState, ObjectiveParams, TraceRow,
};
use crate::clip::{clip_to_box, cut_by_plane, restrict_surface, ClipMode, Plane};
use crate::error::{Error, Result};
use crate::grid::{prepare_grid, CellClass, Granularity, Grid};
use crate::mesh::{aabb_of, measure, validate_watertight, TriangleMesh};
use crate::preprocess::{
    find_best_symmetry_plane, optimize_orientation, symmetry_halves, Pose, SymmetryPlane,
    DEFAULT_SYMMETRY_THRESHOLD,
};
use crate::resolve::{all_solid_owned, coverage_complete, fill_regions, get_discrete_empty_regions};

/// Extrusion geometry for the time estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    /// mm
    pub line_width: f64,
    /// mm
    pub layer_height: f64,
}

impl Default for TimeModel {
    fn default() -> Self {
        TimeModel {
            line_width: 0.4,
            layer_height: 0.25,
        }
    }
}

/// Seconds to print a part: infill volume at the infill rate plus a
/// one-line-thick shell at the shell rate.
pub fn estimate_time(volume: f64, surface_area: f64, params: &ObjectiveParams, time: &TimeModel) -> f64 {
    let bead = time.line_width * time.layer_height;
    params.infill_fraction * volume / (bead * params.speed_infill)
        + time.line_width * surface_area / (bead * params.speed_shell)
}

/// Wall-clock time of printing every part at once (the longest part) and
/// the summed time of all parts.
pub fn parallel_and_aggregate(times: &[f64]) -> (f64, f64) {
    (times.iter().copied().fold(0.0, f64::max), times.iter().sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub printers_available: usize,
    pub sample_tries: usize,
    pub granularity: Granularity,
    pub rng_seed: u64,
    pub params: ObjectiveParams,
    pub symmetry_threshold: f64,
    pub skip_symmetry: bool,
    /// Lowest printer budget the outer loop tries.
    pub min_printers: usize,
    pub time: TimeModel,
    /// Keep growth traces and owned grids on each decomposition.
    pub keep_details: bool,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            printers_available: 1,
            sample_tries: 3,
            granularity: Granularity::VeryFine,
            rng_seed: 0,
            params: ObjectiveParams::default(),
            symmetry_threshold: DEFAULT_SYMMETRY_THRESHOLD,
            skip_symmetry: false,
            min_printers: 1,
            time: TimeModel::default(),
            keep_details: false,
        }
    }
}

impl RunPlan {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if self.printers_available == 0 || self.sample_tries == 0 {
            return Err(Error::Config("printers and sample tries must be at least 1".into()));
        }
        if !(p.speed_infill > 0.0 && p.speed_shell > 0.0 && p.printer_dims.iter().all(|d| *d > 0.0)) {
            return Err(Error::Config("speeds and printer dimensions must be positive".into()));
        }
        if !(p.infill_fraction > 0.0 && p.infill_fraction <= 1.0) {
            return Err(Error::Config(format!("infill fraction {} not in (0, 1]", p.infill_fraction)));
        }
        if !(self.time.line_width > 0.0 && self.time.layer_height > 0.0) {
            return Err(Error::Config("line width and layer height must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Part {
    /// In the input model's frame.
    pub mesh: TriangleMesh,
    /// Index of the symmetry leaf the part came from.
    pub leaf: usize,
    /// Source block (grid coordinates of that leaf); `None` for baseline parts.
    pub block: Option<Block>,
    pub print_score: f64,
    /// seconds
    pub est_time: f64,
    pub volume: f64,
    /// Includes cut faces.
    pub surface_area: f64,
    /// Area of the input surface inside the part, when known.
    pub cap_free_area: Option<f64>,
    pub fits: bool,
}

/// Per-leaf state kept when [`RunPlan::keep_details`] is set.
#[derive(Clone, Debug)]
pub struct LeafDetail {
    pub path: String,
    pub pose: Pose,
    /// Grid with final ownership.
    pub grid: Grid,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub parts: Vec<Part>,
    pub parallel_score: f64,
    /// seconds
    pub parallel_time: f64,
    /// seconds
    pub aggregate_time: f64,
    pub printers_used: usize,
    pub printers_available: usize,
    /// Printers handed to seeding and growth.
    pub printers_for_growth: usize,
    pub valid: bool,
    pub reason: Option<String>,
    pub seed: u64,
    pub leaves: Vec<LeafDetail>,
}

impl Decomposition {
    fn from_parts(parts: Vec<Part>, printers_available: usize, printers_for_growth: usize, seed: u64) -> Self {
        let parallel_score = parts.iter().map(|p| p.print_score).fold(0.0, f64::max);
        let times: Vec<f64> = parts.iter().map(|p| p.est_time).collect();
        let (parallel_time, aggregate_time) = parallel_and_aggregate(&times);
        let printers_used = parts.len();
        Decomposition {
            parts,
            parallel_score,
            parallel_time,
            aggregate_time,
            printers_used,
            printers_available,
            printers_for_growth,
            valid: true,
            reason: None,
            seed,
            leaves: Vec::new(),
        }
    }

    fn invalid(mut self, reason: impl Into<String>) -> Self {
        if self.valid {
            self.valid = false;
            self.reason = Some(reason.into());
        }
        self
    }

    pub fn part_scores(&self) -> Vec<f64> {
        self.parts.iter().map(|p| p.print_score).collect()
    }
}

/// One run-log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub p: usize,
    #[serde(rename = "try")]
    pub attempt: usize,
    pub seed: u64,
    pub valid: bool,
    pub parts: usize,
    pub part_scores: Vec<f64>,
    pub parallel_score: f64,
    pub parallel_time: f64,
    pub aggregate_time: f64,
    /// seconds
    pub wall_clock: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Symmetry splits and per-leaf analysis are the same for every seed, so
/// they are computed once per tree path.
#[derive(Default)]
pub struct PipelineCache {
    splits: Mutex<HashMap<String, Arc<SplitNode>>>,
    leaves: Mutex<HashMap<String, Arc<LeafAnalysis>>>,
}

struct SplitNode {
    plane: Option<SymmetryPlane>,
    /// Present when the node is cut.
    halves: Option<Vec<TriangleMesh>>,
    volumes: Vec<f64>,
}

struct LeafAnalysis {
    oriented: TriangleMesh,
    /// Input surface inside the leaf, in the oriented frame.
    surface: TriangleMesh,
    pose: Pose,
    grid: Grid,
    watertight: bool,
}

fn memo<V>(map: &Mutex<HashMap<String, Arc<V>>>, key: &str, f: impl FnOnce() -> Result<V>) -> Result<Arc<V>> {
    if let Some(v) = map.lock().expect("cache lock").get(key) {
        return Ok(v.clone());
    }
    // Computed outside the lock; a racing duplicate computes the same value.
    let v = Arc::new(f()?);
    Ok(map
        .lock()
        .expect("cache lock")
        .entry(key.to_string())
        .or_insert(v)
        .clone())
}

struct Leaf {
    path: String,
    mesh: TriangleMesh,
    /// Half-spaces (kept side `<= 0`) that carve the leaf out of the input.
    planes: Vec<Plane>,
    printers: usize,
    plane: Option<SymmetryPlane>,
}

/// Splits `printers` over items by `weights` with largest
/// remainders, giving each at least one. Needs `printers >= weights.len()`.
pub fn allocate_printers(printers: usize, weights: &[f64]) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let spare = printers - n;
    let shares: Vec<f64> = weights
        .iter()
        .map(|w| if total > 0.0 { spare as f64 * w / total } else { spare as f64 / n as f64 })
        .collect();
    let mut out: Vec<usize> = shares.iter().map(|s| 1 + s.floor() as usize).collect();
    let mut left = printers - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    for i in order {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

fn split_tree(
    mesh: &TriangleMesh,
    printers: usize,
    plan: &RunPlan,
    path: String,
    planes: Vec<Plane>,
    cache: &PipelineCache,
    out: &mut Vec<Leaf>,
) -> Result<()> {
    let watertight = validate_watertight(mesh).is_watertight;
    if plan.skip_symmetry || !watertight {
        out.push(Leaf {
            path,
            mesh: mesh.clone(),
            planes,
            printers,
            plane: None,
        });
        return Ok(());
    }
    let node = memo(&cache.splits, &path, || {
        let plane = find_best_symmetry_plane(mesh);
        if plane.error_score > plan.symmetry_threshold {
            return Ok(SplitNode {
                plane: Some(plane),
                halves: None,
                volumes: Vec::new(),
            });
        }
        let halves = symmetry_halves(mesh, &plane)?;
        if halves.len() < 2 {
            return Ok(SplitNode {
                plane: Some(plane),
                halves: None,
                volumes: Vec::new(),
            });
        }
        let volumes = halves.iter().map(|h| measure(h).volume).collect();
        Ok(SplitNode {
            plane: Some(plane),
            halves: Some(halves),
            volumes,
        })
    })?;
    match &node.halves {
        Some(halves) if printers >= 2 => {
            let alloc = allocate_printers(printers, &node.volumes);
            let cut = node.plane.expect("cut nodes have a plane").plane();
            for (i, (half, p)) in halves.iter().zip(alloc).enumerate() {
                // Halves come negative side first.
                let mut sub = planes.clone();
                sub.push(if i == 0 { cut } else { cut.flipped() });
                split_tree(half, p, plan, format!("{path}{}", ['a', 'b'][i]), sub, cache, out)?;
            }
        }
        _ => out.push(Leaf {
            path,
            mesh: mesh.clone(),
            planes,
            printers,
            plane: node.plane,
        }),
    }
    Ok(())
}

/// One pass of the pipeline: recursive symmetry split (budget divided by
/// half volumes), orientation, grid, seeding, growth, void filling, and
/// clipping every block out of its leaf.
pub fn run_pipeline_once(
    mesh: &TriangleMesh,
    plan: &RunPlan,
    printers_for_growth: usize,
    seed: u64,
) -> Result<Decomposition> {
    run_pipeline_cached(mesh, plan, printers_for_growth, seed, &PipelineCache::default())
}

pub fn run_pipeline_cached(
    mesh: &TriangleMesh,
    plan: &RunPlan,
    printers_for_growth: usize,
    seed: u64,
    cache: &PipelineCache,
) -> Result<Decomposition> {
    plan.validate()?;
    let params = &plan.params;
    let mut leaves = Vec::new();
    split_tree(mesh, printers_for_growth.max(1), plan, String::new(), Vec::new(), cache, &mut leaves)?;
    let mut free = plan.printers_available.saturating_sub(printers_for_growth);
    let mut parts = Vec::new();
    let mut details = Vec::new();
    let mut complete = true;
    let mut next_id = 0;
    for (li, leaf) in leaves.iter().enumerate() {
        let an = memo(&cache.leaves, &leaf.path, || {
            let (oriented, pose) = optimize_orientation(&leaf.mesh, leaf.plane.as_ref(), params.overhang_tolerance);
            let grid = prepare_grid(&oriented, plan.granularity, params.overhang_tolerance);
            let watertight = validate_watertight(&oriented).is_watertight;
            let surface = pose.apply_mesh(&restrict_surface(mesh, &leaf.planes));
            Ok(LeafAnalysis {
                oriented,
                surface,
                pose,
                grid,
                watertight,
            })
        })?;
        let mut seeds = select_seed_blocks(&an.grid, &an.oriented, leaf.printers, seed.wrapping_add(li as u64))?;
        for s in &mut seeds {
            s.id += next_id;
        }
        let mut state = GrowthState::new(an.grid.clone(), seeds);
        let mut trace = Vec::new();
        grow_blocks(&mut state, params, plan.keep_details.then_some(&mut trace));
        let id = next_id + state.blocks.len();
        let regions = get_discrete_empty_regions(&mut state.grid, id, free, params.printer_dims);
        free -= regions.len();
        let id = id + regions.len();
        let fill = fill_regions(&mut state.grid, id, free, params.printer_dims, CellClass::Internal);
        free -= fill.len();
        state.blocks.extend(regions);
        state.blocks.extend(fill);
        complete &= coverage_complete(&state.grid) && all_solid_owned(&state.grid);
        next_id += state.blocks.len();

        let mode = if an.watertight {
            ClipMode::Volumetric
        } else {
            ClipMode::SurfaceOnly
        };
        let back = an.pose.inverse();
        for block in &state.blocks {
            let clip = clip_to_box(&an.oriented, &block.physical_box(&state.grid), mode)?;
            if clip.is_empty() {
                continue;
            }
            let bbox = block.physical_box(&state.grid);
            let cap_free = clip_to_box(&an.surface, &bbox, ClipMode::SurfaceOnly)?.surface_area();
            let mut dims = aabb_of(&clip.mesh).extent().into();
            let fits = dims_fit(&mut dims, params.printer_dims);
            let m = measure(&clip.mesh);
            let volume = if an.watertight { m.volume } else { 0.0 };
            parts.push(Part {
                mesh: back.apply_mesh(&clip.mesh).with_name(format!("{}_{:03}", mesh.name, block.id)),
                leaf: li,
                block: Some(block.clone()),
                print_score: print_score(volume, m.surface_area, params),
                est_time: estimate_time(volume, m.surface_area, params, &plan.time),
                volume,
                surface_area: m.surface_area,
                cap_free_area: Some(cap_free),
                fits,
            });
        }
        if plan.keep_details {
            details.push(LeafDetail {
                path: leaf.path.clone(),
                pose: an.pose,
                grid: state.grid,
                trace,
            });
        }
    }
    let mut d = Decomposition::from_parts(parts, plan.printers_available, printers_for_growth, seed);
    d.leaves = details;
    if !complete {
        d = d.invalid("cells left unowned after void filling");
    }
    if d.printers_used > plan.printers_available {
        let reason = format!("{} parts for {} printers", d.printers_used, plan.printers_available);
        d = d.invalid(reason);
    }
    if d.parts.iter().any(|p| !p.fits) {
        d = d.invalid("a part does not fit the printer");
    }
    if d.parts.is_empty() {
        d = d.invalid("no parts");
    }
    Ok(d)
}

/// Best decomposition plus every iteration's record, in loop order.
#[derive(Clone, Debug)]
pub struct MetaOutcome {
    pub best: Option<Decomposition>,
    pub log: Vec<IterationRecord>,
}

pub fn iteration_seed(base: u64, p: usize, attempt: usize) -> u64 {
    base.wrapping_add(1000 * p as u64).wrapping_add(attempt as u64)
}

/// True when `a` beats `b`: lower parallel score, then fewer printers, then
/// lower aggregate time.
pub fn better(a: (f64, usize, f64), b: (f64, usize, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
}

/// Outer loop over printer budgets from `printers_available` down to
/// `min_printers`, inner loop over `sample_tries` seeds; keeps the valid
/// result with the least parallel score.
pub fn run_metaheuristic_logged(mesh: &TriangleMesh, plan: &RunPlan) -> Result<MetaOutcome> {
    plan.validate()?;
    let cache = PipelineCache::default();
    let lo = plan.min_printers.clamp(1, plan.printers_available);
    let jobs: Vec<(usize, usize)> = (lo..=plan.printers_available)
        .rev()
        .flat_map(|p| (1..=plan.sample_tries).map(move |t| (p, t)))
        .collect();
    let results: Vec<(IterationRecord, Option<Decomposition>)> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let seed = iteration_seed(plan.rng_seed, p, t);
            let start = Instant::now();
            let run = run_pipeline_cached(mesh, plan, p, seed, &cache);
            let wall_clock = start.elapsed().as_secs_f64();
            let (rec, d) = match run {
                Ok(d) => (
                    IterationRecord {
                        p,
                        attempt: t,
                        seed,
                        valid: d.valid,
                        parts: d.printers_used,
                        part_scores: d.part_scores(),
                        parallel_score: d.parallel_score,
                        parallel_time: d.parallel_time,
                        aggregate_time: d.aggregate_time,
                        wall_clock,
                        reason: d.reason.clone(),
                    },
                    Some(d),
                ),
                Err(Error::InsufficientBoundaryCells { .. }) | Err(Error::NonWatertightInput { .. }) => {
                    let reason = run.err().map(|e| e.to_string());
                    (
                        IterationRecord {
                            p,
                            attempt: t,
                            seed,
                            valid: false,
                            parts: 0,
                            part_scores: Vec::new(),
                            parallel_score: 0.0,
                            parallel_time: 0.0,
                            aggregate_time: 0.0,
                            wall_clock,
                            reason,
                        },
                        None,
                    )
                }
                Err(e) => return Err(e),
            };
            Ok((rec, d))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<Decomposition> = None;
    let mut log = Vec::with_capacity(results.len());
    for (rec, d) in results {
        log.push(rec);
        let Some(d) = d.filter(|d| d.valid) else { continue };
        let key = |d: &Decomposition| (d.parallel_score, d.printers_used, d.aggregate_time);
        if best.as_ref().is_none_or(|b| better(key(&d), key(b))) {
            best = Some(d);
        }
    }
    Ok(MetaOutcome { best, log })
}

pub fn run_metaheuristic(mesh: &TriangleMesh, plan: &RunPlan) -> Result<Decomposition> {
    let out = run_metaheuristic_logged(mesh, plan)?;
    let n = out.log.len();
    out.best.ok_or(Error::NoValidDecomposition { iterations: n })
}

/// Cuts every part at its best symmetry plane, whatever the error, level
/// by level until there are `2^floor(log2 printers)` parts.
pub fn recursive_symmetry_baseline(
    mesh: &TriangleMesh,
    printers: usize,
    params: &ObjectiveParams,
    time: &TimeModel,
) -> Result<Decomposition> {
    if printers == 0 {
        return Err(Error::Config("printers must be at least 1".into()));
    }
    let target = 1usize << printers.ilog2();
    let mut pieces = vec![mesh.clone()];
    while pieces.len() < target {
        let next: Vec<TriangleMesh> = pieces
            .par_iter()
            .map(|m| -> Result<Vec<TriangleMesh>> {
                let plane = find_best_symmetry_plane(m);
                let (pos, neg) = cut_by_plane(m, &plane.plane())?;
                Ok([neg, pos].into_iter().filter(|h| !h.is_empty()).collect())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if next.len() == pieces.len() {
            break;
        }
        pieces = next;
    }
    let parts = pieces
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let mm = measure(&m);
            let mut dims = aabb_of(&m).extent().into();
            Part {
                fits: dims_fit(&mut dims, params.printer_dims),
                print_score: print_score(mm.volume, mm.surface_area, params),
                est_time: estimate_time(mm.volume, mm.surface_area, params, time),
                volume: mm.volume,
                surface_area: mm.surface_area,
                cap_free_area: None,
                leaf: 0,
                block: None,
                mesh: m.with_name(format!("{}_{i:03}", mesh.name)),
            }
        })
        .collect();
    let mut d = Decomposition::from_parts(parts, printers, printers, 0);
    if d.parts.iter().any(|p| !p.fits) {
        d = d.invalid("a part does not fit the printer");
    }
    Ok(d)
}
