//! Void filling: new blocks over cells the growth loop left unowned.

use std::collections::BTreeSet;

use crate::blocks::{fits_printer, Block, Direction};
use crate::clip::{clip_to_box, ClipMode, ClipResult};
use crate::error::Result;
use crate::grid::{CellClass, Coord, Grid};
use crate::mesh::TriangleMesh;

/// Creates up to `budget` blocks over unowned boundary cells. Each starts
/// as a unit box at the first unowned boundary cell in (x, y, z) order and
/// sweeps the six directions, growing one layer wherever the layer is in
/// the grid, keeps the box printable and holds no owned cell, until a whole
/// sweep grows nothing. Its non-external cells are then claimed.
pub fn get_discrete_empty_regions(
    grid: &mut Grid,
    next_id: usize,
    budget: usize,
    printer_dims: [f64; 3],
) -> Vec<Block> {
    fill_regions(grid, next_id, budget, printer_dims, CellClass::Boundary)
}

/// The same procedure seeded on unowned cells of class `target`.
/// Used with `Internal` to cover solid cells no block reached.
pub fn fill_regions(
    grid: &mut Grid,
    next_id: usize,
    budget: usize,
    printer_dims: [f64; 3],
    target: CellClass,
) -> Vec<Block> {
    let mut out = Vec::new();
    while out.len() < budget {
        let Some(start) = next_unassigned(grid, target) else {
            break;
        };
        let mut block = Block::unit(next_id + out.len(), start);
        loop {
            let mut grew = false;
            for dir in Direction::ALL {
                if can_expand(grid, &block, dir, printer_dims) {
                    let (lo, hi) = block.expanded(dir, grid.dims).expect("checked");
                    block.lo = lo;
                    block.hi = hi;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        let cells: Vec<Coord> = block.cells().collect();
        for c in cells {
            let cell = grid.cell_mut(c);
            if cell.classification != CellClass::External {
                cell.owner = Some(block.id);
                block.owned_cells.insert(c);
            }
        }
        out.push(block);
    }
    out
}

fn next_unassigned(grid: &Grid, target: CellClass) -> Option<Coord> {
    // Cells are stored x-major, so storage order is lexicographic.
    grid.cells
        .iter()
        .find(|c| c.classification == target && c.owner.is_none())
        .map(|c| c.coord)
}

fn can_expand(grid: &Grid, block: &Block, dir: Direction, printer_dims: [f64; 3]) -> bool {
    let Some((lo, hi)) = block.expanded(dir, grid.dims) else {
        return false;
    };
    let extent = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    if !fits_printer(extent, grid.cell_size, printer_dims) {
        return false;
    }
    block.layer(dir).into_iter().all(|c| grid.cell(c).owner.is_none())
}

/// Volumetric clip of `mesh` to each region's physical box.
pub fn assign_mesh_boxes(mesh: &TriangleMesh, grid: &Grid, regions: &[Block]) -> Result<Vec<ClipResult>> {
    regions
        .iter()
        .map(|b| clip_to_box(mesh, &b.physical_box(grid), ClipMode::Volumetric))
        .collect()
}

/// True when every boundary cell has an owner.
pub fn coverage_complete(grid: &Grid) -> bool {
    grid.cells
        .iter()
        .all(|c| c.classification != CellClass::Boundary || c.owner.is_some())
}

/// True when every non-external cell has an owner.
pub fn all_solid_owned(grid: &Grid) -> bool {
    grid.cells
        .iter()
        .all(|c| c.classification == CellClass::External || c.owner.is_some())
}

/// Owned cells per owner id, for disjointness checks.
pub fn ownership(grid: &Grid) -> Vec<(usize, BTreeSet<Coord>)> {
    let mut map: std::collections::BTreeMap<usize, BTreeSet<Coord>> = Default::default();
    for c in &grid.cells {
        if let Some(o) = c.owner {
            map.entry(o).or_default().insert(c.coord);
        }
    }
    map.into_iter().collect()
}
