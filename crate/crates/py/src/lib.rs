//! Python bindings: meshes, clipping, and full decomposition runs.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use partbox_core::blocks::print_score as core_print_score;
use partbox_core::meta::TimeModel;
use partbox_core::preprocess::find_best_symmetry_plane as core_symmetry_plane;
use partbox_core::{
    fixtures, Aabb, ClipMode, Error, Granularity, ObjectiveParams, Plane, RunPlan, TriangleMesh as CoreMesh, Vec3,
};

create_exception!(partbox, PartboxError, PyException);

fn err(e: Error) -> PyErr {
    PartboxError::new_err(e.to_string())
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Triangle mesh with shared vertices.
#[pyclass(name = "Mesh", module = "partbox", from_py_object)]
#[derive(Clone)]
struct Mesh {
    inner: CoreMesh,
}

#[pymethods]
impl Mesh {
    #[new]
    #[pyo3(signature = (vertices, triangles, name = String::new()))]
    fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[u32; 3]>, name: String) -> PyResult<Self> {
        let n = vertices.len() as u32;
        if triangles.iter().flatten().any(|&i| i >= n) {
            return Err(PartboxError::new_err("triangle index out of range"));
        }
        let inner = CoreMesh::new(vertices.into_iter().map(v3).collect(), triangles).with_name(name);
        Ok(Mesh { inner })
    }

    /// Loads STL (ascii or binary) or OBJ.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = partbox_core::load_mesh(path, None).map_err(err)?;
        Ok(Mesh { inner })
    }

    fn save_stl(&self, path: &str) -> PyResult<()> {
        partbox_core::write_binary_stl(&self.inner, path).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.iter().map(arr).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<[u32; 3]> {
        self.inner.triangles.clone()
    }

    fn volume(&self) -> f64 {
        partbox_core::measure(&self.inner).volume
    }

    fn surface_area(&self) -> f64 {
        partbox_core::measure(&self.inner).surface_area
    }

    fn is_watertight(&self) -> bool {
        partbox_core::validate_watertight(&self.inner).is_watertight
    }

    /// `(min, max)` corners.
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let b = partbox_core::aabb_of(&self.inner);
        (arr(&b.min), arr(&b.max))
    }

    /// Part of the mesh inside the box; closed when `volumetric`.
    #[pyo3(signature = (lo, hi, volumetric = true))]
    fn clip_to_box(&self, lo: [f64; 3], hi: [f64; 3], volumetric: bool) -> PyResult<Mesh> {
        let mode = if volumetric {
            ClipMode::Volumetric
        } else {
            ClipMode::SurfaceOnly
        };
        let r = partbox_core::clip_to_box(&self.inner, &Aabb::new(v3(lo), v3(hi)), mode).map_err(err)?;
        Ok(Mesh { inner: r.mesh })
    }

    /// Closed halves `(positive, negative)` of `normal . x = offset`.
    fn cut_by_plane(&self, normal: [f64; 3], offset: f64) -> PyResult<(Mesh, Mesh)> {
        let (p, n) = partbox_core::cut_by_plane(&self.inner, &Plane::new(v3(normal), offset)).map_err(err)?;
        Ok((Mesh { inner: p }, Mesh { inner: n }))
    }

    fn __len__(&self) -> usize {
        self.inner.triangles.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(name={:?}, vertices={}, triangles={})",
            self.inner.name,
            self.inner.vertices.len(),
            self.inner.triangles.len()
        )
    }
}

#[pyclass(name = "Part", module = "partbox", frozen, skip_from_py_object)]
struct Part {
    #[pyo3(get)]
    mesh: Mesh,
    #[pyo3(get)]
    print_score: f64,
    #[pyo3(get)]
    est_time: f64,
    #[pyo3(get)]
    volume: f64,
    #[pyo3(get)]
    surface_area: f64,
    #[pyo3(get)]
    fits: bool,
    /// Inclusive grid corners of the source block, if any.
    #[pyo3(get)]
    block: Option<([usize; 3], [usize; 3])>,
}

#[pyclass(name = "Decomposition", module = "partbox", frozen, skip_from_py_object)]
struct Decomposition {
    #[pyo3(get)]
    parallel_score: f64,
    #[pyo3(get)]
    parallel_time: f64,
    #[pyo3(get)]
    aggregate_time: f64,
    #[pyo3(get)]
    printers_used: usize,
    #[pyo3(get)]
    printers_available: usize,
    #[pyo3(get)]
    valid: bool,
    #[pyo3(get)]
    reason: Option<String>,
    #[pyo3(get)]
    seed: u64,
    parts: Vec<Py<Part>>,
}

#[pymethods]
impl Decomposition {
    #[getter]
    fn parts(&self, py: Python<'_>) -> Vec<Py<Part>> {
        self.parts.iter().map(|p| p.clone_ref(py)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Decomposition(parts={}, parallel_time={:.1}, valid={})",
            self.parts.len(),
            self.parallel_time,
            if self.valid { "True" } else { "False" }
        )
    }
}

fn wrap(py: Python<'_>, d: partbox_core::Decomposition) -> PyResult<Decomposition> {
    let parts = d
        .parts
        .into_iter()
        .map(|p| {
            Py::new(
                py,
                Part {
                    mesh: Mesh { inner: p.mesh },
                    print_score: p.print_score,
                    est_time: p.est_time,
                    volume: p.volume,
                    surface_area: p.surface_area,
                    fits: p.fits,
                    block: p.block.map(|b| (b.lo, b.hi)),
                },
            )
        })
        .collect::<PyResult<_>>()?;
    Ok(Decomposition {
        parallel_score: d.parallel_score,
        parallel_time: d.parallel_time,
        aggregate_time: d.aggregate_time,
        printers_used: d.printers_used,
        printers_available: d.printers_available,
        valid: d.valid,
        reason: d.reason,
        seed: d.seed,
        parts,
    })
}

/// Best decomposition over printer budgets and seeds. Raises when no
/// valid one exists.
#[pyfunction]
#[pyo3(signature = (
    mesh, printers = 1, *, sample_tries = 3, granularity = "very_fine", seed = 0,
    skip_symmetry = false, symmetry_threshold = 0.01, overhang_tolerance = 1.0,
    infill = 0.05, printer_dims = [250.0; 3], min_printers = 1,
))]
#[allow(clippy::too_many_arguments)]
fn decompose(
    py: Python<'_>,
    mesh: &Mesh,
    printers: usize,
    sample_tries: usize,
    granularity: &str,
    seed: u64,
    skip_symmetry: bool,
    symmetry_threshold: f64,
    overhang_tolerance: f64,
    infill: f64,
    printer_dims: [f64; 3],
    min_printers: usize,
) -> PyResult<Decomposition> {
    let granularity: Granularity = granularity.parse().map_err(err)?;
    let plan = RunPlan {
        printers_available: printers,
        sample_tries,
        granularity,
        rng_seed: seed,
        skip_symmetry,
        symmetry_threshold,
        min_printers,
        params: ObjectiveParams {
            overhang_tolerance,
            infill_fraction: infill,
            printer_dims,
            ..ObjectiveParams::default()
        },
        ..RunPlan::default()
    };
    let inner = &mesh.inner;
    let d = py.detach(|| partbox_core::run_metaheuristic(inner, &plan)).map_err(err)?;
    wrap(py, d)
}

/// Recursive cuts at best symmetry planes into `2^floor(log2 printers)` parts.
#[pyfunction]
#[pyo3(signature = (mesh, printers, printer_dims = [250.0; 3]))]
fn symmetry_baseline(py: Python<'_>, mesh: &Mesh, printers: usize, printer_dims: [f64; 3]) -> PyResult<Decomposition> {
    let params = ObjectiveParams {
        printer_dims,
        ..ObjectiveParams::default()
    };
    let inner = &mesh.inner;
    let d = py
        .detach(|| partbox_core::recursive_symmetry_baseline(inner, printers, &params, &TimeModel::default()))
        .map_err(err)?;
    wrap(py, d)
}

/// `(normal, offset, error_score)` of the best mirror plane.
#[pyfunction]
fn find_symmetry_plane(mesh: &Mesh) -> ([f64; 3], f64, f64) {
    let s = core_symmetry_plane(&mesh.inner);
    (arr(&s.normal), s.offset, s.error_score)
}

#[pyfunction]
#[pyo3(signature = (volume, surface_area, speed_infill = 20.0, speed_shell = 20.0, infill = 0.05))]
fn print_score(volume: f64, surface_area: f64, speed_infill: f64, speed_shell: f64, infill: f64) -> f64 {
    let params = ObjectiveParams {
        speed_infill,
        speed_shell,
        infill_fraction: infill,
        ..ObjectiveParams::default()
    };
    core_print_score(volume, surface_area, &params)
}

/// Seconds.
#[pyfunction]
#[pyo3(signature = (
    volume, surface_area, speed_infill = 20.0, speed_shell = 20.0, infill = 0.05,
    line_width = 0.4, layer_height = 0.25,
))]
fn estimate_time(
    volume: f64,
    surface_area: f64,
    speed_infill: f64,
    speed_shell: f64,
    infill: f64,
    line_width: f64,
    layer_height: f64,
) -> f64 {
    let params = ObjectiveParams {
        speed_infill,
        speed_shell,
        infill_fraction: infill,
        ..ObjectiveParams::default()
    };
    partbox_core::estimate_time(volume, surface_area, &params, &TimeModel { line_width, layer_height })
}

#[pyfunction]
fn unit_cube() -> Mesh {
    Mesh {
        inner: fixtures::unit_cube(),
    }
}

#[pyfunction]
#[pyo3(signature = (radius = 10.0, subdivisions = 3))]
fn icosphere(radius: f64, subdivisions: u32) -> Mesh {
    Mesh {
        inner: fixtures::icosphere(radius, subdivisions),
    }
}

#[pyfunction]
fn dumbbell() -> Mesh {
    Mesh {
        inner: fixtures::dumbbell(),
    }
}

#[pymodule]
fn partbox(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PartboxError", m.py().get_type::<PartboxError>())?;
    m.add_class::<Mesh>()?;
    m.add_class::<Part>()?;
    m.add_class::<Decomposition>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(symmetry_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(find_symmetry_plane, m)?)?;
    m.add_function(wrap_pyfunction!(print_score, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_time, m)?)?;
    m.add_function(wrap_pyfunction!(unit_cube, m)?)?;
    m.add_function(wrap_pyfunction!(icosphere, m)?)?;
    m.add_function(wrap_pyfunction!(dumbbell, m)?)?;
    Ok(())
}
