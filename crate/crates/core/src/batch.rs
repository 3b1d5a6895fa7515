//! Printer config files, batch sweeps and report files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Granularity;
use crate::mesh::{load_mesh, validate_watertight, write_binary_stl, TriangleMesh};
use crate::meta::{
    recursive_symmetry_baseline, run_metaheuristic_logged, Decomposition, IterationRecord, RunPlan, TimeModel,
};
use crate::preprocess::DEFAULT_SYMMETRY_THRESHOLD;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrinterConfig {
    /// mm
    pub volume: [f64; 3],
    /// mm/s
    pub speed_shell: f64,
    /// mm/s
    pub speed_infill: f64,
    /// mm
    pub line_width: f64,
    /// mm
    pub layer_height: f64,
}

impl Default for PrinterConfig {
    fn default() -> Self {
        PrinterConfig {
            volume: [250.0; 3],
            speed_shell: 20.0,
            speed_infill: 20.0,
            line_width: 0.4,
            layer_height: 0.25,
        }
    }
}

impl PrinterConfig {
    /// Copies the printer settings into `plan`.
    pub fn apply(&self, plan: &mut RunPlan) {
        plan.params.printer_dims = self.volume;
        plan.params.speed_shell = self.speed_shell;
        plan.params.speed_infill = self.speed_infill;
        plan.time = TimeModel {
            line_width: self.line_width,
            layer_height: self.layer_height,
        };
    }
}

/// Reads the `[printer]` section of an ini file. Missing keys keep their
/// defaults; unparseable or non-positive values are errors.
pub fn parse_config(path: impl AsRef<Path>) -> Result<PrinterConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<PrinterConfig> {
    let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut cfg = PrinterConfig::default();
    let Some(sec) = ini.section(Some("printer")) else {
        return Ok(cfg);
    };
    let read = |key: &str, slot: &mut f64| -> Result<()> {
        if let Some(raw) = sec.get(key) {
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{raw}'")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
            *slot = v;
        }
        Ok(())
    };
    let [mut x, mut y, mut z] = cfg.volume;
    read("volume_x", &mut x)?;
    read("volume_y", &mut y)?;
    read("volume_z", &mut z)?;
    cfg.volume = [x, y, z];
    read("speed_shell", &mut cfg.speed_shell)?;
    read("speed_infill", &mut cfg.speed_infill)?;
    read("line_width", &mut cfg.line_width)?;
    read("layer_height", &mut cfg.layer_height)?;
    Ok(cfg)
}

/// Which algorithms a run reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[serde(rename = "parallelobox")]
    Blocks,
    Symmetry,
    #[default]
    Both,
}

impl Baseline {
    pub fn runs_main(self) -> bool {
        matches!(self, Baseline::Blocks | Baseline::Both)
    }

    pub fn runs_symmetry(self) -> bool {
        matches!(self, Baseline::Symmetry | Baseline::Both)
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallelobox" => Ok(Baseline::Blocks),
            "symmetry" => Ok(Baseline::Symmetry),
            "both" => Ok(Baseline::Both),
            other => Err(Error::Config(format!("unknown baseline '{other}'"))),
        }
    }
}

fn default_tries() -> usize {
    3
}
fn default_granularity() -> Granularity {
    Granularity::VeryFine
}
fn default_threshold() -> f64 {
    DEFAULT_SYMMETRY_THRESHOLD
}
fn default_tolerance() -> f64 {
    1.0
}
fn default_infill() -> f64 {
    0.05
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn one() -> usize {
    1
}

/// JSON sweep description. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub models: Vec<PathBuf>,
    pub printer_counts: Vec<usize>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default = "default_tries")]
    pub sample_tries: usize,
    #[serde(default = "default_granularity")]
    pub granularity: Granularity,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub skip_symmetry: bool,
    #[serde(default = "default_threshold")]
    pub symmetry_threshold: f64,
    #[serde(default = "default_tolerance")]
    pub overhang_tolerance: f64,
    #[serde(default = "default_infill")]
    pub infill: f64,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default = "one")]
    pub min_printers: usize,
}

impl BatchManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: BatchManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        m.models.iter_mut().for_each(rebase);
        rebase(&mut m.out_dir);
        if let Some(c) = m.config.as_mut() {
            rebase(c);
        }
        Ok(m)
    }

    /// Plan for one printer count (the count is filled in per run).
    pub fn plan(&self) -> Result<RunPlan> {
        let mut plan = RunPlan {
            sample_tries: self.sample_tries,
            granularity: self.granularity,
            rng_seed: self.seed,
            symmetry_threshold: self.symmetry_threshold,
            skip_symmetry: self.skip_symmetry,
            min_printers: self.min_printers,
            ..RunPlan::default()
        };
        plan.params.overhang_tolerance = self.overhang_tolerance;
        plan.params.infill_fraction = self.infill;
        if let Some(c) = &self.config {
            parse_config(c)?.apply(&mut plan);
        }
        Ok(plan)
    }
}

/// One `results.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub algorithm: String,
    pub printers: usize,
    pub parts: usize,
    pub parallel_time_s: f64,
    pub aggregate_time_s: f64,
    pub parallel_score: f64,
    pub compute_time_s: f64,
    pub valid: bool,
}

/// A run-log line tagged with its model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub model: String,
    #[serde(flatten)]
    pub record: IterationRecord,
}

/// Everything one model/printer-count run produced.
#[derive(Clone, Debug)]
pub struct ModelRun {
    pub rows: Vec<ResultRow>,
    pub log: Vec<LogLine>,
    pub best: Option<Decomposition>,
    pub baseline: Option<Decomposition>,
}

pub const MAIN_ALGORITHM: &str = "parallelobox";
pub const SYMMETRY_ALGORITHM: &str = "symmetry";

fn row(model: &str, algorithm: &str, printers: usize, d: Option<&Decomposition>, secs: f64) -> ResultRow {
    match d.filter(|d| d.valid) {
        Some(d) => ResultRow {
            model: model.to_string(),
            algorithm: algorithm.to_string(),
            printers,
            parts: d.parts.len(),
            parallel_time_s: d.parallel_time,
            aggregate_time_s: d.aggregate_time,
            parallel_score: d.parallel_score,
            compute_time_s: secs,
            valid: true,
        },
        None => ResultRow {
            model: model.to_string(),
            algorithm: algorithm.to_string(),
            printers,
            parts: 0,
            parallel_time_s: 0.0,
            aggregate_time_s: 0.0,
            parallel_score: 0.0,
            compute_time_s: secs,
            valid: false,
        },
    }
}

/// Runs the selected algorithms on one model at one printer count and
/// writes the valid results' parts under `<out>/<model>/<printers>/`
/// (baseline parts in a `symmetry` subdirectory).
pub fn run_model(
    mesh: &TriangleMesh,
    model: &str,
    printers: usize,
    plan: &RunPlan,
    baseline: Baseline,
    out_dir: &Path,
) -> Result<ModelRun> {
    let plan = RunPlan {
        printers_available: printers,
        ..plan.clone()
    };
    let dir = out_dir.join(model).join(printers.to_string());
    let mut run = ModelRun {
        rows: Vec::new(),
        log: Vec::new(),
        best: None,
        baseline: None,
    };
    if baseline.runs_main() {
        let start = Instant::now();
        let outcome = run_metaheuristic_logged(mesh, &plan);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(o) => {
                run.log = o
                    .log
                    .into_iter()
                    .map(|record| LogLine {
                        model: model.to_string(),
                        record,
                    })
                    .collect();
                if let Some(d) = &o.best {
                    write_parts(d, &dir)?;
                }
                run.rows.push(row(model, MAIN_ALGORITHM, printers, o.best.as_ref(), secs));
                run.best = o.best;
            }
            Err(_) => run.rows.push(row(model, MAIN_ALGORITHM, printers, None, secs)),
        }
    }
    if baseline.runs_symmetry() {
        let start = Instant::now();
        let d = recursive_symmetry_baseline(mesh, printers, &plan.params, &plan.time).ok();
        let secs = start.elapsed().as_secs_f64();
        if let Some(d) = d.as_ref().filter(|d| d.valid) {
            write_parts(d, &dir.join(SYMMETRY_ALGORITHM))?;
        }
        run.rows.push(row(model, SYMMETRY_ALGORITHM, printers, d.as_ref(), secs));
        run.baseline = d;
    }
    Ok(run)
}

/// Writes `part_###.stl` files into `dir`.
pub fn write_parts(d: &Decomposition, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in d.parts.iter().enumerate() {
        write_binary_stl(&p.mesh, dir.join(format!("part_{i:03}.stl")))?;
    }
    Ok(())
}

/// Whether every part of `d` is a closed mesh.
pub fn parts_watertight(d: &Decomposition) -> bool {
    d.parts.iter().all(|p| validate_watertight(&p.mesh).is_watertight)
}

pub fn model_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string())
}

#[derive(Clone, Debug, Default)]
pub struct BatchReport {
    pub rows: Vec<ResultRow>,
    pub log: Vec<LogLine>,
}

impl BatchReport {
    pub fn any_valid(&self) -> bool {
        self.rows.iter().any(|r| r.valid)
    }

    /// Writes `results.csv`, `plotdata.json` and `runlog.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("results.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;

        let plot_path = dir.join("plotdata.json");
        fs::write(&plot_path, serde_json::to_string_pretty(&self.plot_data())?).map_err(|e| Error::io(&plot_path, e))?;

        let log_path = dir.join("runlog.jsonl");
        let mut f = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        for l in &self.log {
            writeln!(f, "{}", serde_json::to_string(l)?).map_err(|e| Error::io(&log_path, e))?;
        }
        Ok(())
    }

    /// Per model, per algorithm: printer counts with their times and scores.
    pub fn plot_data(&self) -> BTreeMap<String, BTreeMap<String, PlotSeries>> {
        let mut out: BTreeMap<String, BTreeMap<String, PlotSeries>> = BTreeMap::new();
        for r in &self.rows {
            let s = out
                .entry(r.model.clone())
                .or_default()
                .entry(r.algorithm.clone())
                .or_default();
            s.printers.push(r.printers);
            s.parts.push(r.parts);
            s.parallel_time_s.push(r.parallel_time_s);
            s.aggregate_time_s.push(r.aggregate_time_s);
            s.parallel_score.push(r.parallel_score);
            s.valid.push(r.valid);
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub printers: Vec<usize>,
    pub parts: Vec<usize>,
    pub parallel_time_s: Vec<f64>,
    pub aggregate_time_s: Vec<f64>,
    pub parallel_score: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Runs every (model, printer count) pair. A model that fails to load
/// gets invalid rows; the batch carries on.
pub fn run_batch(manifest: &BatchManifest) -> Result<BatchReport> {
    let plan = manifest.plan()?;
    let mut report = BatchReport::default();
    for path in &manifest.models {
        let model = model_name(path);
        let mesh = load_mesh(path, None).map(|m| m.with_name(model.clone()));
        for &p in &manifest.printer_counts {
            match &mesh {
                Ok(mesh) => {
                    let run = run_model(mesh, &model, p, &plan, manifest.baseline, &manifest.out_dir)?;
                    report.rows.extend(run.rows);
                    report.log.extend(run.log);
                }
                Err(_) => {
                    if manifest.baseline.runs_main() {
                        report.rows.push(row(&model, MAIN_ALGORITHM, p, None, 0.0));
                    }
                    if manifest.baseline.runs_symmetry() {
                        report.rows.push(row(&model, SYMMETRY_ALGORITHM, p, None, 0.0));
                    }
                }
            }
        }
    }
    report.write(&manifest.out_dir)?;
    Ok(report)
}
