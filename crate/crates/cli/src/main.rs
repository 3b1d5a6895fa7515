use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use partbox_core::batch::{model_name, run_model, BatchReport};
use partbox_core::blocks::write_trace_csv;
use partbox_core::{load_mesh, parse_config, run_batch, Baseline, BatchManifest, Granularity, RunPlan};

/// Split a mesh into boxes that print side by side on several printers.
#[derive(Parser)]
#[command(name = "partbox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose one model.
    Decompose(DecomposeArgs),
    /// Run a sweep described by a JSON manifest.
    Batch {
        manifest: PathBuf,
    },
}

#[derive(Args)]
struct DecomposeArgs {
    /// STL or OBJ file.
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    printers: usize,
    #[arg(long, default_value = "very_fine")]
    granularity: Granularity,
    #[arg(long, default_value_t = 3)]
    sample_tries: usize,
    #[arg(long)]
    skip_symmetry: bool,
    #[arg(long, default_value_t = 0.01)]
    symmetry_threshold: f64,
    /// Degrees.
    #[arg(long, default_value_t = 1.0)]
    overhang_tolerance: f64,
    #[arg(long, default_value_t = 0.05)]
    infill: f64,
    /// Printer `.ini` file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "parallelobox")]
    baseline: Baseline,
    /// Smallest printer budget the search tries.
    #[arg(long, default_value_t = 1)]
    min_printers: usize,
    /// Write each leaf's classified, owned grid as CSV.
    #[arg(long)]
    dump_grid: bool,
    /// Write each leaf's growth steps as CSV.
    #[arg(long)]
    trace: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decompose(args) => decompose(&args),
        Command::Batch { manifest } => batch(&manifest),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn decompose(args: &DecomposeArgs) -> partbox_core::Result<bool> {
    let mut plan = RunPlan {
        printers_available: args.printers,
        sample_tries: args.sample_tries,
        granularity: args.granularity,
        rng_seed: args.seed,
        symmetry_threshold: args.symmetry_threshold,
        skip_symmetry: args.skip_symmetry,
        min_printers: args.min_printers,
        keep_details: args.dump_grid || args.trace,
        ..RunPlan::default()
    };
    plan.params.overhang_tolerance = args.overhang_tolerance;
    plan.params.infill_fraction = args.infill;
    if let Some(c) = &args.config {
        parse_config(c)?.apply(&mut plan);
    }
    plan.validate()?;

    let model = model_name(&args.model);
    let mesh = load_mesh(&args.model, None)?.with_name(model.clone());
    let run = run_model(&mesh, &model, args.printers, &plan, args.baseline, &args.out)?;
    if let Some(best) = &run.best {
        let dir = args.out.join(&model).join(args.printers.to_string());
        for (i, leaf) in best.leaves.iter().enumerate() {
            if args.dump_grid {
                leaf.grid.write_csv(dir.join(format!("grid_{i}.csv")))?;
            }
            if args.trace {
                write_trace_csv(&leaf.trace, dir.join(format!("trace_{i}.csv")))?;
            }
        }
    }
    for r in &run.rows {
        println!(
            "{} {} printers={} parts={} parallel_time={:.1}s aggregate_time={:.1}s valid={}",
            r.model, r.algorithm, r.printers, r.parts, r.parallel_time_s, r.aggregate_time_s, r.valid
        );
    }
    let report = BatchReport {
        rows: run.rows,
        log: run.log,
    };
    report.write(&args.out)?;
    Ok(report.any_valid())
}

fn batch(manifest: &Path) -> partbox_core::Result<bool> {
    let m = BatchManifest::load(manifest)?;
    let report = run_batch(&m)?;
    let valid = report.rows.iter().filter(|r| r.valid).count();
    println!("{} rows, {valid} valid; reports in {}", report.rows.len(), m.out_dir.display());
    Ok(report.any_valid())
}
