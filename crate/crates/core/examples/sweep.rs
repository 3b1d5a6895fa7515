//! Prints best-of-seeds parallel times for the metaheuristic and the
//! symmetry baseline on the built-in fixtures.

use std::time::Instant;

use partbox_core::fixtures;
use partbox_core::meta::{recursive_symmetry_baseline, run_metaheuristic_logged, RunPlan};

fn main() {
    let fixtures = [
        fixtures::unit_cube(),
        fixtures::icosphere(10.0, 3),
        fixtures::dumbbell(),
        fixtures::l_bracket(),
        fixtures::hollow_box(),
    ];
    for mesh in &fixtures {
        let vol = partbox_core::measure(mesh).volume;
        for p in [1usize, 2, 4, 8] {
            let start = Instant::now();
            let mut best = f64::INFINITY;
            let mut worst_err = 0.0f64;
            for s in 0..5u64 {
                let plan = RunPlan {
                    printers_available: p,
                    rng_seed: s,
                    ..RunPlan::default()
                };
                let out = run_metaheuristic_logged(mesh, &plan).expect("run");
                if let Some(d) = out.best {
                    best = best.min(d.parallel_time);
                    let v: f64 = d.parts.iter().map(|x| x.volume).sum();
                    worst_err = worst_err.max((v - vol).abs() / vol);
                }
            }
            let base = recursive_symmetry_baseline(mesh, p, &Default::default(), &Default::default())
                .map(|d| d.parallel_time)
                .unwrap_or(f64::NAN);
            println!(
                "{:12} p={p} best={best:10.3} baseline={base:10.3} vol_err={worst_err:.2e} {:?}",
                mesh.name,
                start.elapsed()
            );
        }
    }
}
