//! Temporary scratch driver: verify convergence behaviour per scenario
//! before freezing acceptance seeds. Delete before release.

use std::time::Instant;

use tomo::experiment::{run_experiment, ExperimentConfig};

fn ratio(out: &tomo::experiment::ExperimentOutcome) -> (f64, f64) {
    let mut intra = (0.0, 0u64);
    let mut cross = (0.0, 0u64);
    for (a, b, w) in out.graph.weights() {
        if w == 0.0 {
            continue;
        }
        if out.truth.label(a as usize) == out.truth.label(b as usize) {
            intra = (intra.0 + w, intra.1 + 1);
        } else {
            cross = (cross.0 + w, cross.1 + 1);
        }
    }
    (intra.0 / intra.1 as f64, cross.0 / cross.1 as f64)
}

fn show(name: &str, iterations: u32, seed: u64) {
    let t0 = Instant::now();
    let out = run_experiment(&ExperimentConfig::builtin(name, iterations, seed)).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let first_perfect = out.trace.iter().position(|p| p.nmi >= 1.0 - 1e-12).map(|i| i + 1);
    let (mi, mc) = ratio(&out);
    println!(
        "{name}: n={iterations} seed={seed} {secs:.1}s final_nmi={:.4} k={} first_1.0={:?} intra/cross={:.2}",
        out.nmi,
        out.clustering.partition.clusters(),
        first_perfect,
        mi / mc
    );
    let nmis: Vec<String> = out.trace.iter().map(|p| format!("{:.3}", p.nmi)).collect();
    println!("  trace: {}", nmis.join(" "));
}

fn main() {
    show("GT", 12, 7);
    show("BGT", 12, 7);
    show("BGTL", 30, 7);
}
