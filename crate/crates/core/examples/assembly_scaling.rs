//! Times dense assembly over a ladder of sphere refinements and fits the
//! growth exponent, which should be close to 2.

use hvbem::cli::{bench_rung, default_workers, fit_exponent};
use hvbem::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workers = default_workers(None);
    let cfg = Config::new();
    let mut points = Vec::new();
    println!("level,n,assembly_s,solve_s,iterations");
    for level in 1..=4 {
        let row = bench_rung(level, workers, &cfg)?;
        println!("{},{},{:.4},{:.4},{}", row.level, row.n, row.assembly_s, row.solve_s, row.iterations);
        points.push((row.n as f64, row.assembly_s));
    }
    // The smallest rung is dominated by fixed costs.
    match fit_exponent(&points[1..]) {
        Some(p) => println!("assembly exponent {p:.2} with {workers} workers"),
        None => println!("assembly exponent n/a"),
    }
    Ok(())
}
