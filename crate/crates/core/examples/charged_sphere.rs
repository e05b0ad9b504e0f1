//! Isolated sphere at 1 V: the density should be uniform and the exterior
//! potential should fall off like `R/r`.

use hvbem::fixtures;
use hvbem::postprocess::surface_field;
use hvbem::{assemble, solve, AssemblyConfig, Evaluator, QuadConfig, SolverConfig, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let level = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mesh = fixtures::charged_sphere(level, 1.0, 1.0).build()?;
    println!("{} unknowns", mesh.n_dofs());

    let asm = assemble(&mesh, &AssemblyConfig::default(), 4)?;
    let sol = solve(&asm.matrix, &asm.rhs, &SolverConfig::default())?;
    println!("gmres: {} iterations, residual {:.2e}", sol.iterations, sol.residual);

    let rms = (sol.u.iter().map(|u| (u - 1.0).powi(2)).sum::<f64>() / sol.u.len() as f64).sqrt();
    println!("density rms error {rms:.2e}");

    let eval = Evaluator::new(&mesh, &sol.u, QuadConfig::default())?;
    for r in [1.5, 2.0, 5.0] {
        let x = Vec3::new(1.0, 2.0, -0.5).normalize() * r;
        println!("phi({r}) = {:.6}  (exact {:.6})", eval.potential(&x)?, 1.0 / r);
    }

    let samples = surface_field(&mesh, &sol.u, &QuadConfig::default())?;
    let (lo, hi) = samples
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), s| (lo.min(s.magnitude), hi.max(s.magnitude)));
    println!("surface |E| in [{lo:.5}, {hi:.5}] V/m");
    Ok(())
}
