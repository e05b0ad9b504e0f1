//! A thin uncharged sheet between two electrodes settles at the potential
//! the free-space field would give it.

use hvbem::fixtures::{self, CONCENTRIC_RADII};
use hvbem::{assemble, solve, AssemblyConfig, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = fixtures::floating_shell(3).build()?;
    let asm = assemble(&mesh, &AssemblyConfig::default(), 4)?;
    let sol = solve(&asm.matrix, &asm.rhs, &SolverConfig::default())?;

    let (a, b, c) = CONCENTRIC_RADII;
    // Inner at 1 V, outer grounded: phi(r) = (1/r - 1/c) / (1/a - 1/c).
    let exact = (1.0 / b - 1.0 / c) / (1.0 / a - 1.0 / c);
    println!("{} density unknowns, {} floating potential", mesh.n_dofs(), sol.v.len());
    println!("V = {:.6}  exact {exact:.6}  rel err {:.1e}", sol.v[0], (sol.v[0] - exact).abs() / exact);
    Ok(())
}
