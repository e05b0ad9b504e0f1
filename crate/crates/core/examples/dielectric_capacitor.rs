//! Two-layer spherical capacitor: permittivity 2 inside radius 0.75,
//! vacuum outside. Compares the potential on the interface and the field on
//! each side with the layered closed form.

use hvbem::fixtures::{self, CONCENTRIC_RADII};
use hvbem::{assemble, solve, AssemblyConfig, Evaluator, QuadConfig, SolverConfig, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = fixtures::dielectric_capacitor(3).build()?;
    let asm = assemble(&mesh, &AssemblyConfig::default(), 4)?;
    let sol = solve(&asm.matrix, &asm.rhs, &SolverConfig::default())?;
    let eval = Evaluator::new(&mesh, &sol.u, QuadConfig::default())?;

    let (a, b, c) = CONCENTRIC_RADII;
    let (e1, e2) = (2.0, 1.0);
    // Same D in both layers: Q/(4π) · (1/(e1)(1/a-1/b) + 1/(e2)(1/b-1/c)) = 1 V.
    let q = 1.0 / ((1.0 / a - 1.0 / b) / e1 + (1.0 / b - 1.0 / c) / e2);
    let v_b = q * (1.0 / b - 1.0 / c) / e2;

    let dir = Vec3::new(0.3, -0.2, 0.9).normalize();
    println!("phi(b) = {:.6}  exact {v_b:.6}", eval.potential(&(dir * b))?);
    for r in [0.62, 0.88] {
        let eps = if r < b { e1 } else { e2 };
        let exact = q / (eps * r * r);
        let e = eval.efield(&(dir * r))?;
        println!("|E|({r}) = {:.5}  exact {exact:.5}", e.norm());
    }
    Ok(())
}
