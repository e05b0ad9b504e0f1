//! Round-trips an assembled system through the binary dump and solves the
//! reloaded copy, first with GMRES and then with dense elimination.

use hvbem::assembly::Precision;
use hvbem::fixtures;
use hvbem::solver::{direct_solve, DenseMatrix};
use hvbem::{assemble, solve, AssemblyConfig, SolverConfig, SystemMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = fixtures::floating_shell(1).build()?;
    let cfg = AssemblyConfig { precision: Precision::F64, ..Default::default() };
    let asm = assemble(&mesh, &cfg, 3)?;

    let mut bytes = Vec::new();
    asm.matrix.write_dump(&mut bytes)?;
    let back = SystemMatrix::read_dump(bytes.as_slice())?;
    println!("{} x {} system, {} bytes", back.dim(), back.dim(), bytes.len());

    let iterative = solve(&back, &asm.rhs, &SolverConfig::default())?;
    let rows: Vec<Vec<f64>> = (0..back.dim()).map(|i| back.row(i)).collect();
    let dense = direct_solve(&DenseMatrix::from_rows(&rows), &asm.rhs).ok_or("singular")?;

    let diff = iterative.u.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("gmres {} iterations, max |u_gmres - u_dense| = {diff:.2e}", iterative.iterations);
    println!("floating V: gmres {:.8}  dense {:.8}", iterative.v[0], dense[back.dim() - 1]);
    Ok(())
}
