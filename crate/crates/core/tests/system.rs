//! Assembly and solver working together on the analytic fixtures.

use hvbem::assembly::Precision;
use hvbem::fixtures;
use hvbem::solver::residual;
use hvbem::{assemble, solve, AssemblyConfig, RowKind, SolverConfig, EPS0};

#[test]
fn unit_sphere_density_is_one() {
    let mesh = fixtures::charged_sphere(3, 1.0, 1.0).build().unwrap();
    let asm = assemble(&mesh, &AssemblyConfig::default(), 3).unwrap();
    let sol = solve(&asm.matrix, &asm.rhs, &SolverConfig::default()).unwrap();
    assert!(sol.residual <= 1e-8);
    let n = sol.u.len() as f64;
    let rms = (sol.u.iter().map(|u| (u - 1.0).powi(2)).sum::<f64>() / n).sqrt();
    assert!(rms < 0.02);
}

#[test]
fn block_count_does_not_change_the_solution() {
    let mesh = fixtures::floating_shell(2).build().unwrap();
    let cfg = AssemblyConfig::default();
    let solve_with = |blocks| {
        let asm = assemble(&mesh, &cfg, blocks).unwrap();
        solve(&asm.matrix, &asm.rhs, &SolverConfig::default()).unwrap()
    };
    let one = solve_with(1);
    for blocks in [2, 8] {
        let other = solve_with(blocks);
        let diff = one.u.iter().zip(&other.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = one.u.iter().map(|a| a.abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12 * scale);
        assert!((one.v[0] - other.v[0]).abs() <= 1e-12);
    }
}

#[test]
fn residual_grows_with_the_perturbation() {
    let mesh = fixtures::charged_sphere(2, 1.0, 1.0).build().unwrap();
    let asm = assemble(&mesh, &AssemblyConfig::default(), 1).unwrap();
    let sol = solve(&asm.matrix, &asm.rhs, &SolverConfig::default()).unwrap();
    let dir: Vec<f64> = (0..sol.u.len()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let mut last = residual(&asm.matrix, &sol.u, &asm.rhs).unwrap();
    assert!(last <= 1e-8);
    assert_eq!(residual(&asm.matrix, &vec![0.0; sol.u.len()], &asm.rhs).unwrap(), 1.0);
    for scale in [1e-6, 1e-4, 1e-2, 1.0] {
        let x: Vec<f64> = sol.u.iter().zip(&dir).map(|(u, d)| u + scale * d).collect();
        let r = residual(&asm.matrix, &x, &asm.rhs).unwrap();
        assert!(r > last);
        last = r;
    }
}

#[test]
fn dielectric_rows_reproduce_the_jump_identity() {
    // Unscaled interface rows applied to a constant density give
    // ½(ε+ + ε−) + (ε+ − ε−)·½ = ε+ as the mesh resolves the sphere.
    let mesh = fixtures::dielectric_capacitor(3).build().unwrap();
    let cfg = AssemblyConfig {
        equilibrate: false,
        ..Default::default()
    };
    let asm = assemble(&mesh, &cfg, 2).unwrap();
    // Only the interface sphere carries density.
    let ones: Vec<f64> = mesh
        .dofs()
        .iter()
        .map(|&v| matches!(mesh.row_kind(v), Some(RowKind::DielectricJump { .. })) as i32 as f64)
        .collect();
    let y = asm.matrix.matvec(&ones).unwrap();
    let mut checked = 0;
    for (i, kind) in asm.row_kinds.iter().enumerate() {
        if let RowKind::DielectricJump { eps_plus, eps_minus } = *kind {
            assert_eq!((eps_plus, eps_minus), (EPS0, 2.0 * EPS0));
            assert!((y[i] - eps_plus).abs() / eps_plus < 0.01, "{} vs {eps_plus}", y[i]);
            checked += 1;
        }
    }
    assert_eq!(checked, 642);
}

#[test]
fn single_precision_storage_still_solves() {
    let mesh = fixtures::charged_sphere(2, 1.0, 1.0).build().unwrap();
    let cfg = AssemblyConfig {
        precision: Precision::F32,
        ..Default::default()
    };
    let asm = assemble(&mesh, &cfg, 4).unwrap();
    let sol = solve(&asm.matrix, &asm.rhs, &SolverConfig::default()).unwrap();
    assert!(sol.u.iter().all(|u| (u - 1.0).abs() < 0.01));
}
