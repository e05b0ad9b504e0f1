use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hvbem::fixtures;
use hvbem::mesh::{MeshData, PatchKind, PatchSpec};
use hvbem::{assemble, AssemblyConfig, Config, Solution, SystemMatrix};
use tempfile::TempDir;

fn hvbem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hvbem"))
        .args(args)
        .env("HVBEM_WORKERS", "2")
        .output()
        .unwrap()
}

fn write_mesh(dir: &Path, name: &str, data: &MeshData) -> PathBuf {
    let p = dir.join(name);
    data.write(&p).unwrap();
    p
}

fn solve_case(dir: &Path, mesh: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join(format!("{}-out", mesh.file_stem().unwrap().to_str().unwrap()));
    let mut args = vec!["solve", "--mesh", mesh.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (hvbem(&args), out)
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn sphere_solve_writes_every_output() {
    let dir = TempDir::new().unwrap();
    let mesh = write_mesh(dir.path(), "sphere.bemesh", &fixtures::charged_sphere(3, 1.0, 1.0));
    let (res, out) = solve_case(dir.path(), &mesh, &["--dump-matrix"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let sol: Solution = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert!(sol.v.is_empty());
    assert!(sol.residual <= 1e-8);

    let csv = fs::read_to_string(out.join("surface_field.csv")).unwrap();
    let e: Vec<f64> = csv_column(&csv, "E").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(e.len(), 642);
    assert!(e.iter().all(|x| (x - 1.0).abs() < 0.02));

    let vtk = fs::read_to_string(out.join("surface_field.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    assert!(vtk.contains("POINTS 2562 double"));
    assert!(vtk.contains("CELLS 1280 8960"));
    assert_eq!(vtk.lines().filter(|l| *l == "22").count(), 1280);
    assert!(vtk.contains("SCALARS E_magnitude double 1"));

    let timings = fs::read_to_string(out.join("timings.txt")).unwrap();
    for key in ["assembly_s", "solve_s", "surface_field_s"] {
        assert!(timings.contains(key));
    }
    let cfg = Config::parse(&fs::read_to_string(out.join("config.txt")).unwrap()).unwrap();
    assert_eq!(cfg, Config::new());

    let dumped = SystemMatrix::read_dump(fs::File::open(out.join("matrix.bin")).unwrap()).unwrap();
    let reference = assemble(&fixtures::charged_sphere(3, 1.0, 1.0).build().unwrap(), &AssemblyConfig::default(), 1).unwrap();
    assert_eq!(dumped.dim(), 642);
    for i in [0, 17, 641] {
        assert_eq!(dumped.row(i), reference.matrix.row(i));
    }
}

#[test]
fn floating_shell_reports_its_potential() {
    let dir = TempDir::new().unwrap();
    let mesh = write_mesh(dir.path(), "shell.bemesh", &fixtures::floating_shell(2));
    let (res, out) = solve_case(dir.path(), &mesh, &["--workers", "3", "--blocks", "5", "--precision", "f32"]);
    assert!(res.status.success());
    let sol: Solution = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol.v.len(), 1);
    assert!((sol.v[0] - 1.0 / 3.0).abs() < 0.01 / 3.0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("V[0]"));
}

#[test]
fn trace_concentric_capacitor() {
    let dir = TempDir::new().unwrap();
    let mesh = write_mesh(dir.path(), "cap.bemesh", &fixtures::concentric_capacitor(2));
    let (res, case) = solve_case(dir.path(), &mesh, &[]);
    assert!(res.status.success());

    let gas = dir.path().join("ramp.gas");
    fs::write(&gas, "# alpha grows with the field\n0 0\n1 2\n10 20\nkstr 0.5\n").unwrap();
    let res = hvbem(&["trace", "--case", case.to_str().unwrap(), "--gas", gas.to_str().unwrap(), "--top-k", "4"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = fs::read_to_string(case.join("fieldlines/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(csv_column(&summary, "termination").iter().all(|t| t == "surface_hit"));
    assert!(csv_column(&summary, "inception").iter().all(|t| t == "true"));
    for len in csv_column(&summary, "length") {
        let len: f64 = len.parse().unwrap();
        assert!((len - 0.5).abs() < 0.01, "{len}");
    }
    let line = fs::read_to_string(case.join("fieldlines/line_000.csv")).unwrap();
    assert_eq!(line.lines().next().unwrap(), "x,y,z,s,E,alpha,cumulative_integral");

    let inert = dir.path().join("inert.gas");
    fs::write(&inert, "0 0\n100 0\nkstr 1\n").unwrap();
    let out = dir.path().join("inert");
    let res = hvbem(&[
        "trace",
        "--case",
        case.to_str().unwrap(),
        "--gas",
        inert.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv_column(&summary, "inception").iter().all(|t| t == "false"));

    let starts = dir.path().join("starts.txt");
    fs::write(&starts, "0 0 0\n0.05 0.02 0 1\n").unwrap();
    let res = hvbem(&["trace", "--case", case.to_str().unwrap(), "--gas", gas.to_str().unwrap(), "--starts", starts.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let res = hvbem(&["solve", "--mesh", "/no/such/mesh.bemesh", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("/no/such/mesh.bemesh"));

    let mesh = write_mesh(dir.path(), "s.bemesh", &fixtures::charged_sphere(1, 1.0, 1.0));
    let (res, _) = solve_case(dir.path(), &mesh, &["--set", "quad.nonsense=3"]);
    assert_eq!(res.status.code(), Some(1));

    let bad = dir.path().join("bad.bemesh");
    fs::write(&bad, "bemesh 1\nvertex 0 0 0\n").unwrap();
    let (res, _) = solve_case(dir.path(), &bad, &[]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn assembly_failure_exits_with_two() {
    // A floating face whose corners all belong to the electrode has no
    // collocation point of its own for the neutrality condition.
    let mut data = fixtures::sphere(0, 1.0, hvbem::Vec3::zeros(), 1);
    data.triangles[0].tag = 2;
    data.patches = vec![
        PatchSpec {
            tag: 1,
            kind: PatchKind::Electrode { potential: 1.0 },
        },
        PatchSpec {
            tag: 2,
            kind: PatchKind::FloatingConductor {
                index: 0,
                eps_plus: hvbem::EPS0,
            },
        },
    ];
    let dir = TempDir::new().unwrap();
    let mesh = write_mesh(dir.path(), "orphan.bemesh", &data);
    let (res, _) = solve_case(dir.path(), &mesh, &[]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let mesh = write_mesh(dir.path(), "cap.bemesh", &fixtures::concentric_capacitor(1));
    let cfg = dir.path().join("tight.cfg");
    fs::write(&cfg, "solver.max_iters = 1\nsolver.restart = 1\n").unwrap();
    let (res, _) = solve_case(dir.path(), &mesh, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn bench_with_a_single_rung() {
    let res = hvbem(&["bench", "--fixture", "sphere", "--levels", "1"]);
    assert!(res.status.success());
    let out = String::from_utf8_lossy(&res.stdout);
    assert!(out.contains("assembly exponent = n/a"));
    assert!(out.lines().any(|l| l.starts_with("1,42,")));
}
