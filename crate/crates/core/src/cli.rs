//! Command-line front end: `solve`, `trace` and `bench`.
//!
//! Exit codes: 0 success, 1 bad input (arguments, mesh, config, gas file,
//! I/O), 2 assembly failure, 3 solver non-convergence, 4 every trace start
//! point below the weak-field floor.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::assembly::assemble;
use crate::config::Config;
use crate::fixtures;
use crate::mesh::SurfaceMesh;
use crate::postprocess::{
    streamer_integral, surface_field, top_k_starts, trace_fieldline, write_fieldline_csv, Evaluator, IonizationModel,
    PostError, SurfaceSample, TraceParams,
};
use crate::solver::{solve, Solution, SolverError};
use crate::Vec3;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "HVBEM_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "hvbem", version, about = "Boundary-element electrostatics and streamer inception")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble and solve a mesh, then write the density and surface field.
    Solve(SolveArgs),
    /// Trace field lines in a solved case and evaluate the streamer criterion.
    Trace(TraceArgs),
    /// Time assembly and solve over a refinement ladder.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: $HVBEM_WORKERS or all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Row blocks (default: the worker count).
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Matrix storage precision, f64 or f32.
    #[arg(long)]
    pub precision: Option<String>,
    /// Configuration override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Also write the assembled matrix to `matrix.bin`.
    #[arg(long)]
    pub dump_matrix: bool,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Output directory of a previous `solve`.
    #[arg(long)]
    pub case: PathBuf,
    /// Ionization model file.
    #[arg(long)]
    pub gas: PathBuf,
    /// Trace from the K collocation points with the largest |E| (default 4).
    #[arg(long, conflicts_with = "starts")]
    pub top_k: Option<usize>,
    /// File of start points, one `x y z [orientation]` per line.
    #[arg(long)]
    pub starts: Option<PathBuf>,
    /// Output directory (default: CASE/fieldlines).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Only `sphere` is available.
    #[arg(long, default_value = "sphere")]
    pub fixture: String,
    /// Icosphere refinement levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub levels: Vec<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Skip the single-worker rerun of the largest rung.
    #[arg(long)]
    pub no_speedup: bool,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (exit code {})", self.message, self.code)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e)
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        let code = match e {
            SolverError::NotConverged { .. } => 3,
            SolverError::Assembly(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<PostError> for CliError {
    fn from(e: PostError) -> Self {
        let code = match e {
            PostError::Assembly(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parse arguments, run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Trace(a) => cmd_trace(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// `--workers`, else `$HVBEM_WORKERS`, else the available parallelism.
pub fn default_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, CliError> {
    let mut cfg = match path {
        Some(p) => Config::load(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
        None => Config::new(),
    };
    for o in overrides {
        cfg.apply_override(o).map_err(|e| CliError::input(format!("--set {o}: {e}")))?;
    }
    Ok(cfg)
}

/// Solve outputs written by [`cmd_solve`].
pub const SOLUTION_FILE: &str = "solution.json";
pub const MESH_FILE: &str = "mesh.bemesh";
pub const CONFIG_FILE: &str = "config.txt";
pub const SURFACE_CSV: &str = "surface_field.csv";
pub const SURFACE_VTK: &str = "surface_field.vtk";
pub const TIMINGS_FILE: &str = "timings.txt";
pub const MATRIX_FILE: &str = "matrix.bin";

fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref(), &args.set)?;
    if let Some(p) = &args.precision {
        cfg.set("assembly.precision", p).map_err(CliError::input)?;
    }
    let mesh_text = fs::read_to_string(&args.mesh).map_err(|e| CliError::input(format!("{}: {e}", args.mesh.display())))?;
    let mesh = crate::mesh::parse_mesh(&mesh_text)
        .and_then(|d| d.build())
        .map_err(|e| CliError::input(format!("{}: {e}", args.mesh.display())))?;
    let workers = default_workers(args.workers);
    let blocks = args.blocks.unwrap_or(workers);
    log::info!(
        "{} collocation points, {} floating, {workers} workers, {blocks} blocks",
        mesh.n_dofs(),
        mesh.n_floating()
    );

    let (solution, samples, timings, matrix) = with_workers(workers, || -> Result<_, CliError> {
        let t0 = Instant::now();
        let asm = assemble(&mesh, &cfg.assembly(), blocks).map_err(|e| CliError {
            code: 2,
            message: e.to_string(),
        })?;
        let t_asm = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let solution = solve(&asm.matrix, &asm.rhs, &cfg.solver)?;
        let t_solve = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let samples = surface_field(&mesh, &solution.u, &cfg.quad)?;
        let t_field = t2.elapsed().as_secs_f64();
        Ok((solution, samples, [t_asm, t_solve, t_field], asm.matrix))
    })??;

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join(MESH_FILE), &mesh_text)?;
    fs::write(args.out.join(CONFIG_FILE), cfg.to_text())?;
    let json = serde_json::to_string_pretty(&solution).map_err(CliError::input)?;
    fs::write(args.out.join(SOLUTION_FILE), json + "\n")?;
    fs::write(args.out.join(SURFACE_CSV), surface_csv(&samples))?;
    fs::write(args.out.join(SURFACE_VTK), surface_vtk(&mesh, &samples))?;
    fs::write(
        args.out.join(TIMINGS_FILE),
        format!(
            "n_dofs = {}\nworkers = {workers}\nblocks = {blocks}\nassembly_s = {:.6}\nsolve_s = {:.6}\nsurface_field_s = {:.6}\n",
            matrix.dim(),
            timings[0],
            timings[1],
            timings[2]
        ),
    )?;
    if args.dump_matrix {
        let f = BufWriter::new(fs::File::create(args.out.join(MATRIX_FILE))?);
        matrix.write_dump(f).map_err(CliError::input)?;
    }
    println!(
        "solved {} unknowns in {} iterations, residual {:.3e}",
        matrix.dim(),
        solution.iterations,
        solution.residual
    );
    for (k, v) in solution.v.iter().enumerate() {
        println!("V[{k}] = {v:?}");
    }
    Ok(())
}

/// Surface field table, one row per collocation point.
pub fn surface_csv(samples: &[SurfaceSample]) -> String {
    let mut s = String::from("vertex,x,y,z,nx,ny,nz,density,En_plus,En_minus,E\n");
    for p in samples {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            p.vertex,
            p.position.x,
            p.position.y,
            p.position.z,
            p.normal.x,
            p.normal.y,
            p.normal.z,
            p.density,
            p.en_plus,
            p.en_minus,
            p.magnitude
        );
    }
    s
}

/// Legacy ASCII VTK with quadratic triangles (cell type 22). Midside
/// vertices carry the mean of their edge endpoints.
pub fn surface_vtk(mesh: &SurfaceMesh, samples: &[SurfaceSample]) -> String {
    let nv = mesh.vertices().len();
    let mut e = vec![f64::NAN; nv];
    let mut sigma = vec![f64::NAN; nv];
    for p in samples {
        e[p.vertex] = p.magnitude;
        sigma[p.vertex] = p.density;
    }
    for t in mesh.triangles() {
        for (m, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
            let (ia, ib) = (t.corner_ids[a], t.corner_ids[b]);
            e[t.midside_ids[m]] = 0.5 * (e[ia] + e[ib]);
            sigma[t.midside_ids[m]] = 0.5 * (sigma[ia] + sigma[ib]);
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nhvbem surface field\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.position.x, v.position.y, v.position.z);
    }
    let nt = mesh.triangles().len();
    let _ = writeln!(s, "CELLS {nt} {}", nt * 7);
    for t in mesh.triangles() {
        let [a, b, c] = t.corner_ids;
        let [d, e2, f] = t.midside_ids;
        let _ = writeln!(s, "6 {a} {b} {c} {d} {e2} {f}");
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "22");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    for (name, data) in [("E_magnitude", &e), ("density", &sigma)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in data.iter() {
            let _ = writeln!(s, "{:?}", if x.is_finite() { *x } else { 0.0 });
        }
    }
    s
}

/// Tracing parameters from the mesh defaults and any `trace.*` keys. The
/// weak-field floor defaults to 1% of the strongest surface field.
pub fn trace_params(mesh: &SurfaceMesh, cfg: &Config, samples: &[SurfaceSample]) -> TraceParams {
    let mut p = TraceParams::for_mesh(mesh);
    let t = &cfg.trace;
    p.rel_tol = t.rel_tol.unwrap_or(p.rel_tol);
    p.h_min = t.h_min.unwrap_or(p.h_min);
    p.h_max = t.h_max.unwrap_or(p.h_max);
    p.surface_tol = t.surface_tol.unwrap_or(p.surface_tol);
    p.max_length = t.max_length.unwrap_or(p.max_length);
    let e_max = samples.iter().map(|s| s.magnitude).fold(0.0, f64::max);
    p.e_floor = t.e_floor.unwrap_or(0.01 * e_max);
    p
}

/// Start point just off the surface on the stronger-field side, and the
/// orientation that moves away from the surface.
pub fn surface_start(mesh: &SurfaceMesh, sample: &SurfaceSample) -> (Vec3, f64) {
    let r = mesh
        .corner_triangles(sample.vertex)
        .iter()
        .map(|&t| mesh.triangles()[t].circumradius)
        .fold(f64::INFINITY, f64::min);
    let side = sample.field_side();
    let en = if side > 0.0 { sample.en_plus } else { sample.en_minus };
    let orientation = if en * side >= 0.0 { 1.0 } else { -1.0 };
    (sample.position + sample.normal * (side * 0.05 * r), orientation)
}

/// Parse `x y z [orientation]` lines (comma or whitespace separated).
pub fn parse_starts(text: &str) -> Result<Vec<(Vec3, f64)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let vals: Vec<f64> = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::input(format!("starts line {}: invalid number", i + 1)))?;
        let orientation = match vals.len() {
            3 => 1.0,
            4 if vals[3] == 1.0 || vals[3] == -1.0 => vals[3],
            _ => {
                return Err(CliError::input(format!(
                    "starts line {}: expected `x y z [±1]`",
                    i + 1
                )))
            }
        };
        out.push((Vec3::new(vals[0], vals[1], vals[2]), orientation));
    }
    Ok(out)
}

/// Summary row of one traced line.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub id: usize,
    pub start: Vec3,
    pub length: f64,
    pub integral: f64,
    pub inception: bool,
    pub termination: String,
}

fn cmd_trace(args: &TraceArgs) -> Result<(), CliError> {
    let read = |name: &str| {
        let p = args.case.join(name);
        fs::read_to_string(&p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
    };
    let mut cfg = Config::parse(&read(CONFIG_FILE)?).map_err(CliError::input)?;
    for o in &args.set {
        cfg.apply_override(o).map_err(|e| CliError::input(format!("--set {o}: {e}")))?;
    }
    let mesh = crate::mesh::parse_mesh(&read(MESH_FILE)?)
        .and_then(|d| d.build())
        .map_err(CliError::input)?;
    let solution: Solution = serde_json::from_str(&read(SOLUTION_FILE)?).map_err(CliError::input)?;
    let model = IonizationModel::load(&args.gas).map_err(|e| CliError::input(format!("{}: {e}", args.gas.display())))?;
    let out_dir = args.out.clone().unwrap_or_else(|| args.case.join("fieldlines"));
    let workers = default_workers(args.workers);

    let rows = with_workers(workers, || -> Result<Vec<TraceRow>, CliError> {
        let samples = surface_field(&mesh, &solution.u, &cfg.quad)?;
        let params = trace_params(&mesh, &cfg, &samples);
        let starts: Vec<(Vec3, f64)> = match &args.starts {
            Some(path) => parse_starts(&fs::read_to_string(path)?)?,
            None => top_k_starts(&samples, args.top_k.unwrap_or(4))
                .into_iter()
                .map(|i| surface_start(&mesh, &samples[i]))
                .collect(),
        };
        let eval = Evaluator::new(&mesh, &solution.u, cfg.quad)?;
        let lines: Vec<_> = starts
            .par_iter()
            .map(|&(x, o)| trace_fieldline(&eval, x, o, &params))
            .collect();
        if !starts.is_empty() && lines.iter().all(|l| matches!(l, Err(PostError::WeakStart { .. }))) {
            return Err(CliError {
                code: 4,
                message: format!("all {} start points are below the field floor {:e} V/m", starts.len(), params.e_floor),
            });
        }
        fs::create_dir_all(&out_dir)?;
        let mut rows = Vec::new();
        for (id, (line, &(start, _))) in lines.into_iter().zip(&starts).enumerate() {
            let line = match line {
                Ok(l) => l,
                Err(PostError::WeakStart { magnitude, .. }) => {
                    log::warn!("start {id} skipped: |E| = {magnitude:e} V/m below the floor");
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let f = BufWriter::new(fs::File::create(out_dir.join(format!("line_{id:03}.csv")))?);
            write_fieldline_csv(&line, &model, f)?;
            let outcome = streamer_integral(&line, &model);
            rows.push(TraceRow {
                id,
                start,
                length: line.length(),
                integral: outcome.value,
                inception: outcome.inception,
                termination: line.termination.as_str().into(),
            });
        }
        Ok(rows)
    })??;

    let mut summary = String::from("line_id,start_x,start_y,start_z,length,integral,inception,termination\n");
    for r in &rows {
        let _ = writeln!(
            summary,
            "{},{:?},{:?},{:?},{:?},{:?},{},{}",
            r.id, r.start.x, r.start.y, r.start.z, r.length, r.integral, r.inception, r.termination
        );
    }
    fs::write(out_dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// One rung of the benchmark ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub level: usize,
    pub n: usize,
    pub assembly_s: f64,
    pub solve_s: f64,
    pub iterations: usize,
}

/// Least-squares slope of `log t` against `log n`; `None` with fewer than
/// two distinct sizes.
pub fn fit_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(n, t)| (n.ln(), t.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (pts.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

/// Assemble and solve the unit charged sphere at `level` with `workers`
/// threads and as many row blocks. Short rungs are repeated (up to three
/// runs or about a second in total) and the fastest run is reported.
pub fn bench_rung(level: usize, workers: usize, cfg: &Config) -> Result<BenchRow, CliError> {
    let mesh = fixtures::charged_sphere(level, 1.0, 1.0).build().map_err(CliError::input)?;
    with_workers(workers, || {
        let mut best: Option<BenchRow> = None;
        let started = Instant::now();
        for _ in 0..3 {
            let t0 = Instant::now();
            let asm = assemble(&mesh, &cfg.assembly(), workers).map_err(|e| CliError {
                code: 2,
                message: e.to_string(),
            })?;
            let assembly_s = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let sol = solve(&asm.matrix, &asm.rhs, &cfg.solver)?;
            let solve_s = t1.elapsed().as_secs_f64();
            let b = best.get_or_insert(BenchRow {
                level,
                n: mesh.n_dofs(),
                assembly_s,
                solve_s,
                iterations: sol.iterations,
            });
            b.assembly_s = b.assembly_s.min(assembly_s);
            b.solve_s = b.solve_s.min(solve_s);
            if started.elapsed().as_secs_f64() > 1.0 {
                break;
            }
        }
        Ok(best.expect("at least one run"))
    })?
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.fixture != "sphere" {
        return Err(CliError::input(format!("unknown fixture `{}` (available: sphere)", args.fixture)));
    }
    if args.levels.is_empty() {
        return Err(CliError::input("no levels given"));
    }
    let cfg = load_config(None, &args.set)?;
    let workers = default_workers(args.workers);
    println!("level,N,assembly_s,solve_s,iterations");
    let mut rows = Vec::new();
    for &level in &args.levels {
        let r = bench_rung(level, workers, &cfg)?;
        println!("{},{},{:.6},{:.6},{}", r.level, r.n, r.assembly_s, r.solve_s, r.iterations);
        rows.push(r);
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.assembly_s)).collect();
    match fit_exponent(&pts) {
        Some(e) => println!("assembly exponent = {e:.3}"),
        None => println!("assembly exponent = n/a"),
    }
    if !args.no_speedup {
        let largest = rows.iter().max_by_key(|r| r.n).expect("non-empty");
        if workers > 1 {
            let single = bench_rung(largest.level, 1, &cfg)?;
            println!(
                "speedup 1 -> {workers} workers at N = {}: {:.2}",
                largest.n,
                single.assembly_s / largest.assembly_s
            );
        } else {
            println!("speedup = n/a (1 worker available)");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_fit() {
        let pts: Vec<(f64, f64)> = [100.0, 400.0, 1600.0].iter().map(|&n: &f64| (n, 3e-6 * n * n)).collect();
        assert!((fit_exponent(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_exponent(&pts[..1]), None);
    }

    #[test]
    fn starts_parsing() {
        let s = parse_starts("# pts\n1 2 3\n0.5,0,0,-1\n").unwrap();
        assert_eq!(s, vec![(Vec3::new(1.0, 2.0, 3.0), 1.0), (Vec3::new(0.5, 0.0, 0.0), -1.0)]);
        assert!(parse_starts("1 2\n").is_err());
        assert!(parse_starts("1 2 3 0.5\n").is_err());
    }

    #[test]
    fn worker_default_prefers_explicit() {
        assert_eq!(default_workers(Some(3)), 3);
        assert_eq!(default_workers(Some(0)), 1);
        assert!(default_workers(None) >= 1);
    }

    #[test]
    fn argument_errors_exit_one() {
        assert_eq!(run(["hvbem", "solve"]), 1);
        assert_eq!(run(["hvbem", "frobnicate"]), 1);
        assert_eq!(run(["hvbem", "solve", "--mesh", "/nonexistent.bemesh", "--out", "/tmp/x"]), 1);
        assert_eq!(run(["hvbem", "bench", "--fixture", "cube"]), 1);
    }
}
