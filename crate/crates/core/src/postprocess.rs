//! Potential and field evaluation, field-line tracing and the
//! streamer-inception criterion.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{adjoint_double_layer_apply, AssemblyError, Integrator, RowKind};
use crate::kernels;
use crate::mesh::SurfaceMesh;
use crate::quadrature::{classify_pair, closest_point, QuadConfig, QuadratureError};
use crate::Vec3;

/// Evaluation points closer than this to a mesh vertex are rejected.
pub const MIN_VERTEX_DISTANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PostError {
    #[error("evaluation point is {distance:e} m from vertex {vertex}")]
    SingularProximity { vertex: usize, distance: f64 },
    #[error("field at the start point ({magnitude:e} V/m) is below the floor {floor:e} V/m")]
    WeakStart { magnitude: f64, floor: f64 },
    #[error("density has {found} coefficients, the mesh has {expected} collocation points")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("ionization model, line {line}: {message}")]
    Model { line: usize, message: String },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Evaluates the single-layer potential and its field for a fixed density.
pub struct Evaluator<'a> {
    integ: Integrator<'a>,
    /// Density at the three corners of every triangle.
    corner_density: Vec<[f64; 3]>,
}

impl<'a> Evaluator<'a> {
    pub fn new(mesh: &'a SurfaceMesh, density: &[f64], quad: QuadConfig) -> Result<Self, PostError> {
        if density.len() != mesh.n_dofs() {
            return Err(PostError::DimensionMismatch {
                expected: mesh.n_dofs(),
                found: density.len(),
            });
        }
        let corner_density = mesh
            .triangles()
            .iter()
            .map(|t| t.corner_ids.map(|id| density[mesh.dof_of(id).expect("corner")]))
            .collect();
        Ok(Self {
            integ: Integrator::new(mesh, quad)?,
            corner_density,
        })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        self.integ.mesh
    }

    fn check(&self, x: &Vec3) -> Result<(), PostError> {
        for v in self.mesh().vertices() {
            let distance = (x - v.position).norm();
            if distance < MIN_VERTEX_DISTANCE {
                return Err(PostError::SingularProximity { vertex: v.id, distance });
            }
        }
        Ok(())
    }

    fn accumulate<T: Default + std::ops::AddAssign>(&self, x: &Vec3, kernel: impl Fn(&Vec3) -> T, scale: impl Fn(T, f64) -> T) -> T {
        let mut total = T::default();
        for (t, tri) in self.mesh().triangles().iter().enumerate() {
            let class = classify_pair(x, None, tri, self.integ.quad.eta);
            let d = self.corner_density[t];
            self.integ.visit(t, class, x, |y, w, b| {
                let sigma = d[0] * b[0] + d[1] * b[1] + d[2] * b[2];
                total += scale(kernel(y), w * sigma);
            });
        }
        total
    }

    /// `φ(x) = ∫ σ(y) / (4π|x − y|) dS_y`.
    pub fn potential(&self, x: &Vec3) -> Result<f64, PostError> {
        self.check(x)?;
        Ok(self.accumulate(x, |y| kernels::sl(x, y), |k, s| k * s))
    }

    /// `E(x) = ∫ (x − y) σ(y) / (4π|x − y|³) dS_y`.
    pub fn efield(&self, x: &Vec3) -> Result<Vec3, PostError> {
        self.check(x)?;
        Ok(self.accumulate(x, |y| kernels::efield(x, y), |k, s| k * s))
    }
}

/// Potential at `x` for density coefficients `u`.
pub fn eval_potential(u: &[f64], mesh: &SurfaceMesh, x: &Vec3, quad: &QuadConfig) -> Result<f64, PostError> {
    Evaluator::new(mesh, u, *quad)?.potential(x)
}

/// Electric field at `x` for density coefficients `u`.
pub fn eval_efield(u: &[f64], mesh: &SurfaceMesh, x: &Vec3, quad: &QuadConfig) -> Result<Vec3, PostError> {
    Evaluator::new(mesh, u, *quad)?.efield(x)
}

/// Distance from `x` to the nearest triangle, the triangle index and the
/// nearest surface point (closest point of the flat corner triangle,
/// mapped onto the curved triangle).
pub fn nearest_surface(mesh: &SurfaceMesh, x: &Vec3) -> (f64, usize, Vec3) {
    let mut best = (f64::INFINITY, 0, *x);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let uv = closest_point(x, tri);
        let flat = tri.flat_map(uv[0], uv[1]);
        // The flat distance bounds the curved one up to the patch sag.
        if (x - flat).norm() > best.0 + tri.circumradius {
            continue;
        }
        let p = tri.map(uv[0], uv[1]);
        let d = (x - p).norm();
        if d < best.0 {
            best = (d, t, p);
        }
    }
    best
}

/// Field at one collocation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub vertex: usize,
    pub position: Vec3,
    pub normal: Vec3,
    pub density: f64,
    /// Normal field on the plus side, `½σ + K′σ`.
    pub en_plus: f64,
    /// Normal field on the minus side, `−½σ + K′σ`.
    pub en_minus: f64,
    /// Tangential field (zero on conductors).
    pub tangential: Vec3,
    /// `|E|` on the side with the larger normal field.
    pub magnitude: f64,
}

impl SurfaceSample {
    /// `+1` if the stronger field is on the plus side, `−1` otherwise.
    pub fn field_side(&self) -> f64 {
        if self.en_plus.abs() >= self.en_minus.abs() {
            1.0
        } else {
            -1.0
        }
    }
}

/// Surface field at every collocation point. The normal component comes
/// from the jump relations of the single layer; on dielectric interfaces
/// the tangential component is evaluated a quarter circumradius off the
/// surface.
pub fn surface_field(mesh: &SurfaceMesh, u: &[f64], quad: &QuadConfig) -> Result<Vec<SurfaceSample>, PostError> {
    let kprime = adjoint_double_layer_apply(mesh, quad, u)?;
    let eval = Evaluator::new(mesh, u, *quad)?;
    mesh.dofs()
        .par_iter()
        .enumerate()
        .map(|(i, &vid)| {
            let normal = mesh.vertex_normal(vid);
            let position = mesh.position(vid);
            let en_plus = 0.5 * u[i] + kprime[i];
            let en_minus = -0.5 * u[i] + kprime[i];
            let tangential = if let Some(RowKind::DielectricJump { .. }) = mesh.row_kind(vid) {
                let r = mesh
                    .corner_triangles(vid)
                    .iter()
                    .map(|&t| mesh.triangles()[t].circumradius)
                    .fold(f64::INFINITY, f64::min);
                let side = if en_plus.abs() >= en_minus.abs() { 1.0 } else { -1.0 };
                let e = eval.efield(&(position + normal * (0.25 * r * side)))?;
                e - normal * e.dot(&normal)
            } else {
                Vec3::zeros()
            };
            let en = en_plus.abs().max(en_minus.abs());
            Ok(SurfaceSample {
                vertex: vid,
                position,
                normal,
                density: u[i],
                en_plus,
                en_minus,
                tangential,
                magnitude: (en * en + tangential.norm_squared()).sqrt(),
            })
        })
        .collect()
}

/// Indices into `samples` of the `k` largest field magnitudes, strongest
/// first.
pub fn top_k_starts(samples: &[SurfaceSample], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[b].magnitude.total_cmp(&samples[a].magnitude).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    SurfaceHit,
    WeakField,
    MaxLength,
    LeftDomain,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::SurfaceHit => "surface_hit",
            Termination::WeakField => "weak_field",
            Termination::MaxLength => "max_length",
            Termination::LeftDomain => "left_domain",
        }
    }
}

/// Polyline along a field line with `|E|` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLine {
    pub points: Vec<Vec3>,
    pub e_magnitudes: Vec<f64>,
    pub arc_lengths: Vec<f64>,
    pub termination: Termination,
}

impl FieldLine {
    pub fn length(&self) -> f64 {
        self.arc_lengths.last().copied().unwrap_or(0.0)
    }
}

/// Field-line integration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    /// Local error allowed per unit arc length.
    pub rel_tol: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Stop when closer to the surface than this multiple of the nearest
    /// triangle's circumradius (and still approaching).
    pub surface_tol: f64,
    /// Stop when `|E|` drops below this value (V/m).
    pub e_floor: f64,
    pub max_length: f64,
    /// Lines leaving this box stop.
    pub domain: (Vec3, Vec3),
}

impl TraceParams {
    /// Defaults scaled to the mesh bounding box: step bounds `1e-6·diag`
    /// and `0.05·diag`, maximum length `2·diag`, domain the box enlarged
    /// 1.5 times about its centre.
    pub fn for_mesh(mesh: &SurfaceMesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let diag = mesh.bbox_diagonal();
        let center = (lo + hi) / 2.0;
        let half = (hi - lo) * 0.75;
        Self {
            rel_tol: 1e-6,
            h_min: 1e-6 * diag,
            h_max: 0.05 * diag,
            surface_tol: 0.1,
            e_floor: 1e-6,
            max_length: 2.0 * diag,
            domain: (center - half, center + half),
        }
    }

    fn inside(&self, x: &Vec3) -> bool {
        (0..3).all(|k| x[k] >= self.domain.0[k] && x[k] <= self.domain.1[k])
    }
}

// Dormand-Prince 5(4) tableau.
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus the embedded fourth-order weights.
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 100_000;

/// Trace `dx/ds = orientation · E/|E|` from `start` with an adaptive
/// Dormand-Prince scheme. Steps are also limited so that `|E|` changes by
/// at most `rel_tol^(1/3)` (relative) between consecutive samples. On a surface hit the line is closed with the
/// nearest surface point, carrying the last evaluated `|E|`.
pub fn trace_fieldline(
    eval: &Evaluator,
    start: Vec3,
    orientation: f64,
    params: &TraceParams,
) -> Result<FieldLine, PostError> {
    let mesh = eval.mesh();
    let sign = if orientation < 0.0 { -1.0 } else { 1.0 };
    let e0 = eval.efield(&start)?;
    if !(e0.norm() >= params.e_floor) {
        return Err(PostError::WeakStart {
            magnitude: e0.norm(),
            floor: params.e_floor,
        });
    }

    let mut line = FieldLine {
        points: vec![start],
        e_magnitudes: vec![e0.norm()],
        arc_lengths: vec![0.0],
        termination: Termination::MaxLength,
    };
    let (mut d_prev, _, _) = nearest_surface(mesh, &start);
    let mut x = start;
    let mut s = 0.0;
    let mut k1 = e0 * (sign / e0.norm());
    let mut h = (0.25 * d_prev).clamp(params.h_min, params.h_max);
    let max_change = params.rel_tol.cbrt();

    // Unit direction at y, or None where the field is too weak or cannot
    // be evaluated.
    let direction = |y: &Vec3| -> Option<(Vec3, f64)> {
        let e = eval.efield(y).ok()?;
        let m = e.norm();
        (m >= params.e_floor).then(|| (e * (sign / m), m))
    };

    for _ in 0..MAX_STEPS {
        if s >= params.max_length * (1.0 - 1e-12) {
            line.termination = Termination::MaxLength;
            return Ok(line);
        }
        let clipped = h.min(params.max_length - s);
        let mut k = [k1, Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros()];
        let mut e_new = 0.0;
        let mut weak = false;
        for stage in 0..6 {
            let mut y = x;
            for (j, a) in DP_A[stage].iter().enumerate().take(stage + 1) {
                y += k[j] * (clipped * a);
            }
            match direction(&y) {
                Some((dir, m)) => {
                    k[stage + 1] = dir;
                    e_new = m;
                }
                None => {
                    weak = true;
                    break;
                }
            }
        }
        if weak {
            if clipped > params.h_min {
                h = (0.5 * clipped).max(params.h_min);
                continue;
            }
            line.termination = Termination::WeakField;
            return Ok(line);
        }
        let mut y5 = x;
        for (j, a) in DP_A[5].iter().enumerate() {
            y5 += k[j] * (clipped * a);
        }
        let mut err_vec = Vec3::zeros();
        for (j, e) in DP_E.iter().enumerate() {
            err_vec += k[j] * (clipped * e);
        }
        let err = err_vec.norm();
        let allowed = params.rel_tol * clipped;
        if err > allowed && clipped > params.h_min {
            h = (clipped * (0.9 * (allowed / err).powf(0.25)).max(0.2)).max(params.h_min);
            continue;
        }
        // Keep |E| smooth between samples so that integrals along the
        // polyline stay accurate even where the line is straight.
        let e_old = *line.e_magnitudes.last().expect("non-empty");
        let change = (e_new - e_old).abs() / e_new.max(e_old);
        if change > max_change && clipped > params.h_min {
            h = (clipped * (0.9 * max_change / change).max(0.2)).max(params.h_min);
            continue;
        }

        x = y5;
        s += clipped;
        k1 = k[6];
        line.points.push(x);
        line.e_magnitudes.push(e_new);
        line.arc_lengths.push(s);

        let mut growth = if err > 0.0 { (0.9 * (allowed / err).powf(0.25)).clamp(0.2, 5.0) } else { 5.0 };
        if change > 0.0 {
            growth = growth.min((0.9 * max_change / change).max(0.2));
        }
        h = (clipped * growth).clamp(params.h_min, params.h_max);

        if !params.inside(&x) {
            line.termination = Termination::LeftDomain;
            return Ok(line);
        }
        let (d, t, p) = nearest_surface(mesh, &x);
        if d < params.surface_tol * mesh.triangles()[t].circumradius && d < d_prev {
            line.points.push(p);
            line.e_magnitudes.push(e_new);
            line.arc_lengths.push(s + d.max(f64::EPSILON * s));
            line.termination = Termination::SurfaceHit;
            return Ok(line);
        }
        d_prev = d;
        // Do not step across the surface.
        h = h.min(d.max(params.h_min));
    }
    line.termination = Termination::MaxLength;
    Ok(line)
}

/// Tabulated effective ionization coefficient `α_eff(|E|)` and streamer
/// constant `K_str`.
#[derive(Debug, Clone, PartialEq)]
pub struct IonizationModel {
    table: Vec<(f64, f64)>,
    pub k_str: f64,
}

impl IonizationModel {
    /// `table` holds `(|E| in V/m, α_eff in 1/m)` pairs, strictly
    /// increasing in `|E|`.
    pub fn new(table: Vec<(f64, f64)>, k_str: f64) -> Result<Self, PostError> {
        if table.is_empty() {
            return Err(PostError::Model {
                line: 0,
                message: "empty table".into(),
            });
        }
        if table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(PostError::Model {
                line: 0,
                message: "field values must increase strictly".into(),
            });
        }
        if table.iter().any(|(e, a)| !e.is_finite() || !a.is_finite()) || !k_str.is_finite() {
            return Err(PostError::Model {
                line: 0,
                message: "non-finite value".into(),
            });
        }
        Ok(Self { table, k_str })
    }

    /// Text format: `<E_V_per_m> <alpha_per_m>` lines and one
    /// `kstr <value>` line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PostError> {
        let mut table = Vec::new();
        let mut k_str = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            let bad = |message: String| PostError::Model { line, message };
            if tokens.len() != 2 {
                return Err(bad(format!("expected two fields, got {}", tokens.len())));
            }
            let value: f64 = tokens[1]
                .parse()
                .map_err(|_| bad(format!("invalid number `{}`", tokens[1])))?;
            if tokens[0] == "kstr" {
                k_str = Some(value);
            } else {
                let e: f64 = tokens[0]
                    .parse()
                    .map_err(|_| bad(format!("invalid number `{}`", tokens[0])))?;
                table.push((e, value));
            }
        }
        let k_str = k_str.ok_or(PostError::Model {
            line: 0,
            message: "missing `kstr` line".into(),
        })?;
        Self::new(table, k_str)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PostError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn table(&self) -> &[(f64, f64)] {
        &self.table
    }

    /// Piecewise linear in `|E|`, constant beyond the table ends.
    pub fn alpha(&self, e: f64) -> f64 {
        let t = &self.table;
        if e <= t[0].0 {
            return t[0].1;
        }
        if e >= t[t.len() - 1].0 {
            return t[t.len() - 1].1;
        }
        let i = t.partition_point(|&(x, _)| x <= e);
        let (e0, a0) = t[i - 1];
        let (e1, a1) = t[i];
        a0 + (a1 - a0) * (e - e0) / (e1 - e0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamerOutcome {
    pub value: f64,
    pub inception: bool,
}

/// Running trapezoidal integral of `α_eff(|E|)` over arc length.
pub fn cumulative_integral(line: &FieldLine, model: &IonizationModel) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(line.points.len());
    for i in 0..line.points.len() {
        if i > 0 {
            let ds = line.arc_lengths[i] - line.arc_lengths[i - 1];
            acc += 0.5 * ds * (model.alpha(line.e_magnitudes[i - 1]) + model.alpha(line.e_magnitudes[i]));
        }
        out.push(acc);
    }
    out
}

/// `∫ α_eff(|E|) ds` along the line and whether it exceeds `K_str`.
pub fn streamer_integral(line: &FieldLine, model: &IonizationModel) -> StreamerOutcome {
    let value = cumulative_integral(line, model).last().copied().unwrap_or(0.0);
    StreamerOutcome {
        value,
        inception: value > model.k_str,
    }
}

/// CSV with columns `x,y,z,s,E,alpha,cumulative_integral`.
pub fn write_fieldline_csv(line: &FieldLine, model: &IonizationModel, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "x,y,z,s,E,alpha,cumulative_integral")?;
    let cumulative = cumulative_integral(line, model);
    for i in 0..line.points.len() {
        let p = line.points[i];
        let e = line.e_magnitudes[i];
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            p.x,
            p.y,
            p.z,
            line.arc_lengths[i],
            e,
            model.alpha(e),
            cumulative[i]
        )?;
    }
    Ok(())
}
