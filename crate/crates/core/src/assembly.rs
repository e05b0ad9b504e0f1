//! Dense collocation system assembly.
//!
//! Row `i < n` is the collocation equation at the `i`-th corner vertex;
//! rows `n..n+N_fl` are the charge-neutrality equations of the floating
//! surfaces. Columns `0..n` hold the density coefficients and `n..n+N_fl`
//! the unknown floating potentials.
//!
//! Every row is owned by one worker. The worker walks all triangles in
//! ascending order, integrating regular and singular pairs right away and
//! deferring near-singular ones; the deferred pairs are integrated in a
//! second pass. The accumulation order of a row therefore never depends on
//! how rows are split into blocks, and the assembled matrix is bitwise
//! identical for any block or worker count.

use std::io::{Read, Write};
use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::kernels;
use crate::mesh::{CurvedTriangle, PatchKind, SurfaceMesh};
use crate::quadrature::{
    classify_pair, duffy_rule, near_singular_rule, regular_rule, PairClass, QuadConfig, QuadratureError, Rule,
};
use crate::Vec3;

/// Kind of equation attached to a matrix row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowKind {
    /// Potential prescribed to `potential`.
    Dirichlet { potential: f64 },
    /// Potential equal to the unknown potential of floating surface `index`.
    FloatingDirichlet { index: usize },
    /// Zero surface charge on a dielectric interface.
    DielectricJump { eps_plus: f64, eps_minus: f64 },
    /// Zero total charge on floating surface `index`.
    Neutrality { index: usize, sheet: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyConfig {
    pub quad: QuadConfig,
    pub precision: Precision,
    /// Scale every row (and its right-hand side) by the inverse of its
    /// largest absolute entry. Rows scaled by absolute permittivities are
    /// otherwise ~1e-11 smaller than potential rows.
    pub equilibrate: bool,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            quad: QuadConfig::default(),
            precision: Precision::F64,
            equilibrate: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("floating surface {index} has no collocation point left to carry its potential")]
    NoNeutralityRow { index: usize },
    #[error("floating surface {index} has zero area")]
    ZeroArea { index: usize },
    #[error("cannot split {rows} rows into {blocks} blocks")]
    InvalidBlocks { rows: usize, blocks: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("matrix dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Contiguous row ranges of near-equal size (sizes differ by at most one).
pub fn partition_rows(rows: usize, blocks: usize) -> Result<Vec<Range<usize>>, AssemblyError> {
    if blocks == 0 || blocks > rows {
        return Err(AssemblyError::InvalidBlocks { rows, blocks });
    }
    let base = rows / blocks;
    let extra = rows % blocks;
    let mut start = 0;
    Ok((0..blocks)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
enum BlockData {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

/// Dense storage for a contiguous range of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock {
    rows: Range<usize>,
    data: BlockData,
}

impl RowBlock {
    pub fn rows(&self) -> Range<usize> {
        self.rows.clone()
    }

    #[inline]
    fn dot_row(&self, local: usize, dim: usize, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        match &self.data {
            BlockData::F64(d) => {
                for (a, x) in d[local * dim..(local + 1) * dim].iter().zip(v) {
                    acc += a * x;
                }
            }
            BlockData::F32(d) => {
                for (a, x) in d[local * dim..(local + 1) * dim].iter().zip(v) {
                    acc += f64::from(*a) * x;
                }
            }
        }
        acc
    }

    fn entry(&self, local: usize, dim: usize, j: usize) -> f64 {
        match &self.data {
            BlockData::F64(d) => d[local * dim + j],
            BlockData::F32(d) => f64::from(d[local * dim + j]),
        }
    }
}

/// Dense `(n + N_fl)`-dimensional system stored as independent row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    dim: usize,
    n_density: usize,
    n_floating: usize,
    precision: Precision,
    blocks: Vec<RowBlock>,
}

impl SystemMatrix {
    /// Build from dense row-major `rows`, split into `n_blocks` blocks.
    pub fn from_rows(
        rows: &[Vec<f64>],
        n_floating: usize,
        n_blocks: usize,
        precision: Precision,
    ) -> Result<Self, AssemblyError> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(AssemblyError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let blocks = partition_rows(dim, n_blocks)?
            .into_iter()
            .map(|range| {
                let flat: Vec<f64> = rows[range.clone()].iter().flatten().copied().collect();
                RowBlock {
                    rows: range,
                    data: store(flat, precision),
                }
            })
            .collect();
        Ok(Self {
            dim,
            n_density: dim - n_floating,
            n_floating,
            precision,
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_density(&self) -> usize {
        self.n_density
    }

    pub fn n_floating(&self) -> usize {
        self.n_floating
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn blocks(&self) -> &[RowBlock] {
        &self.blocks
    }

    fn locate(&self, i: usize) -> (&RowBlock, usize) {
        let b = self
            .blocks
            .partition_point(|blk| blk.rows.end <= i)
            .min(self.blocks.len() - 1);
        let blk = &self.blocks[b];
        (blk, i - blk.rows.start)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (blk, local) = self.locate(i);
        blk.entry(local, self.dim, j)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let (blk, local) = self.locate(i);
        (0..self.dim).map(|j| blk.entry(local, self.dim, j)).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `y = A v`, block-parallel; each row accumulates in ascending column
    /// order.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(v, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, v: &[f64], y: &mut [f64]) -> Result<(), AssemblyError> {
        for len in [v.len(), y.len()] {
            if len != self.dim {
                return Err(AssemblyError::DimensionMismatch {
                    expected: self.dim,
                    found: len,
                });
            }
        }
        let mut slices = Vec::with_capacity(self.blocks.len());
        let mut rest = y;
        for blk in &self.blocks {
            let (head, tail) = rest.split_at_mut(blk.rows.len());
            slices.push(head);
            rest = tail;
        }
        let dim = self.dim;
        self.blocks
            .par_iter()
            .zip(slices.into_par_iter())
            .for_each(|(blk, out)| {
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(local, yi)| *yi = blk.dot_row(local, dim, v));
            });
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"HVBEMMAT";

    /// Binary dump: magic, `N`, `n`, `N_fl` (u64 LE), precision byte (4 or
    /// 8), block count, then per block its row range and row-major entries
    /// in little endian.
    pub fn write_dump(&self, mut w: impl Write) -> Result<(), AssemblyError> {
        w.write_all(Self::MAGIC)?;
        for x in [self.dim, self.n_density, self.n_floating] {
            w.write_all(&(x as u64).to_le_bytes())?;
        }
        w.write_all(&[match self.precision {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }])?;
        w.write_all(&(self.blocks.len() as u64).to_le_bytes())?;
        for blk in &self.blocks {
            w.write_all(&(blk.rows.start as u64).to_le_bytes())?;
            w.write_all(&(blk.rows.end as u64).to_le_bytes())?;
            match &blk.data {
                BlockData::F64(d) => d.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                BlockData::F32(d) => d.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            }
        }
        Ok(())
    }

    pub fn read_dump(mut r: impl Read) -> Result<Self, AssemblyError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(AssemblyError::Dump("bad magic".into()));
        }
        let mut u64_buf = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<usize, AssemblyError> {
            r.read_exact(&mut u64_buf)?;
            Ok(u64::from_le_bytes(u64_buf) as usize)
        };
        let dim = read_u64(&mut r)?;
        let n_density = read_u64(&mut r)?;
        let n_floating = read_u64(&mut r)?;
        if n_density + n_floating != dim {
            return Err(AssemblyError::Dump("inconsistent dimensions".into()));
        }
        let mut p = [0u8; 1];
        r.read_exact(&mut p)?;
        let precision = match p[0] {
            4 => Precision::F32,
            8 => Precision::F64,
            other => return Err(AssemblyError::Dump(format!("bad precision byte {other}"))),
        };
        let n_blocks = read_u64(&mut r)?;
        let mut blocks = Vec::with_capacity(n_blocks);
        let mut expected_start = 0;
        for _ in 0..n_blocks {
            let start = read_u64(&mut r)?;
            let end = read_u64(&mut r)?;
            if start != expected_start || end < start || end > dim {
                return Err(AssemblyError::Dump("row blocks do not partition the rows".into()));
            }
            expected_start = end;
            let count = (end - start) * dim;
            let data = match precision {
                Precision::F64 => {
                    let mut buf = vec![0u8; count * 8];
                    r.read_exact(&mut buf)?;
                    BlockData::F64(
                        buf.chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                Precision::F32 => {
                    let mut buf = vec![0u8; count * 4];
                    r.read_exact(&mut buf)?;
                    BlockData::F32(
                        buf.chunks_exact(4)
                            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
            };
            blocks.push(RowBlock {
                rows: start..end,
                data,
            });
        }
        if expected_start != dim {
            return Err(AssemblyError::Dump("row blocks do not cover all rows".into()));
        }
        Ok(Self {
            dim,
            n_density,
            n_floating,
            precision,
            blocks,
        })
    }
}

fn store(flat: Vec<f64>, precision: Precision) -> BlockData {
    match precision {
        Precision::F64 => BlockData::F64(flat),
        Precision::F32 => BlockData::F32(flat.into_iter().map(|x| x as f32).collect()),
    }
}

/// Pair statistics of an assembly run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub regular: usize,
    pub singular: usize,
    pub near_singular: usize,
    /// Near-singular pairs integrated in the deferred pass.
    pub deferred_processed: usize,
}

impl std::ops::Add for PairCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            regular: self.regular + o.regular,
            singular: self.singular + o.singular,
            near_singular: self.near_singular + o.near_singular,
            deferred_processed: self.deferred_processed + o.deferred_processed,
        }
    }
}

/// Output of [`assemble`].
#[derive(Debug, Clone)]
pub struct Assembly {
    pub matrix: SystemMatrix,
    pub rhs: Vec<f64>,
    /// Kind of every row.
    pub row_kinds: Vec<RowKind>,
    /// Factor each row was multiplied by (1 without equilibration).
    pub row_scale: Vec<f64>,
    /// Pair counts over the collocation rows.
    pub counts: PairCounts,
}

/// Kernel integrated against the basis functions of a row.
#[derive(Debug, Clone, Copy)]
pub(crate) enum RowKernel {
    SingleLayer,
    AdjointDoubleLayer(Vec3),
}

/// Quadrature machinery shared by assembly and field evaluation: the
/// regular rule mapped onto every triangle, plus the singular rules.
pub(crate) struct Integrator<'a> {
    pub(crate) mesh: &'a SurfaceMesh,
    pub(crate) quad: QuadConfig,
    per_tri: usize,
    points: Vec<Vec3>,
    jw: Vec<f64>,
    basis: Vec<[f64; 3]>,
    singular: [Rule; 3],
}

impl<'a> Integrator<'a> {
    pub(crate) fn new(mesh: &'a SurfaceMesh, quad: QuadConfig) -> Result<Self, QuadratureError> {
        let rule = regular_rule(quad.regular_order)?;
        let per_tri = rule.len();
        let mut points = Vec::with_capacity(per_tri * mesh.triangles().len());
        let mut jw = Vec::with_capacity(points.capacity());
        for tri in mesh.triangles() {
            for (node, w) in rule.nodes.iter().zip(&rule.weights) {
                let (p, j) = tri.point_and_jacobian(node[0], node[1]);
                points.push(p);
                jw.push(w * j.norm());
            }
        }
        let basis = rule
            .nodes
            .iter()
            .map(|n| [1.0 - n[0] - n[1], n[0], n[1]])
            .collect();
        let singular = [0, 1, 2].map(|c| duffy_rule(c, quad.duffy_points));
        Ok(Self {
            mesh,
            quad,
            per_tri,
            points,
            jw,
            basis,
            singular,
        })
    }

    /// Visit the quadrature nodes of triangle `t` for a pair of class
    /// `class` with evaluation point `x`: `f(y, weight · area element,
    /// linear basis values)`.
    #[inline]
    pub(crate) fn visit(&self, t: usize, class: PairClass, x: &Vec3, mut f: impl FnMut(&Vec3, f64, &[f64; 3])) {
        match class {
            PairClass::Regular => {
                let base = t * self.per_tri;
                for k in 0..self.per_tri {
                    f(&self.points[base + k], self.jw[base + k], &self.basis[k]);
                }
            }
            PairClass::Singular { corner } => self.visit_rule(t, &self.singular[corner], f),
            PairClass::NearSingular => {
                let rule = near_singular_rule(x, &self.mesh.triangles()[t], &self.quad);
                self.visit_rule(t, &rule, f);
            }
        }
    }

    fn visit_rule(&self, t: usize, rule: &Rule, mut f: impl FnMut(&Vec3, f64, &[f64; 3])) {
        let tri = &self.mesh.triangles()[t];
        for (node, w) in rule.nodes.iter().zip(&rule.weights) {
            let (p, j) = tri.point_and_jacobian(node[0], node[1]);
            f(&p, w * j.norm(), &[1.0 - node[0] - node[1], node[0], node[1]]);
        }
    }

    #[inline]
    fn pair_integral(&self, t: usize, class: PairClass, x: &Vec3, kernel: RowKernel) -> [f64; 3] {
        let mut acc = [0.0; 3];
        match kernel {
            RowKernel::SingleLayer => self.visit(t, class, x, |y, w, b| {
                let k = kernels::sl(x, y) * w;
                acc[0] += k * b[0];
                acc[1] += k * b[1];
                acc[2] += k * b[2];
            }),
            RowKernel::AdjointDoubleLayer(n) => self.visit(t, class, x, |y, w, b| {
                let k = kernels::adl(x, &n, y) * w;
                acc[0] += k * b[0];
                acc[1] += k * b[1];
                acc[2] += k * b[2];
            }),
        }
        acc
    }

    /// Accumulate `∫ kernel(x, y) ψ_j(y) dS_y` into `out[j]` for every
    /// density column `j`, with the two-pass deferred strategy.
    pub(crate) fn integrate_row(
        &self,
        x: &Vec3,
        vertex: Option<usize>,
        kernel: RowKernel,
        out: &mut [f64],
        counts: &mut PairCounts,
    ) {
        let mesh = self.mesh;
        let mut deferred = Vec::new();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let class = classify_pair(x, vertex, tri, self.quad.eta);
            match class {
                PairClass::NearSingular => {
                    counts.near_singular += 1;
                    deferred.push(t);
                    continue;
                }
                PairClass::Regular => counts.regular += 1,
                PairClass::Singular { .. } => counts.singular += 1,
            }
            self.scatter(t, self.pair_integral(t, class, x, kernel), out);
        }
        for t in deferred {
            self.scatter(t, self.pair_integral(t, PairClass::NearSingular, x, kernel), out);
            counts.deferred_processed += 1;
        }
    }

    #[inline]
    fn scatter(&self, t: usize, acc: [f64; 3], out: &mut [f64]) {
        let tri = &self.mesh.triangles()[t];
        for c in 0..3 {
            let j = self.mesh.dof_of(tri.corner_ids[c]).expect("corners carry unknowns");
            out[j] += acc[c];
        }
    }
}

/// Charge functional coefficients: the charge is
/// `Σ_i (a_i u_i + b_i (K′u)_i)` with `a_i = Σ_t w_it ½(ε+ + ε−)` and
/// `b_i = Σ_t w_it (ε+ − ε−)` over the selected triangles adjacent to `i`.
fn charge_coefficients(
    mesh: &SurfaceMesh,
    select: impl Fn(usize, &CurvedTriangle, &PatchKind) -> Option<(f64, f64)>,
) -> Vec<(usize, f64, f64)> {
    let mut coeffs = Vec::new();
    for (dof, &vid) in mesh.dofs().iter().enumerate() {
        let (mut a, mut b) = (0.0, 0.0);
        let mut any = false;
        for &t in mesh.corner_triangles(vid) {
            let tri = &mesh.triangles()[t];
            if let Some((ep, em)) = select(vid, tri, &mesh.triangle_kind(t)) {
                let c = tri.corner_of(vid).unwrap();
                let w = mesh.corner_weight(t, c);
                a += w * 0.5 * (ep + em);
                b += w * (ep - em);
                any = true;
            }
        }
        if any {
            coeffs.push((dof, a, b));
        }
    }
    coeffs
}

fn charge_row(integ: &Integrator, coeffs: &[(usize, f64, f64)], out: &mut [f64]) {
    let mesh = integ.mesh;
    let n = mesh.n_dofs();
    let mut scratch = vec![0.0; n];
    let mut counts = PairCounts::default();
    for &(dof, a, b) in coeffs {
        if b != 0.0 {
            let vid = mesh.dofs()[dof];
            scratch.iter_mut().for_each(|s| *s = 0.0);
            let kernel = RowKernel::AdjointDoubleLayer(mesh.vertex_normal(vid));
            integ.integrate_row(&mesh.position(vid), Some(vid), kernel, &mut scratch, &mut counts);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += b * s;
            }
        }
        out[dof] += a;
    }
}

/// Row vector `c` with `Q = c · u`: the total charge `∫ n·(D+ − D−) dS`
/// over the triangles whose tag is in `tags`, for permittivities `ε+`,
/// `ε−` on the two sides. Use `ε− = 0` for a closed conductor.
pub fn charge_functional(
    mesh: &SurfaceMesh,
    quad: &QuadConfig,
    tags: &[i64],
    eps_plus: f64,
    eps_minus: f64,
) -> Result<Vec<f64>, AssemblyError> {
    let integ = Integrator::new(mesh, *quad)?;
    let coeffs = charge_coefficients(mesh, |_, tri, _| tags.contains(&tri.patch_tag).then_some((eps_plus, eps_minus)));
    let mut out = vec![0.0; mesh.n_dofs()];
    charge_row(&integ, &coeffs, &mut out);
    Ok(out)
}

/// Assemble the collocation system split into `n_blocks` row blocks.
pub fn assemble(mesh: &SurfaceMesh, config: &AssemblyConfig, n_blocks: usize) -> Result<Assembly, AssemblyError> {
    let n = mesh.n_dofs();
    let n_fl = mesh.n_floating();
    let dim = n + n_fl;
    let ranges = partition_rows(dim, n_blocks)?;

    let mut row_kinds: Vec<RowKind> = mesh
        .dofs()
        .iter()
        .map(|&vid| mesh.row_kind(vid).expect("collocation vertices are classified"))
        .collect();
    let mut neutrality = Vec::with_capacity(n_fl);
    for k in 0..n_fl {
        let area: f64 = (0..mesh.triangles().len())
            .filter(|&t| mesh.triangle_kind(t).floating_index() == Some(k))
            .map(|t| (0..3).map(|c| mesh.corner_weight(t, c)).sum::<f64>())
            .sum();
        if !(area > 0.0) {
            return Err(AssemblyError::ZeroArea { index: k });
        }
        let on_surface = |vid: usize| mesh.row_kind(vid) == Some(RowKind::FloatingDirichlet { index: k });
        if !mesh.dofs().iter().any(|&v| on_surface(v)) {
            return Err(AssemblyError::NoNeutralityRow { index: k });
        }
        let coeffs = charge_coefficients(mesh, |vid, _, kind| {
            if on_surface(vid) && kind.floating_index() == Some(k) {
                kind.neutrality_permittivities()
            } else {
                None
            }
        });
        let sheet = mesh
            .patches()
            .any(|p| matches!(p.kind, PatchKind::FloatingSheet { index, .. } if index == k));
        row_kinds.push(RowKind::Neutrality { index: k, sheet });
        neutrality.push(coeffs);
    }

    let integ = Integrator::new(mesh, config.quad)?;
    let row_kinds_ref = &row_kinds;
    let neutrality_ref = &neutrality;

    let compute_row = |i: usize, row: &mut [f64], counts: &mut PairCounts| -> f64 {
        let kind = row_kinds_ref[i];
        if let RowKind::Neutrality { index, .. } = kind {
            charge_row(&integ, &neutrality_ref[index], &mut row[..n]);
            return 0.0;
        }
        let vid = mesh.dofs()[i];
        let x = mesh.position(vid);
        match kind {
            RowKind::Dirichlet { potential } => {
                integ.integrate_row(&x, Some(vid), RowKernel::SingleLayer, &mut row[..n], counts);
                potential
            }
            RowKind::FloatingDirichlet { index } => {
                integ.integrate_row(&x, Some(vid), RowKernel::SingleLayer, &mut row[..n], counts);
                row[n + index] = -1.0;
                0.0
            }
            RowKind::DielectricJump {
                eps_plus,
                eps_minus,
            } => {
                let kernel = RowKernel::AdjointDoubleLayer(mesh.vertex_normal(vid));
                integ.integrate_row(&x, Some(vid), kernel, &mut row[..n], counts);
                let jump = eps_plus - eps_minus;
                row[..n].iter_mut().for_each(|a| *a *= jump);
                row[i] += 0.5 * (eps_plus + eps_minus);
                0.0
            }
            RowKind::Neutrality { .. } => unreachable!(),
        }
    };

    let results: Vec<(RowBlock, Vec<f64>, Vec<f64>, PairCounts)> = ranges
        .into_par_iter()
        .map(|range| {
            let mut data = vec![0.0f64; range.len() * dim];
            let mut rhs = vec![0.0; range.len()];
            let mut scale = vec![1.0; range.len()];
            let counts = data
                .par_chunks_mut(dim)
                .zip(rhs.par_iter_mut())
                .zip(scale.par_iter_mut())
                .enumerate()
                .map(|(local, ((row, b), s))| {
                    let mut counts = PairCounts::default();
                    *b = compute_row(range.start + local, row, &mut counts);
                    if config.equilibrate {
                        let max = row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                        if max > 0.0 {
                            *s = 1.0 / max;
                            row.iter_mut().for_each(|a| *a *= *s);
                            *b *= *s;
                        }
                    }
                    counts
                })
                .reduce(PairCounts::default, |a, b| a + b);
            let block = RowBlock {
                rows: range,
                data: store(data, config.precision),
            };
            (block, rhs, scale, counts)
        })
        .collect();

    let mut blocks = Vec::with_capacity(results.len());
    let mut rhs = Vec::with_capacity(dim);
    let mut row_scale = Vec::with_capacity(dim);
    let mut counts = PairCounts::default();
    for (blk, b, s, c) in results {
        blocks.push(blk);
        rhs.extend(b);
        row_scale.extend(s);
        counts = counts + c;
    }
    Ok(Assembly {
        matrix: SystemMatrix {
            dim,
            n_density: n,
            n_floating: n_fl,
            precision: config.precision,
            blocks,
        },
        rhs,
        row_kinds,
        row_scale,
        counts,
    })
}

/// `(K′u)_i` at every collocation point, using the collocation normals.
pub fn adjoint_double_layer_apply(
    mesh: &SurfaceMesh,
    quad: &QuadConfig,
    density: &[f64],
) -> Result<Vec<f64>, AssemblyError> {
    let n = mesh.n_dofs();
    if density.len() != n {
        return Err(AssemblyError::DimensionMismatch {
            expected: n,
            found: density.len(),
        });
    }
    let integ = Integrator::new(mesh, *quad)?;
    Ok(mesh
        .dofs()
        .par_iter()
        .map(|&vid| {
            let mut row = vec![0.0; n];
            let mut counts = PairCounts::default();
            let kernel = RowKernel::AdjointDoubleLayer(mesh.vertex_normal(vid));
            integ.integrate_row(&mesh.position(vid), Some(vid), kernel, &mut row, &mut counts);
            row.iter().zip(density).map(|(a, u)| a * u).sum()
        })
        .collect())
}
