//! Curved-triangle surface meshes.
//!
//! A mesh is a list of vertices, 6-node quadratic triangles and the patch
//! specifications that attach a boundary condition to each triangle tag.
//! Only corner vertices carry density unknowns (the basis is the mapped
//! piecewise linear hat over corners); midside vertices shape the geometry.
//!
//! Text format, one record per line, `#` starts a comment:
//!
//! ```text
//! bemesh 1
//! permittivity relative          # optional: multiply permittivities by ε0
//! vertex <id> <x> <y> <z>
//! triangle <c0> <c1> <c2> <m01> <m12> <m20> <tag>
//! patch <tag> electrode <V0>
//! patch <tag> floating <k> [<eps+>]
//! patch <tag> sheet <k> <eps+> <eps->
//! patch <tag> dielectric <eps+> <eps->
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::assembly::RowKind;
use crate::quadrature::regular_rule;
use crate::{Vec3, EPS0};

/// Smallest accepted circumradius of a triangle's corner triangle, in meters.
pub const MIN_CIRCUMRADIUS: f64 = 1e-12;
/// Smallest accepted surface Jacobian magnitude.
pub const MIN_JACOBIAN: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vertex ids must be contiguous from 0: {0}")]
    VertexIds(String),
    #[error("vertex {0} has a non-finite position")]
    NonFinite(usize),
    #[error("triangle {triangle} references vertex {vertex}, but the mesh has {count} vertices")]
    DanglingVertex {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("triangle {triangle} uses vertex {vertex} more than once")]
    RepeatedVertex { triangle: usize, vertex: usize },
    #[error("triangle {triangle} has tag {tag}, which has no patch")]
    UnknownTag { triangle: usize, tag: i64 },
    #[error("triangle {triangle} is degenerate (circumradius {radius:e} m)")]
    DegenerateTriangle { triangle: usize, radius: f64 },
    #[error("degenerate surface jacobian {magnitude:e} in triangle {triangle}")]
    DegenerateJacobian { triangle: usize, magnitude: f64 },
    #[error("vertex {0} is not used by any triangle")]
    OrphanVertex(usize),
    #[error("patch {tag}: {message}")]
    InvalidPatch { tag: i64, message: String },
    #[error("floating indices must be contiguous from 0, found {0:?}")]
    FloatingIndices(Vec<usize>),
    #[error("vertex {vertex} joins dielectric interfaces with different permittivity pairs")]
    TripleJunction { vertex: usize },
}

/// Boundary condition attached to a patch tag. Permittivities are absolute
/// (F/m) once the mesh is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchKind {
    Electrode { potential: f64 },
    /// Closed floating conductor. `eps_plus` is the permittivity of the
    /// surrounding medium; it only scales the neutrality equation.
    FloatingConductor { index: usize, eps_plus: f64 },
    FloatingSheet {
        index: usize,
        eps_plus: f64,
        eps_minus: f64,
    },
    /// The triangle orientation gives the normal, pointing from the minus
    /// side into the plus side.
    DielectricInterface { eps_plus: f64, eps_minus: f64 },
}

impl PatchKind {
    pub fn floating_index(&self) -> Option<usize> {
        match *self {
            PatchKind::FloatingConductor { index, .. } | PatchKind::FloatingSheet { index, .. } => {
                Some(index)
            }
            _ => None,
        }
    }

    /// `(ε+, ε−)` entering the charge-neutrality functional. A closed
    /// conductor carries no field inside, which is `ε− = 0`.
    pub fn neutrality_permittivities(&self) -> Option<(f64, f64)> {
        match *self {
            PatchKind::FloatingConductor { eps_plus, .. } => Some((eps_plus, 0.0)),
            PatchKind::FloatingSheet {
                eps_plus, eps_minus, ..
            } => Some((eps_plus, eps_minus)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    pub tag: i64,
    pub kind: PatchKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleRecord {
    /// Corner ids, then midside ids of edges 0-1, 1-2, 2-0.
    pub nodes: [usize; 6],
    pub tag: i64,
}

/// Unvalidated mesh contents, as read from or written to the text format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshData {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<TriangleRecord>,
    pub patches: Vec<PatchSpec>,
    /// Permittivities in `patches` are relative and get multiplied by ε0.
    pub relative_permittivity: bool,
}

impl MeshData {
    pub fn to_text(&self) -> String {
        let mut out = String::from("bemesh 1\n");
        if self.relative_permittivity {
            out.push_str("permittivity relative\n");
        }
        for (id, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "vertex {id} {:?} {:?} {:?}", p[0], p[1], p[2]);
        }
        for t in &self.triangles {
            let n = t.nodes;
            let _ = writeln!(
                out,
                "triangle {} {} {} {} {} {} {}",
                n[0], n[1], n[2], n[3], n[4], n[5], t.tag
            );
        }
        for p in &self.patches {
            let _ = match p.kind {
                PatchKind::Electrode { potential } => {
                    writeln!(out, "patch {} electrode {:?}", p.tag, potential)
                }
                PatchKind::FloatingConductor { index, eps_plus } => {
                    writeln!(out, "patch {} floating {} {:?}", p.tag, index, eps_plus)
                }
                PatchKind::FloatingSheet {
                    index,
                    eps_plus,
                    eps_minus,
                } => writeln!(
                    out,
                    "patch {} sheet {} {:?} {:?}",
                    p.tag, index, eps_plus, eps_minus
                ),
                PatchKind::DielectricInterface {
                    eps_plus,
                    eps_minus,
                } => writeln!(
                    out,
                    "patch {} dielectric {:?} {:?}",
                    p.tag, eps_plus, eps_minus
                ),
            };
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn build(self) -> Result<SurfaceMesh, MeshError> {
        SurfaceMesh::from_data(self)
    }
}

fn parse_field<T: std::str::FromStr>(
    tokens: &[&str],
    idx: usize,
    line: usize,
    what: &str,
) -> Result<T, MeshError> {
    let tok = tokens.get(idx).ok_or_else(|| MeshError::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| MeshError::Parse {
        line,
        message: format!("invalid {what} `{tok}`"),
    })
}

fn expect_len(tokens: &[&str], allowed: &[usize], line: usize) -> Result<(), MeshError> {
    if allowed.contains(&tokens.len()) {
        Ok(())
    } else {
        Err(MeshError::Parse {
            line,
            message: format!(
                "`{}` record has {} fields",
                tokens[0],
                tokens.len().saturating_sub(1)
            ),
        })
    }
}

/// Parse the text mesh format without validating the geometry.
pub fn parse_mesh(text: &str) -> Result<MeshData, MeshError> {
    let mut data = MeshData::default();
    let mut vertex_records: Vec<(usize, [f64; 3])> = Vec::new();
    let mut seen_header = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if !seen_header {
            if tokens != ["bemesh", "1"] {
                return Err(MeshError::Parse {
                    line,
                    message: "expected header `bemesh 1`".into(),
                });
            }
            seen_header = true;
            continue;
        }
        match tokens[0] {
            "permittivity" => {
                expect_len(&tokens, &[2], line)?;
                data.relative_permittivity = match tokens[1] {
                    "relative" => true,
                    "absolute" => false,
                    other => {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("unknown permittivity mode `{other}`"),
                        })
                    }
                };
            }
            "vertex" => {
                expect_len(&tokens, &[5], line)?;
                let id: usize = parse_field(&tokens, 1, line, "vertex id")?;
                let x = parse_field(&tokens, 2, line, "x")?;
                let y = parse_field(&tokens, 3, line, "y")?;
                let z = parse_field(&tokens, 4, line, "z")?;
                vertex_records.push((id, [x, y, z]));
            }
            "triangle" => {
                expect_len(&tokens, &[8], line)?;
                let mut nodes = [0usize; 6];
                for (k, node) in nodes.iter_mut().enumerate() {
                    *node = parse_field(&tokens, k + 1, line, "vertex index")?;
                }
                let tag = parse_field(&tokens, 7, line, "patch tag")?;
                data.triangles.push(TriangleRecord { nodes, tag });
            }
            "patch" => {
                if tokens.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "incomplete patch record".into(),
                    });
                }
                let tag = parse_field(&tokens, 1, line, "patch tag")?;
                let kind = match tokens[2] {
                    "electrode" => {
                        expect_len(&tokens, &[4], line)?;
                        PatchKind::Electrode {
                            potential: parse_field(&tokens, 3, line, "potential")?,
                        }
                    }
                    "floating" => {
                        expect_len(&tokens, &[4, 5], line)?;
                        let eps_plus = if tokens.len() == 5 {
                            parse_field(&tokens, 4, line, "eps+")?
                        } else {
                            f64::NAN
                        };
                        PatchKind::FloatingConductor {
                            index: parse_field(&tokens, 3, line, "floating index")?,
                            eps_plus,
                        }
                    }
                    "sheet" => {
                        expect_len(&tokens, &[6], line)?;
                        PatchKind::FloatingSheet {
                            index: parse_field(&tokens, 3, line, "floating index")?,
                            eps_plus: parse_field(&tokens, 4, line, "eps+")?,
                            eps_minus: parse_field(&tokens, 5, line, "eps-")?,
                        }
                    }
                    "dielectric" => {
                        expect_len(&tokens, &[5], line)?;
                        PatchKind::DielectricInterface {
                            eps_plus: parse_field(&tokens, 3, line, "eps+")?,
                            eps_minus: parse_field(&tokens, 4, line, "eps-")?,
                        }
                    }
                    other => {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("unknown patch kind `{other}`"),
                        })
                    }
                };
                if data.patches.iter().any(|p| p.tag == tag) {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("duplicate patch tag {tag}"),
                    });
                }
                data.patches.push(PatchSpec { tag, kind });
            }
            other => {
                return Err(MeshError::Parse {
                    line,
                    message: format!("unknown record `{other}`"),
                })
            }
        }
    }
    if !seen_header {
        return Err(MeshError::Parse {
            line: 1,
            message: "empty mesh file".into(),
        });
    }

    vertex_records.sort_by_key(|(id, _)| *id);
    for (expected, (id, _)) in vertex_records.iter().enumerate() {
        if *id != expected {
            return Err(MeshError::VertexIds(format!(
                "expected id {expected}, found {id}"
            )));
        }
    }
    data.vertices = vertex_records.into_iter().map(|(_, p)| p).collect();
    Ok(data)
}

/// Read, parse and validate a mesh file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<SurfaceMesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_mesh(&text)?.build()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub position: Vec3,
}

/// Quadratic 6-node triangle with its node positions and the circumcircle
/// of the flat corner triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvedTriangle {
    pub corner_ids: [usize; 3],
    pub midside_ids: [usize; 3],
    pub patch_tag: i64,
    /// Positions in node order: corners 0,1,2 then midsides 01, 12, 20.
    pub nodes: [Vec3; 6],
    pub circumcenter: Vec3,
    pub circumradius: f64,
}

/// Values of the six quadratic Lagrange shape functions at `(u, v)`.
#[inline]
pub fn shape_values(u: f64, v: f64) -> [f64; 6] {
    let l0 = 1.0 - u - v;
    [
        l0 * (2.0 * l0 - 1.0),
        u * (2.0 * u - 1.0),
        v * (2.0 * v - 1.0),
        4.0 * l0 * u,
        4.0 * u * v,
        4.0 * v * l0,
    ]
}

/// Partial derivatives of the shape functions with respect to `u` and `v`.
#[inline]
pub fn shape_gradients(u: f64, v: f64) -> ([f64; 6], [f64; 6]) {
    let l0 = 1.0 - u - v;
    let du = [
        1.0 - 4.0 * l0,
        4.0 * u - 1.0,
        0.0,
        4.0 * (l0 - u),
        4.0 * v,
        -4.0 * v,
    ];
    let dv = [
        1.0 - 4.0 * l0,
        0.0,
        4.0 * v - 1.0,
        -4.0 * u,
        4.0 * u,
        4.0 * (l0 - v),
    ];
    (du, dv)
}

/// Circumcenter and circumradius of the triangle `a b c`. The radius is
/// infinite for collinear points.
pub fn circumcircle(a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, f64) {
    let ea = a - c;
    let eb = b - c;
    let cross = ea.cross(&eb);
    let denom = 2.0 * cross.norm_squared();
    if denom == 0.0 {
        return ((a + b + c) / 3.0, f64::INFINITY);
    }
    let center = c + (eb * ea.norm_squared() - ea * eb.norm_squared()).cross(&cross) / denom;
    let radius = ea.norm() * eb.norm() * (ea - eb).norm() / (2.0 * cross.norm());
    (center, radius)
}

impl CurvedTriangle {
    pub fn new(corner_ids: [usize; 3], midside_ids: [usize; 3], patch_tag: i64, nodes: [Vec3; 6]) -> Self {
        let (circumcenter, circumradius) = circumcircle(&nodes[0], &nodes[1], &nodes[2]);
        Self {
            corner_ids,
            midside_ids,
            patch_tag,
            nodes,
            circumcenter,
            circumradius,
        }
    }

    #[inline]
    pub fn map(&self, u: f64, v: f64) -> Vec3 {
        let n = shape_values(u, v);
        let mut p = Vec3::zeros();
        for (w, node) in n.iter().zip(&self.nodes) {
            p += node * *w;
        }
        p
    }

    /// Mapped point and the unnormalized normal `∂x/∂u × ∂x/∂v`.
    #[inline]
    pub fn point_and_jacobian(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        let n = shape_values(u, v);
        let (du, dv) = shape_gradients(u, v);
        let mut p = Vec3::zeros();
        let mut tu = Vec3::zeros();
        let mut tv = Vec3::zeros();
        for k in 0..6 {
            p += self.nodes[k] * n[k];
            tu += self.nodes[k] * du[k];
            tv += self.nodes[k] * dv[k];
        }
        (p, tu.cross(&tv))
    }

    /// Point on the flat corner triangle.
    #[inline]
    pub fn flat_map(&self, u: f64, v: f64) -> Vec3 {
        self.nodes[0] + (self.nodes[1] - self.nodes[0]) * u + (self.nodes[2] - self.nodes[0]) * v
    }

    pub fn flat_area(&self) -> f64 {
        0.5 * (self.nodes[1] - self.nodes[0])
            .cross(&(self.nodes[2] - self.nodes[0]))
            .norm()
    }

    /// Local corner index of vertex `id`, if it is a corner.
    #[inline]
    pub fn corner_of(&self, id: usize) -> Option<usize> {
        self.corner_ids.iter().position(|&c| c == id)
    }
}

/// Quadratic Lagrange interpolation of the node positions at `uv`.
pub fn map_reference(tri: &CurvedTriangle, uv: [f64; 2]) -> Vec3 {
    tri.map(uv[0], uv[1])
}

/// Unit normal and area element at `uv`. The normal follows the corner
/// winding.
pub fn surface_frame(tri: &CurvedTriangle, uv: [f64; 2]) -> Result<(Vec3, f64), MeshError> {
    let (_, j) = tri.point_and_jacobian(uv[0], uv[1]);
    let area = j.norm();
    if !(area >= MIN_JACOBIAN) {
        return Err(MeshError::DegenerateJacobian {
            triangle: usize::MAX,
            magnitude: area,
        });
    }
    Ok((j / area, area))
}

/// Validated, immutable surface mesh with per-vertex collocation data.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Vertex>,
    triangles: Vec<CurvedTriangle>,
    patches: BTreeMap<i64, PatchKind>,
    /// Triangles having the vertex as a corner.
    corner_triangles: Vec<Vec<usize>>,
    /// `∫ ψ_c dS` for each corner `c` of each triangle.
    corner_weights: Vec<[f64; 3]>,
    weights: Vec<f64>,
    normals: Vec<Vec3>,
    row_kinds: Vec<Option<RowKind>>,
    /// Collocation vertices in ascending id order; position = unknown index.
    dofs: Vec<usize>,
    dof_of: Vec<Option<usize>>,
    n_floating: usize,
    bbox: (Vec3, Vec3),
}

impl SurfaceMesh {
    pub fn from_data(data: MeshData) -> Result<Self, MeshError> {
        let n_vertices = data.vertices.len();
        let vertices: Vec<Vertex> = data
            .vertices
            .iter()
            .enumerate()
            .map(|(id, p)| {
                if p.iter().all(|c| c.is_finite()) {
                    Ok(Vertex {
                        id,
                        position: Vec3::new(p[0], p[1], p[2]),
                    })
                } else {
                    Err(MeshError::NonFinite(id))
                }
            })
            .collect::<Result<_, _>>()?;

        let scale = if data.relative_permittivity { EPS0 } else { 1.0 };
        let mut patches = BTreeMap::new();
        for p in &data.patches {
            patches.insert(p.tag, validate_patch(p, scale)?);
        }
        check_floating_indices(&patches)?;

        let probe = regular_rule(6).expect("order 6 is supported");
        let mut triangles = Vec::with_capacity(data.triangles.len());
        for (ti, rec) in data.triangles.iter().enumerate() {
            for (k, &vid) in rec.nodes.iter().enumerate() {
                if vid >= n_vertices {
                    return Err(MeshError::DanglingVertex {
                        triangle: ti,
                        vertex: vid,
                        count: n_vertices,
                    });
                }
                if rec.nodes[..k].contains(&vid) {
                    return Err(MeshError::RepeatedVertex {
                        triangle: ti,
                        vertex: vid,
                    });
                }
            }
            if !patches.contains_key(&rec.tag) {
                return Err(MeshError::UnknownTag {
                    triangle: ti,
                    tag: rec.tag,
                });
            }
            let nodes = rec.nodes.map(|id| vertices[id].position);
            let tri = CurvedTriangle::new(
                [rec.nodes[0], rec.nodes[1], rec.nodes[2]],
                [rec.nodes[3], rec.nodes[4], rec.nodes[5]],
                rec.tag,
                nodes,
            );
            if !(tri.circumradius >= MIN_CIRCUMRADIUS) || !tri.circumradius.is_finite() {
                return Err(MeshError::DegenerateTriangle {
                    triangle: ti,
                    radius: tri.circumradius,
                });
            }
            for node in &probe.nodes {
                let (_, j) = tri.point_and_jacobian(node[0], node[1]);
                let magnitude = j.norm();
                if !(magnitude >= MIN_JACOBIAN) {
                    return Err(MeshError::DegenerateJacobian {
                        triangle: ti,
                        magnitude,
                    });
                }
            }
            triangles.push(tri);
        }

        let mut used = vec![false; n_vertices];
        let mut corner_triangles = vec![Vec::new(); n_vertices];
        for (ti, rec) in data.triangles.iter().enumerate() {
            for &vid in &rec.nodes {
                used[vid] = true;
            }
            for &vid in &rec.nodes[..3] {
                corner_triangles[vid].push(ti);
            }
        }
        if let Some(orphan) = used.iter().position(|u| !u) {
            return Err(MeshError::OrphanVertex(orphan));
        }

        let lump = regular_rule(4).expect("order 4 is supported");
        let corner_weights: Vec<[f64; 3]> = triangles
            .iter()
            .map(|tri| {
                let mut w = [0.0; 3];
                for (node, &qw) in lump.nodes.iter().zip(&lump.weights) {
                    let (_, j) = tri.point_and_jacobian(node[0], node[1]);
                    let da = qw * j.norm();
                    w[0] += da * (1.0 - node[0] - node[1]);
                    w[1] += da * node[0];
                    w[2] += da * node[1];
                }
                w
            })
            .collect();

        let mut weights = vec![0.0; n_vertices];
        let mut normals = vec![Vec3::zeros(); n_vertices];
        const CORNER_UV: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for (ti, tri) in triangles.iter().enumerate() {
            for c in 0..3 {
                let vid = tri.corner_ids[c];
                let w = corner_weights[ti][c];
                weights[vid] += w;
                let (_, j) = tri.point_and_jacobian(CORNER_UV[c][0], CORNER_UV[c][1]);
                normals[vid] += j.normalize() * w;
            }
        }
        for n in normals.iter_mut() {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }

        let mut dofs = Vec::new();
        let mut dof_of = vec![None; n_vertices];
        for (vid, tris) in corner_triangles.iter().enumerate() {
            if !tris.is_empty() {
                dof_of[vid] = Some(dofs.len());
                dofs.push(vid);
            }
        }

        let n_floating = patches
            .values()
            .filter_map(|k| k.floating_index())
            .max()
            .map_or(0, |m| m + 1);

        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &vertices {
            lo = lo.inf(&v.position);
            hi = hi.sup(&v.position);
        }

        let mut mesh = SurfaceMesh {
            vertices,
            triangles,
            patches,
            corner_triangles,
            corner_weights,
            weights,
            normals,
            row_kinds: vec![None; n_vertices],
            dofs,
            dof_of,
            n_floating,
            bbox: (lo, hi),
        };
        let mut kinds = vec![None; n_vertices];
        for &vid in &mesh.dofs {
            kinds[vid] = Some(classify_vertex(&mesh, vid)?);
        }
        mesh.row_kinds = kinds;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[CurvedTriangle] {
        &self.triangles
    }

    pub fn patch(&self, tag: i64) -> Option<&PatchKind> {
        self.patches.get(&tag)
    }

    pub fn patches(&self) -> impl Iterator<Item = PatchSpec> + '_ {
        self.patches.iter().map(|(&tag, &kind)| PatchSpec { tag, kind })
    }

    pub fn triangle_kind(&self, t: usize) -> PatchKind {
        self.patches[&self.triangles[t].patch_tag]
    }

    /// Triangles having vertex `id` as a corner.
    pub fn corner_triangles(&self, id: usize) -> &[usize] {
        &self.corner_triangles[id]
    }

    /// `∫ ψ_c dS` over triangle `t` for its local corner `c`.
    pub fn corner_weight(&self, t: usize, c: usize) -> f64 {
        self.corner_weights[t][c]
    }

    /// Lumped area weight `w_i = ∫ ψ_i dS` (zero for midside vertices).
    pub fn lumped_weight(&self, id: usize) -> f64 {
        self.weights[id]
    }

    /// Collocation normal: area-weighted average of adjacent triangle
    /// normals at the vertex.
    pub fn vertex_normal(&self, id: usize) -> Vec3 {
        self.normals[id]
    }

    pub fn row_kind(&self, id: usize) -> Option<RowKind> {
        self.row_kinds[id]
    }

    /// Vertex ids of the collocation points, indexed by unknown.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn dof_of(&self, id: usize) -> Option<usize> {
        self.dof_of[id]
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn n_floating(&self) -> usize {
        self.n_floating
    }

    pub fn position(&self, id: usize) -> Vec3 {
        self.vertices[id].position
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        self.bbox
    }

    pub fn bbox_diagonal(&self) -> f64 {
        (self.bbox.1 - self.bbox.0).norm()
    }

    pub fn total_area(&self) -> f64 {
        self.corner_weights.iter().map(|w| w[0] + w[1] + w[2]).sum()
    }
}

fn validate_patch(p: &PatchSpec, scale: f64) -> Result<PatchKind, MeshError> {
    let check = |name: &str, eps: f64| {
        if eps > 0.0 && eps.is_finite() {
            Ok(eps * scale)
        } else {
            Err(MeshError::InvalidPatch {
                tag: p.tag,
                message: format!("{name} must be positive, got {eps}"),
            })
        }
    };
    Ok(match p.kind {
        PatchKind::Electrode { potential } => {
            if !potential.is_finite() {
                return Err(MeshError::InvalidPatch {
                    tag: p.tag,
                    message: "non-finite potential".into(),
                });
            }
            p.kind
        }
        PatchKind::FloatingConductor { index, eps_plus } => PatchKind::FloatingConductor {
            index,
            // The permittivity only scales the neutrality row of a closed
            // conductor in a single medium; default to vacuum.
            eps_plus: if eps_plus.is_nan() {
                EPS0
            } else {
                check("eps+", eps_plus)?
            },
        },
        PatchKind::FloatingSheet {
            index,
            eps_plus,
            eps_minus,
        } => PatchKind::FloatingSheet {
            index,
            eps_plus: check("eps+", eps_plus)?,
            eps_minus: check("eps-", eps_minus)?,
        },
        PatchKind::DielectricInterface {
            eps_plus,
            eps_minus,
        } => PatchKind::DielectricInterface {
            eps_plus: check("eps+", eps_plus)?,
            eps_minus: check("eps-", eps_minus)?,
        },
    })
}

fn check_floating_indices(patches: &BTreeMap<i64, PatchKind>) -> Result<(), MeshError> {
    let mut indices: Vec<usize> = patches.values().filter_map(|k| k.floating_index()).collect();
    indices.sort_unstable();
    indices.dedup();
    if indices.iter().enumerate().any(|(i, &k)| i != k) {
        return Err(MeshError::FloatingIndices(indices));
    }
    Ok(())
}

/// Collocation row kind of a corner vertex. A vertex touching an electrode
/// is Dirichlet; otherwise one touching a floating surface is floating;
/// otherwise it sits on a dielectric interface.
pub fn classify_vertex(mesh: &SurfaceMesh, id: usize) -> Result<RowKind, MeshError> {
    let adjacent = &mesh.corner_triangles[id];
    let kinds = || adjacent.iter().map(|&t| mesh.triangle_kind(t));

    if let Some(potential) = kinds().find_map(|k| match k {
        PatchKind::Electrode { potential } => Some(potential),
        _ => None,
    }) {
        return Ok(RowKind::Dirichlet { potential });
    }
    if let Some(index) = kinds().find_map(|k| k.floating_index()) {
        return Ok(RowKind::FloatingDirichlet { index });
    }
    let mut pair: Option<(f64, f64)> = None;
    for kind in kinds() {
        if let PatchKind::DielectricInterface {
            eps_plus,
            eps_minus,
        } = kind
        {
            match pair {
                None => pair = Some((eps_plus, eps_minus)),
                Some(p) if p == (eps_plus, eps_minus) => {}
                Some(_) => return Err(MeshError::TripleJunction { vertex: id }),
            }
        }
    }
    let (eps_plus, eps_minus) = pair.ok_or(MeshError::OrphanVertex(id))?;
    Ok(RowKind::DielectricJump {
        eps_plus,
        eps_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const UNIT: &str = "bemesh 1
vertex 0 0 0 0
vertex 1 1 0 0
vertex 2 0 1 0
vertex 3 0.5 0 0
vertex 4 0.5 0.5 0
vertex 5 0 0.5 0
triangle 0 1 2 3 4 5 7
patch 7 electrode 1.0
";

    fn unit_triangle() -> CurvedTriangle {
        parse_mesh(UNIT).unwrap().build().unwrap().triangles()[0]
    }

    #[test]
    fn smallest_mesh_loads() {
        let mesh = parse_mesh(UNIT).unwrap().build().unwrap();
        assert_eq!(mesh.vertices().len(), 6);
        assert_eq!(mesh.triangles().len(), 1);
        assert_eq!(mesh.n_dofs(), 3);
        assert_relative_eq!(mesh.total_area(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let mut text = String::from("bemesh 1\n");
        for i in 0..10 {
            text += &format!("vertex {i} {} {} 0\n", i as f64, (i * i) as f64);
        }
        text += "triangle 0 1 2 3 4 999 1\npatch 1 electrode 0\n";
        let err = parse_mesh(&text).unwrap().build().unwrap_err();
        assert!(matches!(
            err,
            MeshError::DanglingVertex {
                vertex: 999,
                count: 10,
                ..
            }
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_mesh("bemesh 1\n# comment\nvertex 0 0 0 zero\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 3, .. }), "{err}");
        let err = parse_mesh("bemesh 2\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 1, .. }));
        let err = parse_mesh(&UNIT.replace("electrode 1.0", "magnet 1.0")).unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 9, .. }));
    }

    #[test]
    fn unknown_tag_and_degenerate_triangles() {
        let err = parse_mesh(&UNIT.replace("patch 7", "patch 8"))
            .unwrap()
            .build()
            .unwrap_err();
        assert!(matches!(err, MeshError::UnknownTag { tag: 7, .. }));

        let collinear = UNIT.replace("vertex 2 0 1 0", "vertex 2 2 0 0");
        let err = parse_mesh(&collinear).unwrap().build().unwrap_err();
        assert!(matches!(err, MeshError::DegenerateTriangle { .. }), "{err}");

        let tiny = UNIT
            .replace("vertex 1 1 0 0", "vertex 1 1e-13 0 0")
            .replace("vertex 2 0 1 0", "vertex 2 0 1e-13 0")
            .replace("vertex 3 0.5 0 0", "vertex 3 5e-14 0 0")
            .replace("vertex 4 0.5 0.5 0", "vertex 4 5e-14 5e-14 0")
            .replace("vertex 5 0 0.5 0", "vertex 5 0 5e-14 0");
        let err = parse_mesh(&tiny).unwrap().build().unwrap_err();
        assert!(matches!(err, MeshError::DegenerateTriangle { .. }), "{err}");
    }

    #[test]
    fn orphan_vertex_and_floating_gaps() {
        let err = parse_mesh(&format!("{UNIT}vertex 6 3 3 3\n"))
            .unwrap()
            .build()
            .unwrap_err();
        assert!(matches!(err, MeshError::OrphanVertex(6)));

        let err = parse_mesh(&UNIT.replace("electrode 1.0", "floating 1"))
            .unwrap()
            .build()
            .unwrap_err();
        assert!(matches!(err, MeshError::FloatingIndices(_)));
    }

    #[test]
    fn permittivities_must_be_positive_and_can_be_relative() {
        let err = parse_mesh(&UNIT.replace("electrode 1.0", "dielectric 2.0 -1.0"))
            .unwrap()
            .build()
            .unwrap_err();
        assert!(matches!(err, MeshError::InvalidPatch { tag: 7, .. }));

        let rel = UNIT
            .replace("bemesh 1\n", "bemesh 1\npermittivity relative\n")
            .replace("electrode 1.0", "dielectric 2.0 1.0");
        let mesh = parse_mesh(&rel).unwrap().build().unwrap();
        assert_eq!(
            *mesh.patch(7).unwrap(),
            PatchKind::DielectricInterface {
                eps_plus: 2.0 * EPS0,
                eps_minus: EPS0
            }
        );
    }

    #[test]
    fn text_round_trip() {
        let data = parse_mesh(UNIT).unwrap();
        assert_eq!(parse_mesh(&data.to_text()).unwrap(), data);
    }

    #[test]
    fn map_reference_interpolates_nodes() {
        let tri = unit_triangle();
        assert_eq!(map_reference(&tri, [0.0, 0.0]), tri.nodes[0]);
        assert_eq!(map_reference(&tri, [0.5, 0.0]), tri.nodes[3]);
        assert_eq!(map_reference(&tri, [0.5, 0.5]), tri.nodes[4]);
        assert_eq!(map_reference(&tri, [0.0, 0.5]), tri.nodes[5]);
        let bary = (tri.nodes[0] + tri.nodes[1] + tri.nodes[2]) / 3.0;
        assert_relative_eq!(map_reference(&tri, [1.0 / 3.0, 1.0 / 3.0]), bary, epsilon = 1e-15);
    }

    #[test]
    fn surface_frame_follows_winding() {
        let tri = unit_triangle();
        let (n, da) = surface_frame(&tri, [0.2, 0.3]).unwrap();
        assert_relative_eq!(n, Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(da, 1.0, epsilon = 1e-15);

        let cw = UNIT.replace("triangle 0 1 2 3 4 5 7", "triangle 0 2 1 5 4 3 7");
        let tri = parse_mesh(&cw).unwrap().build().unwrap().triangles()[0];
        let (n, _) = surface_frame(&tri, [0.2, 0.3]).unwrap();
        assert_relative_eq!(n, -Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn flat_triangle_has_constant_area_element() {
        let mut tri = unit_triangle();
        tri.nodes = [
            Vec3::new(0.3, -0.2, 1.0),
            Vec3::new(2.0, 0.4, 0.5),
            Vec3::new(-0.5, 1.7, 0.9),
            Vec3::zeros(),
            Vec3::zeros(),
            Vec3::zeros(),
        ];
        tri.nodes[3] = (tri.nodes[0] + tri.nodes[1]) / 2.0;
        tri.nodes[4] = (tri.nodes[1] + tri.nodes[2]) / 2.0;
        tri.nodes[5] = (tri.nodes[2] + tri.nodes[0]) / 2.0;
        let (_, a0) = surface_frame(&tri, [0.0, 0.0]).unwrap();
        for uv in [[0.1, 0.1], [0.7, 0.2], [0.0, 1.0], [0.33, 0.5]] {
            let (_, a) = surface_frame(&tri, uv).unwrap();
            assert!(((a - a0) / a0).abs() < 1e-12);
            assert_relative_eq!(tri.map(uv[0], uv[1]), tri.flat_map(uv[0], uv[1]), epsilon = 1e-14);
        }
    }

    #[test]
    fn degenerate_jacobian_is_an_error() {
        let mut tri = unit_triangle();
        tri.nodes = [Vec3::zeros(); 6];
        assert!(surface_frame(&tri, [0.2, 0.2]).is_err());
    }

    #[test]
    fn circumcircle_of_right_triangle() {
        let tri = unit_triangle();
        assert_relative_eq!(tri.circumcenter, Vec3::new(0.5, 0.5, 0.0), epsilon = 1e-15);
        assert_relative_eq!(tri.circumradius, 0.5f64.sqrt(), epsilon = 1e-15);
        let (c, r) = circumcircle(
            &Vec3::new(1.0, 0.0, 0.0),
            &Vec3::new(0.0, 1.0, 0.0),
            &Vec3::new(0.0, 0.0, 1.0),
        );
        assert_relative_eq!(c, Vec3::repeat(1.0 / 3.0), epsilon = 1e-15);
        assert_relative_eq!(r, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    fn two_patch_mesh(second: &str) -> SurfaceMesh {
        // Two triangles sharing the edge 1-2.
        let text = format!(
            "bemesh 1
vertex 0 0 0 0
vertex 1 1 0 0
vertex 2 0 1 0
vertex 3 1 1 0
vertex 4 0.5 0 0
vertex 5 0.5 0.5 0
vertex 6 0 0.5 0
vertex 7 1 0.5 0
vertex 8 0.5 1 0
triangle 0 1 2 4 5 6 1
triangle 1 3 2 7 8 5 2
patch 1 dielectric 3.0 1.0
patch 2 {second}
"
        );
        parse_mesh(&text).unwrap().build().unwrap()
    }

    #[test]
    fn classification_priorities() {
        let mesh = two_patch_mesh("electrode 1.0");
        assert_eq!(
            classify_vertex(&mesh, 3).unwrap(),
            RowKind::Dirichlet { potential: 1.0 }
        );
        // Shared by electrode and dielectric triangles.
        assert_eq!(
            classify_vertex(&mesh, 1).unwrap(),
            RowKind::Dirichlet { potential: 1.0 }
        );
        assert_eq!(
            classify_vertex(&mesh, 0).unwrap(),
            RowKind::DielectricJump {
                eps_plus: 3.0,
                eps_minus: 1.0
            }
        );

        let mesh = two_patch_mesh("sheet 0 1.0 1.0");
        assert_eq!(
            classify_vertex(&mesh, 3).unwrap(),
            RowKind::FloatingDirichlet { index: 0 }
        );
        assert_eq!(
            classify_vertex(&mesh, 2).unwrap(),
            RowKind::FloatingDirichlet { index: 0 }
        );
        assert_eq!(mesh.n_floating(), 1);
    }

    #[test]
    fn conflicting_dielectric_pairs_are_rejected() {
        let text = "bemesh 1
vertex 0 0 0 0
vertex 1 1 0 0
vertex 2 0 1 0
vertex 3 1 1 0
vertex 4 0.5 0 0
vertex 5 0.5 0.5 0
vertex 6 0 0.5 0
vertex 7 1 0.5 0
vertex 8 0.5 1 0
triangle 0 1 2 4 5 6 1
triangle 1 3 2 7 8 5 2
patch 1 dielectric 3.0 1.0
patch 2 dielectric 2.0 1.0
";
        let err = parse_mesh(text).unwrap().build().unwrap_err();
        assert!(matches!(err, MeshError::TripleJunction { .. }));
    }

    #[test]
    fn lumped_weights_sum_to_area() {
        let mesh = two_patch_mesh("electrode 0.0");
        let total: f64 = (0..mesh.vertices().len()).map(|i| mesh.lumped_weight(i)).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        assert_eq!(mesh.lumped_weight(4), 0.0);
        assert_relative_eq!(mesh.lumped_weight(1), 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(mesh.vertex_normal(1), Vec3::z(), epsilon = 1e-15);
    }
}
