//! Quadrature on the reference triangle `{u ≥ 0, v ≥ 0, u + v ≤ 1}`.
//!
//! Regular pairs use symmetric Gauss rules, singular pairs (collocation
//! point at a corner) a Duffy rule collapsed onto that corner, and
//! near-singular pairs a composite Duffy rule anchored at the point of the
//! flat triangle closest to the evaluation point.

use thiserror::Error;

use crate::mesh::CurvedTriangle;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("unsupported regular rule order {0} (expected 2, 4, 6 or 8)")]
    UnsupportedOrder(usize),
}

/// Nodes in reference coordinates and weights; weights of a full rule sum
/// to the reference area 1/2.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rule {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ f(u, v) du dv` over the reference triangle.
    pub fn integrate(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }

    fn push(&mut self, uv: [f64; 2], w: f64) {
        self.nodes.push(uv);
        self.weights.push(w);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    Regular,
    NearSingular,
    Singular { corner: usize },
}

/// Quadrature parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Polynomial degree of the regular rule (2, 4, 6 or 8).
    pub regular_order: usize,
    /// Gauss points per direction of the singular Duffy rule.
    pub duffy_points: usize,
    /// Gauss points per direction of each near-singular Duffy cell.
    pub near_duffy_points: usize,
    /// A pair is regular when `|x − circumcenter| > eta · circumradius`.
    pub eta: f64,
    /// Number of graded bisections toward the closest point.
    pub bisect_depth: usize,
    /// Bisection is used when the distance to the surface is below
    /// `bisect_trigger · circumradius`.
    pub bisect_trigger: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            regular_order: 6,
            duffy_points: 6,
            near_duffy_points: 8,
            eta: 1.2,
            bisect_depth: 3,
            bisect_trigger: 0.3,
        }
    }
}

/// Classify a (collocation point, triangle) pair. `vertex` is the mesh id
/// of the collocation point, or `None` for a free evaluation point.
#[inline]
pub fn classify_pair(x: &Vec3, vertex: Option<usize>, tri: &CurvedTriangle, eta: f64) -> PairClass {
    if let Some(corner) = vertex.and_then(|id| tri.corner_of(id)) {
        return PairClass::Singular { corner };
    }
    if (x - tri.circumcenter).norm() > eta * tri.circumradius {
        PairClass::Regular
    } else {
        PairClass::NearSingular
    }
}

// Symmetric rules in barycentric orbits: (weight on unit area, orbit).
// The degree 4 and 6 orbits are Newton-polished to double precision.
const D4: [(f64, f64); 2] = [
    (0.223_381_589_678_011_47, 0.445_948_490_915_964_89),
    (0.109_951_743_655_321_87, 0.091_576_213_509_770_743),
];
const D6_3: [(f64, f64); 2] = [
    (0.116_786_275_726_378_76, 0.249_286_745_170_910_79),
    (0.050_844_906_370_206_631, 0.063_089_014_491_502_092),
];
const D6_6: (f64, f64, f64) = (
    0.082_851_075_618_373_971,
    0.053_145_049_844_817_199,
    0.310_352_451_033_784_02,
);
const D8_3: [(f64, f64); 3] = [
    (0.095_091_634_267_285, 0.459_292_588_292_723),
    (0.103_217_370_534_718, 0.170_569_307_751_760),
    (0.032_458_497_623_198, 0.050_547_228_317_031),
];
const D8_CENTER: f64 = 0.144_315_607_677_787;
const D8_6: (f64, f64, f64) = (0.027_230_314_174_435, 0.008_394_777_409_958, 0.263_112_829_634_638);

fn push_orbit3(rule: &mut Rule, w: f64, a: f64) {
    let b = 1.0 - 2.0 * a;
    for uv in [[a, a], [a, b], [b, a]] {
        rule.push(uv, 0.5 * w);
    }
}

fn push_orbit6(rule: &mut Rule, w: f64, a: f64, b: f64) {
    let c = 1.0 - a - b;
    for uv in [[a, b], [b, a], [a, c], [c, a], [b, c], [c, b]] {
        rule.push(uv, 0.5 * w);
    }
}

/// Symmetric Gauss rule exact for polynomials of total degree `order`.
pub fn regular_rule(order: usize) -> Result<Rule, QuadratureError> {
    let mut rule = Rule::default();
    match order {
        2 => push_orbit3(&mut rule, 1.0 / 3.0, 1.0 / 6.0),
        4 => D4.iter().for_each(|&(w, a)| push_orbit3(&mut rule, w, a)),
        6 => {
            D6_3.iter().for_each(|&(w, a)| push_orbit3(&mut rule, w, a));
            push_orbit6(&mut rule, D6_6.0, D6_6.1, D6_6.2);
        }
        8 => {
            rule.push([1.0 / 3.0, 1.0 / 3.0], 0.5 * D8_CENTER);
            D8_3.iter().for_each(|&(w, a)| push_orbit3(&mut rule, w, a));
            push_orbit6(&mut rule, D8_6.0, D8_6.1, D8_6.2);
        }
        other => return Err(QuadratureError::UnsupportedOrder(other)),
    }
    Ok(rule)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one Gauss point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Append a Duffy rule for the sub-triangle `anchor, b, c` (reference
/// coordinates) whose collapsed edge sits at `anchor`. The Jacobian factor
/// `s` cancels a `1/r` singularity at the anchor.
fn push_duffy(rule: &mut Rule, anchor: [f64; 2], b: [f64; 2], c: [f64; 2], gauss: &(Vec<f64>, Vec<f64>)) {
    let eb = [b[0] - anchor[0], b[1] - anchor[1]];
    let ec = [c[0] - anchor[0], c[1] - anchor[1]];
    let det = (eb[0] * ec[1] - eb[1] * ec[0]).abs();
    if det == 0.0 {
        return;
    }
    let (xs, ws) = gauss;
    for (&s, &ws_) in xs.iter().zip(ws) {
        for (&t, &wt) in xs.iter().zip(ws) {
            let u = anchor[0] + s * ((1.0 - t) * eb[0] + t * ec[0]);
            let v = anchor[1] + s * ((1.0 - t) * eb[1] + t * ec[1]);
            rule.push([u, v], ws_ * wt * s * det);
        }
    }
}

const REF_CORNERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Tensor Gauss rule with `n1d` points per direction, collapsed onto the
/// given reference corner. The triangle is first halved through the
/// midpoint of the opposite edge, which keeps the angular integrand far
/// from its complex poles.
pub fn duffy_rule(corner: usize, n1d: usize) -> Rule {
    assert!(corner < 3, "corner index out of range");
    let gauss = gauss_legendre(n1d);
    let a = REF_CORNERS[corner];
    let b = REF_CORNERS[(corner + 1) % 3];
    let c = REF_CORNERS[(corner + 2) % 3];
    let m = midpoint(b, c);
    let mut rule = Rule::default();
    push_duffy(&mut rule, a, b, m, &gauss);
    push_duffy(&mut rule, a, m, c, &gauss);
    rule
}

/// Reference coordinates of the point of the flat corner triangle closest
/// to `x`.
pub fn closest_point(x: &Vec3, tri: &CurvedTriangle) -> [f64; 2] {
    let a = tri.nodes[0];
    let ab = tri.nodes[1] - a;
    let ac = tri.nodes[2] - a;
    let ap = x - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [0.0, 0.0];
    }
    let bp = x - tri.nodes[1];
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return [d1 / (d1 - d3), 0.0];
    }
    let cp = x - tri.nodes[2];
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return [0.0, d2 / (d2 - d6)];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    [vb * denom, vc * denom]
}

/// Sub-triangle of the reference triangle; `vertices[anchor]` is the point
/// the subdivision was centred on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubTriangle {
    pub vertices: [[f64; 2]; 3],
    pub anchor: usize,
}

impl SubTriangle {
    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
    }
}

const SNAP: f64 = 1e-12;

/// Split the reference triangle so that `uv` becomes a corner of every
/// piece: 1 piece if `uv` is a corner, 2 if it lies inside an edge, 3
/// otherwise.
pub fn subdivide_at(uv: [f64; 2]) -> Vec<SubTriangle> {
    let bary = [1.0 - uv[0] - uv[1], uv[0], uv[1]];
    if let Some(c) = bary.iter().position(|&l| l >= 1.0 - SNAP) {
        return vec![SubTriangle {
            vertices: REF_CORNERS,
            anchor: c,
        }];
    }
    // Edge k joins corners k and k+1 and is opposite corner k+2.
    for k in 0..3 {
        let opposite = (k + 2) % 3;
        if bary[opposite] <= SNAP {
            let a = REF_CORNERS[k];
            let b = REF_CORNERS[(k + 1) % 3];
            let c = REF_CORNERS[opposite];
            return vec![
                SubTriangle {
                    vertices: [uv, b, c],
                    anchor: 0,
                },
                SubTriangle {
                    vertices: [uv, c, a],
                    anchor: 0,
                },
            ];
        }
    }
    (0..3)
        .map(|k| SubTriangle {
            vertices: [uv, REF_CORNERS[k], REF_CORNERS[(k + 1) % 3]],
            anchor: 0,
        })
        .collect()
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Pieces wider than this at the anchor (measured on the flat triangle)
/// are split in two through the midpoint of the opposite edge.
pub const MAX_APEX_ANGLE: f64 = 1.3;

fn apex_angle(sub: &SubTriangle, tri: &CurvedTriangle) -> f64 {
    let p = |q: [f64; 2]| tri.flat_map(q[0], q[1]);
    let a = p(sub.vertices[sub.anchor]);
    let b = p(sub.vertices[(sub.anchor + 1) % 3]) - a;
    let c = p(sub.vertices[(sub.anchor + 2) % 3]) - a;
    b.cross(&c).norm().atan2(b.dot(&c))
}

fn split_wide(sub: SubTriangle, tri: &CurvedTriangle, out: &mut Vec<SubTriangle>) {
    if apex_angle(&sub, tri) <= MAX_APEX_ANGLE {
        out.push(sub);
        return;
    }
    let a = sub.vertices[sub.anchor];
    let b = sub.vertices[(sub.anchor + 1) % 3];
    let c = sub.vertices[(sub.anchor + 2) % 3];
    let m = midpoint(b, c);
    for vertices in [[a, b, m], [a, m, c]] {
        split_wide(SubTriangle { vertices, anchor: 0 }, tri, out);
    }
}

/// Composite rule for a point `x` close to (but not a corner of) `tri`.
///
/// Each piece from [`subdivide_at`] gets a Duffy rule anchored at the
/// closest point; pieces with an apex angle above [`MAX_APEX_ANGLE`] are
/// split first. When `x` is within `bisect_trigger · R` of the surface,
/// each piece is additionally cut `bisect_depth` times toward the anchor:
/// the outer trapezoid of every level becomes two Duffy cells anchored at
/// its inner edge, and the innermost cell a Duffy cell at the anchor.
pub fn near_singular_rule(x: &Vec3, tri: &CurvedTriangle, config: &QuadConfig) -> Rule {
    let uv = closest_point(x, tri);
    let distance = (x - tri.map(uv[0], uv[1])).norm();
    let graded = distance < config.bisect_trigger * tri.circumradius;
    let gauss = gauss_legendre(config.near_duffy_points);
    let mut pieces = Vec::new();
    for sub in subdivide_at(uv) {
        split_wide(sub, tri, &mut pieces);
    }
    let mut rule = Rule::default();
    for sub in pieces {
        let a = sub.vertices[sub.anchor];
        let mut b = sub.vertices[(sub.anchor + 1) % 3];
        let mut c = sub.vertices[(sub.anchor + 2) % 3];
        if graded {
            for _ in 0..config.bisect_depth {
                let mb = midpoint(a, b);
                let mc = midpoint(a, c);
                push_duffy(&mut rule, mb, b, c, &gauss);
                push_duffy(&mut rule, mb, c, mc, &gauss);
                b = mb;
                c = mc;
            }
        }
        push_duffy(&mut rule, a, b, c, &gauss);
    }
    rule
}
