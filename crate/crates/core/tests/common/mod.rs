//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hvbem::mesh::CurvedTriangle;
use hvbem::Vec3;

/// Flat 6-node triangle with straight-edge midsides.
pub fn flat_triangle(a: Vec3, b: Vec3, c: Vec3) -> CurvedTriangle {
    CurvedTriangle::new([0, 1, 2], [3, 4, 5], 0, [a, b, c, (a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0])
}

/// Circumcenter and circumradius through barycentric weights.
pub fn circumcircle(a: Vec3, b: Vec3, c: Vec3) -> (Vec3, f64) {
    let la = (b - c).norm_squared();
    let lb = (c - a).norm_squared();
    let lc = (a - b).norm_squared();
    let wa = la * (lb + lc - la);
    let wb = lb * (lc + la - lb);
    let wc = lc * (la + lb - lc);
    let center = (a * wa + b * wb + c * wc) / (wa + wb + wc);
    (center, (a - center).norm())
}

/// Gauss-Legendre nodes and weights on [0, 1], roots found by bisection
/// on the Legendre polynomial.
pub fn gauss01(n: usize) -> Vec<(f64, f64)> {
    let legendre = |x: f64| -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        // Derivative from the three-term identity.
        (p1, n as f64 * (p0 - x * p1) / (1.0 - x * x))
    };
    // Staggered grid: no sample falls on the root at 0 for odd n.
    let samples = 40 * n;
    let mut grid = vec![-1.0 + 1e-12];
    grid.extend((0..samples).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / samples as f64));
    grid.push(1.0 - 1e-12);
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        if legendre(lo).0 * legendre(hi).0 > 0.0 {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if legendre(lo).0 * legendre(mid).0 <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    assert_eq!(roots.len(), n, "bracketed {} of {n} roots", roots.len());
    roots
        .into_iter()
        .map(|x| {
            let dp = legendre(x).1;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            ((x + 1.0) / 2.0, w / 2.0)
        })
        .collect()
}

/// Conical product rule of `n×n` points on the triangle (a, b, c).
fn conical(f: &dyn Fn(Vec3) -> f64, a: Vec3, b: Vec3, c: Vec3, g: &[(f64, f64)]) -> f64 {
    let area2 = (b - a).cross(&(c - a)).norm();
    let mut sum = 0.0;
    for &(s, ws) in g {
        for &(t, wt) in g {
            let p = a + (b - a) * (s * (1.0 - t)) + (c - a) * (s * t);
            sum += ws * wt * s * f(p);
        }
    }
    sum * area2
}

fn adaptive(f: &dyn Fn(Vec3) -> f64, tri: [Vec3; 3], coarse: &[(f64, f64)], fine: &[(f64, f64)], tol: f64, depth: usize) -> f64 {
    let [a, b, c] = tri;
    let q1 = conical(f, a, b, c, coarse);
    let q2 = conical(f, a, b, c, fine);
    if (q1 - q2).abs() <= tol || depth == 0 {
        return q2;
    }
    let (ab, bc, ca) = ((a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0);
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        .into_iter()
        .map(|t| adaptive(f, t, coarse, fine, tol / 4.0, depth - 1))
        .sum()
}

/// Brute-force adaptive `∫ f dS` over a flat triangle.
pub fn integrate_flat(f: &dyn Fn(Vec3) -> f64, a: Vec3, b: Vec3, c: Vec3, tol: f64) -> f64 {
    adaptive(f, [a, b, c], &gauss01(5), &gauss01(10), tol, 18)
}

/// Gaussian elimination with partial pivoting.
pub fn eliminate(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let m = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= m * a[k][j];
            }
            b[i] -= m * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Potential of the thin shell at radius `b` between electrodes at `a`
/// (potential `v0`) and `c` (grounded), from charge neutrality of the shell.
pub fn floating_shell_potential(a: f64, b: f64, c: f64, v0: f64) -> f64 {
    v0 * (1.0 / b - 1.0 / c) / (1.0 / a - 1.0 / c)
}

/// Interface potential of a spherical capacitor with permittivity `e1` in
/// `a < r < b` and `e2` in `b < r < c`: series combination of the two
/// layers.
pub fn series_interface_potential(a: f64, b: f64, c: f64, e1: f64, e2: f64, v0: f64) -> f64 {
    let inner = (1.0 / a - 1.0 / b) / e1;
    let outer = (1.0 / b - 1.0 / c) / e2;
    v0 * outer / (inner + outer)
}

/// Exterior potential and field magnitude of a sphere of radius `r0` at
/// potential `v0`, at distance `r`.
pub fn sphere_exterior(r0: f64, v0: f64, r: f64) -> (f64, f64) {
    (v0 * r0 / r, v0 * r0 / (r * r))
}

/// Points on a sphere of radius `r`, spread by a golden-angle spiral and
/// away from the coordinate axes.
pub fn spiral_points(count: usize, r: f64) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64 + 0.1234;
            Vec3::new(rho * phi.cos(), rho * phi.sin(), z) * r
        })
        .collect()
}
