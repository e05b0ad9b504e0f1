mod common;

use hvbem::quadrature::{closest_point, duffy_rule, near_singular_rule, QuadConfig};
use hvbem::Vec3;
use proptest::prelude::*;

#[test]
fn duffy_corner_integral_matches_closed_form() {
    // ∫ 1/|y| over the unit right triangle, in polar coordinates about the
    // origin: ∫₀^{π/2} dθ / (cos θ + sin θ) = √2 ln(1 + √2).
    let exact = 2f64.sqrt() * (1.0 + 2f64.sqrt()).ln();
    let tri = common::flat_triangle(Vec3::zeros(), Vec3::x(), Vec3::y());
    let value = duffy_rule(0, 8).integrate(|u, v| 1.0 / tri.flat_map(u, v).norm());
    assert!((value - exact).abs() / exact < 1e-8, "{value} vs {exact}");
}

#[test]
fn point_above_barycenter_matches_adaptive_reference() {
    let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
    let tri = common::flat_triangle(a, b, c);
    let x = (a + b + c) / 3.0 + Vec3::z() * 0.05;
    let f = |y: Vec3| 1.0 / (x - y).norm();
    let reference = common::integrate_flat(&f, a, b, c, 1e-13);
    let value = near_singular_rule(&x, &tri, &QuadConfig::default()).integrate(|u, v| f(tri.flat_map(u, v)));
    assert!((value - reference).abs() / reference < 1e-6);
}

#[test]
fn closest_point_beats_grid_search() {
    let (a, b, c) = (Vec3::new(0.2, -0.1, 0.0), Vec3::new(1.1, 0.3, 0.2), Vec3::new(0.1, 0.9, -0.3));
    let tri = common::flat_triangle(a, b, c);
    let n = 1414;
    for x in [
        Vec3::new(0.5, 0.4, 0.7),
        Vec3::new(-0.8, -0.5, 0.1),
        Vec3::new(1.6, 0.2, -0.4),
        Vec3::new(0.3, 1.5, 0.0),
    ] {
        let uv = closest_point(&x, &tri);
        let d = (x - tri.flat_map(uv[0], uv[1])).norm();
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n - i {
                let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                best = best.min((x - tri.flat_map(u, v)).norm());
            }
        }
        assert!(d <= best + 1e-6, "{d} vs grid {best}");
    }
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn near_singular_accuracy_over_the_near_range(
        a in vec3(1.0),
        b in vec3(1.0),
        c in vec3(1.0),
        dir in vec3(1.0),
        ratio in 0.1..1.2f64,
    ) {
        let normal = (b - a).cross(&(c - a));
        let (center, r) = common::circumcircle(a, b, c);
        // Keep triangles away from slivers, whose circumradius is huge.
        prop_assume!(normal.norm() > 0.2 * r * r);
        prop_assume!(dir.norm() > 0.1);
        let unit = normal.normalize();
        let mut d = dir.normalize();
        // At least 10 degrees off the triangle plane.
        prop_assume!(d.dot(&unit).abs() > 0.17);
        if d.dot(&unit) < 0.0 {
            d = -d;
        }
        let x = center + d * (ratio * r);
        let tri = common::flat_triangle(a, b, c);
        let f = |y: Vec3| 1.0 / (x - y).norm();
        let reference = common::integrate_flat(&f, a, b, c, 1e-12 * r);
        let value = normal.norm() * near_singular_rule(&x, &tri, &QuadConfig::default()).integrate(|u, v| f(tri.flat_map(u, v)));
        prop_assert!(((value - reference) / reference).abs() < 1e-5, "{} vs {}", value, reference);
    }
}
