//! How the pair classes are integrated: Duffy rules for a collocation point
//! on the corner, and subdivided Duffy cells for a point hovering above the
//! element. A plain Gauss rule is shown for contrast.

use hvbem::fixtures;
use hvbem::mesh::PatchKind;
use hvbem::quadrature::{classify_pair, duffy_rule, near_singular_rule, regular_rule};
use hvbem::{QuadConfig, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = fixtures::unit_triangle(PatchKind::Electrode { potential: 1.0 }).build()?;
    let tri = &mesh.triangles()[0];
    let gauss = regular_rule(8)?;

    // 1/|y| with the source at the right-angle corner.
    let exact = 2f64.sqrt() * (1.0 + 2f64.sqrt()).ln();
    let f = |u: f64, v: f64| 1.0 / tri.flat_map(u, v).norm();
    println!("corner singularity, exact {exact:.12}");
    println!("  gauss order 8     {:.12}", gauss.integrate(f));
    for n in [4, 6, 8] {
        println!("  duffy {n}x{n}       {:.12}", duffy_rule(0, n).integrate(f));
    }

    let q = QuadConfig::default();
    println!("point above the barycenter");
    for h in [0.5, 0.1, 0.01] {
        let x = Vec3::new(1.0 / 3.0, 1.0 / 3.0, h);
        let g = |u: f64, v: f64| 1.0 / (x - tri.flat_map(u, v)).norm();
        let rule = near_singular_rule(&x, tri, &q);
        println!(
            "  h = {h:<5} {:?}: near {:.10} ({} nodes)  gauss {:.10}",
            classify_pair(&x, None, tri, q.eta),
            rule.integrate(g),
            rule.len(),
            gauss.integrate(g)
        );
    }
    Ok(())
}
