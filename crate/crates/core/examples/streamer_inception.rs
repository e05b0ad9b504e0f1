//! A 1 cm sphere electrode inside a grounded 10 cm shell, in air. Field
//! lines are traced from the most stressed surface nodes and the ionization
//! integral along each is compared with the streamer constant.
//!
//! The gas table in `data/air_demo.gas` is illustrative only.
//!
//! ```text
//! cargo run --release --example streamer_inception -- 60e3
//! ```

use hvbem::cli::{surface_start, trace_params};
use hvbem::fixtures;
use hvbem::mesh::{PatchKind, PatchSpec};
use hvbem::postprocess::{streamer_integral, surface_field, top_k_starts, trace_fieldline};
use hvbem::{assemble, solve, AssemblyConfig, Config, Evaluator, IonizationModel, QuadConfig, SolverConfig, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let volts: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60e3);
    let gas = IonizationModel::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/air_demo.gas"))?;

    let mut data = fixtures::merge([
        fixtures::sphere(3, 0.01, Vec3::zeros(), 1),
        fixtures::sphere(2, 0.1, Vec3::zeros(), 2),
    ]);
    data.patches = vec![
        PatchSpec { tag: 1, kind: PatchKind::Electrode { potential: volts } },
        PatchSpec { tag: 2, kind: PatchKind::Electrode { potential: 0.0 } },
    ];
    let mesh = data.build()?;
    let asm = assemble(&mesh, &AssemblyConfig::default(), 4)?;
    let sol = solve(&asm.matrix, &asm.rhs, &SolverConfig::default())?;

    let quad = QuadConfig::default();
    let samples = surface_field(&mesh, &sol.u, &quad)?;
    let eval = Evaluator::new(&mesh, &sol.u, quad)?;
    let params = trace_params(&mesh, &Config::new(), &samples);

    println!("{volts:.0} V, k_str = {}", gas.k_str);
    for i in top_k_starts(&samples, 5) {
        let s = &samples[i];
        let (start, orientation) = surface_start(&mesh, s);
        let line = trace_fieldline(&eval, start, orientation, &params)?;
        let crit = streamer_integral(&line, &gas);
        println!(
            "vertex {:5}  |E| = {:.3e} V/m  length {:.4} m  {:<11}  integral {:7.2}  inception {}",
            s.vertex,
            s.magnitude,
            line.length(),
            line.termination.as_str(),
            crit.value,
            crit.inception
        );
    }
    Ok(())
}
