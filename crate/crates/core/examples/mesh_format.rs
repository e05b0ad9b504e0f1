//! Writes a fixture in the text mesh format, reads it back and prints what
//! the loader derived from it.

use hvbem::fixtures;
use hvbem::load_mesh;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("shell.bemesh");
    fixtures::floating_shell(1).write(&path)?;

    let text = std::fs::read_to_string(&path)?;
    // Header, one record of each kind and the patch table.
    let mut seen = Vec::new();
    for line in text.lines() {
        let key = line.split_whitespace().next().unwrap_or("");
        if key == "patch" || !seen.contains(&key) {
            println!("| {line}");
            seen.push(key);
        }
    }

    let mesh = load_mesh(&path)?;
    println!("{} nodes, {} curved triangles", mesh.vertices().len(), mesh.triangles().len());
    println!("{} collocation unknowns, {} floating potentials", mesh.n_dofs(), mesh.n_floating());
    for p in mesh.patches() {
        println!("patch {}: {:?}", p.tag, p.kind);
    }
    let (lo, hi) = mesh.bounding_box();
    println!("bbox [{:.2}, {:.2}, {:.2}] .. [{:.2}, {:.2}, {:.2}]", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z);
    println!("area {:.6}", mesh.total_area());
    Ok(())
}
