//! Analytic test geometries built from refined icosahedra.
//!
//! Sphere level `L` has `10·4^L + 2` corner vertices (642 at level 3, 2562
//! at level 4) plus one midside vertex per edge, all placed on the sphere.
//! Triangles are wound so that normals point outward.

use std::collections::HashMap;

use crate::mesh::{MeshData, PatchKind, PatchSpec, TriangleRecord};
use crate::{Vec3, EPS0};

/// Corners and outward-wound triangles of the unit icosphere.
pub fn icosphere(level: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for f in faces.iter_mut() {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    (verts, faces)
}

/// Quadratic sphere mesh of radius `radius` around `center`, all triangles
/// tagged `tag`. No patches are attached.
pub fn sphere(level: usize, radius: f64, center: Vec3, tag: i64) -> MeshData {
    let (corners, faces) = icosphere(level);
    let mut vertices: Vec<[f64; 3]> = corners
        .iter()
        .map(|p| {
            let q = center + p * radius;
            [q.x, q.y, q.z]
        })
        .collect();
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(faces.len());
    for [a, b, c] in faces {
        let mut mid = |i: usize, j: usize| -> usize {
            *edges.entry((i.min(j), i.max(j))).or_insert_with(|| {
                let q = center + ((corners[i] + corners[j]) / 2.0).normalize() * radius;
                vertices.push([q.x, q.y, q.z]);
                vertices.len() - 1
            })
        };
        let nodes = [a, b, c, mid(a, b), mid(b, c), mid(c, a)];
        triangles.push(TriangleRecord { nodes, tag });
    }
    MeshData {
        vertices,
        triangles,
        patches: Vec::new(),
        relative_permittivity: false,
    }
}

/// Concatenate meshes, renumbering vertices. Patches are concatenated as
/// is; tags must not collide.
pub fn merge(parts: impl IntoIterator<Item = MeshData>) -> MeshData {
    let mut out = MeshData::default();
    for part in parts {
        let offset = out.vertices.len();
        out.vertices.extend(part.vertices);
        out.triangles.extend(part.triangles.into_iter().map(|t| TriangleRecord {
            nodes: t.nodes.map(|n| n + offset),
            tag: t.tag,
        }));
        out.patches.extend(part.patches);
        out.relative_permittivity |= part.relative_permittivity;
    }
    out
}

/// Isolated sphere electrode at potential `v0`, tag 1.
pub fn charged_sphere(level: usize, radius: f64, v0: f64) -> MeshData {
    let mut m = sphere(level, radius, Vec3::zeros(), 1);
    m.patches.push(PatchSpec {
        tag: 1,
        kind: PatchKind::Electrode { potential: v0 },
    });
    m
}

/// Radii of the concentric fixtures: inner electrode, middle surface,
/// outer electrode.
pub const CONCENTRIC_RADII: (f64, f64, f64) = (0.5, 0.75, 1.0);

/// Inner electrode (radius 0.5, 1 V, tag 1) inside a grounded outer
/// electrode (radius 1.0, tag 3).
pub fn concentric_capacitor(level: usize) -> MeshData {
    let (a, _, c) = CONCENTRIC_RADII;
    let mut m = merge([sphere(level, a, Vec3::zeros(), 1), sphere(level, c, Vec3::zeros(), 3)]);
    m.patches = vec![
        PatchSpec {
            tag: 1,
            kind: PatchKind::Electrode { potential: 1.0 },
        },
        PatchSpec {
            tag: 3,
            kind: PatchKind::Electrode { potential: 0.0 },
        },
    ];
    m
}

/// [`concentric_capacitor`] with a thin floating sheet (index 0, tag 2) at
/// radius 0.75 in vacuum.
pub fn floating_shell(level: usize) -> MeshData {
    let (_, b, _) = CONCENTRIC_RADII;
    let mut m = merge([concentric_capacitor(level), sphere(level, b, Vec3::zeros(), 2)]);
    m.patches.push(PatchSpec {
        tag: 2,
        kind: PatchKind::FloatingSheet {
            index: 0,
            eps_plus: EPS0,
            eps_minus: EPS0,
        },
    });
    m
}

/// [`concentric_capacitor`] with a dielectric interface (tag 2) at radius
/// 0.75: relative permittivity 2 inside, 1 outside.
pub fn dielectric_capacitor(level: usize) -> MeshData {
    let (_, b, _) = CONCENTRIC_RADII;
    let mut m = merge([concentric_capacitor(level), sphere(level, b, Vec3::zeros(), 2)]);
    m.patches.push(PatchSpec {
        tag: 2,
        kind: PatchKind::DielectricInterface {
            eps_plus: EPS0,
            eps_minus: 2.0 * EPS0,
        },
    });
    m
}

/// Single flat right triangle with unit legs in the `z = 0` plane.
pub fn unit_triangle(kind: PatchKind) -> MeshData {
    MeshData {
        vertices: vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.0],
        ],
        triangles: vec![TriangleRecord {
            nodes: [0, 1, 2, 3, 4, 5],
            tag: 0,
        }],
        patches: vec![PatchSpec { tag: 0, kind }],
        relative_permittivity: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts_and_orientation() {
        for level in 0..4 {
            let (v, f) = icosphere(level);
            assert_eq!(v.len(), 10 * 4usize.pow(level as u32) + 2);
            assert_eq!(f.len(), 20 * 4usize.pow(level as u32));
            for t in &f {
                let n = (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]));
                assert!(n.dot(&v[t[0]]) > 0.0);
            }
        }
    }

    #[test]
    fn sphere_mesh_builds() {
        let mesh = charged_sphere(2, 2.0, 1.0).build().unwrap();
        assert_eq!(mesh.n_dofs(), 162);
        assert_eq!(mesh.vertices().len(), 162 + 480);
        for v in mesh.vertices() {
            assert!((v.position.norm() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn concentric_fixtures_build() {
        let m = floating_shell(1).build().unwrap();
        assert_eq!(m.n_floating(), 1);
        assert_eq!(m.n_dofs(), 3 * 42);
        let m = dielectric_capacitor(1).build().unwrap();
        assert_eq!(m.n_floating(), 0);
    }
}
