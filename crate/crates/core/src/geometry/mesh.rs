use std::collections::HashMap;

use super::{add, cross, dist2, dot, norm, normalized, scale, sub, Vec3};
use crate::error::{invalid, Error, Result};

/// Triangle mesh in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(i) = vertices.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("mesh vertex {i}")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(invalid(format!(
                    "face {fi} {f:?} references a vertex outside [0, {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(invalid(format!("face {fi} {f:?} is degenerate")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Same faces, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(invalid(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        TriMesh::new(vertices, self.faces.clone())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// One third of the area of every incident face.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let a = self.face_area(fi) / 3.0;
            for &v in f {
                areas[v] += a;
            }
        }
        areas
    }

    /// Area-weighted vertex normals (unit length; zero for isolated vertices).
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![[0.0; 3]; self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]];
            let n = cross(sub(b, a), sub(c, a));
            for &v in f {
                normals[v] = add(normals[v], n);
            }
        }
        normals.into_iter().map(normalized).collect()
    }

    /// Largest number of faces sharing any single undirected edge.
    pub fn max_edge_valence(&self) -> usize {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count.values().copied().max().unwrap_or(0)
    }

    pub fn is_edge_manifold(&self) -> bool {
        self.max_edge_valence() <= 2
    }

    /// Unsigned distance from `p` to the mesh surface.
    pub fn distance_to_surface(&self, p: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        for f in &self.faces {
            let tri = [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]];
            if best.is_finite() && aabb_dist2(p, &tri) >= best {
                continue;
            }
            let d = dist2(p, closest_point_on_triangle(p, tri));
            if d < best {
                best = d;
            }
        }
        best.sqrt()
    }
}

fn aabb_dist2(p: Vec3, tri: &[Vec3; 3]) -> f64 {
    let mut d = 0.0;
    for k in 0..3 {
        let lo = tri[0][k].min(tri[1][k]).min(tri[2][k]);
        let hi = tri[0][k].max(tri[1][k]).max(tri[2][k]);
        let e = if p[k] < lo {
            lo - p[k]
        } else if p[k] > hi {
            p[k] - hi
        } else {
            0.0
        };
        d += e * e;
    }
    d
}

/// Closest point to `p` on the triangle `tri`, by Voronoi-region
/// classification of `p` against the triangle's vertices and edges.
pub fn closest_point_on_triangle(p: Vec3, tri: [Vec3; 3]) -> Vec3 {
    let [a, b, c] = tri;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(a, add(scale(ab, v), scale(ac, w)))
}
