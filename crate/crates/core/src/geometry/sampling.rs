use rand::Rng;

use super::{dist2, TriMesh, Vec3};
use crate::error::{invalid, Result};

/// Indices that sort `points` lexicographically by (x, y, z).
pub fn canonical_order(points: &[Vec3]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (points[a], points[b]);
        p[0].total_cmp(&q[0])
            .then(p[1].total_cmp(&q[1]))
            .then(p[2].total_cmp(&q[2]))
            .then(a.cmp(&b))
    });
    idx
}

/// Iterative farthest point sampling.
///
/// Starts at `start`; each later pick maximises the distance to the points
/// already picked. Ties go to the lowest index.
pub fn farthest_point_sample(points: &[Vec3], k: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(invalid(format!("farthest point sample of {k} from {n} points")));
    }
    if start >= n {
        return Err(invalid(format!("start index {start} out of range for {n} points")));
    }
    let mut chosen = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; n];
    let mut current = start;
    chosen.push(current);
    // Picked points never win again, even among duplicates.
    min_d[current] = f64::NEG_INFINITY;
    while chosen.len() < k {
        let c = points[current];
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = dist2(*p, c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        current = best;
        chosen.push(current);
        min_d[current] = f64::NEG_INFINITY;
    }
    Ok(chosen)
}

/// A point drawn on a mesh surface, remembered by face and barycentric weights.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub face: usize,
    pub bary: [f64; 3],
    pub point: Vec3,
}

/// Area-weighted uniform sampling of `count` points on the mesh surface.
pub fn sample_surface<R: Rng>(mesh: &TriMesh, count: usize, rng: &mut R) -> Result<Vec<SurfaceSample>> {
    let nf = mesh.faces().len();
    if nf == 0 {
        return Err(invalid("cannot sample a mesh without faces"));
    }
    let mut cdf = Vec::with_capacity(nf);
    let mut total = 0.0;
    for f in 0..nf {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if total <= 0.0 {
        return Err(invalid("mesh has zero surface area"));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.gen::<f64>() * total;
        let face = cdf.partition_point(|&c| c <= u).min(nf - 1);
        let (mut r1, mut r2) = (rng.gen::<f64>(), rng.gen::<f64>());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let bary = [1.0 - r1 - r2, r1, r2];
        let tri = mesh.triangle(face);
        let mut point = [0.0; 3];
        for k in 0..3 {
            point[k] = bary[0] * tri[0][k] + bary[1] * tri[1][k] + bary[2] * tri[2][k];
        }
        out.push(SurfaceSample { face, bary, point });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]];
        assert_eq!(farthest_point_sample(&pts, 1, 0).unwrap(), vec![0]);
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap(), vec![0, 1]);
        assert_eq!(farthest_point_sample(&pts, 3, 0).unwrap(), vec![0, 1, 2]);
        assert!(farthest_point_sample(&pts, 4, 0).is_err());
        assert!(farthest_point_sample(&pts, 1, 3).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn canonical_order_sorts() {
        let pts = vec![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 1.0, 5.0]];
        assert_eq!(canonical_order(&pts), vec![2, 1, 0]);
    }
}
