use super::{dist2, Vec3};
use crate::error::{invalid, Result};

fn by_dist(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest entries of `cand`, nearest first, ties by index.
fn smallest_k(mut cand: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if cand.len() > k && k > 0 {
        cand.select_nth_unstable_by(k - 1, by_dist);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_dist);
    cand.truncate(k);
    cand
}

/// Radius neighbourhoods of every center, nearest first, capped at `max_n`.
///
/// A center with no point inside the radius gets its single nearest point,
/// so no group is ever empty.
pub fn ball_query(centers: &[Vec3], points: &[Vec3], radius: f64, max_n: usize) -> Result<Vec<Vec<usize>>> {
    if !(radius > 0.0) {
        return Err(invalid(format!("ball query radius must be positive, got {radius}")));
    }
    if max_n == 0 || points.is_empty() {
        return Err(invalid("ball query needs max_n >= 1 and a non-empty point set"));
    }
    let r2 = radius * radius;
    Ok(centers
        .iter()
        .map(|&c| {
            let all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, &p)| (dist2(p, c), i)).collect();
            let inside: Vec<(f64, usize)> = all.iter().copied().filter(|e| e.0 <= r2).collect();
            let picked = if inside.is_empty() {
                smallest_k(all, 1)
            } else {
                smallest_k(inside, max_n)
            };
            picked.into_iter().map(|e| e.1).collect()
        })
        .collect())
}

/// Pad every group to exactly `size` entries by repeating its nearest member.
pub fn pad_groups(groups: &[Vec<usize>], size: usize) -> Vec<usize> {
    let mut flat = Vec::with_capacity(groups.len() * size);
    for g in groups {
        for t in 0..size {
            flat.push(*g.get(t).unwrap_or(&g[0]));
        }
    }
    flat
}

/// `k` nearest points of every query, nearest first, flattened row-major.
///
/// With `exclude_self`, query `i` is taken to be point `i` and skips itself.
pub fn knn(points: &[Vec3], queries: &[Vec3], k: usize, exclude_self: bool) -> Result<Vec<usize>> {
    let available = points.len() - usize::from(exclude_self);
    if k == 0 || k > available {
        return Err(invalid(format!("k = {k} neighbours requested from {available} points")));
    }
    if exclude_self && queries.len() != points.len() {
        return Err(invalid("self-excluding knn needs queries == points"));
    }
    let mut out = Vec::with_capacity(queries.len() * k);
    for (qi, &q) in queries.iter().enumerate() {
        let cand: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| !(exclude_self && *i == qi))
            .map(|(i, &p)| (dist2(p, q), i))
            .collect();
        out.extend(smallest_k(cand, k).into_iter().map(|e| e.1));
    }
    Ok(out)
}

/// Index of the nearest bony point for every facial point (ties to lowest index).
pub fn closest_point_indices(facial: &[Vec3], bony: &[Vec3]) -> Vec<usize> {
    facial
        .iter()
        .map(|&f| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, &b) in bony.iter().enumerate() {
                let d = dist2(f, b);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Dense binary N1 x N2 matrix with a single 1 per row at the nearest bony point.
pub fn closest_point_matrix(facial: &[Vec3], bony: &[Vec3]) -> Vec<f64> {
    let n2 = bony.len();
    let mut r = vec![0.0; facial.len() * n2];
    for (i, j) in closest_point_indices(facial, bony).into_iter().enumerate() {
        r[i * n2 + j] = 1.0;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_query_basics() {
        let pts = vec![[0.05, 0.0, 0.0], [0.2, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let g = ball_query(&[[0.0; 3]], &pts, 0.1, 32).unwrap();
        assert_eq!(g, vec![vec![2, 0]]);
        let g = ball_query(&[[0.0; 3]], &pts[..2], 0.1, 32).unwrap();
        assert_eq!(g, vec![vec![0]]);
        // empty ball falls back to nearest
        let g = ball_query(&[[5.0, 0.0, 0.0]], &pts, 0.1, 32).unwrap();
        assert_eq!(g, vec![vec![1]]);
        assert!(ball_query(&[[0.0; 3]], &pts, 0.0, 4).is_err());
    }

    #[test]
    fn padding_repeats_nearest() {
        assert_eq!(pad_groups(&[vec![4, 2], vec![7]], 3), vec![4, 2, 4, 7, 7, 7]);
    }

    #[test]
    fn closest_identity() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let r = closest_point_matrix(&pts, &pts);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r[i * 3 + j], f64::from(u8::from(i == j)));
            }
        }
    }

    #[test]
    fn knn_excludes_self() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        assert_eq!(knn(&pts, &pts, 1, true).unwrap(), vec![1, 0, 1]);
        assert_eq!(knn(&pts, &pts, 1, false).unwrap(), vec![0, 1, 2]);
        assert!(knn(&pts, &pts, 3, true).is_err());
    }
}
