use super::neighbors::knn;
use super::{dist2, Vec3};
use crate::error::{invalid, Result};

const MIN_DIST: f64 = 1e-8;

/// Precomputed inverse-distance weights from `k` source points to each destination.
#[derive(Debug, Clone, PartialEq)]
pub struct IdwPlan {
    pub k: usize,
    pub n_src: usize,
    /// `dst.len() * k` source indices, nearest first.
    pub index: Vec<usize>,
    /// Matching weights; every row sums to one.
    pub weight: Vec<f64>,
}

impl IdwPlan {
    /// Weights are `1 / d^2` with `d` floored at 1e-8. A destination that
    /// coincides with a source takes that source's value outright.
    pub fn build(src: &[Vec3], dst: &[Vec3], k: usize) -> Result<Self> {
        if k == 0 || k > src.len() {
            return Err(invalid(format!("idw with k = {k} over {} source points", src.len())));
        }
        let index = knn(src, dst, k, false)?;
        let mut weight = Vec::with_capacity(index.len());
        for (row, &q) in index.chunks(k).zip(dst) {
            let d2: Vec<f64> = row.iter().map(|&j| dist2(src[j], q)).collect();
            if d2[0] == 0.0 {
                weight.push(1.0);
                weight.extend(std::iter::repeat_n(0.0, k - 1));
                continue;
            }
            let w: Vec<f64> = d2.iter().map(|&d| 1.0 / d.max(MIN_DIST * MIN_DIST)).collect();
            let total: f64 = w.iter().sum();
            weight.extend(w.into_iter().map(|x| x / total));
        }
        Ok(Self {
            k,
            n_src: src.len(),
            index,
            weight,
        })
    }

    pub fn n_dst(&self) -> usize {
        self.index.len() / self.k
    }

    /// Interpolate row-major `n_src x channels` values.
    pub fn apply(&self, values: &[f64], channels: usize) -> Result<Vec<f64>> {
        if values.len() != self.n_src * channels {
            return Err(invalid(format!(
                "idw values hold {} entries, expected {} x {channels}",
                values.len(),
                self.n_src
            )));
        }
        let mut out = vec![0.0; self.n_dst() * channels];
        for (i, row) in out.chunks_mut(channels).enumerate() {
            for t in 0..self.k {
                let j = self.index[i * self.k + t];
                let w = self.weight[i * self.k + t];
                for (o, v) in row.iter_mut().zip(&values[j * channels..(j + 1) * channels]) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// Inverse-distance-weighted interpolation of per-source values onto `dst`.
pub fn idw_interpolate(src: &[Vec3], values: &[f64], channels: usize, dst: &[Vec3], k: usize) -> Result<Vec<f64>> {
    IdwPlan::build(src, dst, k)?.apply(values, channels)
}
