//! Surface deviation: distance from every predicted vertex to the
//! ground-truth surface (point to triangle, pred -> gt only), weighted by
//! the predicted mesh's vertex areas.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::TriMesh;
use crate::synth::REGIONS;

pub const COLUMNS: [&str; REGIONS + 1] = ["r0", "r1", "r2", "r3", "r4", "r5", "entire"];

pub const REPORT_NOTE: &str = "surface deviation in mm: distance from each predicted vertex to the ground-truth \
surface (directional, predicted -> ground truth), area-weighted per case; mean and population std (n divisor) over cases";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub name: String,
    /// Area-weighted mean error per region, NaN for a region without vertices.
    pub regions: [f64; REGIONS],
    /// Area-weighted mean over the whole surface.
    pub entire: f64,
    #[serde(skip)]
    pub vertex_errors: Vec<f64>,
}

impl CaseMetrics {
    pub fn columns(&self) -> [f64; REGIONS + 1] {
        let mut c = [0.0; REGIONS + 1];
        c[..REGIONS].copy_from_slice(&self.regions);
        c[REGIONS] = self.entire;
        c
    }
}

pub fn evaluate(name: &str, pred: &TriMesh, gt: &TriMesh, regions: &[usize]) -> Result<CaseMetrics> {
    let n = pred.vertices().len();
    if regions.len() != n {
        return Err(invalid(format!("{} region labels for {n} predicted vertices", regions.len())));
    }
    if let Some(&r) = regions.iter().find(|&&r| r >= REGIONS) {
        return Err(invalid(format!("region label {r} out of range")));
    }
    let errors: Vec<f64> = pred.vertices().iter().map(|&p| gt.distance_to_surface(p)).collect();
    let areas = pred.vertex_areas();
    let mut num = [0.0; REGIONS];
    let mut den = [0.0; REGIONS];
    for ((&e, &a), &r) in errors.iter().zip(&areas).zip(regions) {
        num[r] += a * e;
        den[r] += a;
    }
    let total_area: f64 = den.iter().sum();
    if !(total_area > 0.0) {
        return Err(invalid("predicted mesh has zero area"));
    }
    let mut region_means = [f64::NAN; REGIONS];
    for r in 0..REGIONS {
        if den[r] > 0.0 {
            region_means[r] = num[r] / den[r];
        }
    }
    Ok(CaseMetrics {
        name: name.to_string(),
        regions: region_means,
        entire: num.iter().sum::<f64>() / total_area,
        vertex_errors: errors,
    })
}

/// Mean and population standard deviation of the finite values.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub note: String,
    pub cases: Vec<CaseMetrics>,
    pub mean: [f64; REGIONS + 1],
    pub std: [f64; REGIONS + 1],
    /// Wall-clock seconds per simulated case, same order as `cases`.
    #[serde(skip)]
    pub seconds: Vec<f64>,
}

impl MetricsReport {
    pub fn new(cases: Vec<CaseMetrics>, seconds: Vec<f64>) -> Self {
        let mut mean = [0.0; REGIONS + 1];
        let mut std = [0.0; REGIONS + 1];
        for c in 0..=REGIONS {
            (mean[c], std[c]) = mean_std(cases.iter().map(|m| m.columns()[c]));
        }
        Self {
            note: REPORT_NOTE.into(),
            cases,
            mean,
            std,
            seconds,
        }
    }

    /// CSV: one row per case, then `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("case,{}\n", COLUMNS.join(","));
        let line = |name: &str, v: &[f64]| {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
            format!("{name},{}\n", cells.join(","))
        };
        for c in &self.cases {
            out += &line(&c.name, &c.columns());
        }
        out += &line("mean", &self.mean);
        out += &line("std", &self.std);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn grid(n: usize, z: f64) -> TriMesh {
        let mut v: Vec<Vec3> = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                v.push([i as f64, j as f64, z]);
            }
        }
        let id = |i: usize, j: usize| i * (n + 1) + j;
        let mut f = Vec::new();
        for i in 0..n {
            for j in 0..n {
                f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriMesh::new(v, f).unwrap()
    }

    #[test]
    fn offset_plane_has_unit_error() {
        let gt = grid(4, 0.0);
        let pred = grid(4, 1.0);
        let regions: Vec<usize> = (0..25).map(|i| i % REGIONS).collect();
        let m = evaluate("p", &pred, &gt, &regions).unwrap();
        assert!((m.entire - 1.0).abs() < 1e-12);
        assert!(m.regions.iter().all(|r| (r - 1.0).abs() < 1e-12));
        let same = evaluate("p", &gt, &gt, &regions).unwrap();
        assert_eq!(same.entire, 0.0);
        assert!(evaluate("p", &gt, &gt, &regions[1..]).is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std([1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn report_csv_shape() {
        let gt = grid(2, 0.0);
        let m = evaluate("a", &grid(2, 0.5), &gt, &[0; 9]).unwrap();
        let r = MetricsReport::new(vec![m], vec![0.1]);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("a,0.500000,NaN"));
    }
}
