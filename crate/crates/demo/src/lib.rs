//! Browser bindings: generate a synthetic jaw-like case, inspect the point
//! sampling the encoder uses, and redo the bone-to-skin kernel transfer with
//! an adjustable bandwidth.

use corrnet::geometry::{ball_query, farthest_point_sample, Vec3};
use corrnet::synth::{generate_case, kernel_transfer_oracle, GenParams, SyntheticCase};
use wasm_bindgen::prelude::*;

fn flat(points: &[Vec3]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

fn js_err(e: corrnet::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    case: SyntheticCase,
    bone_disp: Vec<Vec3>,
}

#[wasm_bindgen]
impl Demo {
    /// A new case. `segments` is the number of bone pieces (2 to 4).
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, segments: usize) -> Result<Demo, JsError> {
        let params = GenParams {
            seed,
            segments,
            subdivisions: 3,
            ..GenParams::default()
        };
        let case = generate_case(&params).map_err(js_err)?;
        let bone_disp = case.bone_disp();
        Ok(Demo { case, bone_disp })
    }

    pub fn bone(&self) -> Vec<f64> {
        flat(self.case.bone.vertices())
    }

    pub fn bone_post(&self) -> Vec<f64> {
        let v = self.case.bone.vertices();
        v.iter()
            .zip(&self.bone_disp)
            .flat_map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
            .collect()
    }

    pub fn skin(&self) -> Vec<f64> {
        flat(self.case.skin.vertices())
    }

    pub fn segments(&self) -> Vec<u32> {
        self.case.segment_labels.iter().map(|&s| s as u32).collect()
    }

    pub fn regions(&self) -> Vec<u32> {
        self.case.region_labels.iter().map(|&s| s as u32).collect()
    }

    /// Flattened skin triangles.
    pub fn skin_faces(&self) -> Vec<u32> {
        self.case.skin.faces().iter().flatten().map(|&i| i as u32).collect()
    }

    /// Indices of `k` bone vertices picked by farthest point sampling.
    pub fn fps(&self, k: usize) -> Result<Vec<u32>, JsError> {
        let idx = farthest_point_sample(self.case.bone.vertices(), k, 0).map_err(js_err)?;
        Ok(idx.into_iter().map(|i| i as u32).collect())
    }

    /// Bone vertices within `radius` mm of bone vertex `center`, nearest first.
    pub fn ball(&self, center: usize, radius: f64, max_n: usize) -> Result<Vec<u32>, JsError> {
        let v = self.case.bone.vertices();
        let c = *v.get(center).ok_or_else(|| JsError::new("center out of range"))?;
        let g = ball_query(&[c], v, radius, max_n).map_err(js_err)?;
        Ok(g[0].iter().map(|&i| i as u32).collect())
    }

    /// Skin movement from the bone movement with Gaussian bandwidth `h` mm.
    pub fn transfer(&self, h: f64) -> Result<Vec<f64>, JsError> {
        let d = kernel_transfer_oracle(self.case.bone.vertices(), &self.bone_disp, self.case.skin.vertices(), h)
            .map_err(js_err)?;
        Ok(flat(&d))
    }

    /// Ground-truth skin movement the dataset would store.
    pub fn skin_truth(&self) -> Vec<f64> {
        flat(&self.case.gt_skin_disp)
    }

    /// Largest rotation among the moved segments, in degrees.
    pub fn max_rotation(&self) -> f64 {
        self.case.transforms.iter().map(|t| t.angle_deg()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_with_dataset_bandwidth_reproduces_truth() {
        let d = Demo::new(3, 3).ok().unwrap();
        let h = d.case.params.bandwidth;
        let got = d.transfer(h).ok().unwrap();
        let truth = d.skin_truth();
        assert_eq!(got.len(), truth.len());
        let worst = got.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn sampling_views_are_consistent() {
        let d = Demo::new(1, 2).ok().unwrap();
        let idx = d.fps(64).ok().unwrap();
        assert_eq!(idx.len(), 64);
        let g = d.ball(idx[5] as usize, 12.0, 32).ok().unwrap();
        assert_eq!(g[0], idx[5]);
        assert!(g.len() <= 32);
        assert_eq!(d.skin_faces().len() % 3, 0);
        assert_eq!(d.bone().len(), d.bone_post().len());
    }
}
