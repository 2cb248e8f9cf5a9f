//! Synthetic bone/skin cases with analytic ground-truth soft-tissue motion.
//!
//! A case is a bumpy ellipsoid "bone" cut into segments by horizontal
//! planes, a "skin" shell offset along the bone normals, rigid motions for
//! every segment but the top one, and skin motion given by Gaussian-kernel
//! transfer of the bone motion.

pub mod dataset;
mod oracle;
mod shapes;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{build_dataset, load_case_samples, CaseSamples, Manifest};
pub use oracle::kernel_transfer_oracle;
pub use shapes::icosphere;

use crate::error::{invalid, Result};
use crate::geometry::sampling::sample_surface;
use crate::geometry::{
    add, canonical_order, centroid, cross, dot, farthest_point_sample, mat3_mul, normalized, scale, sub, TriMesh, Vec3,
};

/// Number of skin regions reported by the evaluation.
pub const REGIONS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub seed: u64,
    /// Base ellipsoid semi-axes in mm.
    pub radii: [f64; 3],
    /// Per-case relative jitter of each semi-axis.
    pub radius_jitter: f64,
    /// Skin thickness range in mm.
    pub thickness: [f64; 2],
    /// Largest radial bump height in mm.
    pub bump_amplitude: f64,
    pub bump_count: usize,
    /// Angular width of a bump in radians.
    pub bump_width: f64,
    /// Number of bone segments, 2 to 4.
    pub segments: usize,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    /// Kernel bandwidth h of the ground-truth transfer, mm.
    pub bandwidth: f64,
    pub subdivisions: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            seed: 0,
            radii: [62.0, 70.0, 58.0],
            radius_jitter: 0.08,
            thickness: [8.0, 16.0],
            bump_amplitude: 4.0,
            bump_count: 8,
            bump_width: 0.35,
            segments: 3,
            max_rotation_deg: 15.0,
            max_translation: 10.0,
            bandwidth: 15.0,
            subdivisions: 4,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.radii.iter().all(|&r| r > 0.0)
            && self.thickness[0] > 0.0
            && self.thickness[1] >= self.thickness[0]
            && self.bump_width > 0.0
            && self.bandwidth > 0.0;
        let non_negative = self.radius_jitter >= 0.0
            && self.radius_jitter < 0.5
            && self.bump_amplitude >= 0.0
            && self.max_rotation_deg >= 0.0
            && self.max_translation >= 0.0;
        if !positive || !non_negative {
            return Err(invalid("generator sizes must be positive (jitter in [0, 0.5))"));
        }
        if !(2..=4).contains(&self.segments) {
            return Err(invalid(format!("segment count must be 2 to 4, got {}", self.segments)));
        }
        if self.bump_amplitude >= 0.5 * self.radii.iter().cloned().fold(f64::INFINITY, f64::min) {
            return Err(invalid("bumps as large as the shape would fold the surface"));
        }
        if self.subdivisions > 6 {
            return Err(invalid("at most 6 subdivisions"));
        }
        Ok(())
    }
}

/// `p -> rotation (p - pivot) + pivot + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
    pub pivot: Vec3,
}

impl RigidTransform {
    pub fn identity(pivot: Vec3) -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            pivot,
        }
    }

    /// Rotation by `angle` radians about unit `axis` (Rodrigues).
    pub fn axis_angle(axis: Vec3, angle: f64, pivot: Vec3, translation: Vec3) -> Self {
        let [x, y, z] = normalized(axis);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self {
            rotation: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
            translation,
            pivot,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        add(p, self.displacement(p))
    }

    /// `(rotation - I)(p - pivot) + translation`, exactly zero for the identity.
    pub fn displacement(&self, p: Vec3) -> Vec3 {
        let r = sub(p, self.pivot);
        add(sub(mat3_mul(&self.rotation, r), r), self.translation)
    }

    /// Rotation angle in degrees.
    pub fn angle_deg(&self) -> f64 {
        let r = &self.rotation;
        let c = ((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub params: GenParams,
    pub bone: TriMesh,
    pub skin: TriMesh,
    /// Ground-truth post-operative skin: `skin + gt_skin_disp`, same faces.
    pub skin_post: TriMesh,
    /// Segment id of every bone vertex; segment 0 stays in place.
    pub segment_labels: Vec<usize>,
    /// Region id (0..REGIONS) of every skin vertex.
    pub region_labels: Vec<usize>,
    pub transforms: Vec<RigidTransform>,
    /// Kernel-transferred displacement of every skin vertex, mm.
    pub gt_skin_disp: Vec<Vec3>,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
        let n2 = dot(v, v);
        if n2 > 1e-4 && n2 <= 1.0 {
            return normalized(v);
        }
    }
}

impl SyntheticCase {
    /// Displacement of every bone vertex under its segment's transform.
    pub fn bone_disp(&self) -> Vec<Vec3> {
        self.bone
            .vertices()
            .iter()
            .zip(&self.segment_labels)
            .map(|(&p, &s)| self.transforms[s].displacement(p))
            .collect()
    }

    pub fn n_segments(&self) -> usize {
        self.transforms.len()
    }
}

/// Build one case. Everything is drawn from `params.seed`.
pub fn generate_case(params: &GenParams) -> Result<SyntheticCase> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (dirs, faces) = icosphere(params.subdivisions);

    let radii = params
        .radii
        .map(|r| r * (1.0 + rng.gen_range(-params.radius_jitter..=params.radius_jitter)));
    let bumps: Vec<(Vec3, f64)> = (0..params.bump_count)
        .map(|_| (unit_vector(&mut rng), rng.gen_range(-1.0..=1.0) * params.bump_amplitude))
        .collect();
    let w2 = params.bump_width * params.bump_width;
    let bone_vertices: Vec<Vec3> = dirs
        .iter()
        .map(|&u| {
            let lift: f64 = bumps
                .iter()
                .map(|&(c, a)| {
                    let d = sub(u, c);
                    a * (-dot(d, d) / w2).exp()
                })
                .sum();
            add([radii[0] * u[0], radii[1] * u[1], radii[2] * u[2]], scale(u, lift))
        })
        .collect();
    let bone = TriMesh::new(bone_vertices, faces.clone())?;

    // Smooth thickness field over directions.
    let freq = [0; 3].map(|_| rng.gen_range(1.0..3.0));
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let [t0, t1] = params.thickness;
    let normals = bone.vertex_normals();
    let skin_vertices: Vec<Vec3> = bone
        .vertices()
        .iter()
        .zip(&normals)
        .zip(&dirs)
        .map(|((&p, &n), &u)| {
            let s = 0.5 + 0.5 * (freq[0] * u[0] + freq[1] * u[1] + freq[2] * u[2] + phase).sin();
            add(p, scale(n, t0 + (t1 - t0) * s))
        })
        .collect();
    let skin = TriMesh::new(skin_vertices, faces.clone())?;

    // Horizontal cuts; segment 0 is the top one.
    let zs: Vec<f64> = bone.vertices().iter().map(|p| p[2]).collect();
    let zmin = zs.iter().cloned().fold(f64::INFINITY, f64::min);
    let zmax = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = zmax - zmin;
    let n_seg = params.segments;
    let cuts: Vec<f64> = (1..n_seg)
        .map(|k| zmax - span * k as f64 / n_seg as f64 + rng.gen_range(-0.05..0.05) * span)
        .collect();
    let segment_labels: Vec<usize> = zs.iter().map(|&z| cuts.iter().filter(|&&c| z < c).count()).collect();
    let mut members = vec![Vec::new(); n_seg];
    for (i, &s) in segment_labels.iter().enumerate() {
        members[s].push(bone.vertices()[i]);
    }
    if members.iter().any(Vec::is_empty) {
        return Err(invalid("a bone segment came out empty"));
    }

    let max_angle = params.max_rotation_deg.to_radians();
    let transforms: Vec<RigidTransform> = members
        .iter()
        .enumerate()
        .map(|(s, pts)| {
            let pivot = centroid(pts);
            if s == 0 {
                return RigidTransform::identity(pivot);
            }
            let axis = unit_vector(&mut rng);
            let angle = rng.gen_range(0.0..=max_angle);
            let t = scale(unit_vector(&mut rng), rng.gen_range(0.0..=params.max_translation));
            RigidTransform::axis_angle(axis, angle, pivot, t)
        })
        .collect();

    let mut case = SyntheticCase {
        params: params.clone(),
        region_labels: region_labels(skin.vertices()),
        skin_post: skin.clone(),
        bone,
        skin,
        segment_labels,
        transforms,
        gt_skin_disp: Vec::new(),
    };
    case.gt_skin_disp = kernel_transfer_oracle(case.bone.vertices(), &case.bone_disp(), case.skin.vertices(), params.bandwidth)?;
    let post: Vec<Vec3> = case
        .skin
        .vertices()
        .iter()
        .zip(&case.gt_skin_disp)
        .map(|(&p, &d)| add(p, d))
        .collect();
    case.skin_post = case.skin.with_vertices(post)?;
    Ok(case)
}

/// Six sectors about the centroid: above/below times three azimuth wedges.
pub fn region_labels(points: &[Vec3]) -> Vec<usize> {
    let c = centroid(points);
    points
        .iter()
        .map(|&p| {
            let d = sub(p, c);
            let az = d[1].atan2(d[0]) + std::f64::consts::PI;
            let wedge = ((az / (2.0 * std::f64::consts::PI / 3.0)) as usize).min(2);
            wedge + if d[2] >= 0.0 { 0 } else { 3 }
        })
        .collect()
}

/// Sample `n` skin and bone points with their ground-truth displacements.
///
/// `4 n` area-weighted candidates are drawn per surface, put in canonical
/// order and reduced by farthest point sampling from the first one, so the
/// result is in FPS order and any prefix is itself an FPS subsample.
pub fn sample_case(case: &SyntheticCase, n: usize, seed: u64) -> Result<CaseSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |mesh: &TriMesh, rng: &mut ChaCha8Rng| -> Result<Vec<crate::geometry::sampling::SurfaceSample>> {
        let cands = sample_surface(mesh, 4 * n, rng)?;
        let pts: Vec<Vec3> = cands.iter().map(|s| s.point).collect();
        let order = canonical_order(&pts);
        let sorted: Vec<Vec3> = order.iter().map(|&i| pts[i]).collect();
        let keep = farthest_point_sample(&sorted, n, 0)?;
        Ok(keep.into_iter().map(|k| cands[order[k]]).collect())
    };
    let skin_s = pick(&case.skin, &mut rng)?;
    let bone_s = pick(&case.bone, &mut rng)?;
    let skin: Vec<Vec3> = skin_s.iter().map(|s| s.point).collect();
    let skin_disp = kernel_transfer_oracle(case.bone.vertices(), &case.bone_disp(), &skin, case.params.bandwidth)?;
    let bone: Vec<Vec3> = bone_s.iter().map(|s| s.point).collect();
    let bone_disp = bone_s
        .iter()
        .map(|s| {
            let f = case.bone.faces()[s.face];
            let corner = (0..3).fold(0, |best, k| if s.bary[k] > s.bary[best] { k } else { best });
            case.transforms[case.segment_labels[f[corner]]].displacement(s.point)
        })
        .collect();
    Ok(CaseSamples {
        skin,
        skin_disp,
        bone,
        bone_disp,
    })
}

/// Orthonormal rotation check used by tests and dataset validation.
pub fn is_rotation(r: &[[f64; 3]; 3], tol: f64) -> bool {
    let c = |i: usize| [r[0][i], r[1][i], r[2][i]];
    let det = dot(c(0), cross(c(1), c(2)));
    (0..3).all(|i| (0..3).all(|j| (dot(c(i), c(j)) - if i == j { 1.0 } else { 0.0 }).abs() < tol)) && (det - 1.0).abs() < tol
}
