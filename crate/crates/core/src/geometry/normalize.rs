use serde::{Deserialize, Serialize};

use super::{dist2, scale, sub, DisplacementField, PointSet, Units, Vec3};
use crate::error::{invalid, Result};

/// Maps physical coordinates into the unit ball: `(p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormTransform {
    pub center: Vec3,
    pub scale: f64,
}

impl NormTransform {
    pub fn new(center: Vec3, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("normalisation scale must be positive, got {scale}")));
        }
        Ok(Self { center, scale })
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        scale(sub(p, self.center), 1.0 / self.scale)
    }

    pub fn invert_point(&self, p: Vec3) -> Vec3 {
        let q = scale(p, self.scale);
        [q[0] + self.center[0], q[1] + self.center[1], q[2] + self.center[2]]
    }

    pub fn apply(&self, ps: &PointSet) -> Result<PointSet> {
        ps.units().expect(Units::Physical)?;
        PointSet::new(
            ps.coords().iter().map(|&p| self.apply_point(p)).collect(),
            Units::Normalized,
        )
    }

    pub fn invert(&self, ps: &PointSet) -> Result<PointSet> {
        ps.units().expect(Units::Normalized)?;
        PointSet::new(
            ps.coords().iter().map(|&p| self.invert_point(p)).collect(),
            Units::Physical,
        )
    }

    /// Displacements only scale; the centre cancels.
    pub fn apply_displacement(&self, v: &DisplacementField) -> Result<DisplacementField> {
        v.units().expect(Units::Physical)?;
        DisplacementField::new(
            v.vectors().iter().map(|&d| scale(d, 1.0 / self.scale)).collect(),
            Units::Normalized,
        )
    }
}

/// Normalise facial and bony point sets into one shared frame.
///
/// The frame is fitted to the union of `facial` and `bony_pre`; `bony_post`
/// is mapped with the same transform so bony movement stays comparable.
pub fn normalize_pair(
    facial: &PointSet,
    bony_pre: &PointSet,
    bony_post: &PointSet,
) -> Result<(PointSet, PointSet, PointSet, NormTransform)> {
    for ps in [facial, bony_pre, bony_post] {
        ps.units().expect(Units::Physical)?;
    }
    let union = || facial.coords().iter().chain(bony_pre.coords());
    let n = (facial.len() + bony_pre.len()) as f64;
    let mut center = [0.0; 3];
    for p in union() {
        for k in 0..3 {
            center[k] += p[k];
        }
    }
    let center = scale(center, 1.0 / n);
    let radius = union().map(|&p| dist2(p, center)).fold(0.0, f64::max).sqrt();
    if radius <= 0.0 {
        return Err(invalid("cannot normalise: all points coincide"));
    }
    let t = NormTransform::new(center, radius)?;
    Ok((t.apply(facial)?, t.apply(bony_pre)?, t.apply(bony_post)?, t))
}

/// Bring a normalised displacement field back to millimetres.
pub fn denormalize_displacement(v: &DisplacementField, t: &NormTransform) -> Result<DisplacementField> {
    v.units().expect(Units::Normalized)?;
    DisplacementField::new(
        v.vectors().iter().map(|&d| scale(d, t.scale)).collect(),
        Units::Physical,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64, n: usize, spread: f64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [0; 3].map(|_| rng.gen_range(-spread..spread)))
            .collect()
    }

    fn ps(c: Vec<Vec3>) -> PointSet {
        PointSet::new(c, Units::Physical).unwrap()
    }

    #[test]
    fn identity_case() {
        let facial = ps(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let bony = ps(vec![[0.0, 0.5, 0.0], [0.0, -0.5, 0.0]]);
        let (f, b, _, t) = normalize_pair(&facial, &bony, &bony).unwrap();
        assert_eq!(t.center, [0.0; 3]);
        assert_eq!(t.scale, 1.0);
        assert_eq!(f.coords(), facial.coords());
        assert_eq!(b.coords(), bony.coords());
    }

    #[test]
    fn translation_cancels() {
        let f = cloud(1, 50, 40.0);
        let b = cloud(2, 30, 20.0);
        let shift = |c: &[Vec3]| -> Vec<Vec3> {
            c.iter().map(|p| [p[0] + 10.0, p[1] - 5.0, p[2] + 3.0]).collect()
        };
        let (f0, b0, _, _) = normalize_pair(&ps(f.clone()), &ps(b.clone()), &ps(b.clone())).unwrap();
        let (f1, b1, _, _) = normalize_pair(&ps(shift(&f)), &ps(shift(&b)), &ps(shift(&b))).unwrap();
        for (x, y) in f0.coords().iter().chain(b0.coords()).zip(f1.coords().iter().chain(b1.coords())) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_and_unit_ball() {
        let f = ps(cloud(3, 100, 70.0));
        let b = ps(cloud(4, 80, 50.0));
        let (fn_, bn, _, t) = normalize_pair(&f, &b, &b).unwrap();
        for p in fn_.coords().iter().chain(bn.coords()) {
            assert!(super::super::norm(*p) <= 1.0 + 1e-12);
        }
        let back = t.invert(&fn_).unwrap();
        for (x, y) in back.coords().iter().zip(f.coords()) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scaling_equivariance() {
        let f = cloud(5, 60, 30.0);
        let b = cloud(6, 40, 20.0);
        let s = 3.7;
        let sc = |c: &[Vec3]| -> Vec<Vec3> { c.iter().map(|p| scale(*p, s)).collect() };
        let (f0, _, _, t0) = normalize_pair(&ps(f.clone()), &ps(b.clone()), &ps(b.clone())).unwrap();
        let (f1, _, _, t1) = normalize_pair(&ps(sc(&f)), &ps(sc(&b)), &ps(sc(&b))).unwrap();
        assert!((t1.scale / t0.scale - s).abs() < 1e-9);
        for (x, y) in f0.coords().iter().zip(f1.coords()) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_rejected() {
        let p = ps(vec![[2.0, 2.0, 2.0]; 3]);
        assert!(normalize_pair(&p, &p, &p).is_err());
    }

    #[test]
    fn denormalize_scales_and_checks_units() {
        let t = NormTransform::new([1.0, 2.0, 3.0], 50.0).unwrap();
        let v = DisplacementField::new(vec![[0.1, 0.0, 0.0]], Units::Normalized).unwrap();
        let out = denormalize_displacement(&v, &t).unwrap();
        assert_eq!(out.vectors()[0], [5.0, 0.0, 0.0]);
        assert_eq!(out.units(), Units::Physical);
        assert!(denormalize_displacement(&out, &t).is_err());
        let z = DisplacementField::zeros(4, Units::Normalized);
        assert!(denormalize_displacement(&z, &t)
            .unwrap()
            .vectors()
            .iter()
            .all(|v| *v == [0.0; 3]));
    }
}
