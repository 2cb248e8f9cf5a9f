use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{invalid, Error, Result};

/// Unit system a coordinate or displacement array is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    /// Centred and scaled into the unit ball.
    Normalized,
    /// Millimetres.
    Physical,
}

impl Units {
    pub fn name(self) -> &'static str {
        match self {
            Units::Normalized => "normalized",
            Units::Physical => "physical",
        }
    }

    pub(crate) fn expect(self, expected: Units) -> Result<()> {
        if self == expected {
            Ok(())
        } else {
            Err(Error::UnitMismatch {
                expected: expected.name(),
                found: self.name(),
            })
        }
    }
}

/// N x 3 coordinates with optional N x C per-point features.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<Vec3>,
    features: Option<Features>,
    units: Units,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub channels: usize,
    pub values: Vec<f64>,
}

fn check_finite(coords: &[Vec3], what: &str) -> Result<()> {
    if let Some(i) = coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("{what} row {i}")));
    }
    Ok(())
}

impl PointSet {
    pub fn new(coords: Vec<Vec3>, units: Units) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("point set must hold at least one point"));
        }
        check_finite(&coords, "point")?;
        Ok(Self {
            coords,
            features: None,
            units,
        })
    }

    pub fn with_features(mut self, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * self.coords.len() {
            return Err(invalid(format!(
                "feature array has {} values, expected {} x {}",
                values.len(),
                self.coords.len(),
                channels
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point feature".into()));
        }
        self.features = Some(Features { channels, values });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn into_coords(self) -> Vec<Vec3> {
        self.coords
    }

    /// Sub-select points (and features) by index.
    pub fn select(&self, idx: &[usize]) -> PointSet {
        let coords = idx.iter().map(|&i| self.coords[i]).collect();
        let features = self.features.as_ref().map(|f| Features {
            channels: f.channels,
            values: idx
                .iter()
                .flat_map(|&i| f.values[i * f.channels..(i + 1) * f.channels].iter().copied())
                .collect(),
        });
        PointSet {
            coords,
            features,
            units: self.units,
        }
    }
}

/// Per-point displacement vectors attached to a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    vectors: Vec<Vec3>,
    units: Units,
}

impl DisplacementField {
    pub fn new(vectors: Vec<Vec3>, units: Units) -> Result<Self> {
        check_finite(&vectors, "displacement")?;
        Ok(Self { vectors, units })
    }

    pub fn zeros(n: usize, units: Units) -> Self {
        Self {
            vectors: vec![[0.0; 3]; n],
            units,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn into_vectors(self) -> Vec<Vec3> {
        self.vectors
    }

    pub fn select(&self, idx: &[usize]) -> DisplacementField {
        DisplacementField {
            vectors: idx.iter().map(|&i| self.vectors[i]).collect(),
            units: self.units,
        }
    }

    /// Check that this field can be attached to `ps`.
    pub fn check_attached(&self, ps: &PointSet) -> Result<()> {
        if self.len() != ps.len() {
            return Err(invalid(format!(
                "displacement field has {} vectors for {} points",
                self.len(),
                ps.len()
            )));
        }
        self.units.expect(ps.units())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(PointSet::new(vec![], Units::Physical).is_err());
        assert!(PointSet::new(vec![[0.0, f64::NAN, 0.0]], Units::Physical).is_err());
        assert!(DisplacementField::new(vec![[f64::INFINITY, 0.0, 0.0]], Units::Physical).is_err());
    }

    #[test]
    fn feature_length_checked() {
        let ps = PointSet::new(vec![[0.0; 3]; 2], Units::Normalized).unwrap();
        assert!(ps.clone().with_features(2, vec![0.0; 3]).is_err());
        let ps = ps.with_features(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let sel = ps.select(&[1]);
        assert_eq!(sel.features().unwrap().values, vec![3.0, 4.0]);
    }

    #[test]
    fn attachment_checks_units_and_length() {
        let ps = PointSet::new(vec![[0.0; 3]; 2], Units::Normalized).unwrap();
        let ok = DisplacementField::zeros(2, Units::Normalized);
        assert!(ok.check_attached(&ps).is_ok());
        let wrong_units = DisplacementField::zeros(2, Units::Physical);
        assert!(matches!(
            wrong_units.check_attached(&ps),
            Err(Error::UnitMismatch { .. })
        ));
        assert!(DisplacementField::zeros(3, Units::Normalized)
            .check_attached(&ps)
            .is_err());
    }
}
