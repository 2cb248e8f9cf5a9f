//! On-disk dataset: one directory per case plus `manifest.json`.
//!
//! ```text
//! <root>/manifest.json
//! <root>/case_000/bone.ply        pre-operative bone mesh
//! <root>/case_000/skin.ply        pre-operative skin mesh
//! <root>/case_000/skin_post.ply   ground-truth post-operative skin
//! <root>/case_000/labels.csv      vertex,segment,region
//! <root>/case_000/transforms.json segment rigid motions
//! <root>/case_000/samples.csv     surface,x,y,z,dx,dy,dz
//! ```
//!
//! Bone and skin share one topology, so `labels.csv` holds the bone segment
//! and the skin region of each vertex index.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_case, sample_case, GenParams, RigidTransform, SyntheticCase};
use crate::error::{invalid, Error, Result};
use crate::files::{ensure_dir, read_csv, read_json, write_csv, write_json};
use crate::geometry::io::{read_ply, write_ply};
use crate::geometry::{TriMesh, Vec3};

pub const MANIFEST: &str = "manifest.json";
pub const TRANSFORM_CONVENTION: &str = "p' = rotation * (p - pivot) + pivot + translation";

/// Sampled points of one case in mm, in farthest-point order.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSamples {
    pub skin: Vec<Vec3>,
    pub skin_disp: Vec<Vec3>,
    pub bone: Vec<Vec3>,
    pub bone_disp: Vec<Vec3>,
}

impl CaseSamples {
    /// The first `n` points of each surface.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.skin.len() || n > self.bone.len() {
            return Err(invalid(format!(
                "asked for {n} points but the case stores {} skin and {} bone samples",
                self.skin.len(),
                self.bone.len()
            )));
        }
        Ok(Self {
            skin: self.skin[..n].to_vec(),
            skin_disp: self.skin_disp[..n].to_vec(),
            bone: self.bone[..n].to_vec(),
            bone_disp: self.bone_disp[..n].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub master_seed: u64,
    pub samples_per_surface: usize,
    pub params: GenParams,
    pub cases: Vec<CaseEntry>,
    /// Case names of each fold.
    pub folds: Vec<Vec<String>>,
}

impl Manifest {
    pub fn load(root: &Path) -> Result<Self> {
        let m: Manifest = read_json(&root.join(MANIFEST))?;
        m.validate(root)?;
        Ok(m)
    }

    fn validate(&self, root: &Path) -> Result<()> {
        let mut seen: Vec<&String> = self.folds.iter().flatten().collect();
        seen.sort();
        let mut all: Vec<&String> = self.cases.iter().map(|c| &c.name).collect();
        all.sort();
        if seen != all {
            return Err(Error::format(root.join(MANIFEST), "folds must partition the case list"));
        }
        Ok(())
    }

    pub fn case_dir(&self, root: &Path, name: &str) -> PathBuf {
        root.join(name)
    }

    /// (train, test) case names when `fold` is held out.
    pub fn split(&self, fold: usize) -> Result<(Vec<String>, Vec<String>)> {
        if fold >= self.folds.len() {
            return Err(invalid(format!("fold {fold} out of range ({} folds)", self.folds.len())));
        }
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, names)| names.iter().cloned())
            .collect();
        Ok((train, self.folds[fold].clone()))
    }
}

/// Per-case seeds and a shuffled partition into `folds` folds of near-equal size.
pub fn plan_folds(n_cases: usize, folds: usize, master_seed: u64) -> Result<(Vec<CaseEntry>, Vec<Vec<String>>)> {
    if folds == 0 || n_cases < folds {
        return Err(invalid(format!("need at least as many cases ({n_cases}) as folds ({folds}), folds >= 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let cases: Vec<CaseEntry> = (0..n_cases)
        .map(|i| CaseEntry {
            name: format!("case_{i:03}"),
            seed: rng.gen(),
        })
        .collect();
    let mut order: Vec<usize> = (0..n_cases).collect();
    order.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (k, &i) in order.iter().enumerate() {
        out[k * folds / n_cases].push(cases[i].name.clone());
    }
    for f in &mut out {
        f.sort();
    }
    Ok((cases, out))
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    vertex: usize,
    segment: usize,
    region: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleRow {
    surface: String,
    x: f64,
    y: f64,
    z: f64,
    dx: f64,
    dy: f64,
    dz: f64,
}

#[derive(Serialize, Deserialize)]
struct SegmentMotion {
    id: usize,
    rotation: [[f64; 3]; 3],
    translation: Vec3,
    pivot: Vec3,
    angle_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct TransformsFile {
    convention: String,
    bandwidth_mm: f64,
    segments: Vec<SegmentMotion>,
}

/// Write one generated case with `n_samples` points per surface.
pub fn write_case(dir: &Path, case: &SyntheticCase, n_samples: usize, sample_seed: u64) -> Result<()> {
    ensure_dir(dir)?;
    write_ply(&dir.join("bone.ply"), &case.bone, None)?;
    write_ply(&dir.join("skin.ply"), &case.skin, None)?;
    write_ply(&dir.join("skin_post.ply"), &case.skin_post, None)?;
    let labels: Vec<LabelRow> = case
        .segment_labels
        .iter()
        .zip(&case.region_labels)
        .enumerate()
        .map(|(vertex, (&segment, &region))| LabelRow { vertex, segment, region })
        .collect();
    write_csv(&dir.join("labels.csv"), &labels)?;
    let transforms = TransformsFile {
        convention: TRANSFORM_CONVENTION.into(),
        bandwidth_mm: case.params.bandwidth,
        segments: case
            .transforms
            .iter()
            .enumerate()
            .map(|(id, t)| SegmentMotion {
                id,
                rotation: t.rotation,
                translation: t.translation,
                pivot: t.pivot,
                angle_deg: t.angle_deg(),
            })
            .collect(),
    };
    write_json(&dir.join("transforms.json"), &transforms)?;
    let s = sample_case(case, n_samples, sample_seed)?;
    let row = |surface: &str, p: &Vec3, d: &Vec3| SampleRow {
        surface: surface.into(),
        x: p[0],
        y: p[1],
        z: p[2],
        dx: d[0],
        dy: d[1],
        dz: d[2],
    };
    let rows: Vec<SampleRow> = s
        .skin
        .iter()
        .zip(&s.skin_disp)
        .map(|(p, d)| row("skin", p, d))
        .chain(s.bone.iter().zip(&s.bone_disp).map(|(p, d)| row("bone", p, d)))
        .collect();
    write_csv(&dir.join("samples.csv"), &rows)
}

pub fn load_case_samples(dir: &Path) -> Result<CaseSamples> {
    let path = dir.join("samples.csv");
    let rows: Vec<SampleRow> = read_csv(&path)?;
    let mut s = CaseSamples {
        skin: vec![],
        skin_disp: vec![],
        bone: vec![],
        bone_disp: vec![],
    };
    for (i, r) in rows.iter().enumerate() {
        let (p, d) = ([r.x, r.y, r.z], [r.dx, r.dy, r.dz]);
        if !p.iter().chain(&d).all(|v| v.is_finite()) {
            return Err(Error::format(&path, format!("row {}: non-finite value", i + 2)));
        }
        match r.surface.as_str() {
            "skin" => {
                s.skin.push(p);
                s.skin_disp.push(d);
            }
            "bone" => {
                s.bone.push(p);
                s.bone_disp.push(d);
            }
            other => return Err(Error::format(&path, format!("row {}: unknown surface `{other}`", i + 2))),
        }
    }
    if s.skin.is_empty() || s.bone.is_empty() {
        return Err(Error::format(&path, "needs both skin and bone samples"));
    }
    Ok(s)
}

/// Segment and region label per vertex.
pub fn load_labels(dir: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let path = dir.join("labels.csv");
    let rows: Vec<LabelRow> = read_csv(&path)?;
    if rows.iter().enumerate().any(|(i, r)| r.vertex != i) {
        return Err(Error::format(&path, "vertex column must count up from 0"));
    }
    Ok(rows.iter().map(|r| (r.segment, r.region)).unzip())
}

pub fn load_transforms(dir: &Path) -> Result<Vec<RigidTransform>> {
    let t: TransformsFile = read_json(&dir.join("transforms.json"))?;
    Ok(t.segments
        .into_iter()
        .map(|s| RigidTransform {
            rotation: s.rotation,
            translation: s.translation,
            pivot: s.pivot,
        })
        .collect())
}

/// The meshes of a stored case: (pre skin, ground-truth post skin).
pub fn load_skin_pair(dir: &Path) -> Result<(TriMesh, TriMesh)> {
    let pre = read_ply(&dir.join("skin.ply"))?;
    let post = read_ply(&dir.join("skin_post.ply"))?;
    if pre.faces() != post.faces() {
        return Err(Error::format(dir.join("skin_post.ply"), "face list differs from skin.ply"));
    }
    Ok((pre, post))
}

/// Generate `n_cases` cases into `root` and write the manifest. Cases are
/// produced in parallel when the `parallel` feature is on; output bytes do
/// not depend on the worker count.
pub fn build_dataset(
    root: &Path,
    n_cases: usize,
    folds: usize,
    params: &GenParams,
    n_samples: usize,
    master_seed: u64,
) -> Result<Manifest> {
    params.validate()?;
    if n_samples == 0 {
        return Err(invalid("samples per surface must be positive"));
    }
    let (cases, fold_lists) = plan_folds(n_cases, folds, master_seed)?;
    ensure_dir(root)?;
    let results = crate::par_map(&cases, |c| {
        let case = generate_case(&GenParams {
            seed: c.seed,
            ..params.clone()
        })?;
        write_case(&root.join(&c.name), &case, n_samples, c.seed ^ 0xa5a5_a5a5)
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    let manifest = Manifest {
        master_seed,
        samples_per_surface: n_samples,
        params: GenParams {
            seed: master_seed,
            ..params.clone()
        },
        cases,
        folds: fold_lists,
    };
    write_json(&root.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_cases() {
        let (cases, folds) = plan_folds(40, 5, 7).unwrap();
        assert_eq!(cases.len(), 40);
        assert!(folds.iter().all(|f| f.len() == 8));
        let mut all: Vec<_> = folds.concat();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 40);
        assert_eq!(plan_folds(40, 5, 7).unwrap().1, folds);
        assert_ne!(plan_folds(40, 5, 8).unwrap().1, folds);
        assert!(plan_folds(3, 5, 0).is_err());
    }

    #[test]
    fn case_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params = GenParams {
            subdivisions: 2,
            ..GenParams::default()
        };
        let m = build_dataset(dir.path(), 3, 3, &params, 48, 11).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
        let d = m.case_dir(dir.path(), &m.cases[1].name);
        let case = generate_case(&GenParams {
            seed: m.cases[1].seed,
            ..params
        })
        .unwrap();
        let s = load_case_samples(&d).unwrap();
        assert_eq!(s.skin.len(), 48);
        assert_eq!(s, sample_case(&case, 48, m.cases[1].seed ^ 0xa5a5_a5a5).unwrap());
        let (seg, reg) = load_labels(&d).unwrap();
        assert_eq!(seg, case.segment_labels);
        assert_eq!(reg, case.region_labels);
        assert_eq!(load_transforms(&d).unwrap(), case.transforms);
        let (pre, post) = load_skin_pair(&d).unwrap();
        assert_eq!(post.vertices(), case.skin_post.vertices());
        assert_eq!(pre.faces(), case.skin.faces());
        let (train, test) = m.split(0).unwrap();
        assert_eq!(train.len() + test.len(), 3);
        assert_eq!(s.prefix(10).unwrap().bone.len(), 10);
    }
}
