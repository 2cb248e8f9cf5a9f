//! Slow, direct reference implementations used to cross-check the library.
#![allow(dead_code)]

use corrnet::diff::{Tape, Tensor};
use corrnet::geometry::Vec3;
use corrnet::network::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cloud(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Vec3> {
    (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-half..half))).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn d2(a: Vec3, b: Vec3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn d(a: Vec3, b: Vec3) -> f64 {
    d2(a, b).sqrt()
}

/// All point indices ordered by (distance to `q`, index).
fn ranked(points: &[Vec3], q: Vec3) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, &p)| (d2(p, q), i)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all
}

/// FPS recomputing every point's distance to the whole selected set each round.
pub fn fps(points: &[Vec3], k: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < k {
        let mut best = None;
        let mut best_d = -1.0;
        for i in 0..points.len() {
            if chosen.contains(&i) {
                continue;
            }
            let m = chosen.iter().map(|&c| d2(points[i], points[c])).fold(f64::INFINITY, f64::min);
            if m > best_d {
                best_d = m;
                best = Some(i);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen
}

pub fn ball_query(centers: &[Vec3], points: &[Vec3], radius: f64, max_n: usize) -> Vec<Vec<usize>> {
    centers
        .iter()
        .map(|&c| {
            let r = ranked(points, c);
            let inside: Vec<usize> = r.iter().filter(|e| e.0 <= radius * radius).map(|e| e.1).take(max_n).collect();
            if inside.is_empty() {
                vec![r[0].1]
            } else {
                inside
            }
        })
        .collect()
}

pub fn knn(points: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| ranked(points, p).into_iter().map(|e| e.1).filter(|&j| j != i).take(k).collect())
        .collect()
}

pub fn nearest(points: &[Vec3], q: Vec3) -> usize {
    ranked(points, q)[0].1
}

pub fn closest_point_matrix(facial: &[Vec3], bony: &[Vec3]) -> Vec<Vec<f64>> {
    facial
        .iter()
        .map(|&f| {
            let j = nearest(bony, f);
            (0..bony.len()).map(|c| if c == j { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    let one = |x: &[Vec3], y: &[Vec3]| {
        x.iter().map(|&p| y.iter().map(|&q| d2(p, q)).fold(f64::INFINITY, f64::min)).sum::<f64>() / x.len() as f64
    };
    one(a, b) + one(b, a)
}

fn spacing(points: &[Vec3], k: usize) -> Vec<f64> {
    knn(points, k)
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().map(|&j| d(points[i], points[j])).sum::<f64>() / k as f64)
        .collect()
}

pub fn density(pred: &[Vec3], target: &[Vec3], k: usize) -> f64 {
    let sp = spacing(pred, k);
    let st = spacing(target, k);
    pred.iter()
        .enumerate()
        .map(|(i, &p)| (sp[i] - st[nearest(target, p)]).abs())
        .sum::<f64>()
        / pred.len() as f64
}

/// Neighbours are taken on `pre`.
pub fn lpt(pre: &[Vec3], pred_disp: &[Vec3], target_disp: &[Vec3], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, nb) in knn(pre, k).iter().enumerate() {
        for &j in nb {
            for c in 0..3 {
                let rp = pred_disp[i][c] - pred_disp[j][c];
                let rt = target_disp[i][c] - target_disp[j][c];
                total += (rp - rt).powi(2);
            }
        }
    }
    total / (pre.len() * k) as f64
}

fn at(t: &Tensor, r: usize, c: usize) -> f64 {
    t.data()[r * t.cols() + c]
}

/// `x w + b` with explicit loops.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            (0..w.cols())
                .map(|o| b.data()[o] + (0..x.cols()).map(|c| at(x, i, c) * at(w, c, o)).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Unnormalised affinity between two feature sets under the theta/phi embeddings.
pub fn affinity(params: &ModelParams, ff: &Tensor, fb: &Tensor) -> Vec<Vec<f64>> {
    let g = |n: &str| params.get(n).unwrap();
    let ef = linear(ff, g("theta.w"), g("theta.b"));
    let eb = linear(fb, g("phi.w"), g("phi.b"));
    ef.iter()
        .map(|a| eb.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
        .collect()
}

pub fn transform(f: &[Vec<f64>], x: &Tensor) -> Vec<Vec<f64>> {
    let n2 = x.rows();
    f.iter()
        .map(|row| {
            (0..x.cols())
                .map(|c| (0..n2).map(|j| row[j] * at(x, j, c)).sum::<f64>() / n2 as f64)
                .collect()
        })
        .collect()
}

/// Gaussian kernel average without any stabilisation.
pub fn kernel_transfer(bone: &[Vec3], disp: &[Vec3], skin: &[Vec3], h: f64) -> Vec<Vec3> {
    skin.iter()
        .map(|&x| {
            let w: Vec<f64> = bone.iter().map(|&b| (-d2(x, b) / (h * h)).exp()).collect();
            let total: f64 = w.iter().sum();
            [0, 1, 2].map(|c| w.iter().zip(disp).map(|(wi, v)| wi * v[c]).sum::<f64>() / total)
        })
        .collect()
}

fn seg_dist(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab.iter().map(|v| v * v).sum::<f64>();
    let t = if len2 > 0.0 {
        (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    d(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

/// Distance to a triangle: project onto the plane, test the barycentric
/// coordinates, and fall back to the three edges.
pub fn point_triangle_distance(p: Vec3, [a, b, c]: [Vec3; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let dt = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let (uu, uv, vv, wu, wv) = (dt(u, u), dt(u, v), dt(v, v), dt(w, u), dt(w, v));
    let den = uu * vv - uv * uv;
    let edges = seg_dist(p, a, b).min(seg_dist(p, b, c)).min(seg_dist(p, c, a));
    if den <= 1e-300 {
        return edges;
    }
    let s = (vv * wu - uv * wv) / den;
    let t = (uu * wv - uv * wu) / den;
    if s >= 0.0 && t >= 0.0 && s + t <= 1.0 {
        let q = [a[0] + s * u[0] + t * v[0], a[1] + s * u[1] + t * v[1], a[2] + s * u[2] + t * v[2]];
        d(p, q)
    } else {
        edges
    }
}

pub fn max_abs_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Run `affinity` through the library on a fresh tape.
pub fn lib_affinity(params: &ModelParams, ff: &Tensor, fb: &Tensor) -> (Tensor, Tensor) {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let a = tape.constant(ff.clone());
    let b = tape.constant(fb.clone());
    let (f, r) = corrnet::network::cpsa_correlation(&mut tape, a, b, &pv).unwrap();
    (tape.value(f).clone(), tape.value(r).clone())
}

pub fn lib_transform(f: &Tensor, x: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let a = tape.constant(f.clone());
    let b = tape.constant(x.clone());
    let out = corrnet::network::transform_movement(&mut tape, a, b).unwrap();
    tape.value(out).clone()
}

pub fn embedding_params(rng: &mut ChaCha8Rng, c: usize, e: usize) -> ModelParams {
    ModelParams::from_entries(vec![
        ("theta.w".into(), random_matrix(rng, c, e)),
        ("theta.b".into(), Tensor::new(vec![e], (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()),
        ("phi.w".into(), random_matrix(rng, c, e)),
        ("phi.b".into(), Tensor::new(vec![e], (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()),
    ])
}

/// Oracle comparisons on random instances of up to 128 points.
pub mod suite {
    use super::*;
    use corrnet::geometry::{self, TriMesh};
    use corrnet::losses;
    use corrnet::synth::{icosphere, kernel_transfer_oracle};
    use corrnet::trainer::evaluate;

    /// Equivalence tolerance for floating-point results.
    pub const TOL: f64 = 1e-9;

    pub struct Outcome {
        pub name: &'static str,
        pub instances: usize,
        /// Largest deviation; exact checks report 0 or infinity.
        pub max_err: f64,
    }

    impl Outcome {
        pub fn passed(&self) -> bool {
            self.max_err <= TOL
        }
    }

    fn size(r: &mut ChaCha8Rng) -> usize {
        r.gen_range(8..=128)
    }

    fn exact(ok: bool) -> f64 {
        if ok {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn fps(seed: u64) -> f64 {
        let mut r = rng(seed);
        let n = size(&mut r);
        let pts = cloud(&mut r, n, 1.0);
        let k = r.gen_range(1..=n);
        let start = r.gen_range(0..n);
        exact(geometry::farthest_point_sample(&pts, k, start).unwrap() == super::fps(&pts, k, start))
    }

    pub fn ball_query(seed: u64) -> f64 {
        let mut r = rng(seed);
        let n = size(&mut r);
        let pts = cloud(&mut r, n, 1.0);
        let nc = r.gen_range(1..=32);
        let centers = cloud(&mut r, nc, 1.0);
        let radius = r.gen_range(0.05..1.0);
        let max_n = r.gen_range(1..=32);
        exact(geometry::ball_query(&centers, &pts, radius, max_n).unwrap() == super::ball_query(&centers, &pts, radius, max_n))
    }

    pub fn closest_point(seed: u64) -> f64 {
        let mut r = rng(seed);
        let n_facial = size(&mut r);
        let facial = cloud(&mut r, n_facial, 1.0);
        let n_bony = size(&mut r);
        let bony = cloud(&mut r, n_bony, 0.6);
        let lib = geometry::closest_point_matrix(&facial, &bony);
        let reference: Vec<f64> = super::closest_point_matrix(&facial, &bony).concat();
        exact(lib == reference)
    }

    fn loss_pair(seed: u64) -> (Vec<Vec3>, Vec<Vec3>, Vec<Vec3>) {
        let mut r = rng(seed);
        let n = r.gen_range(16..=128);
        let pre = cloud(&mut r, n, 1.0);
        let pred_disp = cloud(&mut r, n, 0.1);
        let target_disp = cloud(&mut r, n, 0.1);
        (pre, pred_disp, target_disp)
    }

    fn shifted(pre: &[Vec3], disp: &[Vec3]) -> Vec<Vec3> {
        pre.iter().zip(disp).map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]]).collect()
    }

    pub fn chamfer(seed: u64) -> f64 {
        let mut r = rng(seed);
        let n_a = size(&mut r);
        let a = cloud(&mut r, n_a, 1.0);
        let n_b = size(&mut r);
        let b = cloud(&mut r, n_b, 1.0);
        (losses::shape_loss(&a, &b).unwrap() - super::chamfer(&a, &b)).abs()
    }

    pub fn density(seed: u64) -> f64 {
        let (pre, pd, td) = loss_pair(seed);
        let (pred, target) = (shifted(&pre, &pd), shifted(&pre, &td));
        let k = losses::DENSITY_K;
        (losses::density_loss(&pred, &target, k).unwrap() - super::density(&pred, &target, k)).abs()
    }

    pub fn lpt(seed: u64) -> f64 {
        let (pre, pd, td) = loss_pair(seed);
        let k = losses::LPT_K;
        let nb: Vec<usize> = super::knn(&pre, k).concat();
        (losses::lpt_loss(&pd, &td, &nb, k).unwrap() - super::lpt(&pre, &pd, &td, k)).abs()
    }

    /// The assembled objective against the three references.
    pub fn hybrid(seed: u64) -> f64 {
        let (pre, pd, td) = loss_pair(seed);
        let w = losses::LossWeights::default();
        let t = losses::hybrid_loss(&pre, &pd, &td, w).unwrap();
        let (pred, target) = (shifted(&pre, &pd), shifted(&pre, &td));
        let expect = super::chamfer(&pred, &target)
            + w.alpha * super::density(&pred, &target, losses::DENSITY_K)
            + w.beta * super::lpt(&pre, &pd, &td, losses::LPT_K);
        (t.total - expect).abs()
    }

    pub fn correlation(seed: u64) -> f64 {
        let mut r = rng(seed);
        let (n1, n2) = (size(&mut r), size(&mut r));
        let (c, e) = (r.gen_range(1..=16), r.gen_range(1..=16));
        let params = embedding_params(&mut r, c, e);
        let ff = random_matrix(&mut r, n1, c);
        let fb = random_matrix(&mut r, n2, c);
        let (f, rn) = lib_affinity(&params, &ff, &fb);
        let reference = affinity(&params, &ff, &fb);
        let ef = max_abs_diff(f.data().iter().copied(), reference.iter().flatten().copied());
        let er = max_abs_diff(rn.data().iter().copied(), reference.iter().flatten().map(|v| v / n2 as f64));
        ef.max(er)
    }

    pub fn transform(seed: u64) -> f64 {
        let mut r = rng(seed);
        let (n1, n2, d) = (size(&mut r), size(&mut r), r.gen_range(1..=16));
        let f = random_matrix(&mut r, n1, n2);
        let x = random_matrix(&mut r, n2, d);
        let rows: Vec<Vec<f64>> = f.data().chunks(n2).map(<[f64]>::to_vec).collect();
        max_abs_diff(lib_transform(&f, &x).data().iter().copied(), super::transform(&rows, &x).into_iter().flatten())
    }

    pub fn kernel(seed: u64) -> f64 {
        let mut r = rng(seed);
        let n_bone = size(&mut r);
        let bone = cloud(&mut r, n_bone, 50.0);
        let disp = cloud(&mut r, bone.len(), 5.0);
        let n_skin = size(&mut r);
        let skin = cloud(&mut r, n_skin, 60.0);
        let h = r.gen_range(10.0..30.0);
        let lib = kernel_transfer_oracle(&bone, &disp, &skin, h).unwrap();
        let reference = super::kernel_transfer(&bone, &disp, &skin, h);
        max_abs_diff(lib.iter().flatten().copied(), reference.iter().flatten().copied())
    }

    fn jittered_sphere(r: &mut ChaCha8Rng, subdivisions: u32) -> TriMesh {
        let (v, f) = icosphere(subdivisions);
        let v = v.into_iter().map(|p| p.map(|x| x * r.gen_range(0.8..1.2))).collect();
        TriMesh::new(v, f).unwrap()
    }

    /// Per-vertex distances and the area-weighted surface deviation.
    pub fn surface_distance(seed: u64) -> f64 {
        let mut r = rng(seed);
        let gt = jittered_sphere(&mut r, 1);
        let sub = r.gen_range(0..=1);
        let pred = jittered_sphere(&mut r, sub);
        let regions: Vec<usize> = (0..pred.vertices().len()).map(|_| r.gen_range(0..6)).collect();
        let m = evaluate("x", &pred, &gt, &regions).unwrap();
        let tris: Vec<[Vec3; 3]> = (0..gt.faces().len()).map(|f| gt.triangle(f)).collect();
        let dist: Vec<f64> = pred
            .vertices()
            .iter()
            .map(|&p| tris.iter().map(|&t| point_triangle_distance(p, t)).fold(f64::INFINITY, f64::min))
            .collect();
        let mut area = vec![0.0; pred.vertices().len()];
        for f in pred.faces() {
            let [a, b, c] = f.map(|i| pred.vertices()[i]);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let fa = 0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            for &i in f {
                area[i] += fa / 3.0;
            }
        }
        let entire = dist.iter().zip(&area).map(|(d, a)| d * a).sum::<f64>() / area.iter().sum::<f64>();
        max_abs_diff(m.vertex_errors.iter().copied(), dist.iter().copied()).max((m.entire - entire).abs())
    }

    pub fn idw(seed: u64) -> f64 {
        let mut r = rng(seed);
        let n_src = size(&mut r);
        let src = cloud(&mut r, n_src, 1.0);
        let vals: Vec<f64> = (0..src.len() * 2).map(|_| r.gen_range(-1.0..1.0)).collect();
        let n_dst = size(&mut r);
        let dst = cloud(&mut r, n_dst, 1.0);
        let k = r.gen_range(1..=4.min(src.len()));
        let lib = geometry::idw_interpolate(&src, &vals, 2, &dst, k).unwrap();
        let reference: Vec<f64> = dst
            .iter()
            .flat_map(|&q| {
                let nb: Vec<usize> = ranked(&src, q).into_iter().take(k).map(|e| e.1).collect();
                let w: Vec<f64> = nb.iter().map(|&j| 1.0 / d(q, src[j]).max(1e-8).powi(2)).collect();
                let t: f64 = w.iter().sum();
                (0..2)
                    .map(|c| nb.iter().zip(&w).map(|(&j, wj)| wj * vals[j * 2 + c]).sum::<f64>() / t)
                    .collect::<Vec<_>>()
            })
            .collect();
        max_abs_diff(lib, reference)
    }

    pub type Check = (&'static str, fn(u64) -> f64);

    pub const CHECKS: [Check; 13] = [
        ("fps", fps),
        ("ball_query", ball_query),
        ("closest_point_matrix", closest_point),
        ("chamfer", chamfer),
        ("density", density),
        ("lpt", lpt),
        ("hybrid", hybrid),
        ("cpsa_correlation", correlation),
        ("transform_movement", transform),
        ("kernel_transfer_oracle", kernel),
        ("point_to_triangle", surface_distance),
        ("idw_interpolate", idw),
        ("knn_spacing", knn_spacing),
    ];

    pub fn knn_spacing(seed: u64) -> f64 {
        let mut r = rng(seed);
        let n_pts = size(&mut r);
        let pts = cloud(&mut r, n_pts, 1.0);
        let k = r.gen_range(1..=7);
        let lib = geometry::knn(&pts, &pts, k, true).unwrap();
        exact(lib == super::knn(&pts, k).concat())
    }

    pub fn run(name: &'static str, f: fn(u64) -> f64, instances: usize) -> Outcome {
        let max_err = (0..instances as u64).map(|s| f(s * 7919 + 13)).fold(0.0, f64::max);
        Outcome { name, instances, max_err }
    }
}
