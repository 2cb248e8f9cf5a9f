//! Cross point-set attention: affinity between facial and bony features and
//! the transfer of bony movement features through it.

use super::params::ParamVars;
use crate::diff::{Tape, Var};
use crate::error::Result;

/// Affinity `f = theta(F_F) phi(F_B)^T` (N1 x N2) and its normalised form `R = f / N2`.
pub fn cpsa_correlation(tape: &mut Tape, facial_feat: Var, bony_feat: Var, params: &ParamVars) -> Result<(Var, Var)> {
    let (tw, tb) = params.layer("theta")?;
    let (pw, pb) = params.layer("phi")?;
    let ef = tape.linear(facial_feat, tw, tb)?;
    let eb = tape.linear(bony_feat, pw, pb)?;
    let f = tape.matmul(ef, eb, true)?;
    let n2 = tape.value(bony_feat).rows() as f64;
    let r = tape.affine(f, 1.0 / n2, 0.0);
    Ok((f, r))
}

/// Per-point movement features `g([P_B, V_B])`, N2 x D.
pub fn movement_features(tape: &mut Tape, bony_pts: Var, bony_disp: Var, params: &ParamVars) -> Result<Var> {
    let x = tape.concat(&[bony_pts, bony_disp])?;
    let (w, b) = params.layer("g")?;
    tape.linear(x, w, b)
}

/// Facial movement features: row `i` is `(1/N2) sum_j f(i, j) F_VB(j)`.
pub fn transform_movement(tape: &mut Tape, affinity: Var, bony_move_feat: Var) -> Result<Var> {
    let n2 = tape.value(bony_move_feat).rows() as f64;
    let r = tape.affine(affinity, 1.0 / n2, 0.0);
    tape.matmul(r, bony_move_feat, false)
}

/// Reduce facial movement features to 3 channels bounded in (-1, 1) via `2 sigmoid(x) - 1`.
pub fn predict_movement(tape: &mut Tape, facial_move_feat: Var, params: &ParamVars) -> Result<Var> {
    let (w, b) = params.layer("head")?;
    let z = tape.linear(facial_move_feat, w, b)?;
    let s = tape.sigmoid(z);
    Ok(tape.affine(s, 2.0, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use crate::network::ModelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eye(n: usize) -> Tensor {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0;
        }
        Tensor::matrix(n, n, d)
    }

    fn zeros_vec(n: usize) -> Tensor {
        Tensor::zeros(&[n])
    }

    fn identity_embeddings(c: usize) -> ModelParams {
        ModelParams::from_entries(vec![
            ("theta.w".into(), eye(c)),
            ("theta.b".into(), zeros_vec(c)),
            ("phi.w".into(), eye(c)),
            ("phi.b".into(), zeros_vec(c)),
        ])
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn one_hot_features_give_scaled_identity() {
        let n = 5;
        let p = identity_embeddings(n);
        let mut tape = Tape::new();
        let pv = p.register(&mut tape);
        let ff = tape.constant(eye(n));
        let fb = tape.constant(eye(n));
        let (f, r) = cpsa_correlation(&mut tape, ff, fb, &pv).unwrap();
        let (f, r) = (tape.value(f), tape.value(r));
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_eq!(f.at(i, j), e);
                assert!((r.at(i, j) - e / n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_facial_features_give_zero_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = identity_embeddings(4);
        let mut tape = Tape::new();
        let pv = p.register(&mut tape);
        let ff = tape.constant(Tensor::zeros(&[3, 4]));
        let fb = tape.constant(random(&mut rng, 6, 4));
        let (_, r) = cpsa_correlation(&mut tape, ff, fb, &pv).unwrap();
        assert!(tape.value(r).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn transform_selects_and_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n1, n2, d) = (3, 4, 5);
        let fvb = random(&mut rng, n2, d);
        let mut sel = vec![0.0; n1 * n2];
        let picks = [2, 0, 3];
        for (i, &j) in picks.iter().enumerate() {
            sel[i * n2 + j] = n2 as f64;
        }
        let mut tape = Tape::new();
        let f = tape.constant(Tensor::matrix(n1, n2, sel));
        let x = tape.constant(fvb.clone());
        let out = transform_movement(&mut tape, f, x).unwrap();
        for (i, &j) in picks.iter().enumerate() {
            for c in 0..d {
                assert!((tape.value(out).at(i, c) - fvb.at(j, c)).abs() < 1e-12);
            }
        }
        let ones = tape.constant(Tensor::matrix(n1, n2, vec![1.0; n1 * n2]));
        let avg = transform_movement(&mut tape, ones, x).unwrap();
        for c in 0..d {
            let mean = (0..n2).map(|j| fvb.at(j, c)).sum::<f64>() / n2 as f64;
            for i in 0..n1 {
                assert!((tape.value(avg).at(i, c) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn movement_features_select_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = vec![0.0; 6 * 3];
        for c in 0..3 {
            w[(3 + c) * 3 + c] = 1.0;
        }
        let p = ModelParams::from_entries(vec![
            ("g.w".into(), Tensor::matrix(6, 3, w)),
            ("g.b".into(), zeros_vec(3)),
        ]);
        let mut tape = Tape::new();
        let pv = p.register(&mut tape);
        let pts = random(&mut rng, 7, 3);
        let disp = random(&mut rng, 7, 3);
        let (a, b) = (tape.constant(pts), tape.constant(disp.clone()));
        let out = movement_features(&mut tape, a, b, &pv).unwrap();
        assert_eq!(tape.value(out).data(), disp.data());
        let short = tape.constant(random(&mut rng, 6, 3));
        assert!(movement_features(&mut tape, a, short, &pv).is_err());
    }

    #[test]
    fn head_is_centred_and_saturates() {
        let p = ModelParams::from_entries(vec![
            ("head.w".into(), eye(3)),
            ("head.b".into(), zeros_vec(3)),
        ]);
        let mut tape = Tape::new();
        let pv = p.register(&mut tape);
        let x = tape.constant(Tensor::matrix(2, 3, vec![0.0, 0.0, 0.0, 20.0, -20.0, 20.0]));
        let out = predict_movement(&mut tape, x, &pv).unwrap();
        let v = tape.value(out);
        assert_eq!(&v.data()[..3], &[0.0; 3]);
        assert!(v.at(1, 0) > 0.999 && v.at(1, 1) < -0.999);
    }
}
