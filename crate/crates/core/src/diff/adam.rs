use super::Tensor;
use crate::error::{invalid, Error, Result};

/// Moment estimates for Adam, one pair of buffers per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (vec![0.0; p.numel()], vec![0.0; p.numel()]))
            .unzip();
        Self {
            m,
            v,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts the step
/// before any parameter is touched.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(invalid(format!(
            "adam: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.numel() || p.numel() != state.m[i].len() {
            return Err(Error::ShapeMismatch {
                op: "adam",
                shapes: format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            *w -= lr * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tape;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5])];
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[Tensor::zeros(&[1, 3])], &mut s, 1e-3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn unit_gradient_first_step() {
        let mut p = vec![Tensor::matrix(1, 2, vec![0.0, 1.0])];
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[Tensor::matrix(1, 2, vec![1.0, 1.0])], &mut s, 1e-3).unwrap();
        assert!((p[0].data()[0] + 1e-3).abs() < 1e-10);
        assert!((p[0].data()[1] - (1.0 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut p = vec![Tensor::matrix(1, 1, vec![0.0])];
        let mut s = AdamState::new(&p);
        let g = Tensor::raw(vec![1, 1], vec![f64::NAN]);
        assert!(adam_step(&mut p, &[g], &mut s, 1e-3).is_err());
        assert_eq!(s.step, 0);
    }

    #[test]
    fn minimises_quadratic() {
        let mut p = vec![Tensor::matrix(1, 2, vec![1.0, 1.0])];
        let mut s = AdamState::new(&p);
        for _ in 0..200 {
            let mut t = Tape::new();
            let w = t.param(p[0].clone());
            let sq = t.square(w);
            let l = t.sum(sq);
            let mut g = t.backward(l).unwrap();
            adam_step(&mut p, &[g.take(w).unwrap()], &mut s, 0.01).unwrap();
        }
        let d = p[0].data();
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
        assert!(norm < 0.1, "|w| = {norm}");
    }
}
