//! Central finite-difference checks of tape gradients.
//!
//! Error metric: for each input tensor, the largest absolute discrepancy
//! between analytic and numeric partials divided by the largest partial
//! magnitude of that tensor (norm-wise relative error in the max norm),
//! with that magnitude floored at [`GRAD_FLOOR`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const PRIMITIVE_TOL: f64 = 1e-6;
pub const END_TO_END_TOL: f64 = 1e-4;
/// Smallest partial magnitude used as the relative-error denominator. Blocks
/// whose gradient is below it (dead units) sit at the finite-difference
/// round-off floor of about 1e-12 and are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

/// Which entries of an input to probe.
#[derive(Debug, Clone, Copy)]
pub enum Probe {
    All,
    /// At most this many entries, chosen by a seeded RNG.
    Sample(usize, u64),
}

/// Candidate entries in probing order, and how many of them to compare.
fn probe_order(n: usize, probe: Probe, salt: u64) -> (Vec<usize>, usize) {
    match probe {
        Probe::All => ((0..n).collect(), n),
        Probe::Sample(k, seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(salt));
            (rand::seq::index::sample(&mut rng, n, n).into_vec(), k.min(n))
        }
    }
}

/// Outcome of a finite-difference check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// Entries compared.
    pub probed: usize,
    /// Entries passed over because the probe crossed a kink.
    pub skipped: usize,
}

/// Max relative error over all inputs with `requires_grad`.
///
/// `f` rebuilds the scalar function on a fresh tape from the given leaves.
pub fn check_gradient<F>(inputs: &[Tensor], f: F, h: f64, probe: Probe) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    Ok(fd_check(inputs, f, h, probe, false)?.max_rel_err)
}

/// Like [`check_gradient`], but an entry whose `+h` or `-h` evaluation takes
/// a different branch of any relu, abs or max-pool than the base point is
/// replaced by another entry of the same input. Sampled probes keep drawing
/// until the requested count is reached or the input is exhausted.
pub fn check_gradient_smooth<F>(inputs: &[Tensor], f: F, h: f64, probe: Probe) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    fd_check(inputs, f, h, probe, true)
}

fn fd_check<F>(inputs: &[Tensor], f: F, h: f64, probe: Probe, skip_kinks: bool) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<(f64, u64)> {
        let mut t = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| t.leaf(v.clone())).collect();
        let out = f(&mut t, &vars)?;
        Ok((t.value(out).item()?, if skip_kinks { t.branch_signature() } else { 0 }))
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let base_sig = if skip_kinks { tape.branch_signature() } else { 0 };
    let grads = tape.backward(out)?;

    let mut report = FdReport {
        max_rel_err: 0.0,
        probed: 0,
        skipped: 0,
    };
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        if !input.requires_grad {
            continue;
        }
        let zeros = Tensor::zeros(input.shape());
        let analytic = grads.get(vars[i]).unwrap_or(&zeros);
        let (order, want) = probe_order(input.numel(), probe, i as u64);
        let mut max_diff: f64 = 0.0;
        let mut max_mag: f64 = 0.0;
        let mut taken = 0;
        for e in order {
            if taken == want {
                break;
            }
            let x0 = input.data()[e];
            work[i].data_mut()[e] = x0 + h;
            let (fp, sp) = eval(&work)?;
            work[i].data_mut()[e] = x0 - h;
            let (fm, sm) = eval(&work)?;
            work[i].data_mut()[e] = x0;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            taken += 1;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[e];
            max_diff = max_diff.max((a - numeric).abs());
            max_mag = max_mag.max(a.abs()).max(numeric.abs());
        }
        report.probed += taken;
        let rel = max_diff / max_mag.max(GRAD_FLOOR);
        report.max_rel_err = report.max_rel_err.max(rel);
    }
    Ok(report)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries bounded away from zero so kinks (relu, abs) stay out of reach of the probe.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Distinct, well separated entries so max-pool winners are stable under the probe.
fn rand_separated(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let data = idx
        .into_iter()
        .map(|k| k as f64 * 0.1 + rng.gen_range(0.0..0.01) - 0.05 * n as f64)
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `sum(out * W)` for a fixed random `W`, turning any output into a scalar
/// that depends on every element.
fn project(t: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w = rand_tensor(&mut rng, t.value(out).shape());
    let wv = t.constant(w);
    let p = t.mul(out, wv)?;
    Ok(t.sum(p))
}

type Builder = fn(&mut Tape, &[Var]) -> Result<Var>;

struct Case {
    name: &'static str,
    inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    op: Builder,
}

fn g(t: Tensor) -> Tensor {
    t.with_grad()
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            inputs: |r| vec![g(rand_tensor(r, &[4, 3])), g(rand_tensor(r, &[3, 5]))],
            op: |t, v| t.matmul(v[0], v[1], false),
        },
        Case {
            name: "matmul_nt",
            inputs: |r| vec![g(rand_tensor(r, &[4, 3])), g(rand_tensor(r, &[5, 3]))],
            op: |t, v| t.matmul(v[0], v[1], true),
        },
        Case {
            name: "pointwise_linear",
            inputs: |r| {
                vec![
                    g(rand_tensor(r, &[6, 4])),
                    g(rand_tensor(r, &[4, 3])),
                    g(rand_tensor(r, &[3])),
                ]
            },
            op: |t, v| t.linear(v[0], v[1], v[2]),
        },
        Case {
            name: "relu",
            inputs: |r| vec![g(rand_away_from_zero(r, &[5, 4]))],
            op: |t, v| Ok(t.relu(v[0])),
        },
        Case {
            name: "sigmoid",
            inputs: |r| vec![g(rand_tensor(r, &[5, 4]))],
            op: |t, v| Ok(t.sigmoid(v[0])),
        },
        Case {
            name: "affine",
            inputs: |r| vec![g(rand_tensor(r, &[3, 4]))],
            op: |t, v| Ok(t.affine(v[0], 2.0, -1.0)),
        },
        Case {
            name: "max_reduce",
            inputs: |r| vec![g(rand_separated(r, &[12, 3]))],
            op: |t, v| t.max_reduce(v[0], 4),
        },
        Case {
            name: "concat",
            inputs: |r| vec![g(rand_tensor(r, &[4, 2])), g(rand_tensor(r, &[4, 3]))],
            op: |t, v| t.concat(&[v[0], v[1]]),
        },
        Case {
            name: "scale_add",
            inputs: |r| vec![g(rand_tensor(r, &[3, 3])), g(rand_tensor(r, &[3, 3]))],
            op: |t, v| t.scale_add(0.7, v[0], -1.3, v[1]),
        },
        Case {
            name: "mul",
            inputs: |r| vec![g(rand_tensor(r, &[3, 4])), g(rand_tensor(r, &[3, 4]))],
            op: |t, v| t.mul(v[0], v[1]),
        },
        Case {
            name: "gather",
            inputs: |r| vec![g(rand_tensor(r, &[5, 3]))],
            op: |t, v| t.gather(v[0], &[4, 0, 0, 2, 4, 4]),
        },
        Case {
            name: "weighted_gather",
            inputs: |r| vec![g(rand_tensor(r, &[5, 2]))],
            op: |t, v| t.weighted_gather(v[0], &[1, 3, 0, 4, 4, 2], &[0.2, 0.8, 0.5, 0.25, 0.25, 1.0], 2),
        },
        Case {
            name: "square",
            inputs: |r| vec![g(rand_tensor(r, &[4, 3]))],
            op: |t, v| Ok(t.square(v[0])),
        },
        Case {
            name: "abs",
            inputs: |r| vec![g(rand_away_from_zero(r, &[4, 3]))],
            op: |t, v| Ok(t.abs(v[0])),
        },
        Case {
            name: "row_norm",
            inputs: |r| vec![g(rand_away_from_zero(r, &[5, 3]))],
            op: |t, v| t.row_norm(v[0]),
        },
        Case {
            name: "sum",
            inputs: |r| vec![g(rand_tensor(r, &[4, 4]))],
            op: |t, v| Ok(t.sum(v[0])),
        },
        Case {
            name: "mlp3",
            inputs: |r| {
                vec![
                    rand_tensor(r, &[8, 5]),
                    g(rand_tensor(r, &[5, 7])),
                    g(rand_tensor(r, &[7])),
                    g(rand_tensor(r, &[7, 6])),
                    g(rand_tensor(r, &[6])),
                    g(rand_tensor(r, &[6, 2])),
                    g(rand_tensor(r, &[2])),
                ]
            },
            op: |t, v| {
                let h = t.linear(v[0], v[1], v[2])?;
                let h = t.relu(h);
                let h = t.linear(h, v[3], v[4])?;
                let h = t.relu(h);
                t.linear(h, v[5], v[6])
            },
        },
    ]
}

/// Finite-difference check of every primitive over `seeds` random draws.
/// One result per primitive, holding the worst error across seeds.
pub fn primitive_suite(seeds: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for case in cases() {
        let mut worst: f64 = 0.0;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = (case.inputs)(&mut rng);
            let op = case.op;
            let err = check_gradient(
                &inputs,
                |t, v| {
                    let y = op(t, v)?;
                    project(t, y, seed)
                },
                FD_STEP,
                Probe::All,
            )?;
            worst = worst.max(err);
        }
        out.push(CheckResult {
            name: case.name.to_string(),
            max_rel_err: worst,
            tol: PRIMITIVE_TOL,
        });
    }
    Ok(out)
}
