//! Layer building blocks on top of [`Graph`], plus graph-free forward
//! functions for inference and tests.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::graph::{BatchStats, Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

/// `x·W + b` for `x: [batch, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    g.add_row(xw, b)
}

/// Weights of a single LSTM layer with gates packed as `[input, forget,
/// candidate, output]` along the last axis.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    /// `[in, 4·hidden]`
    pub w_input: Var,
    /// `[hidden, 4·hidden]`
    pub w_hidden: Var,
    /// `[4·hidden]`
    pub bias: Var,
}

/// One cell update; returns `(h, c)`.
pub fn lstm_cell(g: &mut Graph, x_t: Var, h: Var, c: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let hidden = g.value(h).shape()[1];
    let zx = g.matmul(x_t, p.w_input)?;
    let zh = g.matmul(h, p.w_hidden)?;
    let z = g.add(zx, zh)?;
    let z = g.add_row(z, p.bias)?;
    let i = g.slice_cols(z, 0, hidden)?;
    let f = g.slice_cols(z, hidden, hidden)?;
    let cand = g.slice_cols(z, 2 * hidden, hidden)?;
    let o = g.slice_cols(z, 3 * hidden, hidden)?;
    let (i, f, o) = (g.sigmoid(i), g.sigmoid(f), g.sigmoid(o));
    let cand = g.tanh(cand);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs the cell over `x: [batch, T, in]` from `(h0, c0)` and returns the
/// final hidden state `[batch, hidden]`.
pub fn lstm(g: &mut Graph, x: Var, h0: Var, c0: Var, p: &LstmVars) -> Result<Var> {
    let steps = match *g.value(x).shape() {
        [_, t, _] => t,
        _ => return Err(Error::shape("lstm", &[0, 0, 0], g.value(x).shape())),
    };
    let (mut h, mut c) = (h0, c0);
    for t in 0..steps {
        let x_t = g.time_step(x, t)?;
        (h, c) = lstm_cell(g, x_t, h, c, p)?;
    }
    Ok(h)
}

/// `λ·Σ|w|` over the given tensors.
pub fn l1(g: &mut Graph, weights: &[Var], lambda: f64) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &w in weights {
        let a = g.abs(w);
        let s = g.sum(a);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    let total = match total {
        Some(t) => t,
        None => g.constant(Tensor::scalar(0.0)),
    };
    Ok(g.scale(total, lambda))
}

pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
    let y = dense(&mut g, x, w, b)?;
    Ok(g.value(y).clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

impl LstmWeights {
    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[0]
    }
}

/// Final hidden state of the LSTM over `x_seq: [batch, T, in]`; the
/// initial state defaults to zeros.
pub fn lstm_forward(x_seq: &Tensor, weights: &LstmWeights, initial: Option<(&Tensor, &Tensor)>) -> Result<Tensor> {
    let batch = x_seq.shape().first().copied().unwrap_or(0);
    let hidden = weights.hidden();
    let mut g = Graph::new();
    let x = g.constant(x_seq.clone());
    let (h0, c0) = match initial {
        Some((h, c)) => (g.constant(h.clone()), g.constant(c.clone())),
        None => (
            g.constant(Tensor::zeros(&[batch, hidden])),
            g.constant(Tensor::zeros(&[batch, hidden])),
        ),
    };
    let p = LstmVars {
        w_input: g.constant(weights.w_input.clone()),
        w_hidden: g.constant(weights.w_hidden.clone()),
        bias: g.constant(weights.bias.clone()),
    };
    let h = lstm(&mut g, x, h0, c0, &p)?;
    Ok(g.value(h).clone())
}

pub fn conv1d_forward(x: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(x.clone()), g.constant(kernels.clone()), g.constant(bias.clone()));
    let y = g.conv1d(x, w, b, stride)?;
    Ok(g.value(y).clone())
}

/// Output length of an unpadded convolution.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel && stride > 0).then(|| (len - kernel) / stride + 1)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn leaky_relu(x: &Tensor, alpha: f64) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { alpha * v })
}

pub fn l1_penalty(weights: &[&Tensor], lambda: f64) -> f64 {
    lambda * weights.iter().flat_map(|t| t.data()).map(|v| v.abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine batch normalization with running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum,
            eps,
        }
    }

    /// `new = momentum·old + (1 − momentum)·batch`.
    pub fn update_running(&mut self, stats: &BatchStats) {
        update_running(&mut self.running_mean, &mut self.running_var, stats, self.momentum);
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let gamma = g.constant(self.gamma.clone());
        let beta = g.constant(self.beta.clone());
        let y = match mode {
            Mode::Train => {
                let (y, stats) = g.batch_norm(xv, gamma, beta, self.eps)?;
                self.update_running(&stats);
                y
            }
            Mode::Eval => g.batch_norm_fixed(
                xv,
                gamma,
                beta,
                self.running_mean.data(),
                self.running_var.data(),
                self.eps,
            )?,
        };
        Ok(g.value(y).clone())
    }
}

pub fn update_running(mean: &mut Tensor, var: &mut Tensor, stats: &BatchStats, momentum: f64) {
    for (r, b) in mean.data_mut().iter_mut().zip(&stats.mean) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
    for (r, b) in var.data_mut().iter_mut().zip(&stats.var) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
}

pub fn batchnorm_forward(bn: &mut BatchNorm, x: &Tensor, mode: Mode) -> Result<Tensor> {
    bn.forward(x, mode)
}

/// Gradient norms below this are compared in absolute terms, since central
/// differences of an O(1) loss carry roughly 1e-11 of rounding noise.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖, GRADIENT_FLOOR)`
/// between analytic and central-difference gradients of `f` with respect
/// to each input.
pub fn gradient_check<F>(inputs: &[Tensor], step: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };
    let mut errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let scale = libm::sqrt(a2).max(libm::sqrt(n2)).max(GRADIENT_FLOOR);
        errors.push(libm::sqrt(diff2) / scale);
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init::xavier_init;
    use alloc::vec;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn assert_grads(errors: &[f64]) {
        for (i, e) in errors.iter().enumerate() {
            assert!(*e < 1e-4, "input {i}: relative error {e}");
        }
    }

    #[test]
    fn dense_identity_and_scalar() {
        let x = rand_tensor(&[3, 4], 1);
        let mut eye = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            eye.data_mut()[i * 5] = 1.0;
        }
        assert_eq!(dense_forward(&x, &eye, &Tensor::zeros(&[4])).unwrap(), x);
        let y = dense_forward(&Tensor::new(&[1, 1], vec![2.0]).unwrap(), &Tensor::new(&[1, 1], vec![3.0]).unwrap(), &Tensor::scalar(1.0)).unwrap();
        assert_eq!(y.item(), 7.0);
        assert!(dense_forward(&x, &Tensor::zeros(&[3, 4]), &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn dense_gradients() {
        let inputs = [rand_tensor(&[3, 4], 1), rand_tensor(&[4, 2], 2), rand_tensor(&[2], 3)];
        let errors = gradient_check(&inputs, 1e-5, |g, v| {
            let y = dense(g, v[0], v[1], v[2])?;
            let y = g.tanh(y);
            Ok(g.sum(y))
        })
        .unwrap();
        assert_grads(&errors);
    }

    #[test]
    fn lstm_zero_weights_give_zero_state() {
        let w = LstmWeights {
            w_input: Tensor::zeros(&[4, 20]),
            w_hidden: Tensor::zeros(&[5, 20]),
            bias: Tensor::zeros(&[20]),
        };
        let h = lstm_forward(&Tensor::zeros(&[2, 3, 4]), &w, None).unwrap();
        assert_eq!(h, Tensor::zeros(&[2, 5]));
    }

    #[test]
    fn lstm_single_step_is_one_cell() {
        let w = LstmWeights {
            w_input: rand_tensor(&[4, 20], 5),
            w_hidden: rand_tensor(&[5, 20], 6),
            bias: rand_tensor(&[20], 7),
        };
        let x = rand_tensor(&[2, 1, 4], 8);
        let h = lstm_forward(&x, &w, None).unwrap();
        // Hand-rolled cell from zero state: h = o ⊙ tanh(i ⊙ g).
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for n in 0..2 {
            for j in 0..5 {
                let z = |gate: usize| {
                    let col = gate * 5 + j;
                    w.bias.data()[col] + (0..4).map(|k| x.data()[n * 4 + k] * w.w_input.data()[k * 20 + col]).sum::<f64>()
                };
                let expected = sig(z(3)) * (sig(z(0)) * z(2).tanh()).tanh();
                assert!((h.data()[n * 5 + j] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn lstm_gradients() {
        let inputs = [
            rand_tensor(&[2, 3, 4], 11),
            rand_tensor(&[4, 20], 12),
            rand_tensor(&[5, 20], 13),
            rand_tensor(&[20], 14),
            rand_tensor(&[2, 5], 15),
            rand_tensor(&[2, 5], 16),
        ];
        let errors = gradient_check(&inputs, 1e-5, |g, v| {
            let p = LstmVars {
                w_input: v[1],
                w_hidden: v[2],
                bias: v[3],
            };
            let h = lstm(g, v[0], v[4], v[5], &p)?;
            let sq = g.mul(h, h)?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert_grads(&errors);
    }

    #[test]
    fn conv_lengths_chain() {
        assert_eq!(conv_output_len(30, 5, 2), Some(13));
        assert_eq!(conv_output_len(13, 5, 2), Some(5));
        assert_eq!(conv_output_len(5, 5, 2), Some(1));
        assert_eq!(conv_output_len(4, 5, 2), None);
        let x = rand_tensor(&[1, 1, 30], 1);
        let y = conv1d_forward(&x, &Tensor::zeros(&[2, 1, 5]), &Tensor::zeros(&[2]), 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 13]);
        assert!(conv1d_forward(&rand_tensor(&[1, 1, 4], 1), &Tensor::zeros(&[1, 1, 5]), &Tensor::zeros(&[1]), 2).is_err());
    }

    #[test]
    fn delta_kernel_subsamples() {
        let x = rand_tensor(&[1, 1, 30], 4);
        let mut k = Tensor::zeros(&[1, 1, 5]);
        k.data_mut()[0] = 1.0;
        let y = conv1d_forward(&x, &k, &Tensor::zeros(&[1]), 2).unwrap();
        for (l, v) in y.data().iter().enumerate() {
            assert_eq!(*v, x.data()[2 * l]);
        }
    }

    #[test]
    fn conv_gradients() {
        let inputs = [rand_tensor(&[2, 3, 13], 21), xavier_init(&[4, 3, 5], 22).unwrap(), rand_tensor(&[4], 23)];
        let errors = gradient_check(&inputs, 1e-5, |g, v| {
            let y = g.conv1d(v[0], v[1], v[2], 2)?;
            let y = g.tanh(y);
            Ok(g.sum(y))
        })
        .unwrap();
        assert_grads(&errors);
    }

    #[test]
    fn activations() {
        let t = Tensor::new(&[3], vec![-1.0, -5.0, 5.0]).unwrap();
        assert_eq!(leaky_relu(&t, LEAKY_SLOPE).data(), &[-0.01, -0.05, 5.0]);
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let mut bn = BatchNorm::new(3, 0.9, 1e-5);
        let x = rand_tensor(&[8, 3], 31);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..8).map(|n| y.data()[n * 3 + c]).collect();
            let m = col.iter().sum::<f64>() / 8.0;
            let v = col.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 8.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
        assert!(bn.forward(&rand_tensor(&[1, 3], 1), Mode::Train).is_err());
    }

    #[test]
    fn batchnorm_eval_hand_example() {
        let mut bn = BatchNorm::new(1, 0.9, 1e-5);
        bn.gamma = Tensor::scalar(2.0);
        bn.beta = Tensor::scalar(0.5);
        bn.running_mean = Tensor::scalar(1.0);
        bn.running_var = Tensor::scalar(4.0);
        let y = bn.forward(&Tensor::new(&[1, 1], vec![3.0]).unwrap(), Mode::Eval).unwrap();
        let expected = 2.0 * (3.0 - 1.0) / (4.0f64 + 1e-5).sqrt() + 0.5;
        assert_eq!(y.item(), expected);
    }

    #[test]
    fn batchnorm_momentum_update() {
        let mut bn = BatchNorm::new(1, 0.9, 1e-5);
        let x = Tensor::new(&[2, 1], vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean.item() - 0.2).abs() < 1e-15);
        assert!((bn.running_var.item() - (0.9 + 0.1 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn batchnorm_gradients() {
        let inputs = [rand_tensor(&[4, 3, 5], 41), rand_tensor(&[3], 42), rand_tensor(&[3], 43), rand_tensor(&[4, 3, 5], 44)];
        let errors = gradient_check(&inputs, 1e-5, |g, v| {
            let (y, _) = g.batch_norm(v[0], v[1], v[2], 1e-5)?;
            let y = g.mul(y, v[3])?;
            Ok(g.sum(y))
        })
        .unwrap();
        assert_grads(&errors);
    }

    #[test]
    fn l1_values_and_gradient() {
        let w = Tensor::new(&[2], vec![1.0, -2.0]).unwrap();
        assert_eq!(l1_penalty(&[&w], 0.5), 1.5);
        assert_eq!(l1_penalty(&[&w], 0.0), 0.0);
        let inputs = [rand_tensor(&[3, 3], 51), rand_tensor(&[4], 52)];
        let errors = gradient_check(&inputs, 1e-5, |g, v| l1(g, v, 0.3)).unwrap();
        assert_grads(&errors);
    }

    proptest::proptest! {
        #[test]
        fn leaky_relu_monotone(a in -10f64..10.0, b in -10f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let t = Tensor::new(&[2], vec![lo, hi]).unwrap();
            let y = leaky_relu(&t, LEAKY_SLOPE);
            proptest::prop_assert!(y.data()[0] <= y.data()[1]);
        }
    }
}
