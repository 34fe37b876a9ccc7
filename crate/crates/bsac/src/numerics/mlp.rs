use crate::rng::Stream;

use super::{NumericsError, Result, Tape, Tensor, Var};

/// Fully connected network: rectifier hidden layers, linear output head.
#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Tape handles for one insertion of an [`Mlp`]'s parameters.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl Mlp {
    /// `layer_sizes` is (input, hidden..., output); weights start uniform in
    /// +-1/sqrt(fan_in), biases at zero.
    pub fn new(layer_sizes: &[usize], init: &mut Stream) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(NumericsError::Dimension {
                op: "Mlp::new",
                detail: format!("bad layer sizes {layer_sizes:?}"),
            });
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            weights.push(Tensor::uniform_init(vec![n_in, n_out], n_in, init));
            let mut b = Tensor::zeros(vec![1, n_out]);
            b.requires_grad = true;
            biases.push(b);
        }
        Ok(Mlp { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    /// All-zero parameters; used by tests that need a known-trivial map.
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let mut wt = Tensor::zeros(vec![w[0], w[1]]);
            wt.requires_grad = true;
            weights.push(wt);
            let mut b = Tensor::zeros(vec![1, w[1]]);
            b.requires_grad = true;
            biases.push(b);
        }
        Mlp { layer_sizes: layer_sizes.to_vec(), weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Parameters in fixed order (w0, b0, w1, b1, ...).
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Names aligned with [`Mlp::params`] order.
    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.weights.len())
            .flat_map(|i| [format!("{prefix}.w{i}"), format!("{prefix}.b{i}")])
            .collect()
    }

    /// Forward pass with parameters inserted as gradient-tracked leaves.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<(Var, MlpVars)> {
        self.forward_impl(tape, input, true)
    }

    /// Forward pass with parameters inserted as constants; gradients still
    /// flow through the input. Used when a net is held fixed in a loss.
    pub fn forward_frozen(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        Ok(self.forward_impl(tape, input, false)?.0)
    }

    fn forward_impl(&self, tape: &mut Tape, input: Var, track: bool) -> Result<(Var, MlpVars)> {
        let (_, in_cols) = tape.shape(input);
        if in_cols != self.input_dim() {
            return Err(NumericsError::Dimension {
                op: "Mlp::forward",
                detail: format!("input width {in_cols}, net expects {}", self.input_dim()),
            });
        }
        let mut vars = MlpVars { weights: Vec::new(), biases: Vec::new() };
        let mut x = input;
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = if track {
                tape.leaf(w.data.clone(), w.shape[0], w.shape[1])
            } else {
                tape.constant(w.data.clone(), w.shape[0], w.shape[1])
            };
            let bv = if track {
                tape.leaf(b.data.clone(), 1, b.shape[1])
            } else {
                tape.constant(b.data.clone(), 1, b.shape[1])
            };
            vars.weights.push(wv);
            vars.biases.push(bv);
            let z = tape.matmul(x, wv);
            let z = tape.add_row(z, bv);
            x = if i < last { tape.relu(z) } else { z };
        }
        if tape.value(x).iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { what: "Mlp::forward output".to_string() });
        }
        Ok((x, vars))
    }

    /// Plain value-only forward for a batch laid out row-major.
    pub fn eval_batch(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(input.to_vec(), rows, input.len() / rows.max(1));
        let y = self.forward_frozen(&mut tape, x)?;
        Ok(tape.value(y).to_vec())
    }

    /// Copy tape gradients back into the owned parameters' grad slots.
    /// Parameters the loss never touched get zero gradients.
    pub fn collect_grads(&mut self, tape: &Tape, vars: &MlpVars) {
        for (w, wv) in self.weights.iter_mut().zip(&vars.weights) {
            w.grad = Some(tape.grad(*wv).map_or_else(|| vec![0.0; w.data.len()], <[f64]>::to_vec));
        }
        for (b, bv) in self.biases.iter_mut().zip(&vars.biases) {
            b.grad = Some(tape.grad(*bv).map_or_else(|| vec![0.0; b.data.len()], <[f64]>::to_vec));
        }
    }

    /// Polyak blend `self <- tau * other + (1 - tau) * self`; shapes must agree.
    pub fn blend_from(&mut self, other: &Mlp, tau: f64) {
        debug_assert_eq!(self.layer_sizes, other.layer_sizes);
        for (mine, theirs) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(other.biases.iter()))
        {
            for (m, t) in mine.data.iter_mut().zip(&theirs.data) {
                *m = tau * t + (1.0 - tau) * *m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent straight-line re-evaluation of the same arithmetic.
    fn straight_line_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let sizes = net.layer_sizes();
        let mut x = input.to_vec();
        let params = net.params();
        for layer in 0..sizes.len() - 1 {
            let w = params[2 * layer];
            let b = params[2 * layer + 1];
            let (n_in, n_out) = (sizes[layer], sizes[layer + 1]);
            let mut y = vec![0.0; n_out];
            for j in 0..n_out {
                let mut s = 0.0;
                for i in 0..n_in {
                    s += x[i] * w.data[i * n_out + j];
                }
                y[j] = s + b.data[j];
            }
            if layer < sizes.len() - 2 {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_net_maps_everything_to_zero() {
        let net = Mlp::zeros(&[3, 4, 2]);
        let out = net.eval_batch(&[1.0, -2.0, 3.0], 1).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_is_identity() {
        let mut net = Mlp::zeros(&[3, 3]);
        for i in 0..3 {
            net.params_mut()[0].data[i * 3 + i] = 1.0;
        }
        let x = vec![0.5, -1.5, 2.0];
        let out = net.eval_batch(&x, 1).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let mut init = Stream::new(17);
        let net = Mlp::new(&[4, 8, 8, 3], &mut init).unwrap();
        let mut noise = Stream::new(18);
        for _ in 0..20 {
            let input: Vec<f64> = (0..4).map(|_| noise.uniform(-2.0, 2.0)).collect();
            let got = net.eval_batch(&input, 1).unwrap();
            let want = straight_line_forward(&net, &input);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Mlp::zeros(&[3, 2]);
        let mut tape = Tape::new();
        let x = tape.constant(vec![1.0, 2.0], 1, 2);
        assert!(matches!(
            net.forward(&mut tape, x),
            Err(NumericsError::Dimension { .. })
        ));
    }

    #[test]
    fn batch_forward_equals_per_row_forward() {
        let mut init = Stream::new(5);
        let net = Mlp::new(&[3, 6, 2], &mut init).unwrap();
        let rows: Vec<Vec<f64>> =
            vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0], vec![0.0, 0.0, 0.0]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let batch = net.eval_batch(&flat, 3).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let single = net.eval_batch(row, 1).unwrap();
            assert_eq!(&batch[r * 2..(r + 1) * 2], single.as_slice());
        }
    }

    #[test]
    fn grads_match_finite_differences() {
        // f = sum(tanh(W x + b)) on a single layer; central differences h=1e-6.
        let mut init = Stream::new(23);
        let mut net = Mlp::new(&[3, 4], &mut init).unwrap();
        let input = vec![0.3, -0.8, 1.1];

        let loss_of = |net: &Mlp| -> f64 {
            let mut tape = Tape::new();
            let x = tape.constant(input.clone(), 1, 3);
            let y = net.forward_frozen(&mut tape, x).unwrap();
            let h = tape.tanh(y);
            let s = tape.sum(h);
            tape.scalar_value(s)
        };

        let mut tape = Tape::new();
        let x = tape.constant(input.clone(), 1, 3);
        let (y, vars) = net.forward(&mut tape, x).unwrap();
        let h = tape.tanh(y);
        let s = tape.sum(h);
        tape.backward(s).unwrap();
        net.collect_grads(&tape, &vars);

        let h_step = 1e-6;
        let n_params = net.params().len();
        for pi in 0..n_params {
            let n = net.params()[pi].data.len();
            for j in 0..n {
                let orig = net.params()[pi].data[j];
                net.params_mut()[pi].data[j] = orig + h_step;
                let up = loss_of(&net);
                net.params_mut()[pi].data[j] = orig - h_step;
                let down = loss_of(&net);
                net.params_mut()[pi].data[j] = orig;
                let fd = (up - down) / (2.0 * h_step);
                let an = net.params()[pi].grad.as_ref().unwrap()[j];
                let denom = fd.abs().max(1e-8);
                assert!(
                    ((an - fd) / denom).abs() < 1e-4,
                    "param {pi}[{j}]: analytic {an}, fd {fd}"
                );
            }
        }
    }
}
