//! Small feedforward pieces: the dense head that maps a hidden state to a
//! scalar, and the fusion network that combines the two stream predictions.
//! Hidden layers use tanh; the output layer is linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{dtanh, map_elementwise, Matrix, SeededRng};

use super::ParamSet;

/// Multi-layer perceptron with tanh hidden layers and one linear output.
/// `hidden` may be empty, in which case the map is purely linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    /// Hidden layers as `(weight, bias)` pairs; weight `m_i x m_{i-1}`.
    pub hidden: Vec<(Matrix, Matrix)>,
    /// Output weight, `1 x m_last`.
    pub out_w: Matrix,
    /// Output bias, `1 x 1`.
    pub out_b: Matrix,
}

/// Activations captured during a head forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    /// Input followed by each hidden layer's tanh output.
    pub activations: Vec<Matrix>,
}

impl DenseHead {
    /// Weight init is uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`;
    /// biases start at zero.
    pub fn new(input_dim: usize, hidden_sizes: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut fan_in = input_dim;
        for &size in hidden_sizes {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Matrix::from_vec(size, fan_in, rng.uniform_vec(size * fan_in, -bound, bound)?)?;
            hidden.push((w, Matrix::zeros(size, 1)));
            fan_in = size;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let out_w = Matrix::from_vec(1, fan_in, rng.uniform_vec(fan_in, -bound, bound)?)?;
        Ok(DenseHead {
            hidden,
            out_w,
            out_b: Matrix::zeros(1, 1),
        })
    }

    pub fn zeros(input_dim: usize, hidden_sizes: &[usize]) -> Self {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut fan_in = input_dim;
        for &size in hidden_sizes {
            hidden.push((Matrix::zeros(size, fan_in), Matrix::zeros(size, 1)));
            fan_in = size;
        }
        DenseHead {
            hidden,
            out_w: Matrix::zeros(1, fan_in),
            out_b: Matrix::zeros(1, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.out_w.cols(), |(w, _)| w.cols())
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.iter().map(|(w, _)| w.rows()).collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(f64, HeadCache)> {
        let mut activations = vec![x.clone()];
        let mut current = x.clone();
        for (w, b) in &self.hidden {
            current = map_elementwise(f64::tanh, &w.matmul(&current)?.add(b)?)?;
            activations.push(current.clone());
        }
        let out = self.out_w.matmul(&current)?.add(&self.out_b)?;
        Ok((out.get(0, 0), HeadCache { activations }))
    }

    /// Backward pass; accumulates parameter gradients into `grads` and
    /// returns the gradient with respect to the input.
    pub fn backward(&self, cache: &HeadCache, d_out: f64, grads: &mut DenseHead) -> Result<Matrix> {
        if cache.activations.len() != self.hidden.len() + 1 {
            return Err(Error::domain(
                "head cache does not match network depth".to_string(),
            ));
        }
        let last = cache
            .activations
            .last()
            .expect("cache holds at least the input");
        let d_out_vec = Matrix::from_vec(1, 1, vec![d_out])?;
        grads.out_w.add_outer_assign(&d_out_vec, last)?;
        grads.out_b.add_assign(&d_out_vec)?;
        let mut d_act = self.out_w.matmul_tn(&d_out_vec)?;
        for (idx, (w, _)) in self.hidden.iter().enumerate().rev() {
            let act = &cache.activations[idx + 1];
            let d_pre = d_act.hadamard(&act.map(dtanh))?;
            let (gw, gb) = &mut grads.hidden[idx];
            gw.add_outer_assign(&d_pre, &cache.activations[idx])?;
            gb.add_assign(&d_pre)?;
            d_act = w.matmul_tn(&d_pre)?;
        }
        Ok(d_act)
    }
}

impl ParamSet for DenseHead {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(self.hidden.len() * 2 + 2);
        for (w, b) in &self.hidden {
            out.push(w);
            out.push(b);
        }
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(self.hidden.len() * 2 + 2);
        for (w, b) in &mut self.hidden {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.hidden.len() * 2 + 2);
        for i in 0..self.hidden.len() {
            out.push(format!("hidden{i}_w"));
            out.push(format!("hidden{i}_b"));
        }
        out.push("out_w".to_string());
        out.push("out_b".to_string());
        out
    }

    fn zeros_like(&self) -> Self {
        DenseHead::zeros(self.input_dim(), &self.hidden_sizes())
    }
}

/// Feedforward aggregator mapping the two stream predictions to the final
/// prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionNetwork {
    pub head: DenseHead,
}

impl FusionNetwork {
    /// Default shape: 2 inputs, one tanh hidden layer, linear output.
    pub fn new(hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        let sizes: Vec<usize> = if hidden == 0 { vec![] } else { vec![hidden] };
        Ok(FusionNetwork {
            head: DenseHead::new(2, &sizes, rng)?,
        })
    }

    /// Purely linear fusion: `y = w1 p1 + w2 p2 + b`.
    pub fn linear(rng: &mut SeededRng) -> Result<Self> {
        FusionNetwork::new(0, rng)
    }

    pub fn param_count(&self) -> usize {
        self.head.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn forward(&self, pred1: f64, pred2: f64) -> Result<(f64, HeadCache)> {
        let x = Matrix::column(vec![pred1, pred2])?;
        self.head.forward(&x)
    }

    pub fn predict(&self, pred1: f64, pred2: f64) -> Result<f64> {
        Ok(self.forward(pred1, pred2)?.0)
    }
}

impl ParamSet for FusionNetwork {
    fn tensors(&self) -> Vec<&Matrix> {
        self.head.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.head.tensors_mut()
    }

    fn tensor_names(&self) -> Vec<String> {
        self.head.tensor_names()
    }

    fn zeros_like(&self) -> Self {
        FusionNetwork {
            head: self.head.zeros_like(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_passes_bias_through() {
        let mut head = DenseHead::zeros(3, &[4]);
        head.out_b.set(0, 0, 2.5);
        let (y, _) = head.forward(&Matrix::column(vec![1.0, -1.0, 0.5]).unwrap()).unwrap();
        assert_eq!(y, 2.5);
    }

    #[test]
    fn linear_head_is_a_dot_product() {
        let mut head = DenseHead::zeros(2, &[]);
        head.out_w = Matrix::from_rows(&[vec![2.0, -3.0]]).unwrap();
        head.out_b.set(0, 0, 1.0);
        let (y, _) = head.forward(&Matrix::column(vec![4.0, 1.0]).unwrap()).unwrap();
        assert_eq!(y, 2.0 * 4.0 - 3.0 + 1.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeededRng::new(77);
        let head = DenseHead::new(3, &[4, 2], &mut rng).unwrap();
        let x = Matrix::column(rng.uniform_vec(3, -1.0, 1.0).unwrap()).unwrap();
        let mut grads = head.zeros_like();
        let (_, cache) = head.forward(&x).unwrap();
        head.backward(&cache, 1.0, &mut grads).unwrap();

        let eps = 1e-6;
        let flat_analytic = grads.flatten();
        let base = head.flatten();
        for (k, _) in base.iter().enumerate() {
            let mut plus = head.clone();
            let mut minus = head.clone();
            let mut v = base.clone();
            v[k] += eps;
            plus.set_from_flat(&v).unwrap();
            v[k] -= 2.0 * eps;
            minus.set_from_flat(&v).unwrap();
            let fp = plus.forward(&x).unwrap().0;
            let fm = minus.forward(&x).unwrap().0;
            let numeric = (fp - fm) / (2.0 * eps);
            let denom = flat_analytic[k].abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((flat_analytic[k] - numeric) / denom).abs() < 1e-6,
                "param {k}: analytic {} vs numeric {}",
                flat_analytic[k],
                numeric
            );
        }
    }

    #[test]
    fn fusion_default_shape_matches_param_count() {
        let mut rng = SeededRng::new(1);
        let fusion = FusionNetwork::new(4, &mut rng).unwrap();
        // 2 -> 4 tanh -> 1 linear: (4*2 + 4) + (4 + 1) = 17.
        assert_eq!(fusion.param_count(), 17);
        let linear = FusionNetwork::linear(&mut rng).unwrap();
        assert_eq!(linear.param_count(), 3);
    }
}
