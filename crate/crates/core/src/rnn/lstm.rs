//! LSTM cell: forward step and exact backward step.
//!
//! Standard formulation with forget/input/output gates and a candidate:
//!
//! ```text
//! f = sigmoid(W_f x + U_f h_prev + b_f)
//! i = sigmoid(W_i x + U_i h_prev + b_i)
//! o = sigmoid(W_o x + U_o h_prev + b_o)
//! g = tanh(W_g x + U_g h_prev + b_g)
//! c = f . c_prev + i . g
//! h = o . tanh(c)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ndcore::{dsigmoid, dtanh, map_elementwise, sigmoid, Matrix};

use super::ParamSet;

/// LSTM weights for hidden size `h` and input size `d`: `W_*` are `h x d`,
/// `U_*` are `h x h`, biases are `h x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_o: Matrix,
    pub w_g: Matrix,
    pub u_f: Matrix,
    pub u_i: Matrix,
    pub u_o: Matrix,
    pub u_g: Matrix,
    pub b_f: Matrix,
    pub b_i: Matrix,
    pub b_o: Matrix,
    pub b_g: Matrix,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub x: Matrix,
    pub h_prev: Matrix,
    pub c_prev: Matrix,
    pub f: Matrix,
    pub i: Matrix,
    pub o: Matrix,
    pub g: Matrix,
    pub c: Matrix,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmParams {
            w_f: Matrix::zeros(hidden, input),
            w_i: Matrix::zeros(hidden, input),
            w_o: Matrix::zeros(hidden, input),
            w_g: Matrix::zeros(hidden, input),
            u_f: Matrix::zeros(hidden, hidden),
            u_i: Matrix::zeros(hidden, hidden),
            u_o: Matrix::zeros(hidden, hidden),
            u_g: Matrix::zeros(hidden, hidden),
            b_f: Matrix::zeros(hidden, 1),
            b_i: Matrix::zeros(hidden, 1),
            b_o: Matrix::zeros(hidden, 1),
            b_g: Matrix::zeros(hidden, 1),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_f.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.cols()
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.w_f, &self.w_i, &self.w_o, &self.w_g, &self.u_f, &self.u_i, &self.u_o,
            &self.u_g, &self.b_f, &self.b_i, &self.b_o, &self.b_g,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_f, &mut self.w_i, &mut self.w_o, &mut self.w_g, &mut self.u_f,
            &mut self.u_i, &mut self.u_o, &mut self.u_g, &mut self.b_f, &mut self.b_i,
            &mut self.b_o, &mut self.b_g,
        ]
    }

    fn tensor_names(&self) -> Vec<String> {
        ["w_f", "w_i", "w_o", "w_g", "u_f", "u_i", "u_o", "u_g", "b_f", "b_i", "b_o", "b_g"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.hidden_dim(), self.input_dim())
    }
}

fn affine(w: &Matrix, x: &Matrix, u: &Matrix, h: &Matrix, b: &Matrix) -> Result<Matrix> {
    w.matmul(x)?.add(&u.matmul(h)?)?.add(b)
}

/// One LSTM step from `(h_prev, c_prev)`.
pub fn lstm_step(
    p: &LstmParams,
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
) -> Result<(Matrix, Matrix, LstmStepCache)> {
    let f = map_elementwise(sigmoid, &affine(&p.w_f, x, &p.u_f, h_prev, &p.b_f)?)?;
    let i = map_elementwise(sigmoid, &affine(&p.w_i, x, &p.u_i, h_prev, &p.b_i)?)?;
    let o = map_elementwise(sigmoid, &affine(&p.w_o, x, &p.u_o, h_prev, &p.b_o)?)?;
    let g = map_elementwise(f64::tanh, &affine(&p.w_g, x, &p.u_g, h_prev, &p.b_g)?)?;
    let c = f.hadamard(c_prev)?.add(&i.hadamard(&g)?)?;
    let h = o.hadamard(&c.map(f64::tanh))?;
    let cache = LstmStepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        f,
        i,
        o,
        g,
        c: c.clone(),
    };
    Ok((h, c, cache))
}

/// Backward through one LSTM step. `dh` and `dc` are the gradients flowing
/// into this step's hidden and cell outputs. Returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_backward(
    p: &LstmParams,
    cache: &LstmStepCache,
    dh: &Matrix,
    dc: &Matrix,
    grads: &mut LstmParams,
) -> Result<(Matrix, Matrix, Matrix)> {
    let LstmStepCache { x, h_prev, c_prev, f, i, o, g, c } = cache;
    let tanh_c = c.map(f64::tanh);

    let do_gate = dh.hadamard(&tanh_c)?;
    let do_pre = do_gate.hadamard(&o.map(dsigmoid))?;

    // Cell gradient: incoming dc plus the path through h = o . tanh(c).
    let dc_total = dc.add(&dh.hadamard(o)?.hadamard(&tanh_c.map(dtanh))?)?;

    let df_pre = dc_total.hadamard(c_prev)?.hadamard(&f.map(dsigmoid))?;
    let di_pre = dc_total.hadamard(g)?.hadamard(&i.map(dsigmoid))?;
    let dg_pre = dc_total.hadamard(i)?.hadamard(&g.map(dtanh))?;

    grads.w_f.add_outer_assign(&df_pre, x)?;
    grads.w_i.add_outer_assign(&di_pre, x)?;
    grads.w_o.add_outer_assign(&do_pre, x)?;
    grads.w_g.add_outer_assign(&dg_pre, x)?;
    grads.u_f.add_outer_assign(&df_pre, h_prev)?;
    grads.u_i.add_outer_assign(&di_pre, h_prev)?;
    grads.u_o.add_outer_assign(&do_pre, h_prev)?;
    grads.u_g.add_outer_assign(&dg_pre, h_prev)?;
    grads.b_f.add_assign(&df_pre)?;
    grads.b_i.add_assign(&di_pre)?;
    grads.b_o.add_assign(&do_pre)?;
    grads.b_g.add_assign(&dg_pre)?;

    let dx = p
        .w_f
        .matmul_tn(&df_pre)?
        .add(&p.w_i.matmul_tn(&di_pre)?)?
        .add(&p.w_o.matmul_tn(&do_pre)?)?
        .add(&p.w_g.matmul_tn(&dg_pre)?)?;
    let dh_prev = p
        .u_f
        .matmul_tn(&df_pre)?
        .add(&p.u_i.matmul_tn(&di_pre)?)?
        .add(&p.u_o.matmul_tn(&do_pre)?)?
        .add(&p.u_g.matmul_tn(&dg_pre)?)?;
    let dc_prev = dc_total.hadamard(f)?;

    Ok((dx, dh_prev, dc_prev))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::column(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_params_zero_cell_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c, _) =
            lstm_step(&p, &col(&[0.3, -0.7]), &col(&[0.0; 3]), &col(&[0.0; 3])).unwrap();
        assert_eq!(h.data(), &[0.0; 3]);
        assert_eq!(c.data(), &[0.0; 3]);
    }

    #[test]
    fn zero_params_halve_cell_state() {
        // Gates all sit at 0.5 and the candidate at 0:
        // c = 0.5 v, h = 0.5 tanh(0.5 v).
        let p = LstmParams::zeros(3, 2);
        let v = col(&[0.9, -0.4, 0.1]);
        let (h, c, _) = lstm_step(&p, &col(&[1.0, -1.0]), &col(&[0.0; 3]), &v).unwrap();
        for i in 0..3 {
            let vi = v.get(i, 0);
            assert!((c.get(i, 0) - 0.5 * vi).abs() < 1e-15);
            assert!((h.get(i, 0) - 0.5 * (0.5 * vi).tanh()).abs() < 1e-15);
        }
    }

    /// Scalar-loop reimplementation of the cell, independent of Matrix.
    fn scalar_lstm_step(
        h_dim: usize,
        d: usize,
        get: impl Fn(&str, usize, usize) -> f64,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |w: &str, u: &str, b: &str, i: usize| -> f64 {
            let mut a = get(b, i, 0);
            for (k, &xv) in x.iter().enumerate().take(d) {
                a += get(w, i, k) * xv;
            }
            for (k, &hv) in h_prev.iter().enumerate().take(h_dim) {
                a += get(u, i, k) * hv;
            }
            a
        };
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        for i in 0..h_dim {
            let f = sig(pre("w_f", "u_f", "b_f", i));
            let inp = sig(pre("w_i", "u_i", "b_i", i));
            let o = sig(pre("w_o", "u_o", "b_o", i));
            let g = pre("w_g", "u_g", "b_g", i).tanh();
            c[i] = f * c_prev[i] + inp * g;
            h[i] = o * c[i].tanh();
        }
        (h, c)
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let h_dim = 4;
        let d = 5;
        let mut rng = crate::ndcore::SeededRng::new(23);
        let mut p = LstmParams::zeros(h_dim, d);
        for t in p.tensors_mut() {
            let (rows, cols) = t.shape();
            *t = Matrix::from_vec(rows, cols, rng.uniform_vec(rows * cols, -0.8, 0.8).unwrap())
                .unwrap();
        }
        let x: Vec<f64> = rng.uniform_vec(d, -1.0, 1.0).unwrap();
        let h_prev: Vec<f64> = rng.uniform_vec(h_dim, -1.0, 1.0).unwrap();
        let c_prev: Vec<f64> = rng.uniform_vec(h_dim, -1.0, 1.0).unwrap();

        let (h, c, _) = lstm_step(&p, &col(&x), &col(&h_prev), &col(&c_prev)).unwrap();
        let lookup = |name: &str, i: usize, j: usize| -> f64 {
            let names = p.tensor_names();
            let pos = names.iter().position(|n| n == name).unwrap();
            p.tensors()[pos].get(i, j)
        };
        let (eh, ec) = scalar_lstm_step(h_dim, d, lookup, &x, &h_prev, &c_prev);
        for i in 0..h_dim {
            assert!((h.get(i, 0) - eh[i]).abs() < 1e-12);
            assert!((c.get(i, 0) - ec[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_shape_error() {
        let p = LstmParams::zeros(3, 2);
        let err = lstm_step(&p, &col(&[1.0]), &col(&[0.0; 3]), &col(&[0.0; 3])).unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Shape);
    }
}
