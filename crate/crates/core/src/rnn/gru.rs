//! GRU cell: forward step and exact backward step.
//!
//! Gate convention (fixed here because it is the one every test and
//! checkpoint assumes):
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h_prev + b_z)        update gate
//! r  = sigmoid(W_r x + U_r h_prev + b_r)        reset gate
//! hc = tanh(W_h x + U_h (r . h_prev) + b_h)     candidate
//! h  = (1 - z) . h_prev + z . hc
//! ```

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ndcore::{dsigmoid, dtanh, map_elementwise, sigmoid, Matrix};

use super::ParamSet;

/// GRU weights for hidden size `h` and input size `d`: `W_*` are `h x d`,
/// `U_*` are `h x h`, biases are `h x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_h: Matrix,
}

/// Values captured by a forward step and consumed by the backward step.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub x: Matrix,
    pub h_prev: Matrix,
    pub z: Matrix,
    pub r: Matrix,
    pub h_cand: Matrix,
}

impl GruParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GruParams {
            w_z: Matrix::zeros(hidden, input),
            w_r: Matrix::zeros(hidden, input),
            w_h: Matrix::zeros(hidden, input),
            u_z: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_z: Matrix::zeros(hidden, 1),
            b_r: Matrix::zeros(hidden, 1),
            b_h: Matrix::zeros(hidden, 1),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_z.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }
}

impl ParamSet for GruParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z,
            &self.b_r, &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_z, &mut self.w_r, &mut self.w_h, &mut self.u_z, &mut self.u_r,
            &mut self.u_h, &mut self.b_z, &mut self.b_r, &mut self.b_h,
        ]
    }

    fn tensor_names(&self) -> Vec<String> {
        ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn zeros_like(&self) -> Self {
        GruParams::zeros(self.hidden_dim(), self.input_dim())
    }
}

fn gate_preactivation(w: &Matrix, x: &Matrix, u: &Matrix, h: &Matrix, b: &Matrix) -> Result<Matrix> {
    w.matmul(x)?.add(&u.matmul(h)?)?.add(b)
}

/// One GRU step. Returns the new hidden state and the cache for backprop.
pub fn gru_step(p: &GruParams, x: &Matrix, h_prev: &Matrix) -> Result<(Matrix, GruStepCache)> {
    let z = map_elementwise(sigmoid, &gate_preactivation(&p.w_z, x, &p.u_z, h_prev, &p.b_z)?)?;
    let r = map_elementwise(sigmoid, &gate_preactivation(&p.w_r, x, &p.u_r, h_prev, &p.b_r)?)?;
    let rh = r.hadamard(h_prev)?;
    let h_cand =
        map_elementwise(f64::tanh, &gate_preactivation(&p.w_h, x, &p.u_h, &rh, &p.b_h)?)?;
    // h = (1 - z) . h_prev + z . h_cand
    let h = z
        .map(|v| 1.0 - v)
        .hadamard(h_prev)?
        .add(&z.hadamard(&h_cand)?)?;
    let cache = GruStepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        z,
        r,
        h_cand,
    };
    Ok((h, cache))
}

/// Backward through one GRU step. `dh` is the loss gradient with respect to
/// the step's output. Parameter gradients accumulate into `grads`; the
/// return values are the gradients with respect to the step input and the
/// previous hidden state (the latter includes the reset-gate coupling term
/// `r . (U_h^T d_cand)`).
pub fn gru_backward(
    p: &GruParams,
    cache: &GruStepCache,
    dh: &Matrix,
    grads: &mut GruParams,
) -> Result<(Matrix, Matrix)> {
    let GruStepCache { x, h_prev, z, r, h_cand } = cache;

    let dz = dh.hadamard(&h_cand.sub(h_prev)?)?;
    let dz_pre = dz.hadamard(&z.map(dsigmoid))?;

    let dcand = dh.hadamard(z)?;
    let dcand_pre = dcand.hadamard(&h_cand.map(dtanh))?;

    // Gradient w.r.t. the reset-gated state r . h_prev.
    let drh = p.u_h.matmul_tn(&dcand_pre)?;
    let dr = drh.hadamard(h_prev)?;
    let dr_pre = dr.hadamard(&r.map(dsigmoid))?;

    let rh = r.hadamard(h_prev)?;

    grads.w_z.add_outer_assign(&dz_pre, x)?;
    grads.u_z.add_outer_assign(&dz_pre, h_prev)?;
    grads.b_z.add_assign(&dz_pre)?;
    grads.w_r.add_outer_assign(&dr_pre, x)?;
    grads.u_r.add_outer_assign(&dr_pre, h_prev)?;
    grads.b_r.add_assign(&dr_pre)?;
    grads.w_h.add_outer_assign(&dcand_pre, x)?;
    grads.u_h.add_outer_assign(&dcand_pre, &rh)?;
    grads.b_h.add_assign(&dcand_pre)?;

    let dx = p
        .w_z
        .matmul_tn(&dz_pre)?
        .add(&p.w_r.matmul_tn(&dr_pre)?)?
        .add(&p.w_h.matmul_tn(&dcand_pre)?)?;

    let dh_prev = dh
        .hadamard(&z.map(|v| 1.0 - v))?
        .add(&p.u_z.matmul_tn(&dz_pre)?)?
        .add(&p.u_r.matmul_tn(&dr_pre)?)?
        .add(&drh.hadamard(r)?)?;

    Ok((dx, dh_prev))
}
