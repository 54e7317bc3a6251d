//! GRU and LSTM cells with exact backpropagation through time, the stream
//! networks built from them, and the feedforward fusion network.
//!
//! Stream parameters are immutable during inference, so concurrent forward
//! passes are safe; training mutates one network from one task at a time.

mod dense;
mod gru;
mod lstm;
mod stream;

pub use dense::{DenseHead, FusionNetwork, HeadCache};
pub use gru::{gru_backward, gru_step, GruParams, GruStepCache};
pub use lstm::{lstm_backward, lstm_step, LstmParams, LstmStepCache};
pub use stream::{
    grad_check, stream_backward, stream_backward_into, stream_forward, CellKind, CellParams,
    ForwardCache, StreamNetwork,
};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// Uniform access to a network's parameter tensors, in a fixed order shared
/// by gradients, optimizer state, and flattened views.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;
    fn tensor_names(&self) -> Vec<String>;
    /// Same shapes, all zeros — the natural gradient container.
    fn zeros_like(&self) -> Self;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters as one flat vector, tensor by tensor in declared order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`ParamSet::flatten`].
    fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::domain(format!(
                "flat parameter vector has {} entries, expected {expected}",
                flat.len()
            )));
        }
        let mut cursor = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[cursor..cursor + n]);
            cursor += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::SeededRng;

    #[test]
    fn flatten_roundtrip_preserves_network() {
        let mut rng = SeededRng::new(33);
        let net = StreamNetwork::new(CellKind::Lstm, 5, 3, 2, &[4], &mut rng).unwrap();
        let flat = net.flatten();
        let mut other = net.zeros_like();
        other.set_from_flat(&flat).unwrap();
        assert_eq!(net, other);
    }

    #[test]
    fn flat_length_mismatch_rejected() {
        let mut rng = SeededRng::new(34);
        let mut net = StreamNetwork::new(CellKind::Gru, 4, 3, 1, &[4], &mut rng).unwrap();
        let short = vec![0.0; net.param_count() - 1];
        assert!(net.set_from_flat(&short).is_err());
    }
}
