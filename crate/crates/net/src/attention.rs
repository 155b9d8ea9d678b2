//! Multi-head scaled dot-product attention over grouped tokens.
//!
//! For tokens `[L, J, d]`: Q = X W^Q, K = X W^K, V = X W^V per group,
//! `Z = softmax(Q K^T / sqrt(d_q)) V` head by head (even channel split,
//! d_q = d_k = d_v = d / heads), heads concatenated and output-projected.

use vsci_tensor::tape::{Tape, ValueId};
use vsci_tensor::{Scalar, Tensor};

use crate::error::{NetError, Result};

/// Projection weights for one attention operator. All four matrices are
/// `[d, d]`; no biases.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<F: Scalar> {
    pub wq: Tensor<F>,
    pub wk: Tensor<F>,
    pub wv: Tensor<F>,
    pub wo: Tensor<F>,
    pub heads: usize,
}

impl<F: Scalar> AttentionParams<F> {
    /// Identity projections, single head; handy for pinning examples.
    pub fn identity(d: usize) -> Self {
        let eye = Tensor::from_fn(&[d, d], |i| {
            if i / d == i % d {
                F::one()
            } else {
                F::zero()
            }
        });
        AttentionParams {
            wq: eye.clone(),
            wk: eye.clone(),
            wv: eye.clone(),
            wo: eye,
            heads: 1,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, w) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if w.shape() != [d, d] {
                return Err(NetError::Config(format!(
                    "attention {name} must be [{d},{d}], got {:?}",
                    w.shape()
                )));
            }
        }
        if self.heads == 0 || d % self.heads != 0 {
            return Err(NetError::Config(format!(
                "token width {d} must split evenly across {} heads",
                self.heads
            )));
        }
        Ok(())
    }
}

pub(crate) struct BoundAttention {
    pub wq: ValueId,
    pub wk: ValueId,
    pub wv: ValueId,
    pub wo: ValueId,
    pub heads: usize,
}

/// Records the attention computation on the tape. `tokens` is `[L, J, d]`.
pub(crate) fn attention_on_tape<F: Scalar>(
    tape: &mut Tape<F>,
    tokens: ValueId,
    p: &BoundAttention,
) -> Result<ValueId> {
    let shape = tape.value(tokens).shape().to_vec();
    if shape.len() != 3 {
        return Err(NetError::Config(format!(
            "attention tokens must be [L,J,d], got {:?}",
            shape
        )));
    }
    let (l, j, d) = (shape[0], shape[1], shape[2]);
    if p.heads == 0 || d % p.heads != 0 {
        return Err(NetError::Config(format!(
            "token width {d} must split evenly across {} heads",
            p.heads
        )));
    }
    let dh = d / p.heads;

    let split = |tape: &mut Tape<F>, x: ValueId| -> Result<ValueId> {
        let a = tape.reshape(x, &[l, j, p.heads, dh])?;
        let b = tape.permute(a, &[0, 2, 1, 3])?;
        Ok(tape.reshape(b, &[l * p.heads, j, dh])?)
    };

    let q = tape.linear(tokens, p.wq)?;
    let k = tape.linear(tokens, p.wk)?;
    let v = tape.linear(tokens, p.wv)?;
    let q = split(tape, q)?;
    let k = split(tape, k)?;
    let v = split(tape, v)?;

    let scores = tape.bat_mat_mul(q, k, true)?;
    let scaled = tape.scale(scores, F::from_f64(1.0 / (dh as f64).sqrt()))?;
    let weights = tape.softmax(scaled, 2)?;
    let z = tape.bat_mat_mul(weights, v, false)?;

    let a = tape.reshape(z, &[l, p.heads, j, dh])?;
    let b = tape.permute(a, &[0, 2, 1, 3])?;
    let merged = tape.reshape(b, &[l, j, d])?;
    Ok(tape.linear(merged, p.wo)?)
}

/// Eager attention: runs the same computation on a throwaway tape.
pub fn attention<F: Scalar>(tokens: &Tensor<F>, params: &AttentionParams<F>) -> Result<Tensor<F>> {
    let d = *tokens
        .shape()
        .last()
        .ok_or_else(|| NetError::Config("rank-0 tokens".into()))?;
    params.validate(d)?;
    let mut tape = Tape::new();
    let t = tape.constant(tokens.clone());
    let bound = BoundAttention {
        wq: tape.constant(params.wq.clone()),
        wk: tape.constant(params.wk.clone()),
        wv: tape.constant(params.wv.clone()),
        wo: tape.constant(params.wo.clone()),
        heads: params.heads,
    };
    let out = attention_on_tape(&mut tape, t, &bound)?;
    Ok(tape.value(out).clone())
}
