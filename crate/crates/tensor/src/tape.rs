//! Tape-recorded reverse-mode differentiation over whole tensors.
//!
//! A [`Tape`] owns every intermediate value of one forward evaluation. Each
//! recorded node names its operation and parents, and [`Tape::backward`]
//! walks the tape in reverse, accumulating vector-Jacobian products with the
//! analytic kernels from [`crate::ops`].

use crate::dtype::Scalar;
use crate::error::{Result, TensorError};
use crate::ops::{self, ConvSpec};
use crate::tensor::{inverse_axes, Tensor};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(pub usize);

#[derive(Debug, Clone)]
enum Op<F: Scalar> {
    Leaf { needs_grad: bool },
    Add(ValueId, ValueId),
    Scale(ValueId, F),
    LeakyRelu(ValueId, F),
    Softmax { input: ValueId, axis: usize },
    Linear { input: ValueId, weight: ValueId },
    BatMatMul { a: ValueId, b: ValueId, transpose_b: bool },
    Conv3d { input: ValueId, weight: ValueId, bias: ValueId, spec: ConvSpec },
    ConvTransposed3d { input: ValueId, weight: ValueId, bias: ValueId, spec: ConvSpec },
    LayerNorm { input: ValueId, gamma: ValueId, beta: ValueId, eps: f64 },
    Reshape { input: ValueId },
    Permute { input: ValueId, axes: Vec<usize> },
    SliceLast { input: ValueId, start: usize, len: usize },
    ConcatLast { inputs: Vec<ValueId> },
    MseLoss { pred: ValueId, target: Tensor<F> },
}

impl<F: Scalar> Op<F> {
    fn parents(&self) -> Vec<ValueId> {
        match self {
            Op::Leaf { .. } => vec![],
            Op::Add(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::LeakyRelu(a, _) => vec![*a],
            Op::Softmax { input, .. }
            | Op::Reshape { input }
            | Op::Permute { input, .. }
            | Op::SliceLast { input, .. } => vec![*input],
            Op::Linear { input, weight } => vec![*input, *weight],
            Op::BatMatMul { a, b, .. } => vec![*a, *b],
            Op::Conv3d { input, weight, bias, .. }
            | Op::ConvTransposed3d { input, weight, bias, .. } => vec![*input, *weight, *bias],
            Op::LayerNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::ConcatLast { inputs } => inputs.clone(),
            Op::MseLoss { pred, .. } => vec![*pred],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Softmax { .. } => "softmax",
            Op::Linear { .. } => "linear",
            Op::BatMatMul { .. } => "bat_mat_mul",
            Op::Conv3d { .. } => "conv3d",
            Op::ConvTransposed3d { .. } => "transposed_conv3d",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Reshape { .. } => "reshape",
            Op::Permute { .. } => "permute",
            Op::SliceLast { .. } => "slice_last",
            Op::ConcatLast { .. } => "concat_last",
            Op::MseLoss { .. } => "mse_loss",
        }
    }
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Gradient set produced by one backward sweep, indexed by [`ValueId`].
pub struct Gradients<F: Scalar> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient for `id`, or `None` if nothing flowed into it.
    pub fn get(&self, id: ValueId) -> Option<&Tensor<F>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, materializing zeros of the given shape when absent.
    pub fn take_or_zeros(&mut self, id: ValueId, shape: &[usize]) -> Tensor<F> {
        self.grads
            .get_mut(id.0)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[derive(Default)]
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn op_name(&self, id: ValueId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    /// Hash of the sign pattern at every piecewise-linear activation. Two
    /// evaluations with equal signatures lie in the same linear region of
    /// every `leaky_relu`, which is what finite differencing assumes.
    pub fn activation_signature(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for node in &self.nodes {
            if let Op::LeakyRelu(parent, _) = node.op {
                for &v in self.nodes[parent.0].value.data() {
                    let bit = u64::from(v >= F::zero());
                    hash ^= bit.wrapping_add(0x9e37_79b9_7f4a_7c15);
                    hash = hash.wrapping_mul(0x1000_0000_01b3);
                }
            }
        }
        hash
    }

    fn check(&self, id: ValueId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::UnknownValue(id.0))
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> ValueId {
        let needs_grad = match &op {
            Op::Leaf { needs_grad } => *needs_grad,
            other => other
                .parents()
                .iter()
                .any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        ValueId(self.nodes.len() - 1)
    }

    /// Records a differentiable input (parameter or data).
    pub fn leaf(&mut self, value: Tensor<F>) -> ValueId {
        self.push(value, Op::Leaf { needs_grad: true })
    }

    /// Records an input that never receives a gradient (e.g. network input).
    pub fn constant(&mut self, value: Tensor<F>) -> ValueId {
        self.push(value, Op::Leaf { needs_grad: false })
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: ValueId, c: F) -> Result<ValueId> {
        self.check(a)?;
        let v = self.value(a).scale(c);
        Ok(self.push(v, Op::Scale(a, c)))
    }

    pub fn leaky_relu(&mut self, a: ValueId, slope: F) -> Result<ValueId> {
        self.check(a)?;
        let v = ops::leaky_relu(self.value(a), slope)?;
        Ok(self.push(v, Op::LeakyRelu(a, slope)))
    }

    pub fn softmax(&mut self, input: ValueId, axis: usize) -> Result<ValueId> {
        self.check(input)?;
        let v = ops::softmax(self.value(input), axis)?;
        Ok(self.push(v, Op::Softmax { input, axis }))
    }

    pub fn linear(&mut self, input: ValueId, weight: ValueId) -> Result<ValueId> {
        self.check(input)?;
        self.check(weight)?;
        let v = ops::linear(self.value(input), self.value(weight))?;
        Ok(self.push(v, Op::Linear { input, weight }))
    }

    pub fn bat_mat_mul(&mut self, a: ValueId, b: ValueId, transpose_b: bool) -> Result<ValueId> {
        self.check(a)?;
        self.check(b)?;
        let v = ops::bat_mat_mul(self.value(a), self.value(b), transpose_b)?;
        Ok(self.push(v, Op::BatMatMul { a, b, transpose_b }))
    }

    pub fn conv3d(
        &mut self,
        input: ValueId,
        weight: ValueId,
        bias: ValueId,
        spec: ConvSpec,
    ) -> Result<ValueId> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let v = ops::conv3d(
            self.value(input),
            self.value(weight),
            Some(self.value(bias)),
            &spec,
        )?;
        Ok(self.push(v, Op::Conv3d { input, weight, bias, spec }))
    }

    pub fn conv_transposed3d(
        &mut self,
        input: ValueId,
        weight: ValueId,
        bias: ValueId,
        spec: ConvSpec,
    ) -> Result<ValueId> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let v = ops::transposed_conv3d(
            self.value(input),
            self.value(weight),
            Some(self.value(bias)),
            &spec,
        )?;
        Ok(self.push(v, Op::ConvTransposed3d { input, weight, bias, spec }))
    }

    pub fn layer_norm(
        &mut self,
        input: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: f64,
    ) -> Result<ValueId> {
        self.check(input)?;
        self.check(gamma)?;
        self.check(beta)?;
        let v = ops::layer_norm(self.value(input), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(v, Op::LayerNorm { input, gamma, beta, eps }))
    }

    pub fn reshape(&mut self, input: ValueId, shape: &[usize]) -> Result<ValueId> {
        self.check(input)?;
        let v = self.value(input).reshape(shape)?;
        Ok(self.push(v, Op::Reshape { input }))
    }

    pub fn permute(&mut self, input: ValueId, axes: &[usize]) -> Result<ValueId> {
        self.check(input)?;
        let v = self.value(input).permute(axes)?;
        Ok(self.push(
            v,
            Op::Permute {
                input,
                axes: axes.to_vec(),
            },
        ))
    }

    pub fn slice_last(&mut self, input: ValueId, start: usize, len: usize) -> Result<ValueId> {
        self.check(input)?;
        let v = ops::slice_last(self.value(input), start, len)?;
        Ok(self.push(v, Op::SliceLast { input, start, len }))
    }

    pub fn concat_last(&mut self, inputs: &[ValueId]) -> Result<ValueId> {
        for &id in inputs {
            self.check(id)?;
        }
        let tensors: Vec<&Tensor<F>> = inputs.iter().map(|&id| self.value(id)).collect();
        let v = ops::concat_last(&tensors)?;
        Ok(self.push(
            v,
            Op::ConcatLast {
                inputs: inputs.to_vec(),
            },
        ))
    }

    pub fn mse_loss(&mut self, pred: ValueId, target: Tensor<F>) -> Result<ValueId> {
        self.check(pred)?;
        let v = ops::mse_loss(self.value(pred), &target)?;
        Ok(self.push(v, Op::MseLoss { pred, target }))
    }

    /// Reverse sweep from `output`. `seed` is the upstream gradient; `None`
    /// selects the scalar seed 1 and requires a single-element output.
    pub fn backward(&self, output: ValueId, seed: Option<Tensor<F>>) -> Result<Gradients<F>> {
        self.check(output)?;
        let seed = match seed {
            Some(s) => {
                if s.shape() != self.value(output).shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "backward",
                        expected: self.value(output).shape().to_vec(),
                        got: s.shape().to_vec(),
                    });
                }
                s
            }
            None => {
                if !self.value(output).is_scalar() {
                    return Err(TensorError::InvalidArgument(
                        "backward without a seed needs a scalar output".into(),
                    ));
                }
                Tensor::scalar(F::one())
            }
        };

        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf { .. } => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone())?;
                    self.accumulate(&mut grads, *b, g)?;
                }
                Op::Scale(a, c) => {
                    self.accumulate(&mut grads, *a, g.scale(*c))?;
                }
                Op::LeakyRelu(a, slope) => {
                    let da = ops::leaky_relu_backward(self.value(*a), *slope, &g)?;
                    self.accumulate(&mut grads, *a, da)?;
                }
                Op::Softmax { input, axis } => {
                    let dx = ops::softmax_backward(&node.value, *axis, &g)?;
                    self.accumulate(&mut grads, *input, dx)?;
                }
                Op::Linear { input, weight } => {
                    let (dx, dw) =
                        ops::linear_backward(self.value(*input), self.value(*weight), &g)?;
                    self.accumulate_if_needed(&mut grads, *input, dx)?;
                    self.accumulate_if_needed(&mut grads, *weight, dw)?;
                }
                Op::BatMatMul { a, b, transpose_b } => {
                    let (da, db) = ops::bat_mat_mul_backward(
                        self.value(*a),
                        self.value(*b),
                        *transpose_b,
                        &g,
                    )?;
                    self.accumulate_if_needed(&mut grads, *a, da)?;
                    self.accumulate_if_needed(&mut grads, *b, db)?;
                }
                Op::Conv3d { input, weight, bias, spec } => {
                    let (dx, dw, db) =
                        ops::conv3d_backward(self.value(*input), self.value(*weight), spec, &g)?;
                    self.accumulate_if_needed(&mut grads, *input, dx)?;
                    self.accumulate_if_needed(&mut grads, *weight, dw)?;
                    self.accumulate_if_needed(&mut grads, *bias, db)?;
                }
                Op::ConvTransposed3d { input, weight, bias, spec } => {
                    let (dx, dw, db) = ops::transposed_conv3d_backward(
                        self.value(*input),
                        self.value(*weight),
                        spec,
                        &g,
                    )?;
                    self.accumulate_if_needed(&mut grads, *input, dx)?;
                    self.accumulate_if_needed(&mut grads, *weight, dw)?;
                    self.accumulate_if_needed(&mut grads, *bias, db)?;
                }
                Op::LayerNorm { input, gamma, beta, eps } => {
                    let (dx, dgamma, dbeta) = ops::layer_norm_backward(
                        self.value(*input),
                        self.value(*gamma),
                        *eps,
                        &g,
                    )?;
                    self.accumulate_if_needed(&mut grads, *input, dx)?;
                    self.accumulate_if_needed(&mut grads, *gamma, dgamma)?;
                    self.accumulate_if_needed(&mut grads, *beta, dbeta)?;
                }
                Op::Reshape { input } => {
                    let dx = g.reshape(self.value(*input).shape())?;
                    self.accumulate(&mut grads, *input, dx)?;
                }
                Op::Permute { input, axes } => {
                    let dx = g.permute(&inverse_axes(axes))?;
                    self.accumulate(&mut grads, *input, dx)?;
                }
                Op::SliceLast { input, start, len } => {
                    let src = self.value(*input);
                    let d = *src.shape().last().unwrap();
                    let mut dx = Tensor::zeros(src.shape());
                    for (gi, row) in g
                        .data()
                        .chunks_exact(*len)
                        .zip(dx.data_mut().chunks_exact_mut(d))
                    {
                        row[*start..*start + *len].copy_from_slice(gi);
                    }
                    self.accumulate(&mut grads, *input, dx)?;
                }
                Op::ConcatLast { inputs } => {
                    let total = *node.value.shape().last().unwrap();
                    let mut offset = 0usize;
                    for &src in inputs {
                        let w = *self.value(src).shape().last().unwrap();
                        if self.nodes[src.0].needs_grad {
                            let mut dx = Tensor::zeros(self.value(src).shape());
                            for (grow, drow) in g
                                .data()
                                .chunks_exact(total)
                                .zip(dx.data_mut().chunks_exact_mut(w))
                            {
                                drow.copy_from_slice(&grow[offset..offset + w]);
                            }
                            self.accumulate(&mut grads, src, dx)?;
                        }
                        offset += w;
                    }
                }
                Op::MseLoss { pred, target } => {
                    let dp = ops::mse_loss_backward(self.value(*pred), target, g.item()?)?;
                    self.accumulate(&mut grads, *pred, dp)?;
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor<F>>],
        id: ValueId,
        delta: Tensor<F>,
    ) -> Result<()> {
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => {
                *slot = Some(delta);
                Ok(())
            }
        }
    }

    fn accumulate_if_needed(
        &self,
        grads: &mut [Option<Tensor<F>>],
        id: ValueId,
        delta: Tensor<F>,
    ) -> Result<()> {
        if self.nodes[id.0].needs_grad {
            self.accumulate(grads, id, delta)
        } else {
            Ok(())
        }
    }
}

/// Single-op vector-Jacobian product by operation name. Builds a one-node
/// tape around the named op and seeds the backward pass with `upstream`.
/// The inputs are positional: data inputs first, then parameters in the
/// order the op declares them.
pub fn vjp<F: Scalar>(
    op: &str,
    inputs: &[Tensor<F>],
    upstream: &Tensor<F>,
) -> Result<Vec<Tensor<F>>> {
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let need = |n: usize| -> Result<()> {
        if ids.len() == n {
            Ok(())
        } else {
            Err(TensorError::InvalidArgument(format!(
                "op '{op}' expects {n} inputs, got {}",
                ids.len()
            )))
        }
    };
    let out = match op {
        "add" => {
            need(2)?;
            tape.add(ids[0], ids[1])?
        }
        "leaky_relu" => {
            need(2)?;
            let slope = inputs[1].item()?;
            tape.leaky_relu(ids[0], slope)?
        }
        "softmax" => {
            need(1)?;
            let axis = inputs[0].rank() - 1;
            tape.softmax(ids[0], axis)?
        }
        "linear" => {
            need(2)?;
            tape.linear(ids[0], ids[1])?
        }
        _ => return Err(TensorError::UnregisteredOp(op.to_string())),
    };
    let grads = tape.backward(out, Some(upstream.clone()))?;
    Ok(ids
        .iter()
        .map(|&id| {
            grads
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(id).shape()))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_grad_positive_input() {
        let x = Tensor::new(vec![1], vec![2.0f64]).unwrap();
        let slope = Tensor::scalar(0.1);
        let up = Tensor::new(vec![1], vec![3.5f64]).unwrap();
        let grads = vjp("leaky_relu", &[x, slope], &up).unwrap();
        assert_eq!(grads[0].data(), &[3.5]);
    }

    #[test]
    fn softmax_grad_of_constant_upstream_is_zero() {
        let x = Tensor::new(vec![4], vec![0.3f64, -1.2, 2.0, 0.0]).unwrap();
        let up = Tensor::full(&[4], 1.0);
        let grads = vjp("softmax", &[x], &up).unwrap();
        for &g in grads[0].data() {
            assert!(g.abs() < 1e-15, "shift invariance violated: {g}");
        }
    }

    #[test]
    fn unregistered_op_rejected() {
        let x = Tensor::<f64>::zeros(&[1]);
        let up = Tensor::<f64>::zeros(&[1]);
        assert!(matches!(
            vjp("frobnicate", &[x], &up),
            Err(TensorError::UnregisteredOp(_))
        ));
    }

    #[test]
    fn constant_leaves_receive_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![2], vec![1.0f64, 2.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2], vec![3.0f64, 4.0]).unwrap());
        let s = tape.add(a, b).unwrap();
        let loss = tape.mse_loss(s, Tensor::zeros(&[2])).unwrap();
        let grads = tape.backward(loss, None).unwrap();
        assert!(grads.get(a).is_none());
        assert!(grads.get(b).is_some());
    }
}
