//! Finite-difference verification of the analytic backward passes.
//!
//! A [`TapeProgram`] is anything that can record itself onto a tape from a
//! list of input leaves: a single primitive op or a whole network. The check
//! contracts the program output with a fixed pseudo-random probe vector to a
//! scalar, takes analytic gradients in the program's own precision, and
//! compares against central differences of the same scalar evaluated in
//! 64-bit. Probe weights and sampled points carry at most 20 fractional
//! bits, so an f32 program and its f64 oracle observe identical inputs.

use crate::dtype::Scalar;
use crate::error::{Result, TensorError};
use crate::ops::ConvSpec;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Location of a non-finite intermediate, when that is what failed.
    pub detail: Option<String>,
}

impl GradCheckReport {
    fn failed(op: &str, tolerance: f64, detail: String) -> Self {
        GradCheckReport {
            op: op.to_string(),
            max_rel_err: f64::INFINITY,
            tolerance,
            pass: false,
            detail: Some(detail),
        }
    }
}

/// A differentiable computation expressed as tape construction.
pub trait TapeProgram {
    fn name(&self) -> String;
    fn build<F: Scalar>(&self, tape: &mut Tape<F>, inputs: &[ValueId]) -> Result<ValueId>;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform value in [0,1) with 20 fractional bits (exact in f32 and f64).
fn exact_unit(seed: u64) -> f64 {
    (splitmix(seed) >> 44) as f64 / (1u64 << 20) as f64
}

fn probe_weight(i: usize) -> f64 {
    let z = splitmix(0x5eed ^ (i as u64).wrapping_mul(0x9e37));
    let sign = if z & 1 == 1 { 1.0 } else { -1.0 };
    sign * (0.25 + 0.75 * exact_unit(i as u64 ^ 0xabcd))
}

/// Random tensor with f32-exact entries in [-1, 1).
pub fn sample_tensor<F: Scalar>(shape: &[usize], seed: u64) -> Tensor<F> {
    Tensor::from_fn(shape, |i| {
        F::from_f64(2.0 * exact_unit(seed.wrapping_mul(0x1009).wrapping_add(i as u64)) - 1.0)
    })
}

/// Contracts an arbitrary-shape output against the fixed probe vector,
/// yielding a scalar objective whose gradient exercises every output slot
/// with a distinct weight.
pub fn probe_objective<F: Scalar>(tape: &mut Tape<F>, out: ValueId) -> Result<ValueId> {
    let n = tape.value(out).numel();
    let flat = tape.reshape(out, &[1, n])?;
    let w = Tensor::from_fn(&[n, 1], |i| F::from_f64(probe_weight(i)));
    let w = tape.constant(w);
    let scored = tape.linear(flat, w)?;
    tape.reshape(scored, &[1])
}

fn objective_value<F: Scalar>(prog: &impl TapeProgram, point: &[Tensor<F>]) -> Result<(f64, u64)> {
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = prog.build(&mut tape, &ids)?;
    let obj = probe_objective(&mut tape, out)?;
    Ok((tape.value(obj).item()?.as_f64(), tape.activation_signature()))
}

/// Analytic gradients of the probe objective w.r.t. every input, in the
/// program's own precision.
pub fn analytic_grads<F: Scalar>(
    prog: &impl TapeProgram,
    point: &[Tensor<F>],
) -> Result<(Vec<Tensor<F>>, Option<String>)> {
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = prog.build(&mut tape, &ids)?;
    let obj = probe_objective(&mut tape, out)?;
    for i in 0..tape.len() {
        if !tape.value(ValueId(i)).all_finite() {
            return Ok((
                vec![],
                Some(format!("non-finite forward value at node {i} ({})", tape.op_name(ValueId(i)))),
            ));
        }
    }
    let grads = tape.backward(obj, None)?;
    let mut result = Vec::with_capacity(ids.len());
    for (slot, &id) in ids.iter().enumerate() {
        let g = grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(id).shape()));
        if !g.all_finite() {
            return Ok((vec![], Some(format!("non-finite gradient for input {slot}"))));
        }
        result.push(g);
    }
    Ok((result, None))
}

/// Central-difference gradients of the probe objective, evaluated in 64-bit.
///
/// Each coordinate combines steps `epsilon` and `epsilon/2` (Richardson
/// extrapolation), cancelling the quadratic truncation term. Coordinates
/// whose stencil straddles a kink of a piecewise-linear activation — the
/// activation sign pattern differs between the two sides — are excluded:
/// finite differences are meaningless across a kink. Their indices are
/// reported so the caller can bound the excluded fraction.
pub struct NumericGrads {
    pub grads: Vec<Tensor<f64>>,
    /// (input index, coordinate) pairs excluded over kink crossings.
    pub skipped: Vec<(usize, usize)>,
}

pub fn numeric_grads<F: Scalar>(
    prog: &impl TapeProgram,
    point: &[Tensor<F>],
    epsilon: f64,
) -> Result<NumericGrads> {
    let mut point64: Vec<Tensor<f64>> = point.iter().map(|t| t.cast()).collect();
    let mut grads = Vec::with_capacity(point.len());
    let mut skipped = Vec::new();
    for ti in 0..point.len() {
        let mut grad = Tensor::zeros(point[ti].shape());
        for j in 0..point[ti].numel() {
            let orig = point64[ti].data()[j];
            let eval = |delta: f64, pt: &mut Vec<Tensor<f64>>| -> Result<(f64, u64)> {
                pt[ti].data_mut()[j] = orig + delta;
                objective_value(prog, pt)
            };
            let (fp, sp) = eval(epsilon, &mut point64)?;
            let (fm, sm) = eval(-epsilon, &mut point64)?;
            let (fp2, sp2) = eval(epsilon / 2.0, &mut point64)?;
            let (fm2, sm2) = eval(-epsilon / 2.0, &mut point64)?;
            point64[ti].data_mut()[j] = orig;
            if sp != sm || sp2 != sm2 {
                skipped.push((ti, j));
                grad.data_mut()[j] = f64::NAN; // never compared
                continue;
            }
            let coarse = (fp - fm) / (2.0 * epsilon);
            let fine = (fp2 - fm2) / epsilon;
            grad.data_mut()[j] = (4.0 * fine - coarse) / 3.0;
        }
        grads.push(grad);
    }
    Ok(NumericGrads { grads, skipped })
}

/// Per-coordinate relative comparison with denominator `max(|a|, |b|, 1e-8)`.
/// `skipped` coordinates (kink crossings) are not compared; more than a
/// quarter of them skipped fails the check outright.
pub fn grade(
    op: &str,
    analytic: &[Tensor<f64>],
    numeric: &[Tensor<f64>],
    tolerance: f64,
    skipped: &[(usize, usize)],
) -> GradCheckReport {
    let total: usize = analytic.iter().map(|t| t.numel()).sum();
    if total > 0 && skipped.len() * 4 > total {
        return GradCheckReport::failed(
            op,
            tolerance,
            format!("{} of {} coordinates straddle activation kinks", skipped.len(), total),
        );
    }
    let mut worst = 0.0f64;
    let mut detail = None;
    for (ti, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (j, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            if skipped.contains(&(ti, j)) {
                continue;
            }
            if !av.is_finite() || !nv.is_finite() {
                return GradCheckReport::failed(op, tolerance, "non-finite gradient entry".into());
            }
            let rel = (av - nv).abs() / av.abs().max(nv.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
                if rel > tolerance {
                    detail = Some(format!("analytic {av} vs numeric {nv}"));
                }
            }
        }
    }
    if !skipped.is_empty() && detail.is_none() {
        detail = Some(format!("{} kink-straddling coordinates excluded", skipped.len()));
    }
    GradCheckReport {
        op: op.to_string(),
        max_rel_err: worst,
        tolerance,
        pass: worst <= tolerance,
        detail,
    }
}

/// Compares the analytic backward pass of `prog` against 64-bit central
/// differences at `point`.
pub fn grad_check<F: Scalar>(
    prog: &impl TapeProgram,
    point: &[Tensor<F>],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(TensorError::InvalidArgument(format!(
            "finite-difference step {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    for (i, t) in point.iter().enumerate() {
        if !t.all_finite() {
            return Err(TensorError::InvalidArgument(format!(
                "point tensor {i} contains non-finite values"
            )));
        }
    }
    let (analytic, failure) = analytic_grads(prog, point)?;
    if let Some(detail) = failure {
        return Ok(GradCheckReport::failed(&prog.name(), tolerance, detail));
    }
    let numeric = numeric_grads(prog, point, epsilon)?;
    let analytic64: Vec<Tensor<f64>> = analytic.iter().map(|t| t.cast()).collect();
    Ok(grade(
        &prog.name(),
        &analytic64,
        &numeric.grads,
        tolerance,
        &numeric.skipped,
    ))
}

/// The primitive ops the tape registers, each with a pinned small geometry
/// for checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpProgram {
    Add,
    Scale,
    LeakyRelu,
    Softmax,
    Linear,
    BatMatMul { transpose_b: bool },
    Conv3d,
    ConvTransposed3d,
    LayerNorm,
    Reshape,
    Permute,
    SliceLast,
    ConcatLast,
    MseLoss,
}

impl OpProgram {
    pub fn all() -> Vec<OpProgram> {
        vec![
            OpProgram::Add,
            OpProgram::Scale,
            OpProgram::LeakyRelu,
            OpProgram::Softmax,
            OpProgram::Linear,
            OpProgram::BatMatMul { transpose_b: false },
            OpProgram::BatMatMul { transpose_b: true },
            OpProgram::Conv3d,
            OpProgram::ConvTransposed3d,
            OpProgram::LayerNorm,
            OpProgram::Reshape,
            OpProgram::Permute,
            OpProgram::SliceLast,
            OpProgram::ConcatLast,
            OpProgram::MseLoss,
        ]
    }

    fn conv_spec() -> ConvSpec {
        ConvSpec::new([2, 3, 3], [1, 2, 1], [1, 1, 1], 2, 3).unwrap()
    }

    /// Input tensors for this op at its pinned geometry.
    pub fn sample_point<F: Scalar>(&self, seed: u64) -> Vec<Tensor<F>> {
        let s = |k: u64| seed.wrapping_mul(31).wrapping_add(k);
        match self {
            OpProgram::Add => vec![sample_tensor(&[3, 4], s(1)), sample_tensor(&[3, 4], s(2))],
            OpProgram::Scale | OpProgram::LeakyRelu | OpProgram::Reshape => {
                vec![sample_tensor(&[3, 4], s(1))]
            }
            OpProgram::Softmax => vec![sample_tensor(&[3, 5], s(1))],
            OpProgram::Linear => vec![sample_tensor(&[3, 4], s(1)), sample_tensor(&[4, 2], s(2))],
            OpProgram::BatMatMul { transpose_b: false } => {
                vec![sample_tensor(&[2, 3, 4], s(1)), sample_tensor(&[2, 4, 2], s(2))]
            }
            OpProgram::BatMatMul { transpose_b: true } => {
                vec![sample_tensor(&[2, 3, 4], s(1)), sample_tensor(&[2, 2, 4], s(2))]
            }
            OpProgram::Conv3d => vec![
                sample_tensor(&[2, 3, 4, 2], s(1)),
                sample_tensor(&[2, 3, 3, 2, 3], s(2)),
                sample_tensor(&[3], s(3)),
            ],
            OpProgram::ConvTransposed3d => vec![
                sample_tensor(&[2, 2, 4, 3], s(1)),
                sample_tensor(&[2, 3, 3, 2, 3], s(2)),
                sample_tensor(&[2], s(3)),
            ],
            OpProgram::LayerNorm => vec![
                sample_tensor(&[4, 3], s(1)),
                sample_tensor(&[3], s(2)),
                sample_tensor(&[3], s(3)),
            ],
            OpProgram::Permute => vec![sample_tensor(&[2, 3, 4], s(1))],
            OpProgram::SliceLast => vec![sample_tensor(&[3, 6], s(1))],
            OpProgram::ConcatLast => {
                vec![sample_tensor(&[3, 2], s(1)), sample_tensor(&[3, 4], s(2))]
            }
            OpProgram::MseLoss => vec![sample_tensor(&[3, 4], s(1))],
        }
    }
}

impl TapeProgram for OpProgram {
    fn name(&self) -> String {
        match self {
            OpProgram::Add => "add".into(),
            OpProgram::Scale => "scale".into(),
            OpProgram::LeakyRelu => "leaky_relu".into(),
            OpProgram::Softmax => "softmax".into(),
            OpProgram::Linear => "linear".into(),
            OpProgram::BatMatMul { transpose_b } => format!("bat_mat_mul(t={transpose_b})"),
            OpProgram::Conv3d => "conv3d".into(),
            OpProgram::ConvTransposed3d => "transposed_conv3d".into(),
            OpProgram::LayerNorm => "layer_norm".into(),
            OpProgram::Reshape => "reshape".into(),
            OpProgram::Permute => "permute".into(),
            OpProgram::SliceLast => "slice_last".into(),
            OpProgram::ConcatLast => "concat_last".into(),
            OpProgram::MseLoss => "mse_loss".into(),
        }
    }

    fn build<F: Scalar>(&self, tape: &mut Tape<F>, inputs: &[ValueId]) -> Result<ValueId> {
        match self {
            OpProgram::Add => tape.add(inputs[0], inputs[1]),
            OpProgram::Scale => tape.scale(inputs[0], F::from_f64(1.75)),
            OpProgram::LeakyRelu => tape.leaky_relu(inputs[0], F::from_f64(0.125)),
            OpProgram::Softmax => tape.softmax(inputs[0], 1),
            OpProgram::Linear => tape.linear(inputs[0], inputs[1]),
            OpProgram::BatMatMul { transpose_b } => {
                tape.bat_mat_mul(inputs[0], inputs[1], *transpose_b)
            }
            OpProgram::Conv3d => tape.conv3d(inputs[0], inputs[1], inputs[2], Self::conv_spec()),
            OpProgram::ConvTransposed3d => {
                tape.conv_transposed3d(inputs[0], inputs[1], inputs[2], Self::conv_spec())
            }
            OpProgram::LayerNorm => tape.layer_norm(inputs[0], inputs[1], inputs[2], 1e-5),
            OpProgram::Reshape => tape.reshape(inputs[0], &[2, 6]),
            OpProgram::Permute => tape.permute(inputs[0], &[2, 0, 1]),
            OpProgram::SliceLast => tape.slice_last(inputs[0], 1, 3),
            OpProgram::ConcatLast => tape.concat_last(&[inputs[0], inputs[1]]),
            OpProgram::MseLoss => {
                let target = sample_tensor::<F>(tape.value(inputs[0]).shape(), 0x7a47);
                tape.mse_loss(inputs[0], target)
            }
        }
    }
}
