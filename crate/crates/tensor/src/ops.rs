//! Forward and backward kernels for the ops the tape records.
//!
//! Everything here is a pure function: same inputs give bitwise-identical
//! outputs. Reductions run in a fixed order, so results do not depend on
//! thread count (there are no threads in these kernels). All reduction
//! accumulators are 64-bit regardless of the element type; f32 tensors only
//! round once per stored element, which keeps the 32-bit backward passes
//! within the gradient-check tolerances even on cancelling sums.

use crate::dtype::Scalar;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Geometry of a 3D convolution. `kernel`, `stride` and `padding` are ordered
/// `(t, h, w)`. The same spec drives `conv3d` and its adjoint
/// `transposed_conv3d`; for the transposed direction `in_channels` is the
/// output channel count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        for d in 0..3 {
            if kernel[d] == 0 || stride[d] == 0 {
                return Err(TensorError::InvalidConvSpec(format!(
                    "kernel and stride extents must be >= 1, got kernel {:?} stride {:?}",
                    kernel, stride
                )));
            }
            if padding[d] >= kernel[d] {
                return Err(TensorError::InvalidConvSpec(format!(
                    "padding {:?} must be smaller than kernel {:?}",
                    padding, kernel
                )));
            }
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(TensorError::InvalidConvSpec(
                "channel counts must be >= 1".into(),
            ));
        }
        Ok(ConvSpec {
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
        })
    }

    /// Output extents of the forward convolution:
    /// `floor((in + 2 pad - kernel) / stride) + 1` per axis.
    pub fn out_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0usize; 3];
        for d in 0..3 {
            let padded = input[d] + 2 * self.padding[d];
            if padded < self.kernel[d] {
                return Err(TensorError::IncompatibleDims {
                    op: "conv3d",
                    detail: format!(
                        "input extent {} + padding too small for kernel {}",
                        input[d], self.kernel[d]
                    ),
                });
            }
            out[d] = (padded - self.kernel[d]) / self.stride[d] + 1;
        }
        Ok(out)
    }

    /// Output extents of the transposed convolution:
    /// `(in - 1) * stride + kernel - 2 pad + (stride - 1)` per axis. The
    /// implicit output padding of `stride - 1` makes a stride-2 / kernel-3 /
    /// pad-1 layer exactly double even extents, and the forward formula maps
    /// the result back onto the transposed input extents for any input.
    pub fn transposed_out_extents(&self, input: [usize; 3]) -> [usize; 3] {
        let mut out = [0usize; 3];
        for d in 0..3 {
            out[d] = (input[d] - 1) * self.stride[d] + self.kernel[d] + (self.stride[d] - 1)
                - 2 * self.padding[d];
        }
        out
    }
}

fn expect_4d<F: Scalar>(t: &Tensor<F>, op: &'static str) -> Result<[usize; 4]> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(TensorError::IncompatibleDims {
            op,
            detail: format!("expected a rank-4 [T,H,W,C] tensor, got shape {:?}", s),
        });
    }
    Ok([s[0], s[1], s[2], s[3]])
}

fn check_weight<F: Scalar>(w: &Tensor<F>, spec: &ConvSpec, op: &'static str) -> Result<()> {
    let expected = vec![
        spec.kernel[0],
        spec.kernel[1],
        spec.kernel[2],
        spec.in_channels,
        spec.out_channels,
    ];
    if w.shape() != expected.as_slice() {
        return Err(TensorError::ShapeMismatch {
            op,
            expected,
            got: w.shape().to_vec(),
        });
    }
    Ok(())
}

fn store<F: Scalar>(shape: Vec<usize>, acc: Vec<f64>) -> Result<Tensor<F>> {
    Tensor::new(shape, acc.into_iter().map(F::from_f64).collect())
}

/// Iterates the aligned (output voxel, input voxel, kernel voxel) triples of
/// a 3D convolution; indices are channel-free row-major offsets.
#[inline(always)]
fn for_each_alignment(
    in_ext: [usize; 3],
    out_ext: [usize; 3],
    spec: &ConvSpec,
    mut body: impl FnMut(usize, usize, usize),
) {
    let [ti, hi, wi] = in_ext;
    let [to, ho, wo] = out_ext;
    let [kt, kh, kw] = spec.kernel;
    let [st, sh, sw] = spec.stride;
    let [pt, ph, pw] = spec.padding;
    for ot in 0..to {
        for dt in 0..kt {
            let it = (ot * st + dt) as isize - pt as isize;
            if it < 0 || it >= ti as isize {
                continue;
            }
            let it = it as usize;
            for oh in 0..ho {
                for dh in 0..kh {
                    let ih = (oh * sh + dh) as isize - ph as isize;
                    if ih < 0 || ih >= hi as isize {
                        continue;
                    }
                    let ih = ih as usize;
                    for ow in 0..wo {
                        let out_voxel = (ot * ho + oh) * wo + ow;
                        let k_row = (dt * kh + dh) * kw;
                        for dw in 0..kw {
                            let iw = (ow * sw + dw) as isize - pw as isize;
                            if iw < 0 || iw >= wi as isize {
                                continue;
                            }
                            let iw = iw as usize;
                            let in_voxel = (it * hi + ih) * wi + iw;
                            body(out_voxel, in_voxel, k_row + dw);
                        }
                    }
                }
            }
        }
    }
}

/// 3D cross-correlation over `[T,H,W,Cin]` with weights `[kt,kh,kw,Cin,Cout]`
/// and zero padding.
pub fn conv3d<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    let [ti, hi, wi, ci] = expect_4d(input, "conv3d")?;
    check_weight(weight, spec, "conv3d")?;
    if ci != spec.in_channels {
        return Err(TensorError::IncompatibleDims {
            op: "conv3d",
            detail: format!(
                "input has {} channels, spec expects {}",
                ci, spec.in_channels
            ),
        });
    }
    let co = spec.out_channels;
    if let Some(b) = bias {
        if b.shape() != [co] {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                expected: vec![co],
                got: b.shape().to_vec(),
            });
        }
    }
    let [to, ho, wo] = spec.out_extents([ti, hi, wi])?;
    let mut out = vec![0.0f64; to * ho * wo * co];
    if let Some(b) = bias {
        let b64: Vec<f64> = b.data().iter().map(|v| v.as_f64()).collect();
        for row in out.chunks_exact_mut(co) {
            row.copy_from_slice(&b64);
        }
    }
    let x = input.data();
    let w = weight.data();
    for_each_alignment([ti, hi, wi], [to, ho, wo], spec, |ov, iv, kv| {
        let out_base = ov * co;
        let in_base = iv * ci;
        let w_base = kv * ci * co;
        let orow = &mut out[out_base..out_base + co];
        for c_in in 0..ci {
            let v = x[in_base + c_in].as_f64();
            if v == 0.0 {
                continue;
            }
            let wrow = &w[w_base + c_in * co..w_base + c_in * co + co];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += v * wv.as_f64();
            }
        }
    });
    store(vec![to, ho, wo, co], out)
}

/// Adjoint of `conv3d` in its image space: scatters `g` `[To,Ho,Wo,Cout]`
/// back onto an input-shaped tensor with the given extents. Contributions
/// that fall outside the target extents are dropped, mirroring the zeros the
/// forward pass reads from the padding.
fn conv3d_adjoint<F: Scalar>(
    g: &Tensor<F>,
    weight: &Tensor<F>,
    spec: &ConvSpec,
    target: [usize; 3],
) -> Result<Tensor<F>> {
    let [to, ho, wo, co] = expect_4d(g, "conv3d_adjoint")?;
    check_weight(weight, spec, "conv3d_adjoint")?;
    if co != spec.out_channels {
        return Err(TensorError::IncompatibleDims {
            op: "conv3d_adjoint",
            detail: format!(
                "gradient has {} channels, spec expects {}",
                co, spec.out_channels
            ),
        });
    }
    let [ti, hi, wi] = target;
    let ci = spec.in_channels;
    let mut out = vec![0.0f64; ti * hi * wi * ci];
    let gd = g.data();
    // transpose each kernel tap to [co, ci] once so the inner accumulation
    // runs along contiguous input channels (a vectorizable axpy) instead of
    // a serial dot
    let w = weight.data();
    let k_taps = spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
    let mut wt = vec![0.0f64; k_taps * co * ci];
    for k in 0..k_taps {
        for c_in in 0..ci {
            for c_out in 0..co {
                wt[(k * co + c_out) * ci + c_in] = w[(k * ci + c_in) * co + c_out].as_f64();
            }
        }
    }
    for_each_alignment([ti, hi, wi], [to, ho, wo], spec, |ov, iv, kv| {
        let g_base = ov * co;
        let in_base = iv * ci;
        let orow = &mut out[in_base..in_base + ci];
        for c_out in 0..co {
            let gv = gd[g_base + c_out].as_f64();
            if gv == 0.0 {
                continue;
            }
            let wrow = &wt[(kv * co + c_out) * ci..(kv * co + c_out) * ci + ci];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += gv * wv;
            }
        }
    });
    store(vec![ti, hi, wi, ci], out)
}

/// Weight gradient shared by the forward and transposed convolutions:
/// `dw[k,ci,co] = sum over aligned positions of x[i,ci] * g[o,co]` where
/// `i = o * stride - pad + k`. `x` is the tensor on the input side of the
/// forward conv, `g` the one on its output side.
fn conv3d_weight_grad<F: Scalar>(
    x_side: &Tensor<F>,
    g_side: &Tensor<F>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    let [ti, hi, wi, ci] = expect_4d(x_side, "conv3d_weight_grad")?;
    let [to, ho, wo, co] = expect_4d(g_side, "conv3d_weight_grad")?;
    let [kt, kh, kw] = spec.kernel;
    let mut dw = vec![0.0f64; kt * kh * kw * ci * co];
    let x = x_side.data();
    let g = g_side.data();
    for_each_alignment([ti, hi, wi], [to, ho, wo], spec, |ov, iv, kv| {
        let g_base = ov * co;
        let in_base = iv * ci;
        let w_base = kv * ci * co;
        let grow = &g[g_base..g_base + co];
        for c_in in 0..ci {
            let v = x[in_base + c_in].as_f64();
            if v == 0.0 {
                continue;
            }
            let wrow = &mut dw[w_base + c_in * co..w_base + c_in * co + co];
            for (d, &gv) in wrow.iter_mut().zip(grow) {
                *d += v * gv.as_f64();
            }
        }
    });
    store(vec![kt, kh, kw, ci, co], dw)
}

fn channel_sum<F: Scalar>(t: &Tensor<F>, channels: usize) -> Result<Tensor<F>> {
    let mut out = vec![0.0f64; channels];
    for row in t.data().chunks_exact(channels) {
        for (d, &gv) in out.iter_mut().zip(row) {
            *d += gv.as_f64();
        }
    }
    store(vec![channels], out)
}

/// Gradients of `conv3d` w.r.t. input, weight and bias.
pub fn conv3d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    spec: &ConvSpec,
    upstream: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let [ti, hi, wi, _] = expect_4d(input, "conv3d_backward")?;
    let [to, ho, wo, co] = expect_4d(upstream, "conv3d_backward")?;
    let expect = spec.out_extents([ti, hi, wi])?;
    if [to, ho, wo] != expect || co != spec.out_channels {
        return Err(TensorError::ShapeMismatch {
            op: "conv3d_backward",
            expected: vec![expect[0], expect[1], expect[2], spec.out_channels],
            got: upstream.shape().to_vec(),
        });
    }
    let d_input = conv3d_adjoint(upstream, weight, spec, [ti, hi, wi])?;
    let dw = conv3d_weight_grad(input, upstream, spec)?;
    let db = channel_sum(upstream, co)?;
    Ok((d_input, dw, db))
}

/// Transposed 3D convolution: the adjoint map of `conv3d` under the same spec
/// and weights. Input carries `out_channels` channels, output carries
/// `in_channels`. `bias`, if given, has `in_channels` entries.
pub fn transposed_conv3d<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    let [ti, hi, wi, _] = expect_4d(input, "transposed_conv3d")?;
    let target = spec.transposed_out_extents([ti, hi, wi]);
    let mut out = conv3d_adjoint(input, weight, spec, target)?;
    if let Some(b) = bias {
        let ci = spec.in_channels;
        if b.shape() != [ci] {
            return Err(TensorError::ShapeMismatch {
                op: "transposed_conv3d",
                expected: vec![ci],
                got: b.shape().to_vec(),
            });
        }
        for row in out.data_mut().chunks_exact_mut(ci) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o = *o + bv;
            }
        }
    }
    Ok(out)
}

/// Gradients of `transposed_conv3d` w.r.t. input, weight and bias.
pub fn transposed_conv3d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    spec: &ConvSpec,
    upstream: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    // The forward map is linear with matrix Phi^T, so the input gradient is
    // the forward convolution of the upstream gradient.
    let d_input = conv3d(upstream, weight, None, spec)?;
    if d_input.shape() != input.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "transposed_conv3d_backward",
            expected: input.shape().to_vec(),
            got: d_input.shape().to_vec(),
        });
    }
    // Upstream sits on the conv input side of the pairing, the layer input on
    // its output side.
    let dw = conv3d_weight_grad(upstream, input, spec)?;
    let db = channel_sum(upstream, spec.in_channels)?;
    Ok((d_input, dw, db))
}

/// Elementwise `x if x >= 0 else slope * x`.
pub fn leaky_relu<F: Scalar>(input: &Tensor<F>, slope: F) -> Result<Tensor<F>> {
    let zero = F::zero();
    if slope <= zero || slope >= F::one() {
        return Err(TensorError::InvalidArgument(format!(
            "leaky_relu slope must lie in (0,1), got {}",
            slope
        )));
    }
    Ok(input.map(|v| if v >= zero { v } else { slope * v }))
}

pub fn leaky_relu_backward<F: Scalar>(
    input: &Tensor<F>,
    slope: F,
    upstream: &Tensor<F>,
) -> Result<Tensor<F>> {
    upstream.zip_map(input, "leaky_relu_backward", |g, x| {
        if x >= F::zero() {
            g
        } else {
            g * slope
        }
    })
}

fn axis_geometry(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::AxisOutOfRange {
            axis,
            rank: shape.len(),
        });
    }
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, len, inner))
}

/// Numerically-stable softmax along `axis` (max subtraction before exp).
pub fn softmax<F: Scalar>(input: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    let (outer, len, inner) = axis_geometry(input.shape(), axis)?;
    let x = input.data();
    let mut out = vec![F::zero(); x.len()];
    let mut line = vec![0.0f64; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut m = f64::NEG_INFINITY;
            for l in 0..len {
                let v = x[base + l * inner].as_f64();
                if v > m {
                    m = v;
                }
            }
            let mut sum = 0.0f64;
            for l in 0..len {
                let e = (x[base + l * inner].as_f64() - m).exp();
                line[l] = e;
                sum += e;
            }
            for l in 0..len {
                out[base + l * inner] = F::from_f64(line[l] / sum);
            }
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Softmax gradient from the forward output: `y * (g - sum(g * y))` per line.
pub fn softmax_backward<F: Scalar>(
    output: &Tensor<F>,
    axis: usize,
    upstream: &Tensor<F>,
) -> Result<Tensor<F>> {
    if output.shape() != upstream.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_backward",
            expected: output.shape().to_vec(),
            got: upstream.shape().to_vec(),
        });
    }
    let (outer, len, inner) = axis_geometry(output.shape(), axis)?;
    let y = output.data();
    let g = upstream.data();
    let mut out = vec![F::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut dot = 0.0f64;
            for l in 0..len {
                let k = base + l * inner;
                dot += g[k].as_f64() * y[k].as_f64();
            }
            for l in 0..len {
                let k = base + l * inner;
                out[k] = F::from_f64(y[k].as_f64() * (g[k].as_f64() - dot));
            }
        }
    }
    Tensor::new(output.shape().to_vec(), out)
}

fn linear_dims<F: Scalar>(input: &Tensor<F>, weight: &Tensor<F>) -> Result<(usize, usize, usize)> {
    if weight.rank() != 2 || input.rank() == 0 {
        return Err(TensorError::IncompatibleDims {
            op: "linear",
            detail: format!(
                "need input [..., d] and weight [d, e], got {:?} and {:?}",
                input.shape(),
                weight.shape()
            ),
        });
    }
    let d = *input.shape().last().unwrap();
    if weight.shape()[0] != d {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            expected: vec![d, weight.shape()[1]],
            got: weight.shape().to_vec(),
        });
    }
    Ok((input.numel() / d, d, weight.shape()[1]))
}

/// `input [..., d] x weight [d, e] -> [..., e]`. Houses the attention
/// projections (Q = X W^Q and friends).
pub fn linear<F: Scalar>(input: &Tensor<F>, weight: &Tensor<F>) -> Result<Tensor<F>> {
    let (n, d, e) = linear_dims(input, weight)?;
    let x = input.data();
    let w = weight.data();
    let mut out = vec![0.0f64; n * e];
    for i in 0..n {
        let orow = &mut out[i * e..(i + 1) * e];
        for k in 0..d {
            let v = x[i * d + k].as_f64();
            if v == 0.0 {
                continue;
            }
            let wrow = &w[k * e..(k + 1) * e];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += v * wv.as_f64();
            }
        }
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = e;
    store(shape, out)
}

pub fn linear_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    upstream: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let (n, d, e) = linear_dims(input, weight)?;
    if upstream.numel() != n * e {
        return Err(TensorError::ShapeMismatch {
            op: "linear_backward",
            expected: vec![n, e],
            got: upstream.shape().to_vec(),
        });
    }
    let x = input.data();
    let w = weight.data();
    let g = upstream.data();
    let mut dx = vec![0.0f64; n * d];
    let mut dw = vec![0.0f64; d * e];
    for i in 0..n {
        let grow = &g[i * e..(i + 1) * e];
        for k in 0..d {
            let wrow = &w[k * e..(k + 1) * e];
            let mut acc = 0.0f64;
            for (&gv, &wv) in grow.iter().zip(wrow) {
                acc += gv.as_f64() * wv.as_f64();
            }
            dx[i * d + k] = acc;
            let v = x[i * d + k].as_f64();
            if v == 0.0 {
                continue;
            }
            let dwrow = &mut dw[k * e..(k + 1) * e];
            for (dwv, &gv) in dwrow.iter_mut().zip(grow) {
                *dwv += v * gv.as_f64();
            }
        }
    }
    Ok((
        store(input.shape().to_vec(), dx)?,
        store(weight.shape().to_vec(), dw)?,
    ))
}

fn bmm_dims<F: Scalar>(
    a: &Tensor<F>,
    b: &Tensor<F>,
    transpose_b: bool,
) -> Result<(usize, usize, usize, usize)> {
    if a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] {
        return Err(TensorError::IncompatibleDims {
            op: "bat_mat_mul",
            detail: format!(
                "need [B,m,k] x [B,k,n], got {:?} and {:?}",
                a.shape(),
                b.shape()
            ),
        });
    }
    let (batch, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let (bk, n) = if transpose_b {
        (b.shape()[2], b.shape()[1])
    } else {
        (b.shape()[1], b.shape()[2])
    };
    if bk != k {
        return Err(TensorError::IncompatibleDims {
            op: "bat_mat_mul",
            detail: format!(
                "inner extents disagree: {:?} x {:?} (transpose_b {})",
                a.shape(),
                b.shape(),
                transpose_b
            ),
        });
    }
    Ok((batch, m, k, n))
}

/// Batched matrix product `[B,m,k] x [B,k,n] -> [B,m,n]`; with `transpose_b`
/// the right factor is `[B,n,k]` (used for the Q K^T score matrix).
pub fn bat_mat_mul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, transpose_b: bool) -> Result<Tensor<F>> {
    let (batch, m, k, n) = bmm_dims(a, b, transpose_b)?;
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0f64; batch * m * n];
    for bi in 0..batch {
        let abase = bi * m * k;
        let bbase = bi * k * n; // same element count either orientation
        let obase = bi * m * n;
        if transpose_b {
            for i in 0..m {
                let arow = &ad[abase + i * k..abase + (i + 1) * k];
                for j in 0..n {
                    let brow = &bd[bbase + j * k..bbase + (j + 1) * k];
                    let mut acc = 0.0f64;
                    for (&av, &bv) in arow.iter().zip(brow) {
                        acc += av.as_f64() * bv.as_f64();
                    }
                    out[obase + i * n + j] = acc;
                }
            }
        } else {
            for i in 0..m {
                let orow = &mut out[obase + i * n..obase + (i + 1) * n];
                for kk in 0..k {
                    let v = ad[abase + i * k + kk].as_f64();
                    if v == 0.0 {
                        continue;
                    }
                    let brow = &bd[bbase + kk * n..bbase + (kk + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += v * bv.as_f64();
                    }
                }
            }
        }
    }
    store(vec![batch, m, n], out)
}

pub fn bat_mat_mul_backward<F: Scalar>(
    a: &Tensor<F>,
    b: &Tensor<F>,
    transpose_b: bool,
    upstream: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let (batch, m, _, n) = bmm_dims(a, b, transpose_b)?;
    if upstream.shape() != [batch, m, n] {
        return Err(TensorError::ShapeMismatch {
            op: "bat_mat_mul_backward",
            expected: vec![batch, m, n],
            got: upstream.shape().to_vec(),
        });
    }
    if transpose_b {
        // c = a b^T: da = g b, db = g^T a
        let da = bat_mat_mul(upstream, b, false)?;
        let gt = upstream.permute(&[0, 2, 1])?;
        let db = bat_mat_mul(&gt, a, false)?;
        Ok((da, db))
    } else {
        // c = a b: da = g b^T, db = a^T g
        let da = bat_mat_mul(upstream, b, true)?;
        let at = a.permute(&[0, 2, 1])?;
        let db = bat_mat_mul(&at, upstream, false)?;
        Ok((da, db))
    }
}

/// Per-row normalization over the last axis with learned scale and shift:
/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn layer_norm<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    eps: f64,
) -> Result<Tensor<F>> {
    let d = *input.shape().last().ok_or(TensorError::IncompatibleDims {
        op: "layer_norm",
        detail: "rank-0 input".into(),
    })?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(TensorError::ShapeMismatch {
            op: "layer_norm",
            expected: vec![d],
            got: gamma.shape().to_vec(),
        });
    }
    let inv_d = 1.0 / d as f64;
    let x = input.data();
    let g = gamma.data();
    let b = beta.data();
    let mut out = vec![F::zero(); x.len()];
    for (row, orow) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let mut mean = 0.0f64;
        for &v in row {
            mean += v.as_f64();
        }
        mean *= inv_d;
        let mut var = 0.0f64;
        for &v in row {
            let c = v.as_f64() - mean;
            var += c * c;
        }
        var *= inv_d;
        let inv_std = 1.0 / (var + eps).sqrt();
        for i in 0..d {
            orow[i] =
                F::from_f64(g[i].as_f64() * (row[i].as_f64() - mean) * inv_std + b[i].as_f64());
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

pub fn layer_norm_backward<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    eps: f64,
    upstream: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let d = *input.shape().last().unwrap();
    if upstream.shape() != input.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "layer_norm_backward",
            expected: input.shape().to_vec(),
            got: upstream.shape().to_vec(),
        });
    }
    let inv_d = 1.0 / d as f64;
    let x = input.data();
    let g = gamma.data();
    let u = upstream.data();
    let mut dx = vec![0.0f64; x.len()];
    let mut dgamma = vec![0.0f64; d];
    let mut dbeta = vec![0.0f64; d];
    let mut xhat = vec![0.0f64; d];
    for (r, (row, urow)) in x.chunks_exact(d).zip(u.chunks_exact(d)).enumerate() {
        let mut mean = 0.0f64;
        for &v in row {
            mean += v.as_f64();
        }
        mean *= inv_d;
        let mut var = 0.0f64;
        for &v in row {
            let c = v.as_f64() - mean;
            var += c * c;
        }
        var *= inv_d;
        let inv_std = 1.0 / (var + eps).sqrt();
        let mut mean_gh = 0.0f64;
        let mut mean_gh_xhat = 0.0f64;
        for i in 0..d {
            xhat[i] = (row[i].as_f64() - mean) * inv_std;
            let gh = urow[i].as_f64() * g[i].as_f64();
            mean_gh += gh;
            mean_gh_xhat += gh * xhat[i];
            dgamma[i] += urow[i].as_f64() * xhat[i];
            dbeta[i] += urow[i].as_f64();
        }
        mean_gh *= inv_d;
        mean_gh_xhat *= inv_d;
        let base = r * d;
        for i in 0..d {
            let gh = urow[i].as_f64() * g[i].as_f64();
            dx[base + i] = (gh - mean_gh - xhat[i] * mean_gh_xhat) * inv_std;
        }
    }
    Ok((
        store(input.shape().to_vec(), dx)?,
        store(vec![d], dgamma)?,
        store(vec![d], dbeta)?,
    ))
}

/// Mean squared error over all elements, returned as a `[1]` tensor.
pub fn mse_loss<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<Tensor<F>> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "mse_loss",
            expected: target.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    let mut acc = 0.0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.as_f64() - t.as_f64();
        acc += d * d;
    }
    Ok(Tensor::scalar(F::from_f64(acc / pred.numel() as f64)))
}

pub fn mse_loss_backward<F: Scalar>(
    pred: &Tensor<F>,
    target: &Tensor<F>,
    upstream: F,
) -> Result<Tensor<F>> {
    let scale = F::from_f64(upstream.as_f64() * 2.0 / pred.numel() as f64);
    pred.zip_map(target, "mse_loss_backward", |p, t| (p - t) * scale)
}

/// Slices `[start, start+len)` of the last axis.
pub fn slice_last<F: Scalar>(input: &Tensor<F>, start: usize, len: usize) -> Result<Tensor<F>> {
    let d = *input.shape().last().ok_or(TensorError::IncompatibleDims {
        op: "slice_last",
        detail: "rank-0 input".into(),
    })?;
    if start + len > d || len == 0 {
        return Err(TensorError::InvalidArgument(format!(
            "slice [{start}, {}) out of last axis extent {d}",
            start + len
        )));
    }
    let rows = input.numel() / d;
    let mut out = Vec::with_capacity(rows * len);
    for row in input.data().chunks_exact(d) {
        out.extend_from_slice(&row[start..start + len]);
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = len;
    Tensor::new(shape, out)
}

/// Concatenates along the last axis; all inputs must agree on leading extents.
pub fn concat_last<F: Scalar>(inputs: &[&Tensor<F>]) -> Result<Tensor<F>> {
    if inputs.is_empty() {
        return Err(TensorError::InvalidArgument("concat of zero tensors".into()));
    }
    let lead = &inputs[0].shape()[..inputs[0].rank() - 1];
    let mut widths = Vec::with_capacity(inputs.len());
    for t in inputs {
        if &t.shape()[..t.rank() - 1] != lead {
            return Err(TensorError::ShapeMismatch {
                op: "concat_last",
                expected: lead.to_vec(),
                got: t.shape().to_vec(),
            });
        }
        widths.push(*t.shape().last().unwrap());
    }
    let total: usize = widths.iter().sum();
    let rows: usize = lead.iter().product();
    let mut out = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (t, &w) in inputs.iter().zip(&widths) {
            out.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        ci: usize,
        co: usize,
    ) -> ConvSpec {
        ConvSpec::new(kernel, stride, padding, ci, co).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 3, 1], |i| i as f64 * 0.5 - 2.0);
        let w = Tensor::new(vec![1, 1, 1, 1, 1], vec![1.0]).unwrap();
        let s = spec([1, 1, 1], [1, 1, 1], [0, 0, 0], 1, 1);
        let y = conv3d(&x, &w, None, &s).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_all_ones_on_constant() {
        // all-ones 1x3x3 kernel, stride 1, pad 1 on a constant 1x4x4 plane:
        // interior sums 9c, corners 4c.
        let c = 0.37;
        let x = Tensor::<f64>::full(&[1, 4, 4, 1], c);
        let w = Tensor::full(&[1, 3, 3, 1, 1], 1.0);
        let s = spec([1, 3, 3], [1, 1, 1], [0, 1, 1], 1, 1);
        let y = conv3d(&x, &w, None, &s).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 1]);
        let at = |h: usize, wd: usize| y.data()[h * 4 + wd];
        assert!((at(1, 1) - 9.0 * c).abs() < 1e-12);
        assert!((at(2, 2) - 9.0 * c).abs() < 1e-12);
        assert!((at(0, 0) - 4.0 * c).abs() < 1e-12);
        assert!((at(3, 3) - 4.0 * c).abs() < 1e-12);
        assert!((at(0, 1) - 6.0 * c).abs() < 1e-12);
    }

    // Direct sextuple-loop reference used to pin conv3d; deliberately written
    // without any of the production loop structure.
    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, s: &ConvSpec) -> Tensor<f64> {
        let [ti, hi, wi, ci] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [to, ho, wo] = s.out_extents([ti, hi, wi]).unwrap();
        let co = s.out_channels;
        let mut out = Tensor::zeros(&[to, ho, wo, co]);
        for ot in 0..to {
            for oh in 0..ho {
                for ow in 0..wo {
                    for oc in 0..co {
                        let mut acc = 0.0;
                        for dt in 0..s.kernel[0] {
                            for dh in 0..s.kernel[1] {
                                for dw in 0..s.kernel[2] {
                                    let it =
                                        (ot * s.stride[0] + dt) as isize - s.padding[0] as isize;
                                    let ih =
                                        (oh * s.stride[1] + dh) as isize - s.padding[1] as isize;
                                    let iw =
                                        (ow * s.stride[2] + dw) as isize - s.padding[2] as isize;
                                    if it < 0 || ih < 0 || iw < 0 {
                                        continue;
                                    }
                                    let (it, ih, iw) = (it as usize, ih as usize, iw as usize);
                                    if it >= ti || ih >= hi || iw >= wi {
                                        continue;
                                    }
                                    for ic in 0..ci {
                                        let xv = x.data()[((it * hi + ih) * wi + iw) * ci + ic];
                                        let wv = w.data()[((((dt * s.kernel[1] + dh) * s.kernel[2]
                                            + dw)
                                            * ci
                                            + ic)
                                            * co)
                                            + oc];
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out.data_mut()[((ot * ho + oh) * wo + ow) * co + oc] = acc;
                    }
                }
            }
        }
        out
    }

    fn pseudo(seed: u64, n: usize) -> Vec<f64> {
        // splitmix64-based deterministic filler for test inputs
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_add(0x9e3779b97f4a7c15);
                let mut z = s;
                z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
                z ^= z >> 31;
                (z as f64 / u64::MAX as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let x = Tensor::new(vec![2, 3, 3, 1], pseudo(7, 18)).unwrap();
        let w = Tensor::new(vec![1, 3, 3, 1, 1], pseudo(8, 9)).unwrap();
        let s = spec([1, 3, 3], [1, 1, 1], [0, 1, 1], 1, 1);
        let got = conv3d(&x, &w, None, &s).unwrap();
        let want = conv_oracle(&x, &w, &s);
        assert_eq!(got.max_abs_diff(&want).unwrap(), 0.0);

        // a strided multi-channel case
        let x = Tensor::new(vec![3, 6, 5, 2], pseudo(9, 180)).unwrap();
        let w = Tensor::new(vec![2, 3, 3, 2, 3], pseudo(10, 108)).unwrap();
        let s = spec([2, 3, 3], [1, 2, 1], [1, 1, 1], 2, 3);
        let got = conv3d(&x, &w, None, &s).unwrap();
        let want = conv_oracle(&x, &w, &s);
        assert!(got.max_abs_diff(&want).unwrap() < 1e-13);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[1, 4, 4, 2]);
        let w = Tensor::zeros(&[1, 1, 1, 1, 1]);
        let s = spec([1, 1, 1], [1, 1, 1], [0, 0, 0], 1, 1);
        assert!(conv3d(&x, &w, None, &s).is_err());
    }

    #[test]
    fn transposed_identity_kernel() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 3, 1], |i| i as f64);
        let w = Tensor::new(vec![1, 1, 1, 1, 1], vec![1.0]).unwrap();
        let s = spec([1, 1, 1], [1, 1, 1], [0, 0, 0], 1, 1);
        let y = transposed_conv3d(&x, &w, None, &s).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn transposed_doubles_spatial_extents() {
        let x = Tensor::<f64>::zeros(&[1, 2, 2, 4]);
        let s = spec([1, 3, 3], [1, 2, 2], [0, 1, 1], 4, 4);
        let w = Tensor::zeros(&[1, 3, 3, 4, 4]);
        let y = transposed_conv3d(&x, &w, None, &s).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 4]);
    }

    #[test]
    fn adjoint_identity_stride_two() {
        // <conv(x), y> == <x, conv^T(y)> on random tensors, stride 2.
        let s = spec([1, 3, 3], [1, 2, 2], [0, 1, 1], 1, 1);
        let x = Tensor::new(vec![2, 4, 4, 1], pseudo(21, 32)).unwrap();
        let w = Tensor::new(vec![1, 3, 3, 1, 1], pseudo(22, 9)).unwrap();
        let y_shape = conv3d(&x, &w, None, &s).unwrap();
        let y = Tensor::new(y_shape.shape().to_vec(), pseudo(23, y_shape.numel())).unwrap();
        let lhs = conv3d(&x, &w, None, &s).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&transposed_conv3d(&y, &w, None, &s).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn softmax_basics() {
        let t = Tensor::new(vec![2], vec![0.0f64, 0.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        let one = softmax(&Tensor::new(vec![1], vec![3.3f64]).unwrap(), 0).unwrap();
        assert_eq!(one.data(), &[1.0]);

        // softmax([1,0]) against a 50-digit evaluation of e/(e+1)
        let s = softmax(&Tensor::new(vec![2], vec![1.0f64, 0.0]).unwrap(), 0).unwrap();
        assert!((s.data()[0] - 0.731_058_578_630_004_88).abs() < 1e-15);
        assert!((s.data()[1] - 0.268_941_421_369_995_12).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariance_and_row_sums() {
        let x = Tensor::new(vec![3, 4], pseudo(31, 12)).unwrap();
        let y = softmax(&x, 1).unwrap();
        let shifted = softmax(&x.map(|v| v + 7.25), 1).unwrap();
        assert!(y.max_abs_diff(&shifted).unwrap() < 1e-6);
        for row in y.data().chunks_exact(4) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_identity_zero_and_oracle() {
        let x = Tensor::new(vec![3, 2], pseudo(41, 6)).unwrap();
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(linear(&x, &eye).unwrap(), x);

        let zero = Tensor::zeros(&[2, 4]);
        assert!(linear(&x, &zero).unwrap().data().iter().all(|&v| v == 0.0));

        let w = Tensor::new(vec![2, 4], pseudo(42, 8)).unwrap();
        let y = linear(&x, &w).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += x.data()[i * 2 + k] * w.data()[k * 4 + j];
                }
                assert!((y.data()[i * 4 + j] - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_rejects_mismatch() {
        let x = Tensor::<f64>::zeros(&[3, 2]);
        let w = Tensor::zeros(&[3, 4]);
        assert!(linear(&x, &w).is_err());
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::new(vec![3], vec![0.0f64, -1.0, 2.5]).unwrap();
        let y = leaky_relu(&x, 0.1).unwrap();
        assert_eq!(y.data(), &[0.0, -0.1, 2.5]);
        assert!(leaky_relu(&x, 1.5).is_err());
    }

    #[test]
    fn slice_concat_roundtrip() {
        let x = Tensor::new(vec![2, 6], pseudo(51, 12)).unwrap();
        let a = slice_last(&x, 0, 2).unwrap();
        let b = slice_last(&x, 2, 4).unwrap();
        let back = concat_last(&[&a, &b]).unwrap();
        assert_eq!(back, x);
    }
}
