//! The reconstruction network: coarse-estimate input, a three-convolution
//! feature extractor (stride 2 spatially), a stack of three-branch attention
//! blocks, and a transposed-convolution reconstruction head.
//!
//! Block wiring: the block input splits into equal channel slices, one per
//! enabled branch. Branches run in the fixed order local-block ->
//! global-sparse -> global-temporal; branch k's input is its slice plus
//! branch k-1's pre-FFN output (the inter-branch skip). Each branch is
//! pre-norm attention with a residual, then a convolutional feed-forward
//! refinement `x + narrow(leaky(wide(x)))`. Branch outputs concatenate
//! through a 1x1x1 merge conv, and the block adds its own residual.

use vsci_optics::{coarse_estimate, MaskSet, Measurement, VideoCube};
use vsci_tensor::check::TapeProgram;
use vsci_tensor::tape::{Tape, ValueId};
use vsci_tensor::{ConvSpec, Scalar, Tensor, TensorError};

use crate::attention::{attention_on_tape, BoundAttention};
use crate::config::{BranchKind, NetworkConfig};
use crate::error::{NetError, Result};
use crate::params::{param_layout, NetParams, ParamDef};
use crate::partition::PartitionPlan;

pub const LN_EPS: f64 = 1e-5;

fn extract_specs(c: usize) -> [ConvSpec; 3] {
    [
        ConvSpec::new([3, 7, 7], [1, 1, 1], [1, 3, 3], 1, c).expect("static spec"),
        ConvSpec::new([3, 3, 3], [1, 1, 1], [1, 1, 1], c, c).expect("static spec"),
        ConvSpec::new([3, 3, 3], [1, 2, 2], [1, 1, 1], c, c).expect("static spec"),
    ]
}

fn ffn_specs(cb: usize, hidden: usize) -> [ConvSpec; 2] {
    [
        ConvSpec::new([3, 3, 3], [1, 1, 1], [1, 1, 1], cb, hidden).expect("static spec"),
        ConvSpec::new([1, 1, 1], [1, 1, 1], [0, 0, 0], hidden, cb).expect("static spec"),
    ]
}

fn merge_spec(c: usize) -> ConvSpec {
    ConvSpec::new([1, 1, 1], [1, 1, 1], [0, 0, 0], c, c).expect("static spec")
}

fn head_specs(c: usize) -> [ConvSpec; 3] {
    [
        // transposed: restores the stride-2 downsampling
        ConvSpec::new([1, 3, 3], [1, 2, 2], [0, 1, 1], c, c).expect("static spec"),
        ConvSpec::new([1, 1, 1], [1, 1, 1], [0, 0, 0], c, c).expect("static spec"),
        ConvSpec::new([3, 3, 3], [1, 1, 1], [1, 1, 1], c, 1).expect("static spec"),
    ]
}

/// Walks parameter ids in layout order, checking names as it goes so the
/// builder cannot silently drift from `param_layout`.
struct Cursor<'a> {
    defs: &'a [ParamDef],
    ids: &'a [ValueId],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(defs: &'a [ParamDef], ids: &'a [ValueId]) -> Result<Self> {
        if defs.len() != ids.len() {
            return Err(NetError::Config(format!(
                "{} parameter ids for {} layout slots",
                ids.len(),
                defs.len()
            )));
        }
        Ok(Cursor { defs, ids, pos: 0 })
    }

    fn take(&mut self, name: &str) -> Result<ValueId> {
        let def = self.defs.get(self.pos).ok_or_else(|| {
            NetError::Config(format!("parameter list exhausted looking for {name}"))
        })?;
        if def.name != name {
            return Err(NetError::Config(format!(
                "parameter order mismatch: builder wants {name}, layout has {}",
                def.name
            )));
        }
        let id = self.ids[self.pos];
        self.pos += 1;
        Ok(id)
    }

    fn finished(&self) -> Result<()> {
        if self.pos == self.defs.len() {
            Ok(())
        } else {
            Err(NetError::Config(format!(
                "{} unconsumed parameters after build",
                self.defs.len() - self.pos
            )))
        }
    }
}

fn conv<F: Scalar>(
    tape: &mut Tape<F>,
    cur: &mut Cursor,
    prefix: &str,
    spec: &ConvSpec,
    input: ValueId,
) -> Result<ValueId> {
    let w = cur.take(&format!("{prefix}.weight"))?;
    let b = cur.take(&format!("{prefix}.bias"))?;
    Ok(tape.conv3d(input, w, b, spec.clone())?)
}

fn extract_stage<F: Scalar>(
    tape: &mut Tape<F>,
    config: &NetworkConfig,
    cur: &mut Cursor,
    x: ValueId,
) -> Result<ValueId> {
    let slope = F::from_f64(config.leaky_slope);
    let specs = extract_specs(config.channels);
    let mut h = x;
    for (i, spec) in specs.iter().enumerate() {
        h = conv(tape, cur, &format!("extract{i}"), spec, h)?;
        h = tape.leaky_relu(h, slope)?;
    }
    Ok(h)
}

fn branch_plan(config: &NetworkConfig, kind: BranchKind) -> Result<PartitionPlan> {
    let (fh, fw) = config.feature_hw();
    let cb = config.branch_channels();
    match kind {
        BranchKind::LocalBlock => PartitionPlan::window(config.t, fh, fw, cb, config.window),
        BranchKind::GlobalSparse => PartitionPlan::grid(config.t, fh, fw, cb, config.grid),
        BranchKind::GlobalTemporal => PartitionPlan::temporal(config.t, fh, fw, cb),
    }
}

/// One attention branch: pre-norm attention with residual, then the FFN.
/// Returns (pre-FFN activation, branch output).
fn branch_stage<F: Scalar>(
    tape: &mut Tape<F>,
    config: &NetworkConfig,
    cur: &mut Cursor,
    block: usize,
    kind: BranchKind,
    input: ValueId,
) -> Result<(ValueId, ValueId)> {
    let prefix = format!("block{block}.{kind}");
    let slope = F::from_f64(config.leaky_slope);
    let cb = config.branch_channels();
    let hidden = cb * config.ffn_expansion;

    let gamma = cur.take(&format!("{prefix}.ln.gamma"))?;
    let beta = cur.take(&format!("{prefix}.ln.beta"))?;
    let normed = tape.layer_norm(input, gamma, beta, LN_EPS)?;

    let plan = branch_plan(config, kind)?;
    let tokens = plan.apply_on_tape(tape, normed)?;
    let bound = BoundAttention {
        wq: cur.take(&format!("{prefix}.attn.wq"))?,
        wk: cur.take(&format!("{prefix}.attn.wk"))?,
        wv: cur.take(&format!("{prefix}.attn.wv"))?,
        wo: cur.take(&format!("{prefix}.attn.wo"))?,
        heads: config.heads,
    };
    let attended = attention_on_tape(tape, tokens, &bound)?;
    let back = plan.invert_on_tape(tape, attended)?;
    let pre_ffn = tape.add(input, back)?;

    let [wide, narrow] = ffn_specs(cb, hidden);
    let h = conv(tape, cur, &format!("{prefix}.ffn.wide"), &wide, pre_ffn)?;
    let h = tape.leaky_relu(h, slope)?;
    let h = conv(tape, cur, &format!("{prefix}.ffn.narrow"), &narrow, h)?;
    let out = tape.add(pre_ffn, h)?;
    Ok((pre_ffn, out))
}

fn block_stage<F: Scalar>(
    tape: &mut Tape<F>,
    config: &NetworkConfig,
    cur: &mut Cursor,
    block: usize,
    x: ValueId,
) -> Result<ValueId> {
    let kinds = config.branches.kinds();
    let cb = config.branch_channels();
    let mut outputs = Vec::with_capacity(kinds.len());
    let mut prev_pre_ffn: Option<ValueId> = None;
    for (i, kind) in kinds.iter().enumerate() {
        let slice = tape.slice_last(x, i * cb, cb)?;
        let branch_in = match prev_pre_ffn {
            Some(prev) => tape.add(slice, prev)?,
            None => slice,
        };
        let (pre_ffn, out) = branch_stage(tape, config, cur, block, *kind, branch_in)?;
        prev_pre_ffn = Some(pre_ffn);
        outputs.push(out);
    }
    let cat = tape.concat_last(&outputs)?;
    let merged = conv(tape, cur, &format!("block{block}.merge"), &merge_spec(config.channels), cat)?;
    Ok(tape.add(x, merged)?)
}

fn head_stage<F: Scalar>(
    tape: &mut Tape<F>,
    config: &NetworkConfig,
    cur: &mut Cursor,
    x: ValueId,
) -> Result<ValueId> {
    let slope = F::from_f64(config.leaky_slope);
    let [up, mid, out] = head_specs(config.channels);
    let w = cur.take("head.up.weight")?;
    let b = cur.take("head.up.bias")?;
    let h = tape.conv_transposed3d(x, w, b, up)?;
    let h = tape.leaky_relu(h, slope)?;
    let h = conv(tape, cur, "head.mid", &mid, h)?;
    let h = tape.leaky_relu(h, slope)?;
    conv(tape, cur, "head.out", &out, h)
}

/// Builds the full graph from an already-recorded input and parameter leaves
/// in layout order. Returns the `[T,H,W,1]` output node.
pub(crate) fn build_graph_from_ids<F: Scalar>(
    tape: &mut Tape<F>,
    config: &NetworkConfig,
    xe: ValueId,
    defs: &[ParamDef],
    ids: &[ValueId],
) -> Result<ValueId> {
    let expected = [config.t, config.h, config.w, 1];
    if tape.value(xe).shape() != expected {
        return Err(NetError::Config(format!(
            "network input must be {:?}, got {:?}",
            expected,
            tape.value(xe).shape()
        )));
    }
    let mut cur = Cursor::new(defs, ids)?;
    let mut h = extract_stage(tape, config, &mut cur, xe)?;
    for b in 0..config.blocks {
        h = block_stage(tape, config, &mut cur, b, h)?;
    }
    let out = head_stage(tape, config, &mut cur, h)?;
    cur.finished()?;
    Ok(out)
}

/// The reconstruction network: configuration plus parameters.
#[derive(Debug, Clone)]
pub struct BstNet<F: Scalar> {
    pub config: NetworkConfig,
    pub params: NetParams<F>,
}

impl<F: Scalar> BstNet<F> {
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = NetParams::init(&config, seed);
        Ok(BstNet { config, params })
    }

    pub fn from_parts(config: NetworkConfig, params: NetParams<F>) -> Result<Self> {
        config.validate()?;
        let expect = param_layout(&config);
        if expect.as_slice() != params.defs() {
            return Err(NetError::Checkpoint(
                "parameter layout does not match the configuration".into(),
            ));
        }
        Ok(BstNet { config, params })
    }

    /// Records the full forward computation; returns the output node and the
    /// parameter leaf ids in layout order (for gradient collection).
    pub fn build_graph(&self, tape: &mut Tape<F>, xe: &Tensor<F>) -> Result<(ValueId, Vec<ValueId>)> {
        let x = tape.constant(xe.clone());
        let ids: Vec<ValueId> = self
            .params
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect();
        let out = build_graph_from_ids(tape, &self.config, x, self.params.defs(), &ids)?;
        Ok((out, ids))
    }

    /// Forward pass on the coarse-estimate tensor `[T,H,W,1]`.
    pub fn forward_xe(&self, xe: &Tensor<F>) -> Result<Tensor<F>> {
        let mut tape = Tape::new();
        let (out, _) = self.build_graph(&mut tape, xe)?;
        Ok(tape.value(out).clone())
    }

    /// Full decode path: coarse estimate, extractor, blocks, head. Output is
    /// the raw (unclipped) frame estimate.
    pub fn forward(&self, y: &Measurement, masks: &MaskSet) -> Result<VideoCube> {
        let xe = coarse_input::<F>(y, masks)?;
        self.check_extents(masks)?;
        let out = self.forward_xe(&xe)?;
        feature_to_cube(&out)
    }

    fn check_extents(&self, masks: &MaskSet) -> Result<()> {
        if masks.t != self.config.t || masks.h != self.config.h || masks.w != self.config.w {
            return Err(NetError::Config(format!(
                "mask extents {}x{}x{} do not match network config {}x{}x{}",
                masks.t, masks.h, masks.w, self.config.t, self.config.h, self.config.w
            )));
        }
        Ok(())
    }

    /// The three-convolution extractor alone: `[T,H,W,1] -> [T,H/2,W/2,C]`.
    pub fn feature_extract(&self, xe: &Tensor<F>) -> Result<Tensor<F>> {
        self.run_stage(Stage::Extract, xe)
    }

    /// One whole block on a `[T,H/2,W/2,C]` feature map.
    pub fn block_forward(&self, block: usize, f: &Tensor<F>) -> Result<Tensor<F>> {
        self.run_stage(Stage::Block(block), f)
    }

    /// One branch (attention + FFN) on a `[T,H/2,W/2,C/branches]` map.
    pub fn branch_forward(&self, block: usize, kind: BranchKind, f: &Tensor<F>) -> Result<Tensor<F>> {
        self.run_stage(Stage::Branch(block, kind), f)
    }

    /// The reconstruction head alone: `[T,H/2,W/2,C] -> [T,H,W,1]`.
    pub fn reconstruct_head(&self, f: &Tensor<F>) -> Result<Tensor<F>> {
        self.run_stage(Stage::Head, f)
    }

    fn run_stage(&self, stage: Stage, input: &Tensor<F>) -> Result<Tensor<F>> {
        let range = stage_defs(self.params.defs(), stage)?;
        let defs = &self.params.defs()[range.clone()];
        let tensors = &self.params.tensors()[range];
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let ids: Vec<ValueId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = run_stage_from_ids(&mut tape, &self.config, stage, x, defs, &ids)?;
        Ok(tape.value(out).clone())
    }
}

fn stage_defs(defs: &[ParamDef], stage: Stage) -> Result<std::ops::Range<usize>> {
    let prefix = match stage {
        Stage::Full => return Ok(0..defs.len()),
        Stage::Extract => "extract".to_string(),
        Stage::Block(b) => format!("block{b}."),
        Stage::Branch(b, kind) => format!("block{b}.{kind}."),
        Stage::Head => "head.".to_string(),
    };
    let start = defs
        .iter()
        .position(|d| d.name.starts_with(&prefix))
        .ok_or_else(|| NetError::Config(format!("no parameters under '{prefix}'")))?;
    let len = defs[start..]
        .iter()
        .take_while(|d| d.name.starts_with(&prefix))
        .count();
    Ok(start..start + len)
}

fn run_stage_from_ids<F: Scalar>(
    tape: &mut Tape<F>,
    config: &NetworkConfig,
    stage: Stage,
    x: ValueId,
    defs: &[ParamDef],
    ids: &[ValueId],
) -> Result<ValueId> {
    if stage == Stage::Full {
        return build_graph_from_ids(tape, config, x, defs, ids);
    }
    let mut cur = Cursor::new(defs, ids)?;
    let out = match stage {
        Stage::Extract => extract_stage(tape, config, &mut cur, x)?,
        Stage::Block(b) => block_stage(tape, config, &mut cur, b, x)?,
        Stage::Branch(b, kind) => branch_stage(tape, config, &mut cur, b, kind, x)?.1,
        Stage::Head => head_stage(tape, config, &mut cur, x)?,
        Stage::Full => unreachable!(),
    };
    cur.finished()?;
    Ok(out)
}

/// A checkable slice of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extract,
    Block(usize),
    Branch(usize, BranchKind),
    Head,
    Full,
}

impl Stage {
    /// Input shape the stage consumes under a given config.
    pub fn input_shape(&self, config: &NetworkConfig) -> Vec<usize> {
        let (fh, fw) = config.feature_hw();
        match self {
            Stage::Extract | Stage::Full => vec![config.t, config.h, config.w, 1],
            Stage::Block(_) => vec![config.t, fh, fw, config.channels],
            Stage::Branch(..) => vec![config.t, fh, fw, config.branch_channels()],
            Stage::Head => vec![config.t, fh, fw, config.channels],
        }
    }
}

/// The per-branch feed-forward refinement as a standalone op:
/// `f + narrow(leaky(wide(f)))` with a 3x3x3 wide conv and a 1x1x1 narrow
/// conv, shapes preserved.
pub fn ffn<F: Scalar>(
    f: &Tensor<F>,
    wide_w: &Tensor<F>,
    wide_b: &Tensor<F>,
    narrow_w: &Tensor<F>,
    narrow_b: &Tensor<F>,
    slope: f64,
) -> Result<Tensor<F>> {
    let c = *f.shape().last().ok_or_else(|| NetError::Config("rank-0 input".into()))?;
    let hidden = *wide_b.shape().first().unwrap_or(&0);
    let [wide, narrow] = ffn_specs(c, hidden);
    let h = vsci_tensor::ops::conv3d(f, wide_w, Some(wide_b), &wide)?;
    let h = vsci_tensor::ops::leaky_relu(&h, F::from_f64(slope))?;
    let h = vsci_tensor::ops::conv3d(&h, narrow_w, Some(narrow_b), &narrow)?;
    Ok(f.add(&h)?)
}

/// Casts the coarse estimate into the network input layout `[T,H,W,1]`.
pub fn coarse_input<F: Scalar>(y: &Measurement, masks: &MaskSet) -> Result<Tensor<F>> {
    let xe = coarse_estimate(y, masks)?;
    cube_to_feature(&xe)
}

pub fn cube_to_feature<F: Scalar>(cube: &VideoCube) -> Result<Tensor<F>> {
    Ok(Tensor::new(
        vec![cube.t, cube.h, cube.w, 1],
        cube.data().iter().map(|&v| F::from_f64(v)).collect(),
    )?)
}

pub fn feature_to_cube<F: Scalar>(f: &Tensor<F>) -> Result<VideoCube> {
    let s = f.shape();
    if s.len() != 4 || s[3] != 1 {
        return Err(NetError::Config(format!(
            "expected [T,H,W,1] output, got {:?}",
            s
        )));
    }
    Ok(VideoCube::new(
        s[0],
        s[1],
        s[2],
        f.data().iter().map(|v| v.as_f64()).collect(),
    )?)
}

/// Decode entry point: coarse estimate, network forward, raw frames out.
pub fn network_forward<F: Scalar>(
    y: &Measurement,
    masks: &MaskSet,
    net: &BstNet<F>,
) -> Result<VideoCube> {
    net.forward(y, masks)
}

/// A stage of the network (or all of it) as a checkable differentiation
/// program: input 0 is the stage input, the rest are the stage's parameters
/// in layout order.
#[derive(Debug, Clone)]
pub struct NetworkGradProgram {
    pub config: NetworkConfig,
    pub stage: Stage,
}

impl NetworkGradProgram {
    pub fn full(config: NetworkConfig) -> Self {
        NetworkGradProgram {
            config,
            stage: Stage::Full,
        }
    }

    fn defs(&self) -> Result<Vec<ParamDef>> {
        let all = param_layout(&self.config);
        let range = stage_defs(&all, self.stage)?;
        Ok(all[range].to_vec())
    }

    /// A generic point for gradient checking: every tensor (including the
    /// merge convs that training initializes to zero) gets small random
    /// values so all paths carry signal.
    pub fn sample_point<F: Scalar>(&self, seed: u64) -> Vec<Tensor<F>> {
        let quarter = F::from_f64(0.25);
        let mut point = Vec::new();
        let input = vsci_tensor::check::sample_tensor::<F>(
            &self.stage.input_shape(&self.config),
            seed,
        );
        point.push(input.scale(quarter));
        for (i, def) in self.defs().expect("stage exists").iter().enumerate() {
            let t = vsci_tensor::check::sample_tensor::<F>(
                &def.shape,
                seed.wrapping_mul(1013).wrapping_add(i as u64),
            );
            point.push(t.scale(quarter));
        }
        point
    }
}

impl TapeProgram for NetworkGradProgram {
    fn name(&self) -> String {
        match self.stage {
            Stage::Full => "network".into(),
            Stage::Extract => "feature_extract".into(),
            Stage::Block(b) => format!("block{b}"),
            Stage::Branch(b, kind) => format!("block{b}.{kind}"),
            Stage::Head => "reconstruct_head".into(),
        }
    }

    fn build<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        inputs: &[ValueId],
    ) -> vsci_tensor::Result<ValueId> {
        let defs = self
            .defs()
            .map_err(|e| TensorError::InvalidArgument(e.to_string()))?;
        run_stage_from_ids(tape, &self.config, self.stage, inputs[0], &defs, &inputs[1..])
            .map_err(|e| TensorError::InvalidArgument(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BranchSet;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            t: 2,
            h: 8,
            w: 8,
            channels: 6,
            blocks: 1,
            window: 2,
            grid: 2,
            heads: 1,
            leaky_slope: 0.1,
            ffn_expansion: 2,
            branches: BranchSet::all(),
        }
    }

    #[test]
    fn forward_shapes() {
        let net = BstNet::<f32>::init(tiny_config(), 5).unwrap();
        let xe = Tensor::from_fn(&[2, 8, 8, 1], |i| (i % 7) as f32 * 0.1);
        let f = net.feature_extract(&xe).unwrap();
        assert_eq!(f.shape(), &[2, 4, 4, 6]);
        let b = net.block_forward(0, &f).unwrap();
        assert_eq!(b.shape(), f.shape());
        let out = net.reconstruct_head(&b).unwrap();
        assert_eq!(out.shape(), &[2, 8, 8, 1]);
        let full = net.forward_xe(&xe).unwrap();
        assert_eq!(full.shape(), &[2, 8, 8, 1]);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = BstNet::<f32>::init(tiny_config(), 5).unwrap();
        let xe = Tensor::from_fn(&[2, 8, 8, 1], |i| ((i * 13 % 31) as f32) * 0.03);
        let a = net.forward_xe(&xe).unwrap();
        let b = net.forward_xe(&xe).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_output() {
        // biases initialize to zero, extraction is conv+leaky, so zero in
        // means zero features
        let net = BstNet::<f64>::init(tiny_config(), 5).unwrap();
        let xe = Tensor::zeros(&[2, 8, 8, 1]);
        let f = net.feature_extract(&xe).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
        let out = net.forward_xe(&xe).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_branch_weights_make_block_identity() {
        let cfg = tiny_config();
        let mut net = BstNet::<f64>::init(cfg, 5).unwrap();
        // zero everything inside block0 (projections, ffn, merge); gamma
        // stays but feeds a zeroed attention path
        let names: Vec<String> = net.params.defs().iter().map(|d| d.name.clone()).collect();
        for (name, t) in names.iter().zip(net.params.tensors_mut()) {
            if name.starts_with("block0.") && !name.ends_with("ln.gamma") {
                *t = Tensor::zeros(t.shape());
            }
        }
        let f = Tensor::from_fn(&[2, 4, 4, 6], |i| ((i % 11) as f64) * 0.07 - 0.3);
        let out = net.block_forward(0, &f).unwrap();
        assert!(out.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn mask_extent_mismatch_rejected() {
        let net = BstNet::<f32>::init(tiny_config(), 5).unwrap();
        let m = vsci_optics::MaskSet::gen_uss(2, 8, 10, 1).unwrap();
        let y = vsci_optics::Measurement::analog(8, 10, vec![0.0; 80]).unwrap();
        assert!(net.forward(&y, &m).is_err());
    }

    #[test]
    fn ablated_configs_type_check_end_to_end() {
        for kind in [
            BranchKind::LocalBlock,
            BranchKind::GlobalSparse,
            BranchKind::GlobalTemporal,
        ] {
            let mut cfg = tiny_config();
            cfg.branches = BranchSet::without(kind);
            let net = BstNet::<f32>::init(cfg, 3).unwrap();
            let xe = Tensor::from_fn(&[2, 8, 8, 1], |i| (i % 5) as f32 * 0.1);
            let out = net.forward_xe(&xe).unwrap();
            assert_eq!(out.shape(), &[2, 8, 8, 1]);
        }
    }
}
