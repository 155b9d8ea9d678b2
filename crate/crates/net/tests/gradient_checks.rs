//! Finite-difference checks of the network stages and the whole tiny
//! network, all in 64-bit.

use vsci_net::{BranchKind, BranchSet, NetworkConfig, NetworkGradProgram, Stage};
use vsci_tensor::check::grad_check;

fn tiny() -> NetworkConfig {
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

// 2^-10 (the largest step the checker accepts): Richardson extrapolation
// removes the truncation term, so the step only has to beat 64-bit round-off,
// which shows up on near-zero gradient coordinates at the 1e-8 denominator
// floor and shrinks linearly with the step.
const STEP: f64 = 1.0 / 1024.0;

fn check(stage: Stage, seeds: std::ops::Range<u64>, tol: f64) {
    let prog = NetworkGradProgram {
        config: tiny(),
        stage,
    };
    for seed in seeds {
        let point = prog.sample_point::<f64>(seed);
        let report = grad_check(&prog, &point, STEP, tol).unwrap();
        assert!(
            report.pass,
            "{} seed {} rel err {} ({:?})",
            report.op, seed, report.max_rel_err, report.detail
        );
    }
}

#[test]
fn feature_extract_gradients() {
    check(Stage::Extract, 0..3, 1e-4);
}

#[test]
fn reconstruct_head_gradients() {
    check(Stage::Head, 0..3, 1e-4);
}

#[test]
fn branch_gradients_cover_all_kinds() {
    // each branch is LN + partition + attention + FFN; the FFN instance runs
    // on 2x4x4x(C/3) maps
    for kind in [
        BranchKind::LocalBlock,
        BranchKind::GlobalSparse,
        BranchKind::GlobalTemporal,
    ] {
        check(Stage::Branch(0, kind), 0..2, 1e-4);
    }
}

#[test]
fn full_block_gradients() {
    check(Stage::Block(0), 0..2, 1e-4);
}

#[test]
fn end_to_end_tiny_network_gradients() {
    // the pinned tiny configuration: T=2, 8x8, C=6, heads=1, blocks=1
    check(Stage::Full, 0..2, 1e-3);
}

/// The standalone feed-forward refinement on a 2x4x4x6 map.
struct FfnProgram;

impl vsci_tensor::check::TapeProgram for FfnProgram {
    fn name(&self) -> String {
        "ffn".into()
    }
    fn build<F: vsci_tensor::Scalar>(
        &self,
        tape: &mut vsci_tensor::tape::Tape<F>,
        inputs: &[vsci_tensor::tape::ValueId],
    ) -> vsci_tensor::Result<vsci_tensor::tape::ValueId> {
        use vsci_tensor::ConvSpec;
        let wide = ConvSpec::new([3, 3, 3], [1, 1, 1], [1, 1, 1], 6, 12).unwrap();
        let narrow = ConvSpec::new([1, 1, 1], [1, 1, 1], [0, 0, 0], 12, 6).unwrap();
        let h = tape.conv3d(inputs[0], inputs[1], inputs[2], wide)?;
        let h = tape.leaky_relu(h, F::from_f64(0.1))?;
        let h = tape.conv3d(h, inputs[3], inputs[4], narrow)?;
        tape.add(inputs[0], h)
    }
}

#[test]
fn ffn_gradients_and_identity() {
    use vsci_tensor::check::sample_tensor;
    use vsci_tensor::Tensor;

    for seed in 0..3u64 {
        let point: Vec<Tensor<f64>> = vec![
            sample_tensor(&[2, 4, 4, 6], seed).scale(0.25),
            sample_tensor(&[3, 3, 3, 6, 12], seed + 10).scale(0.25),
            sample_tensor(&[12], seed + 20).scale(0.25),
            sample_tensor(&[1, 1, 1, 12, 6], seed + 30).scale(0.25),
            sample_tensor(&[6], seed + 40).scale(0.25),
        ];
        let report = grad_check(&FfnProgram, &point, STEP, 1e-4).unwrap();
        assert!(report.pass, "seed {seed}: {report:?}");
    }

    // zero weights reduce the op to its residual, shapes preserved
    let f = sample_tensor::<f64>(&[2, 4, 4, 6], 99);
    let out = vsci_net::ffn(
        &f,
        &Tensor::zeros(&[3, 3, 3, 6, 12]),
        &Tensor::zeros(&[12]),
        &Tensor::zeros(&[1, 1, 1, 12, 6]),
        &Tensor::zeros(&[6]),
        0.1,
    )
    .unwrap();
    assert_eq!(out, f);
}
