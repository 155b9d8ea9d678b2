//! Token partitions for the three attention branches.
//!
//! Each partition is a pure reindexing `[T,H,W,C] -> [L,J,C]` (L groups of J
//! tokens) expressed as reshape / axis-permute / reshape, so the same plan
//! drives both the eager tensor path and the tape.
//!
//! - window: J = S*S tokens per window, L = T*H*W/S^2 windows per frame.
//! - grid: the L = G*G groups are the residue classes of (h mod G, w mod G);
//!   each gathers J = T*H*W/G^2 tokens sampled at stride G across the whole
//!   frame and all frames.
//! - temporal: J = T tokens per spatial site, L = H*W sites.

use vsci_tensor::tape::{Tape, ValueId};
use vsci_tensor::{inverse_axes, Scalar, Tensor};

use crate::error::{NetError, Result};

#[derive(Debug, Clone)]
pub struct PartitionPlan {
    feature_shape: Vec<usize>,
    split_shape: Vec<usize>,
    axes: Vec<usize>,
    tokens_shape: Vec<usize>,
}

impl PartitionPlan {
    pub fn window(t: usize, h: usize, w: usize, c: usize, s: usize) -> Result<Self> {
        if s == 0 || h % s != 0 || w % s != 0 {
            return Err(NetError::Config(format!(
                "window {s} does not divide feature extents {h}x{w}"
            )));
        }
        Ok(PartitionPlan {
            feature_shape: vec![t, h, w, c],
            split_shape: vec![t, h / s, s, w / s, s, c],
            axes: vec![0, 1, 3, 2, 4, 5],
            tokens_shape: vec![t * (h / s) * (w / s), s * s, c],
        })
    }

    pub fn grid(t: usize, h: usize, w: usize, c: usize, g: usize) -> Result<Self> {
        if g == 0 || h % g != 0 || w % g != 0 {
            return Err(NetError::Config(format!(
                "grid {g} does not divide feature extents {h}x{w}"
            )));
        }
        Ok(PartitionPlan {
            feature_shape: vec![t, h, w, c],
            // h = hq*g + hr: group by the residues (hr, wr)
            split_shape: vec![t, h / g, g, w / g, g, c],
            axes: vec![2, 4, 0, 1, 3, 5],
            tokens_shape: vec![g * g, t * (h / g) * (w / g), c],
        })
    }

    pub fn temporal(t: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        Ok(PartitionPlan {
            feature_shape: vec![t, h, w, c],
            split_shape: vec![t, h, w, c],
            axes: vec![1, 2, 0, 3],
            tokens_shape: vec![h * w, t, c],
        })
    }

    pub fn tokens_shape(&self) -> &[usize] {
        &self.tokens_shape
    }

    /// Group count L and tokens-per-group J.
    pub fn group_dims(&self) -> (usize, usize) {
        (self.tokens_shape[0], self.tokens_shape[1])
    }

    fn permuted_shape(&self) -> Vec<usize> {
        self.axes.iter().map(|&a| self.split_shape[a]).collect()
    }

    fn check_feature<F: Scalar>(&self, f: &Tensor<F>) -> Result<()> {
        if f.shape() != self.feature_shape.as_slice() {
            return Err(NetError::Config(format!(
                "partition expects feature shape {:?}, got {:?}",
                self.feature_shape,
                f.shape()
            )));
        }
        Ok(())
    }

    pub fn apply<F: Scalar>(&self, f: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_feature(f)?;
        let out = f
            .reshape(&self.split_shape)?
            .permute(&self.axes)?
            .reshape(&self.tokens_shape)?;
        Ok(out)
    }

    pub fn invert<F: Scalar>(&self, tokens: &Tensor<F>) -> Result<Tensor<F>> {
        if tokens.shape() != self.tokens_shape.as_slice() {
            return Err(NetError::Config(format!(
                "inverse partition expects {:?}, got {:?}",
                self.tokens_shape,
                tokens.shape()
            )));
        }
        let out = tokens
            .reshape(&self.permuted_shape())?
            .permute(&inverse_axes(&self.axes))?
            .reshape(&self.feature_shape)?;
        Ok(out)
    }

    pub fn apply_on_tape<F: Scalar>(&self, tape: &mut Tape<F>, f: ValueId) -> Result<ValueId> {
        self.check_feature(tape.value(f))?;
        let a = tape.reshape(f, &self.split_shape)?;
        let b = tape.permute(a, &self.axes)?;
        Ok(tape.reshape(b, &self.tokens_shape)?)
    }

    pub fn invert_on_tape<F: Scalar>(&self, tape: &mut Tape<F>, tokens: ValueId) -> Result<ValueId> {
        let a = tape.reshape(tokens, &self.permuted_shape())?;
        let b = tape.permute(a, &inverse_axes(&self.axes))?;
        Ok(tape.reshape(b, &self.feature_shape)?)
    }
}

/// `[T,H,W,C] -> [L, S*S, C]` window tokens and back.
pub fn window_partition<F: Scalar>(f: &Tensor<F>, s: usize) -> Result<Tensor<F>> {
    let [t, h, w, c] = feature_dims(f)?;
    PartitionPlan::window(t, h, w, c, s)?.apply(f)
}

pub fn window_unpartition<F: Scalar>(
    tokens: &Tensor<F>,
    t: usize,
    h: usize,
    w: usize,
    c: usize,
    s: usize,
) -> Result<Tensor<F>> {
    PartitionPlan::window(t, h, w, c, s)?.invert(tokens)
}

/// `[T,H,W,C] -> [G*G, T*H*W/G^2, C]` strided grid tokens and back.
pub fn grid_partition<F: Scalar>(f: &Tensor<F>, g: usize) -> Result<Tensor<F>> {
    let [t, h, w, c] = feature_dims(f)?;
    PartitionPlan::grid(t, h, w, c, g)?.apply(f)
}

pub fn grid_unpartition<F: Scalar>(
    tokens: &Tensor<F>,
    t: usize,
    h: usize,
    w: usize,
    c: usize,
    g: usize,
) -> Result<Tensor<F>> {
    PartitionPlan::grid(t, h, w, c, g)?.invert(tokens)
}

/// `[T,H,W,C] -> [H*W, T, C]` temporal tokens and back.
pub fn temporal_partition<F: Scalar>(f: &Tensor<F>) -> Result<Tensor<F>> {
    let [t, h, w, c] = feature_dims(f)?;
    PartitionPlan::temporal(t, h, w, c)?.apply(f)
}

pub fn temporal_unpartition<F: Scalar>(
    tokens: &Tensor<F>,
    t: usize,
    h: usize,
    w: usize,
    c: usize,
) -> Result<Tensor<F>> {
    PartitionPlan::temporal(t, h, w, c)?.invert(tokens)
}

fn feature_dims<F: Scalar>(f: &Tensor<F>) -> Result<[usize; 4]> {
    let s = f.shape();
    if s.len() != 4 {
        return Err(NetError::Config(format!(
            "expected [T,H,W,C] feature map, got {:?}",
            s
        )));
    }
    Ok([s[0], s[1], s[2], s[3]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(t: usize, h: usize, w: usize, c: usize) -> Tensor<f64> {
        Tensor::from_fn(&[t, h, w, c], |i| i as f64)
    }

    #[test]
    fn window_roundtrip_and_counts() {
        let f = numbered(2, 4, 6, 3);
        let tokens = window_partition(&f, 2).unwrap();
        assert_eq!(tokens.shape(), &[2 * 2 * 3, 4, 3]);
        // L*J == T*H*W
        assert_eq!(tokens.shape()[0] * tokens.shape()[1], 2 * 4 * 6);
        let back = window_unpartition(&tokens, 2, 4, 6, 3, 2).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn full_frame_window_is_one_window_per_frame() {
        let f = numbered(3, 4, 4, 2);
        let tokens = window_partition(&f, 4).unwrap();
        assert_eq!(tokens.shape(), &[3, 16, 2]);
        // window tokens scan the frame row-major
        for j in 0..16 {
            assert_eq!(tokens.data()[j * 2], f.data()[j * 2]);
        }
    }

    #[test]
    fn grid_roundtrip_and_residue_structure() {
        let f = numbered(2, 4, 4, 1);
        let tokens = grid_partition(&f, 2).unwrap();
        assert_eq!(tokens.shape(), &[4, 8, 1]);
        let back = grid_unpartition(&tokens, 2, 4, 4, 1, 2).unwrap();
        assert_eq!(back, f);
        // group (hr, wr) holds exactly the positions congruent to it mod 2,
        // over all frames
        for hr in 0..2 {
            for wr in 0..2 {
                let group = hr * 2 + wr;
                let mut want = Vec::new();
                for t in 0..2 {
                    for hq in 0..2 {
                        for wq in 0..2 {
                            let (h, w) = (hq * 2 + hr, wq * 2 + wr);
                            want.push(f.data()[(t * 4 + h) * 4 + w]);
                        }
                    }
                }
                let got = &tokens.data()[group * 8..(group + 1) * 8];
                assert_eq!(got, want.as_slice(), "group ({hr},{wr})");
            }
        }
    }

    #[test]
    fn single_grid_holds_everything() {
        let f = numbered(2, 3, 3, 2);
        let tokens = grid_partition(&f, 1).unwrap();
        assert_eq!(tokens.shape(), &[1, 2 * 3 * 3, 2]);
        assert_eq!(tokens.data(), f.data());
    }

    #[test]
    fn temporal_roundtrip_and_layout() {
        let f = numbered(3, 2, 2, 2);
        let tokens = temporal_partition(&f).unwrap();
        assert_eq!(tokens.shape(), &[4, 3, 2]);
        let back = temporal_unpartition(&tokens, 3, 2, 2, 2).unwrap();
        assert_eq!(back, f);
        // site (h,w) gathers that pixel across frames
        for site in 0..4 {
            for t in 0..3 {
                assert_eq!(
                    tokens.data()[(site * 3 + t) * 2],
                    f.data()[(t * 4 + site) * 2]
                );
            }
        }
    }

    #[test]
    fn indivisible_extents_rejected() {
        let f = numbered(1, 4, 4, 1);
        assert!(window_partition(&f, 3).is_err());
        assert!(grid_partition(&f, 3).is_err());
    }
}
