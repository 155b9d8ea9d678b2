//! Dense-attention oracles for the three branch partitions.
//!
//! The oracle below is an independent 64-bit implementation of multi-head
//! scaled dot-product attention written with plain nested loops; the
//! production path (f32 tensors, tape ops, partitions) must match it to
//! 1e-5 wherever a partition degenerates to dense attention.

use vsci_net::{
    attention, grid_partition, grid_unpartition, temporal_partition, temporal_unpartition,
    window_partition, window_unpartition, AttentionParams,
};
use vsci_tensor::check::sample_tensor;
use vsci_tensor::Tensor;

/// Plain-loop multi-head attention over one group of `j` tokens of width
/// `d`, row-major.
fn dense_group_oracle(
    tokens: &[f64],
    j: usize,
    d: usize,
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
    wo: &[f64],
    heads: usize,
) -> Vec<f64> {
    let project = |w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; j * d];
        for r in 0..j {
            for cc in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += tokens[r * d + k] * w[k * d + cc];
                }
                out[r * d + cc] = acc;
            }
        }
        out
    };
    let q = project(wq);
    let k = project(wk);
    let v = project(wv);
    let dh = d / heads;
    let mut merged = vec![0.0; j * d];
    for h in 0..heads {
        let off = h * dh;
        for a in 0..j {
            // scores of token a against all tokens, this head
            let mut scores = vec![0.0; j];
            for b in 0..j {
                let mut dot = 0.0;
                for c in 0..dh {
                    dot += q[a * d + off + c] * k[b * d + off + c];
                }
                scores[b] = dot / (dh as f64).sqrt();
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..dh {
                let mut acc = 0.0;
                for b in 0..j {
                    acc += exps[b] / z * v[b * d + off + c];
                }
                merged[a * d + off + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; j * d];
    for r in 0..j {
        for cc in 0..d {
            let mut acc = 0.0;
            for k2 in 0..d {
                acc += merged[r * d + k2] * wo[k2 * d + cc];
            }
            out[r * d + cc] = acc;
        }
    }
    out
}

/// Runs the oracle group-by-group over `[L,J,d]` tokens.
fn dense_tokens_oracle(tokens: &Tensor<f64>, p64: &AttentionParams<f64>) -> Tensor<f64> {
    let (l, j, d) = (tokens.shape()[0], tokens.shape()[1], tokens.shape()[2]);
    let mut out = vec![0.0; l * j * d];
    for g in 0..l {
        let group = &tokens.data()[g * j * d..(g + 1) * j * d];
        let z = dense_group_oracle(
            group,
            j,
            d,
            p64.wq.data(),
            p64.wk.data(),
            p64.wv.data(),
            p64.wo.data(),
            p64.heads,
        );
        out[g * j * d..(g + 1) * j * d].copy_from_slice(&z);
    }
    Tensor::new(vec![l, j, d], out).unwrap()
}

fn random_params(d: usize, heads: usize, seed: u64) -> (AttentionParams<f32>, AttentionParams<f64>) {
    let quarter = 0.25f32;
    let mk = |s: u64| sample_tensor::<f32>(&[d, d], s).scale(quarter);
    let p32 = AttentionParams {
        wq: mk(seed),
        wk: mk(seed + 1),
        wv: mk(seed + 2),
        wo: mk(seed + 3),
        heads,
    };
    let p64 = AttentionParams {
        wq: p32.wq.cast(),
        wk: p32.wk.cast(),
        wv: p32.wv.cast(),
        wo: p32.wo.cast(),
        heads,
    };
    (p32, p64)
}

#[test]
fn local_block_full_window_matches_dense_per_frame_attention() {
    // S covering the whole 8x8 frame: one window per frame
    let (t, h, w, c) = (2, 8, 8, 6);
    let f32map = sample_tensor::<f32>(&[t, h, w, c], 11).scale(0.5);
    let (p32, p64) = random_params(c, 2, 21);

    let tokens = window_partition(&f32map, 8).unwrap();
    assert_eq!(tokens.shape(), &[t, 64, c]);
    let z = attention(&tokens, &p32).unwrap();
    let back = window_unpartition(&z, t, h, w, c, 8).unwrap();

    // oracle: dense attention over each frame's pixels, straight from the map
    let f64map: Tensor<f64> = f32map.cast();
    let mut want = Tensor::<f64>::zeros(&[t, h, w, c]);
    for frame in 0..t {
        let toks = &f64map.data()[frame * h * w * c..(frame + 1) * h * w * c];
        let z = dense_group_oracle(
            toks, h * w, c,
            p64.wq.data(), p64.wk.data(), p64.wv.data(), p64.wo.data(), p64.heads,
        );
        want.data_mut()[frame * h * w * c..(frame + 1) * h * w * c].copy_from_slice(&z);
    }
    let diff = back.cast::<f64>().max_abs_diff(&want).unwrap();
    assert!(diff < 1e-5, "max abs err {diff}");
}

#[test]
fn global_sparse_single_grid_matches_dense_global_attention() {
    // G = 1: one grid holding every token of every frame
    let (t, h, w, c) = (2, 4, 4, 6);
    let f32map = sample_tensor::<f32>(&[t, h, w, c], 13).scale(0.5);
    let (p32, p64) = random_params(c, 3, 31);

    let tokens = grid_partition(&f32map, 1).unwrap();
    assert_eq!(tokens.shape(), &[1, t * h * w, c]);
    let z = attention(&tokens, &p32).unwrap();
    let back = grid_unpartition(&z, t, h, w, c, 1).unwrap();

    let f64map: Tensor<f64> = f32map.cast();
    let z = dense_group_oracle(
        f64map.data(), t * h * w, c,
        p64.wq.data(), p64.wk.data(), p64.wv.data(), p64.wo.data(), p64.heads,
    );
    let want = Tensor::new(vec![t, h, w, c], z).unwrap();
    let diff = back.cast::<f64>().max_abs_diff(&want).unwrap();
    assert!(diff < 1e-5, "max abs err {diff}");
}

#[test]
fn global_temporal_matches_two_token_dense_oracle() {
    let (t, h, w, c) = (2, 4, 4, 4);
    let f32map = sample_tensor::<f32>(&[t, h, w, c], 17).scale(0.5);
    let (p32, p64) = random_params(c, 2, 41);

    let tokens = temporal_partition(&f32map).unwrap();
    assert_eq!(tokens.shape(), &[h * w, t, c]);
    let z = attention(&tokens, &p32).unwrap();
    let back = temporal_unpartition(&z, t, h, w, c).unwrap();

    let f64map: Tensor<f64> = f32map.cast();
    let mut want = Tensor::<f64>::zeros(&[t, h, w, c]);
    for site in 0..h * w {
        let mut toks = vec![0.0; t * c];
        for fr in 0..t {
            for ch in 0..c {
                toks[fr * c + ch] = f64map.data()[(fr * h * w + site) * c + ch];
            }
        }
        let z = dense_group_oracle(
            &toks, t, c,
            p64.wq.data(), p64.wk.data(), p64.wv.data(), p64.wo.data(), p64.heads,
        );
        for fr in 0..t {
            for ch in 0..c {
                want.data_mut()[(fr * h * w + site) * c + ch] = z[fr * c + ch];
            }
        }
    }
    let diff = back.cast::<f64>().max_abs_diff(&want).unwrap();
    assert!(diff < 1e-5, "max abs err {diff}");
}

#[test]
fn single_temporal_token_reduces_to_value_projection_path() {
    // T = 1: the softmax over one token is 1
    let (t, h, w, c) = (1, 3, 3, 4);
    let fmap = sample_tensor::<f64>(&[t, h, w, c], 19);
    let (_, p64) = random_params(c, 2, 51);
    let tokens = temporal_partition(&fmap).unwrap();
    let z = attention(&tokens, &p64).unwrap();
    let vw = vsci_tensor::ops::linear(&tokens, &p64.wv).unwrap();
    let want = vsci_tensor::ops::linear(&vw, &p64.wo).unwrap();
    assert!(z.max_abs_diff(&want).unwrap() < 1e-12);
}

#[test]
fn attention_is_equivariant_to_token_permutation_within_group() {
    let tokens = sample_tensor::<f64>(&[2, 6, 4], 23).scale(0.5);
    let (_, p64) = random_params(4, 2, 61);
    let z = attention(&tokens, &p64).unwrap();

    // reverse the tokens of group 1
    let (j, d) = (6, 4);
    let mut permuted = tokens.clone();
    for jj in 0..j {
        for c in 0..d {
            permuted.data_mut()[(j + jj) * d + c] = tokens.data()[(j + (j - 1 - jj)) * d + c];
        }
    }
    let zp = attention(&permuted, &p64).unwrap();
    for jj in 0..j {
        for c in 0..d {
            let a = zp.data()[(j + jj) * d + c];
            let b = z.data()[(j + (j - 1 - jj)) * d + c];
            assert!((a - b).abs() < 1e-6, "permutation equivariance violated");
        }
    }
    // group 0 untouched
    for i in 0..j * d {
        assert!((zp.data()[i] - z.data()[i]).abs() < 1e-12);
    }
}

#[test]
fn grid_attention_commutes_with_translation_by_grid_stride() {
    // cyclic translation by G pixels maps every residue class to itself, so
    // the attention output translates identically
    let (t, h, w, c, g) = (2, 6, 6, 4, 2);
    let fmap = sample_tensor::<f64>(&[t, h, w, c], 29).scale(0.5);
    let (_, p64) = random_params(c, 2, 71);

    let run = |f: &Tensor<f64>| -> Tensor<f64> {
        let tokens = grid_partition(f, g).unwrap();
        let z = attention(&tokens, &p64).unwrap();
        grid_unpartition(&z, t, h, w, c, g).unwrap()
    };
    let translate = |f: &Tensor<f64>| -> Tensor<f64> {
        let mut out = Tensor::zeros(&[t, h, w, c]);
        for fr in 0..t {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        let src = ((fr * h + y) * w + x) * c + ch;
                        let dst = ((fr * h + (y + g) % h) * w + (x + g) % w) * c + ch;
                        out.data_mut()[dst] = f.data()[src];
                    }
                }
            }
        }
        out
    };
    let a = run(&translate(&fmap));
    let b = translate(&run(&fmap));
    assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
}
