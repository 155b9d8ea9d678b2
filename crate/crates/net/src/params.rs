//! Parameter storage.
//!
//! `param_layout` is the single definition of which tensors the network
//! owns, their shapes, and how they initialize; the graph builder consumes
//! the same layout in the same order (checked by name as it goes), and the
//! checkpoint format serializes it verbatim.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vsci_tensor::{Scalar, Tensor};

use crate::config::NetworkConfig;
use crate::error::{NetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamInit {
    /// Truncated normal, std sqrt(2 / fan_in); convolution weights.
    ConvFanIn,
    /// Truncated normal, std 0.02; attention projections.
    Projection,
    /// Normalization scales.
    Ones,
    /// Biases, shifts, and the block merge conv (blocks start near-identity).
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDef {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: ParamInit,
}

fn conv_def(name: String, k: [usize; 3], ci: usize, co: usize, init: ParamInit) -> [ParamDef; 2] {
    [
        ParamDef {
            name: format!("{name}.weight"),
            shape: vec![k[0], k[1], k[2], ci, co],
            init,
        },
        ParamDef {
            name: format!("{name}.bias"),
            shape: vec![co],
            init: ParamInit::Zeros,
        },
    ]
}

/// Every parameter tensor of the network, in the canonical (forward
/// traversal) order.
pub fn param_layout(config: &NetworkConfig) -> Vec<ParamDef> {
    let c = config.channels;
    let cb = config.branch_channels();
    let hidden = cb * config.ffn_expansion;
    let mut defs = Vec::new();

    defs.extend(conv_def("extract0".into(), [3, 7, 7], 1, c, ParamInit::ConvFanIn));
    defs.extend(conv_def("extract1".into(), [3, 3, 3], c, c, ParamInit::ConvFanIn));
    defs.extend(conv_def("extract2".into(), [3, 3, 3], c, c, ParamInit::ConvFanIn));

    for i in 0..config.blocks {
        for kind in config.branches.kinds() {
            let p = format!("block{i}.{kind}");
            defs.push(ParamDef {
                name: format!("{p}.ln.gamma"),
                shape: vec![cb],
                init: ParamInit::Ones,
            });
            defs.push(ParamDef {
                name: format!("{p}.ln.beta"),
                shape: vec![cb],
                init: ParamInit::Zeros,
            });
            for proj in ["wq", "wk", "wv", "wo"] {
                defs.push(ParamDef {
                    name: format!("{p}.attn.{proj}"),
                    shape: vec![cb, cb],
                    init: ParamInit::Projection,
                });
            }
            defs.extend(conv_def(
                format!("{p}.ffn.wide"),
                [3, 3, 3],
                cb,
                hidden,
                ParamInit::ConvFanIn,
            ));
            defs.extend(conv_def(
                format!("{p}.ffn.narrow"),
                [1, 1, 1],
                hidden,
                cb,
                ParamInit::ConvFanIn,
            ));
        }
        defs.extend(conv_def(
            format!("block{i}.merge"),
            [1, 1, 1],
            c,
            c,
            ParamInit::Zeros,
        ));
    }

    // the transposed up-convolution shares conv weight layout [k,ci,co]
    defs.extend(conv_def("head.up".into(), [1, 3, 3], c, c, ParamInit::ConvFanIn));
    defs.extend(conv_def("head.mid".into(), [1, 1, 1], c, c, ParamInit::ConvFanIn));
    defs.extend(conv_def("head.out".into(), [3, 3, 3], c, 1, ParamInit::ConvFanIn));
    defs
}

/// The network's tensors, aligned one-to-one with `param_layout`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<F: Scalar> {
    defs: Vec<ParamDef>,
    tensors: Vec<Tensor<F>>,
}

impl<F: Scalar> NetParams<F> {
    pub fn init(config: &NetworkConfig, seed: u64) -> Self {
        let defs = param_layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = defs
            .iter()
            .map(|def| {
                let n: usize = def.shape.iter().product();
                match def.init {
                    ParamInit::Zeros => Tensor::zeros(&def.shape),
                    ParamInit::Ones => Tensor::full(&def.shape, F::one()),
                    ParamInit::Projection => {
                        sample_trunc_normal(&mut rng, &def.shape, 0.02)
                    }
                    ParamInit::ConvFanIn => {
                        // fan_in = kernel volume * input channels
                        let co = *def.shape.last().unwrap();
                        let fan_in = n / co;
                        let std = (2.0 / fan_in as f64).sqrt();
                        sample_trunc_normal(&mut rng, &def.shape, std)
                    }
                }
            })
            .collect();
        NetParams { defs, tensors }
    }

    pub fn from_tensors(defs: Vec<ParamDef>, tensors: Vec<Tensor<F>>) -> Result<Self> {
        if defs.len() != tensors.len() {
            return Err(NetError::Checkpoint(format!(
                "{} tensors for {} parameter slots",
                tensors.len(),
                defs.len()
            )));
        }
        for (def, t) in defs.iter().zip(&tensors) {
            if def.shape != t.shape() {
                return Err(NetError::Checkpoint(format!(
                    "parameter {} expects shape {:?}, got {:?}",
                    def.name,
                    def.shape,
                    t.shape()
                )));
            }
        }
        Ok(NetParams { defs, tensors })
    }

    pub fn defs(&self) -> &[ParamDef] {
        &self.defs
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.defs
            .iter()
            .map(|d| d.name.as_str())
            .zip(self.tensors.iter())
    }
}

fn sample_trunc_normal<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<F> {
    let normal = Normal::new(0.0f64, std).expect("std > 0");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            loop {
                let v = normal.sample(rng);
                if v.abs() <= 2.0 * std {
                    return F::from_f64(v);
                }
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_deterministic_and_named_uniquely() {
        let cfg = NetworkConfig::toy();
        let a = param_layout(&cfg);
        let b = param_layout(&cfg);
        assert_eq!(a, b);
        let mut names: Vec<&str> = a.iter().map(|d| d.name.as_str()).collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
    }

    #[test]
    fn init_is_seed_reproducible() {
        let cfg = NetworkConfig::toy();
        let a = NetParams::<f32>::init(&cfg, 9);
        let b = NetParams::<f32>::init(&cfg, 9);
        assert_eq!(a, b);
        let c = NetParams::<f32>::init(&cfg, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn merge_convs_start_at_zero() {
        let cfg = NetworkConfig::toy();
        let p = NetParams::<f64>::init(&cfg, 1);
        for (name, t) in p.named() {
            if name.contains("merge") || name.ends_with(".bias") || name.ends_with("ln.beta") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name} not zero");
            }
            if name.ends_with("ln.gamma") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name} not one");
            }
        }
    }

    #[test]
    fn truncation_bounds_hold() {
        let cfg = NetworkConfig::toy();
        let p = NetParams::<f64>::init(&cfg, 3);
        for (name, t) in p.named() {
            if name.ends_with("attn.wq") {
                assert!(t.data().iter().all(|&v| v.abs() <= 0.04), "{name}");
            }
        }
    }
}
