//! Toy training loop: sample a T-frame window, augment, encode with the
//! fixed mask set, run the network, backpropagate the mean-squared error,
//! and update with adaptive moments. Strictly sequential and deterministic
//! for a given seed.

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vsci_net::checkpoint::Checkpoint;
use vsci_net::{coarse_input, cube_to_feature, BstNet, NetworkConfig};
use vsci_optics::{encode, MaskSet, NoiseModel, VideoCube};
use vsci_tensor::tape::Tape;
use vsci_tensor::Tensor;

use crate::augment::{augment, AugmentConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub initial_lr: f64,
    /// Steps at which the learning rate drops by 10x.
    pub lr_decay_steps: Vec<usize>,
    pub augment: AugmentConfig,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl TrainConfig {
    pub fn toy(crop: usize) -> Self {
        TrainConfig {
            steps: 500,
            batch_size: 1,
            seed: 0,
            initial_lr: 1e-3,
            lr_decay_steps: vec![],
            augment: AugmentConfig::disabled(crop),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr >= 0.0) || !self.initial_lr.is_finite() {
            bail!("learning rate must be finite and >= 0, got {}", self.initial_lr);
        }
        if self.steps == 0 || self.batch_size == 0 {
            bail!("steps and batch size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            bail!("moment coefficients must lie in [0,1)");
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        let drops = self.lr_decay_steps.iter().filter(|&&s| step >= s).count();
        self.initial_lr * 0.1f64.powi(drops as i32)
    }
}

/// Adaptive-moment update state, one slot per parameter tensor.
struct Adam {
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
    t: u64,
}

impl Adam {
    fn new(params: &[Tensor<f32>]) -> Self {
        Adam {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Tensor<f32>], grads: &[Tensor<f32>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let gd = g.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = gd[i] as f64;
                let mi = b1 * md[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * vd[i] as f64 + (1.0 - b2) * gi * gi;
                md[i] = mi as f32;
                vd[i] = vi as f32;
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.epsilon);
                pd[i] = (pd[i] as f64 - update) as f32;
            }
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint<f32>,
    /// Set when the loss went non-finite; the checkpoint then holds the
    /// parameters from the last finite-loss step.
    pub diverged: bool,
}

/// One gradient evaluation: encode a training window, run the network,
/// return (loss, per-parameter gradients).
fn loss_and_grads(
    net: &BstNet<f32>,
    sample: &VideoCube,
    masks: &MaskSet,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    let y = encode(sample, masks, &NoiseModel::None)?;
    let xe = coarse_input::<f32>(&y, masks)?;
    let truth = cube_to_feature::<f32>(sample)?;
    let mut tape = Tape::new();
    let (out, param_ids) = net.build_graph(&mut tape, &xe)?;
    let loss_id = tape.mse_loss(out, truth)?;
    let loss = tape.value(loss_id).item()? as f64;
    let grads = tape.backward(loss_id, None)?;
    let mut collected = Vec::with_capacity(param_ids.len());
    for (&id, p) in param_ids.iter().zip(net.params.tensors()) {
        collected.push(
            grads
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape())),
        );
    }
    Ok((loss, collected))
}

/// Trains a fresh network on the given clips with a fixed mask set.
pub fn train(
    clips: &[VideoCube],
    masks: &MaskSet,
    net_config: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if clips.is_empty() {
        bail!("no training clips");
    }
    if cfg.augment.crop != net_config.h || cfg.augment.crop != net_config.w {
        bail!(
            "crop size {} must match the network input {}x{}",
            cfg.augment.crop,
            net_config.h,
            net_config.w
        );
    }
    for clip in clips {
        if clip.t < net_config.t {
            bail!("clip holds {} frames, network needs {}", clip.t, net_config.t);
        }
    }

    let mut net =
        BstNet::<f32>::init(net_config.clone(), cfg.seed).context("initializing network")?;
    let mut adam = Adam::new(net.params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169);
    let mut loss_history = Vec::with_capacity(cfg.steps);
    let mut last_good = net.params.clone();

    for step in 0..cfg.steps {
        let mut grad_sum: Option<Vec<Tensor<f32>>> = None;
        let mut loss_sum = 0.0;
        for _ in 0..cfg.batch_size {
            let clip = &clips[rng.gen_range(0..clips.len())];
            let start = rng.gen_range(0..=clip.t - net_config.t);
            let mut window = VideoCube::zeros(net_config.t, clip.h, clip.w);
            for m in 0..net_config.t {
                window.frame_mut(m).copy_from_slice(clip.frame(start + m));
            }
            let sample = augment(&window, &cfg.augment, &mut rng)?;
            let (loss, grads) = loss_and_grads(&net, &sample, masks)?;
            loss_sum += loss;
            grad_sum = Some(match grad_sum {
                None => grads,
                Some(mut acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.add_assign(g).expect("aligned gradient shapes");
                    }
                    acc
                }
            });
        }
        let loss = loss_sum / cfg.batch_size as f64;
        if !loss.is_finite() {
            // roll back to the parameters from the last finite-loss step
            net.params = last_good;
            return Ok(TrainOutcome {
                checkpoint: Checkpoint {
                    net,
                    step: step as u64,
                    loss_history,
                },
                diverged: true,
            });
        }
        loss_history.push(loss);
        last_good = net.params.clone();

        let scale = 1.0 / cfg.batch_size as f32;
        let mut grads = grad_sum.expect("batch size >= 1");
        for g in &mut grads {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
        adam.step(net.params.tensors_mut(), &grads, cfg.lr_at(step), cfg);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            net,
            step: cfg.steps as u64,
            loss_history,
        },
        diverged: false,
    })
}
