//! Cost-penalized Wasserstein adversarial training of a transport map.
//!
//! The critic minimizes `mean D(x') - mean D(G(x))` under weight clipping;
//! the generator minimizes `mean D(G(x)) + lambda * mean c(x, G(x))`. The
//! penalty term pulls the generator towards the cheapest way of producing
//! the target distribution.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp, MlpFile};
use super::rmsprop::RmsPropState;
use crate::data::{CostFunction, FeatureMatrix, GroupedDataset, Normalizer};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Half-width of the uniform weight initialization.
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub batch_size: usize,
    pub generator_steps: usize,
    pub critic_steps_per_gen: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            batch_size: 64,
            generator_steps: 20_000,
            critic_steps_per_gen: 5,
            learning_rate: 5e-5,
            clip: 0.01,
            seed: 0,
            hidden: vec![128, 128],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::BadParams(msg.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if self.batch_size == 0 || self.generator_steps == 0 || self.critic_steps_per_gen == 0 {
            return bad("batch_size, generator_steps and critic_steps_per_gen must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad("clip must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer widths must be >= 1");
        }
        Ok(())
    }

    fn dims(&self, d: usize, out: usize) -> Vec<usize> {
        std::iter::once(d)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(out))
            .collect()
    }
}

/// Maps points of the source group into the target group's space.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: Mlp,
}

/// Scalar-valued adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Generator {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.input_dim() != net.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim(),
                found: net.output_dim(),
            });
        }
        Ok(Self { net })
    }

    pub fn init(d: usize, cfg: &TrainConfig, rng: &mut StreamRng) -> Self {
        Self {
            net: Mlp::uniform(&cfg.dims(d, d), INIT_SCALE, rng),
        }
    }

    pub fn dims(&self) -> usize {
        self.net.input_dim()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.net.forward(x)
    }

    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
        self.net.forward(view).into_raw_vec_and_offset().0
    }
}

impl Critic {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: net.output_dim(),
            });
        }
        Ok(Self { net })
    }

    pub fn init(d: usize, cfg: &TrainConfig, rng: &mut StreamRng) -> Self {
        Self {
            net: Mlp::uniform(&cfg.dims(d, 1), INIT_SCALE, rng),
        }
    }

    pub fn score(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.net.forward(x).into_raw_vec_and_offset().0
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_nonempty(batch: ArrayView2<f64>) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::EmptySample);
    }
    Ok(())
}

/// `(1/n) sum D(G(x)) + (lambda/n) sum c(x, G(x))` over `batch`.
pub fn generator_loss(
    gen: &Generator,
    critic: &Critic,
    batch: ArrayView2<f64>,
    lambda: f64,
    c: CostFunction,
) -> Result<f64> {
    Ok(generator_loss_and_grad(gen, critic, batch, lambda, c)?.0)
}

/// `(1/n') sum D(x') - (1/n) sum D(G(x))`.
pub fn critic_loss(
    critic: &Critic,
    gen: &Generator,
    batch_a: ArrayView2<f64>,
    batch_b: ArrayView2<f64>,
) -> Result<f64> {
    Ok(critic_loss_and_grad(critic, gen, batch_a, batch_b)?.0)
}

/// Generator loss and its gradient with respect to the generator parameters.
pub fn generator_loss_and_grad(
    gen: &Generator,
    critic: &Critic,
    batch: ArrayView2<f64>,
    lambda: f64,
    c: CostFunction,
) -> Result<(f64, Gradients)> {
    check_nonempty(batch)?;
    check_dim(gen.dims(), batch.ncols())?;
    check_dim(critic.net.input_dim(), batch.ncols())?;
    let batch = batch.as_standard_layout();
    let batch = batch.view();
    let n = batch.nrows() as f64;

    let gen_trace = gen.net.forward_trace(batch);
    let moved = &gen_trace.output;
    let critic_trace = critic.net.forward_trace(moved.view());

    let adversarial = critic_trace.output.sum() / n;
    let penalty: f64 = batch
        .rows()
        .into_iter()
        .zip(moved.rows())
        .map(|(x, y)| c.eval(x.as_slice().unwrap(), y.as_slice().unwrap()))
        .sum::<f64>()
        / n;
    let loss = adversarial + lambda * penalty;

    let upstream = Array2::from_elem((batch.nrows(), 1), 1.0 / n);
    let (_, mut grad_moved) = critic.net.backward(&critic_trace, upstream, false);
    if lambda != 0.0 {
        let d = batch.ncols();
        let mut g = vec![0.0; d];
        for ((x, y), mut out) in batch
            .rows()
            .into_iter()
            .zip(moved.rows())
            .zip(grad_moved.rows_mut())
        {
            c.grad_target(x.as_slice().unwrap(), y.as_slice().unwrap(), &mut g);
            for (o, gj) in out.iter_mut().zip(&g) {
                *o += lambda / n * gj;
            }
        }
    }
    let (grads, _) = gen.net.backward(&gen_trace, grad_moved, true);
    Ok((loss, grads.expect("requested parameter gradients")))
}

/// Critic loss and its gradient with respect to the critic parameters.
pub fn critic_loss_and_grad(
    critic: &Critic,
    gen: &Generator,
    batch_a: ArrayView2<f64>,
    batch_b: ArrayView2<f64>,
) -> Result<(f64, Gradients)> {
    check_nonempty(batch_a)?;
    check_nonempty(batch_b)?;
    check_dim(gen.dims(), batch_a.ncols())?;
    check_dim(critic.net.input_dim(), batch_b.ncols())?;
    let (na, nb) = (batch_a.nrows(), batch_b.nrows());

    // One pass over [real; generated].
    let moved = gen.apply(batch_a);
    let stacked = ndarray::concatenate(Axis(0), &[batch_b, moved.view()])
        .expect("batches share width");
    let trace = critic.net.forward_trace(stacked.view());
    let scores = trace.output.column(0);
    let real: f64 = scores.slice(ndarray::s![..nb]).sum() / nb as f64;
    let fake: f64 = scores.slice(ndarray::s![nb..]).sum() / na as f64;
    let loss = real - fake;

    let mut upstream = Array2::zeros((na + nb, 1));
    upstream
        .slice_mut(ndarray::s![..nb, ..])
        .fill(1.0 / nb as f64);
    upstream
        .slice_mut(ndarray::s![nb.., ..])
        .fill(-1.0 / na as f64);
    let (grads, _) = critic.net.backward(&trace, upstream, true);
    Ok((loss, grads.expect("requested parameter gradients")))
}

/// Per-step losses reported to training observers.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub step: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
    /// Largest critic parameter magnitude seen after any clipped update.
    pub critic_max_abs: f64,
}

fn draw_batch(data: &Array2<f64>, size: usize, rng: &mut StreamRng) -> Array2<f64> {
    let n = data.nrows();
    let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
    data.select(Axis(0), &idx)
}

/// Train a generator mapping `group_a` onto `group_b`.
pub fn train(data: &GroupedDataset, cfg: &TrainConfig, c: CostFunction) -> Result<Generator> {
    train_observed(data, cfg, c, |_| {})
}

/// [`train`], calling `observe` after every generator update.
pub fn train_observed<F: FnMut(&StepStats)>(
    data: &GroupedDataset,
    cfg: &TrainConfig,
    c: CostFunction,
    mut observe: F,
) -> Result<Generator> {
    cfg.validate()?;
    if data.group_a.is_empty() || data.group_b.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data.dims();
    let source = data.group_a.values();
    let target = data.group_b.values();

    let mut init_rng = rng::substream(cfg.seed, "init");
    let mut gen = Generator::init(d, cfg, &mut init_rng);
    let mut critic = Critic::init(d, cfg, &mut init_rng);
    critic.net.clamp(cfg.clip);
    let mut gen_opt = RmsPropState::new(&gen.net, cfg.learning_rate);
    let mut critic_opt = RmsPropState::new(&critic.net, cfg.learning_rate);
    let mut batches = rng::substream(cfg.seed, "batches");

    for step in 0..cfg.generator_steps {
        let mut last_critic = 0.0;
        let mut critic_max_abs: f64 = 0.0;
        for _ in 0..cfg.critic_steps_per_gen {
            let a = draw_batch(source, cfg.batch_size, &mut batches);
            let b = draw_batch(target, cfg.batch_size, &mut batches);
            let (loss, grads) = critic_loss_and_grad(&critic, &gen, a.view(), b.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    snapshot: Box::new(gen),
                });
            }
            critic_opt.step(&mut critic.net, &grads);
            critic.net.clamp(cfg.clip);
            critic_max_abs = critic_max_abs.max(critic.net.max_abs_param());
            last_critic = loss;
        }

        let a = draw_batch(source, cfg.batch_size, &mut batches);
        let (loss, grads) = generator_loss_and_grad(&gen, &critic, a.view(), cfg.lambda, c)?;
        if !loss.is_finite() || grads.params().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                snapshot: Box::new(gen),
            });
        }
        gen_opt.step(&mut gen.net, &grads);
        observe(&StepStats {
            step,
            critic_loss: last_critic,
            generator_loss: loss,
            critic_max_abs,
        });
    }
    Ok(gen)
}

/// Row-wise image of `points` under the generator.
pub fn map_points(gen: &Generator, points: &FeatureMatrix) -> Result<FeatureMatrix> {
    check_dim(gen.dims(), points.cols())?;
    points.with_values(gen.apply(points.values().view()))
}

/// Serialized generator together with the context needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    #[serde(flatten)]
    pub net: MlpFile,
    pub feature_names: Vec<String>,
    pub train_config: TrainConfig,
    pub cost: CostFunction,
    pub normalizer: Option<Normalizer>,
}

impl GeneratorFile {
    pub fn new(
        gen: &Generator,
        feature_names: Vec<String>,
        train_config: TrainConfig,
        cost: CostFunction,
        normalizer: Option<Normalizer>,
    ) -> Self {
        Self {
            net: gen.net.to_file(),
            feature_names,
            train_config,
            cost,
            normalizer,
        }
    }

    pub fn generator(&self) -> Result<Generator> {
        let gen = Generator::new(Mlp::from_file(&self.net)?)?;
        check_dim(self.feature_names.len(), gen.dims())?;
        Ok(gen)
    }
}
