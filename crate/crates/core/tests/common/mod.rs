#![allow(dead_code)]

use fliptest_core::flip::{compute_flipset, Classifier, PointKey, TransportMap};
use fliptest_core::neural::{critic_loss, critic_loss_and_grad, generator_loss, generator_loss_and_grad, Critic, Generator, Mlp};
use fliptest_core::rng::{self, StreamRng};
use fliptest_core::{solve_exact, CostFunction, FeatureMatrix, GroupedDataset, Result};
use ndarray::Array2;
use rand::Rng;

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-4;
/// Absolute floor under the relative-error denominator, so that gradients
/// that are zero up to rounding compare as equal.
pub const GRAD_FLOOR: f64 = 1e-7;

fn random_net(dims: &[usize], rng: &mut StreamRng) -> Mlp {
    let mut net = Mlp::zeros(dims);
    for p in net.params_mut() {
        *p = rng.random_range(-1.0..1.0);
    }
    net
}

fn random_batch(rows: usize, d: usize, rng: &mut StreamRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, d), |_| rng.random_range(-2.0..2.0))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Largest relative error between analytic and central-difference
/// gradients of `loss` over every parameter of `net`.
fn worst_error(net: &Mlp, analytic: &Mlp, loss: impl Fn(&Mlp) -> f64) -> f64 {
    let mut probe = net.clone();
    let grads: Vec<f64> = analytic.params().copied().collect();
    let mut worst: f64 = 0.0;
    for (k, &g) in grads.iter().enumerate() {
        let orig = *probe.params().nth(k).unwrap();
        *probe.params_mut().nth(k).unwrap() = orig + FD_STEP;
        let up = loss(&probe);
        *probe.params_mut().nth(k).unwrap() = orig - FD_STEP;
        let down = loss(&probe);
        *probe.params_mut().nth(k).unwrap() = orig;
        worst = worst.max(rel_err(g, (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Smallest distance of a hidden pre-activation from the ReLU kink.
fn kink_margin(net: &Mlp, x: &Array2<f64>) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    let layers = net.layers();
    for (k, layer) in layers.iter().enumerate() {
        let z = h.dot(&layer.weights) + &layer.bias;
        if k + 1 == layers.len() {
            break;
        }
        margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        h = z.mapv(|v| v.max(0.0));
    }
    margin
}

/// Smallest gap between an input coordinate and its image, where the L1
/// costs are not differentiable.
fn cost_margin(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    x.iter().zip(y).fold(f64::INFINITY, |m, (a, b)| m.min((a - b).abs()))
}

/// Central differences are only a valid oracle when every function on the
/// stencil stays on one linear piece; instances closer than this to a kink
/// are redrawn.
const MIN_MARGIN: f64 = 1e-2;

/// Worst relative gradient error of both losses on one random tiny
/// instance (d <= 4, one hidden layer of 8).
pub fn gradient_check_instance(index: u64) -> (f64, f64) {
    let mut rng = rng::indexed_substream(7, "gradient-check", index);
    let d = rng.random_range(1..=4);
    let costs = [CostFunction::SquaredL1, CostFunction::L1, CostFunction::SquaredL2];
    let c = costs[index as usize % 3];
    let lambda = if index % 2 == 0 { 0.7 } else { 0.0 };
    let (gen, critic, a, b) = loop {
        let gen = Generator::new(random_net(&[d, 8, d], &mut rng)).unwrap();
        let critic = Critic::new(random_net(&[d, 8, 1], &mut rng)).unwrap();
        let a = random_batch(5, d, &mut rng);
        let b = random_batch(6, d, &mut rng);
        let moved = gen.apply(a.view());
        let margin = kink_margin(&gen.net, &a)
            .min(kink_margin(&critic.net, &moved))
            .min(kink_margin(&critic.net, &b))
            .min(cost_margin(&a, &moved));
        if margin > MIN_MARGIN {
            break (gen, critic, a, b);
        }
    };

    let (_, g_gen) = generator_loss_and_grad(&gen, &critic, a.view(), lambda, c).unwrap();
    let gen_err = worst_error(&gen.net, &g_gen, |net| {
        let g = Generator::new(net.clone()).unwrap();
        generator_loss(&g, &critic, a.view(), lambda, c).unwrap()
    });
    let (_, g_critic) = critic_loss_and_grad(&critic, &gen, a.view(), b.view()).unwrap();
    let critic_err = worst_error(&critic.net, &g_critic, |net| {
        let cr = Critic::new(net.clone()).unwrap();
        critic_loss(&cr, &gen, a.view(), b.view()).unwrap()
    });
    (gen_err, critic_err)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Vec<f64>,
    pub t: f64,
}

impl Classifier for Linear {
    fn predict(&self, x: &[f64], _key: PointKey) -> Result<u8> {
        Ok(u8::from(self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() > self.t))
    }
}

fn integer_matrix(n: usize, d: usize, rng: &mut StreamRng) -> FeatureMatrix {
    FeatureMatrix::unnamed(Array2::from_shape_fn((n, d), |_| f64::from(rng.random_range(-5i32..=5)))).unwrap()
}

/// Random equal-size groups (n <= 8), a random linear classifier and the
/// flipset under the exact map.
pub struct ParityInstance {
    pub pos_flips: usize,
    pub neg_flips: usize,
    pub pos_a: usize,
    pub pos_b: usize,
}

pub fn parity_instance(index: u64) -> ParityInstance {
    let mut rng = rng::indexed_substream(11, "parity", index);
    let n = rng.random_range(1..=8);
    let d = rng.random_range(1..=3);
    let data = GroupedDataset::new(integer_matrix(n, d, &mut rng), integer_matrix(n, d, &mut rng)).unwrap();
    let h = Linear {
        w: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        t: rng.random_range(-2.0..2.0),
    };
    let map = TransportMap::Exact(solve_exact(&data, CostFunction::SquaredL1).unwrap());
    let f = compute_flipset(&h, &data.group_a, &map.counterparts(&data).unwrap()).unwrap();
    let count = |m: &FeatureMatrix| (0..m.rows()).filter(|&i| h.predict(m.row(i), PointKey::Row(i)).unwrap() == 1).count();
    ParityInstance {
        pos_flips: f.positive.len(),
        neg_flips: f.negative.len(),
        pos_a: count(&data.group_a),
        pos_b: count(&data.group_b),
    }
}

impl ParityInstance {
    /// Both directions of the equivalence between balanced flipsets and
    /// equal positive counts.
    pub fn holds(&self) -> bool {
        (self.pos_flips == self.neg_flips) == (self.pos_a == self.pos_b)
            && self.pos_a as i64 - self.pos_b as i64 == self.pos_flips as i64 - self.neg_flips as i64
    }
}
