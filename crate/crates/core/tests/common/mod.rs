//! Random problem builders shared by the integration tests.
#![allow(dead_code)]

use mfbo::envs::EnvironmentSpec;
use mfbo::gp::{
    fit, AdditiveKernel, FitOptions, GpInput, GpPosterior, InputShape, KernelParams, NoiseModel, ObservationBuffer,
};
use mfbo::meanfield::{ActionSet, ContextMeasure};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub struct RandomProblem {
    pub actions: ActionSet,
    pub contexts: ContextMeasure,
    pub kernel: AdditiveKernel,
    pub noise: NoiseModel,
    pub buffer: ObservationBuffer,
}

pub fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| (1.5 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_dist<R: Rng>(na: usize, nc: usize, rng: &mut R) -> Vec<f64> {
    (0..nc).flat_map(|_| random_simplex(na, rng)).collect()
}

fn random_points<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

/// A random shape, kernel, noise level and observation buffer of size `n`.
pub fn random_problem<R: Rng>(max_actions: usize, max_contexts: usize, n: usize, rng: &mut R) -> RandomProblem {
    let na = rng.random_range(2..=max_actions);
    let nc = rng.random_range(1..=max_contexts);
    let (da, dc) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let actions = ActionSet::new(random_points(na, da, rng), None).unwrap();
    let contexts = ContextMeasure::new(random_points(nc, dc, rng), random_simplex(nc, rng)).unwrap();
    let params = KernelParams {
        lengthscale_action: rng.random_range(0.3..2.0),
        lengthscale_context: rng.random_range(0.3..2.0),
        lengthscale_dist: rng.random_range(0.2..1.5),
        output_scale: rng.random_range(0.5..2.0),
        ..KernelParams::default()
    };
    let shape = InputShape { action_dim: da, context_dim: dc, num_actions: na, num_contexts: nc };
    let kernel = AdditiveKernel::new(params, shape).unwrap();
    let noise = NoiseModel::new(rng.random_range(0.05..0.5));
    let mut buffer = ObservationBuffer::new();
    for _ in 0..n {
        let a = rng.random_range(0..na);
        let c = rng.random_range(0..nc);
        let z = GpInput::new(actions.embedding(a).to_vec(), contexts.embedding(c).to_vec(), random_dist(na, nc, rng));
        buffer.push(z, rng.random_range(-3.0..3.0));
    }
    RandomProblem { actions, contexts, kernel, noise, buffer }
}

impl RandomProblem {
    pub fn fit(&self, standardize: bool) -> GpPosterior {
        fit(&self.buffer, self.kernel, self.noise, FitOptions { standardize }).unwrap()
    }

    pub fn random_input<R: Rng>(&self, rng: &mut R) -> GpInput {
        let (na, nc) = (self.actions.len(), self.contexts.len());
        let a = rng.random_range(0..na);
        let c = rng.random_range(0..nc);
        GpInput::new(self.actions.embedding(a).to_vec(), self.contexts.embedding(c).to_vec(), random_dist(na, nc, rng))
    }
}

/// `(mean, var)` by explicitly inverting `K + R² I`.
pub fn dense_posterior(p: &RandomProblem, z: &GpInput) -> (f64, f64) {
    let inputs = p.buffer.inputs();
    let n = inputs.len();
    let r2 = p.noise.noise_std * p.noise.noise_std;
    let k =
        DMatrix::from_fn(n, n, |i, j| p.kernel.eval(&inputs[i], &inputs[j]).unwrap() + if i == j { r2 } else { 0.0 });
    let inv = k.try_inverse().expect("regularised Gram matrix is invertible");
    let ks = DVector::from_fn(n, |i, _| p.kernel.eval(z, &inputs[i]).unwrap());
    let y = DVector::from_column_slice(p.buffer.targets());
    let mean = (ks.transpose() * &inv * y)[0];
    let var = p.kernel.eval(z, z).unwrap() - (ks.transpose() * &inv * &ks)[0];
    (mean, var)
}

/// Relative error with a small absolute floor so that components that are
/// zero up to rounding do not divide by zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-6)
}

fn maritime_spec() -> EnvironmentSpec {
    let actions = ActionSet::new((0..6).map(|i| vec![i as f64, 0.0]).collect(), None).unwrap();
    let contexts = ContextMeasure::uniform(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
    let cap = vec![0.1, 0.2, 0.3, 0.15, 0.15, 0.1];
    EnvironmentSpec::maritime(actions, contexts, cap, vec![0, 0, 1, 1, 2, 2], 40, 0.0).unwrap()
}

pub fn all_specs() -> Vec<EnvironmentSpec> {
    let dm_actions = ActionSet::new((0..5).map(|i| vec![i as f64]).collect(), None).unwrap();
    vec![
        EnvironmentSpec::swarm(40, 12, 10.0, 0.0).unwrap(),
        EnvironmentSpec::arena(40, 12, 10.0, 0.0).unwrap(),
        EnvironmentSpec::demand_matching(dm_actions, vec![0.3, 0.3, 0.2, 0.1, 0.1], 40, 0.0, false).unwrap(),
        maritime_spec(),
    ]
}
