//! Mean-field UCB acquisition and its optimisation over the simplex.
//!
//! The acquisition value of a conditional distribution `ξ` is the exact
//! finite expectation
//!
//! ```text
//! α(ξ) = Σ_c p(c) Σ_x ξ(x|c) [ μ(x, c, ξ) + β σ(x, c, ξ) ]
//! ```
//!
//! Every GP query inside the sum shares the same distribution input, so
//! with the additive kernel the cross-kernel vector splits into a part that
//! depends only on `(x, c)` and a part that depends only on `ξ`.
//! [`AcquisitionSurface`] precomputes the former once per fit; each
//! evaluation then costs two triangular solves instead of `|A||C|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{back_sub_transposed, forward_sub, GpError, GpInput, GpPosterior, RbfForm};
use crate::meanfield::{softmax_into, ActionSet, ConditionalDistribution, ContextMeasure, Logits};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcqError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("posterior expects {expected} but the problem has {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("all {0} acquisition restarts produced non-finite values")]
    AllRestartsFailed(usize),
    #[error("invalid optimiser setting: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = std::result::Result<T, AcqError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// Grows with `t` and with `|A||C|` as required by the regret bound.
    Theoretical,
    #[default]
    Constant,
    /// `log_scale · sqrt(ln(t + 1))`
    LogGrowth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSchedule {
    pub mode: BetaMode,
    /// Tail constants of the sample-path derivative bound.
    pub a: f64,
    pub b: f64,
    pub constant: f64,
    pub log_scale: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self { mode: BetaMode::Constant, a: 1.0, b: 1.0, constant: 2.0, log_scale: 2.0 }
    }
}

/// `log |Ξ_t|`, the log-size of the discretisation of the product simplex
/// used by the theoretical schedule:
///
/// `|Ξ_t| = (b |A||C| t² (ln(a |A||C|) + √π / 2))^{|A||C|}`
///
/// Returns 0 (i.e. `|Ξ_t| = 1`) when the base is not above 1.
pub fn log_xi_cardinality(t: u64, num_actions: usize, num_contexts: usize, a: f64, b: f64) -> f64 {
    assert!(t >= 1, "t starts at 1");
    let ac = (num_actions * num_contexts) as f64;
    let t = t as f64;
    let base = b * ac * t * t * ((a * ac).ln() + std::f64::consts::PI.sqrt() / 2.0);
    if base > 1.0 {
        ac * base.ln()
    } else {
        0.0
    }
}

/// Exploration weight `β_t`.
pub fn beta_value(t: u64, num_actions: usize, num_contexts: usize, sched: &BetaSchedule) -> f64 {
    assert!(t >= 1, "t starts at 1");
    match sched.mode {
        BetaMode::Theoretical => {
            let log_xi = log_xi_cardinality(t, num_actions, num_contexts, sched.a, sched.b);
            let tf = t as f64;
            2.0 * ((num_actions as f64).ln() + (num_contexts as f64).ln() + log_xi + 2.0 * tf.ln()
                - 0.5 * (2.0 * std::f64::consts::PI).ln())
        }
        BetaMode::Constant => sched.constant,
        BetaMode::LogGrowth => sched.log_scale * ((t as f64) + 1.0).ln().sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcqOptConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub restarts: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_mode: GradMode,
}

impl Default for AcqOptConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 0.01,
            restarts: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_mode: GradMode::Analytic,
        }
    }
}

impl AcqOptConfig {
    fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(AcqError::InvalidConfig("steps must be >= 1"));
        }
        if self.restarts < 1 {
            return Err(AcqError::InvalidConfig("restarts must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AcqError::InvalidConfig("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(AcqError::InvalidConfig("adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Kernel input for action `a` under context `c` and distribution `dist`.
pub fn cell_input(actions: &ActionSet, contexts: &ContextMeasure, a: usize, c: usize, dist: &[f64]) -> GpInput {
    GpInput::new(actions.embedding(a).to_vec(), contexts.embedding(c).to_vec(), dist.to_vec())
}

fn check_problem(
    post: &GpPosterior,
    xi_shape: (usize, usize),
    contexts: &ContextMeasure,
    actions: &ActionSet,
) -> Result<()> {
    let s = post.kernel().shape();
    let found = (actions.dim(), contexts.dim(), actions.len(), contexts.len());
    let expected = (s.action_dim, s.context_dim, s.num_actions, s.num_contexts);
    if found != expected || xi_shape != (contexts.len(), actions.len()) {
        return Err(AcqError::ShapeMismatch {
            expected: format!("(d_A, d_C, |A|, |C|) = {expected:?}"),
            found: format!("{found:?} with ξ of shape {xi_shape:?}"),
        });
    }
    Ok(())
}

/// MF-UCB value by direct GP queries, one per `(action, context)` cell.
pub fn mf_ucb(
    post: &GpPosterior,
    xi: &ConditionalDistribution,
    contexts: &ContextMeasure,
    actions: &ActionSet,
    beta: f64,
) -> Result<f64> {
    check_problem(post, (xi.num_contexts(), xi.num_actions()), contexts, actions)?;
    let dist = xi.as_flat();
    let mut total = 0.0;
    for (c, &pc) in contexts.probs().iter().enumerate() {
        for a in 0..actions.len() {
            let (m, v) = post.mean_var(&cell_input(actions, contexts, a, c, dist))?;
            total += pc * xi.get(c, a) * (m + beta * v.sqrt());
        }
    }
    Ok(total)
}

/// MF-UCB value and its gradient with respect to the flattened `ξ`,
/// composed from per-query [`GpPosterior::grad_dist`] calls. `ξ` enters
/// both as the expectation weights and as the shared GP input.
pub fn mf_ucb_grad(
    post: &GpPosterior,
    xi: &ConditionalDistribution,
    contexts: &ContextMeasure,
    actions: &ActionSet,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    check_problem(post, (xi.num_contexts(), xi.num_actions()), contexts, actions)?;
    let na = actions.len();
    let dist = xi.as_flat();
    let mut total = 0.0;
    let mut grad = vec![0.0; dist.len()];
    for (c, &pc) in contexts.probs().iter().enumerate() {
        for a in 0..na {
            let z = cell_input(actions, contexts, a, c, dist);
            let (m, v) = post.mean_var(&z)?;
            let (dm, ds) = post.grad_dist(&z)?;
            let cell = m + beta * v.sqrt();
            let w = pc * xi.get(c, a);
            total += w * cell;
            grad[c * na + a] += pc * cell;
            for ((g, dmj), dsj) in grad.iter_mut().zip(&dm).zip(&ds) {
                *g += w * (dmj + beta * dsj);
            }
        }
    }
    Ok((total, grad))
}

/// Precomputed MF-UCB evaluator for one posterior and problem.
#[derive(Debug)]
pub struct AcquisitionSurface<'a> {
    post: &'a GpPosterior,
    probs: Vec<f64>,
    beta: f64,
    num_actions: usize,
    num_contexts: usize,
    /// Training distributions, row-major `n × |A||C|`.
    train_dist: Vec<f64>,
    /// Per cell `(c, a)`: αᵀ u where u is the action+context part of k_*.
    cell_mean: Vec<f64>,
    /// Per cell: L⁻¹ u, each of length n.
    cell_v: Vec<f64>,
    cell_vv: Vec<f64>,
    prior_var: f64,
}

/// Value and gradient from one [`AcquisitionSurface`] evaluation.
#[derive(Debug, Clone)]
pub struct SurfacePoint {
    pub value: f64,
    /// Gradient with respect to the flattened `ξ`, when requested.
    pub grad: Option<Vec<f64>>,
}

impl<'a> AcquisitionSurface<'a> {
    pub fn new(post: &'a GpPosterior, contexts: &ContextMeasure, actions: &ActionSet, beta: f64) -> Result<Self> {
        check_problem(post, (contexts.len(), actions.len()), contexts, actions)?;
        let kernel = post.kernel();
        let scale = kernel.params().output_scale;
        let n = post.len();
        let na = actions.len();
        let nc = contexts.len();
        let d = na * nc;

        let mut train_dist = Vec::with_capacity(n * d);
        for t in post.train_inputs() {
            train_dist.extend_from_slice(&t.dist);
        }
        let act_k: Vec<Vec<f64>> = (0..na)
            .map(|a| post.train_inputs().iter().map(|t| kernel.action_term(actions.embedding(a), &t.action)).collect())
            .collect();
        let ctx_k: Vec<Vec<f64>> = (0..nc)
            .map(|c| {
                post.train_inputs().iter().map(|t| kernel.context_term(contexts.embedding(c), &t.context)).collect()
            })
            .collect();

        let alpha = post.alpha_weights();
        let mut cell_mean = Vec::with_capacity(d);
        let mut cell_v = Vec::with_capacity(d * n);
        let mut cell_vv = Vec::with_capacity(d);
        for ck in &ctx_k {
            for ak in &act_k {
                let mut u: Vec<f64> = ak.iter().zip(ck).map(|(x, y)| scale * (x + y)).collect();
                cell_mean.push(u.iter().zip(alpha).map(|(x, y)| x * y).sum());
                forward_sub(post.chol_factor(), &mut u);
                cell_vv.push(u.iter().map(|x| x * x).sum());
                cell_v.extend(u);
            }
        }
        Ok(Self {
            post,
            probs: contexts.probs().to_vec(),
            beta,
            num_actions: na,
            num_contexts: nc,
            train_dist,
            cell_mean,
            cell_v,
            cell_vv,
            prior_var: kernel.prior_variance(),
        })
    }

    pub fn dist_len(&self) -> usize {
        self.num_actions * self.num_contexts
    }

    pub fn value(&self, dist: &[f64]) -> f64 {
        self.evaluate(dist, false).value
    }

    /// Evaluates `α` at the flattened distribution `dist`, optionally with
    /// its gradient. The gradient requires the squared-exponential form.
    pub fn evaluate(&self, dist: &[f64], want_grad: bool) -> SurfacePoint {
        let kernel = self.post.kernel();
        let params = kernel.params();
        let scale = params.output_scale;
        let (y_mean, y_scale) = self.post.target_transform();
        let n = self.post.len();
        let na = self.num_actions;
        let nc = self.num_contexts;
        let d = na * nc;
        let beta = self.beta;
        debug_assert_eq!(dist.len(), d);

        // Distribution part of the cross-kernel, with per-block factors kept
        // for the gradient.
        let mut block_k = vec![0.0; n * nc];
        let mut s = vec![0.0; n];
        for i in 0..n {
            let row = &self.train_dist[i * d..(i + 1) * d];
            let mut total = 0.0;
            for c in 0..nc {
                let u = &dist[c * na..(c + 1) * na];
                let v = &row[c * na..(c + 1) * na];
                let e = kernel.rbf(crate::gp::sq_dist(u, v), params.lengthscale_dist);
                block_k[i * nc + c] = e;
                total += e;
            }
            s[i] = scale * total;
        }
        let alpha = self.post.alpha_weights();
        let shared_mean: f64 = s.iter().zip(alpha).map(|(x, y)| x * y).sum();
        let mut r = s;
        forward_sub(self.post.chol_factor(), &mut r);
        let rr: f64 = r.iter().map(|x| x * x).sum();

        let mut value = 0.0;
        let mut cell_val = vec![0.0; d];
        let mut sigma_std = vec![0.0; d];
        for cell in 0..d {
            let v = &self.cell_v[cell * n..(cell + 1) * n];
            let vr: f64 = v.iter().zip(&r).map(|(x, y)| x * y).sum();
            let explained = self.cell_vv[cell] + 2.0 * vr + rr;
            let sd = (self.prior_var - explained).max(0.0).sqrt();
            sigma_std[cell] = sd;
            let mean = y_mean + y_scale * (self.cell_mean[cell] + shared_mean);
            let val = mean + beta * y_scale * sd;
            cell_val[cell] = val;
            value += self.probs[cell / na] * dist[cell] * val;
        }
        if !want_grad {
            return SurfacePoint { value, grad: None };
        }
        assert_eq!(params.rbf_form, RbfForm::SquaredExponential, "analytic gradient needs squared-exponential");

        // h = Σ_cells (ω / σ) (v_cell + r), then w = L⁻ᵀ h.
        let mut weight_total = 0.0;
        let mut r_coeff = 0.0;
        let mut h = vec![0.0; n];
        for cell in 0..d {
            let w = self.probs[cell / na] * dist[cell];
            weight_total += w;
            if sigma_std[cell] > 0.0 && w != 0.0 {
                let coeff = w / sigma_std[cell];
                r_coeff += coeff;
                let v = &self.cell_v[cell * n..(cell + 1) * n];
                for (hi, vi) in h.iter_mut().zip(v) {
                    *hi += coeff * vi;
                }
            }
        }
        for (hi, ri) in h.iter_mut().zip(&r) {
            *hi += r_coeff * ri;
        }
        back_sub_transposed(self.post.chol_factor(), &mut h);
        // ∂α/∂s_i
        let g_s: Vec<f64> = alpha.iter().zip(&h).map(|(a, w)| y_scale * (weight_total * a - beta * w)).collect();

        let mut grad = vec![0.0; d];
        for cell in 0..d {
            grad[cell] = self.probs[cell / na] * cell_val[cell];
        }
        let inv_l2 = 1.0 / (params.lengthscale_dist * params.lengthscale_dist);
        for c in 0..nc {
            let u = &dist[c * na..(c + 1) * na];
            let mut coeff_sum = 0.0;
            let mut weighted = vec![0.0; na];
            for i in 0..n {
                let coeff = g_s[i] * block_k[i * nc + c];
                if coeff == 0.0 {
                    continue;
                }
                coeff_sum += coeff;
                let v = &self.train_dist[i * d + c * na..i * d + (c + 1) * na];
                for (wj, vj) in weighted.iter_mut().zip(v) {
                    *wj += coeff * vj;
                }
            }
            for j in 0..na {
                grad[c * na + j] -= scale * inv_l2 * (u[j] * coeff_sum - weighted[j]);
            }
        }
        SurfacePoint { value, grad: Some(grad) }
    }

    /// Objective over logits: value at `softmax(θ)` and its θ-gradient.
    pub fn logit_objective(&self, theta: &[f64], mode: GradMode, want_grad: bool) -> (f64, Vec<f64>, Option<Vec<f64>>) {
        let na = self.num_actions;
        let mut xi = vec![0.0; theta.len()];
        for (out, row) in xi.chunks_mut(na).zip(theta.chunks(na)) {
            softmax_into(row, out);
        }
        if !want_grad {
            let v = self.value(&xi);
            return (v, xi, None);
        }
        match mode {
            GradMode::Analytic => {
                let p = self.evaluate(&xi, true);
                let g = p.grad.expect("requested");
                let mut gt = vec![0.0; theta.len()];
                // dξ_j/dθ_i = ξ_j (δ_ij − ξ_i), per row
                for ((gt_row, g_row), x_row) in gt.chunks_mut(na).zip(g.chunks(na)).zip(xi.chunks(na)) {
                    let dot: f64 = g_row.iter().zip(x_row).map(|(a, b)| a * b).sum();
                    for j in 0..na {
                        gt_row[j] = x_row[j] * (g_row[j] - dot);
                    }
                }
                (p.value, xi, Some(gt))
            }
            GradMode::FiniteDifference => {
                let h = 1e-5;
                let v = self.value(&xi);
                let mut gt = vec![0.0; theta.len()];
                let mut probe = theta.to_vec();
                let mut buf = vec![0.0; theta.len()];
                let eval_at = |probe: &[f64], buf: &mut Vec<f64>| {
                    for (out, row) in buf.chunks_mut(na).zip(probe.chunks(na)) {
                        softmax_into(row, out);
                    }
                    self.value(buf)
                };
                for k in 0..theta.len() {
                    probe[k] = theta[k] + h;
                    let up = eval_at(&probe, &mut buf);
                    probe[k] = theta[k] - h;
                    let down = eval_at(&probe, &mut buf);
                    probe[k] = theta[k];
                    gt[k] = (up - down) / (2.0 * h);
                }
                (v, xi, Some(gt))
            }
        }
    }
}

/// Result of acquisition optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub xi: ConditionalDistribution,
    pub value: f64,
}

/// Maximises MF-UCB over `Δ_A^C` by Adam ascent on softmax logits with
/// random restarts, keeping the best iterate of every restart. With no
/// posterior the acquisition is constant and the uniform distribution is
/// returned.
pub fn optimize_acquisition<R: Rng + ?Sized>(
    post: Option<&GpPosterior>,
    beta: f64,
    contexts: &ContextMeasure,
    actions: &ActionSet,
    cfg: &AcqOptConfig,
    rng: &mut R,
) -> Result<Proposal> {
    cfg.validate()?;
    let (nc, na) = (contexts.len(), actions.len());
    let Some(post) = post else {
        let xi = ConditionalDistribution::uniform(nc, na);
        let sd = (2.0 + nc as f64).sqrt();
        return Ok(Proposal { xi, value: beta * sd });
    };
    if cfg.grad_mode == GradMode::Analytic && post.kernel().params().rbf_form != RbfForm::SquaredExponential {
        return Err(GpError::Unsupported("analytic acquisition gradients need the squared-exponential form").into());
    }
    let surface = AcquisitionSurface::new(post, contexts, actions, beta)?;
    let seeds: Vec<u64> = (0..cfg.restarts).map(|_| rng.random()).collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (k, seed) in seeds.into_iter().enumerate() {
        let mut restart_rng = ChaCha8Rng::seed_from_u64(seed);
        let theta0 = if k == 0 {
            Logits::zeros(nc, na).theta
        } else {
            (0..nc * na).map(|_| restart_rng.sample::<f64, _>(StandardNormal)).collect()
        };
        match adam_ascent(&surface, theta0, cfg) {
            Some((value, xi)) => {
                if best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, xi));
                }
            }
            None => log::warn!("acquisition restart {k} abandoned: non-finite objective"),
        }
    }
    let (value, xi) = best.ok_or(AcqError::AllRestartsFailed(cfg.restarts))?;
    let xi = ConditionalDistribution::unflatten(xi, nc, na).expect("softmax output is a valid distribution");
    Ok(Proposal { xi, value })
}

/// One Adam restart; returns the best `(value, ξ)` seen, or `None` on a
/// non-finite objective.
fn adam_ascent(surface: &AcquisitionSurface<'_>, mut theta: Vec<f64>, cfg: &AcqOptConfig) -> Option<(f64, Vec<f64>)> {
    let dim = theta.len();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    for step in 1..=cfg.steps {
        let (value, xi, grad) = surface.logit_objective(&theta, cfg.grad_mode, true);
        let grad = grad.expect("requested");
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
            best = Some((value, xi));
        }
        let c1 = 1.0 - b1.powi(step as i32);
        let c2 = 1.0 - b2.powi(step as i32);
        for i in 0..dim {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] += cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
        }
    }
    let (value, xi, _) = surface.logit_objective(&theta, cfg.grad_mode, false);
    if !value.is_finite() {
        return None;
    }
    if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
        best = Some((value, xi));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{fit, AdditiveKernel, FitOptions, InputShape, KernelParams, NoiseModel, ObservationBuffer};
    use crate::meanfield::softmax_rows;

    #[test]
    fn xi_cardinality_small_case() {
        let base = 2.0 * (2f64.ln() + std::f64::consts::PI.sqrt() / 2.0);
        assert!((base - 3.158748).abs() < 1e-6);
        let got = log_xi_cardinality(1, 2, 1, 1.0, 1.0);
        assert!((got - 2.0 * base.ln()).abs() < 1e-14);
        assert!((got - 2.3003516).abs() < 1e-6);
    }

    #[test]
    fn xi_cardinality_doubling_t() {
        let a = log_xi_cardinality(3, 3, 2, 1.5, 0.7);
        let b = log_xi_cardinality(6, 3, 2, 1.5, 0.7);
        assert!((b - a - 6.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn xi_cardinality_small_base_is_one() {
        // ln(a|A||C|) very negative → base ≤ 1
        assert_eq!(log_xi_cardinality(1, 2, 1, 1e-6, 1.0), 0.0);
    }

    #[test]
    fn theoretical_beta_small_case() {
        let s = BetaSchedule { mode: BetaMode::Theoretical, ..Default::default() };
        let b = beta_value(1, 2, 1, &s);
        assert!((b - 4.1491205).abs() < 1e-6, "{b}");
    }

    #[test]
    fn beta_modes() {
        let c = BetaSchedule::default();
        assert_eq!(beta_value(1, 5, 2, &c), 2.0);
        assert_eq!(beta_value(100, 5, 2, &c), 2.0);
        let l = BetaSchedule { mode: BetaMode::LogGrowth, log_scale: 3.0, ..Default::default() };
        assert!((beta_value(4, 2, 2, &l) - 3.0 * 5f64.ln().sqrt()).abs() < 1e-15);
        let th = BetaSchedule { mode: BetaMode::Theoretical, a: 2.0, b: 0.5, ..Default::default() };
        let mut prev = f64::NEG_INFINITY;
        for t in 1..200 {
            let v = beta_value(t, 4, 3, &th);
            assert!(v >= prev);
            prev = v;
        }
    }

    fn toy_problem() -> (ActionSet, ContextMeasure, GpPosterior) {
        let actions = ActionSet::linspace(0.0, 1.0, 3).unwrap();
        let contexts = ContextMeasure::new(vec![vec![-1.0], vec![1.0]], vec![0.3, 0.7]).unwrap();
        let shape = InputShape { action_dim: 1, context_dim: 1, num_actions: 3, num_contexts: 2 };
        let params = KernelParams { lengthscale_dist: 0.4, lengthscale_action: 0.5, ..Default::default() };
        let kernel = AdditiveKernel::new(params, shape).unwrap();
        let mut buf = ObservationBuffer::new();
        let logits = [
            vec![vec![0.2, 1.0, -0.3], vec![0.0, 0.5, 0.1]],
            vec![vec![-1.0, 0.0, 0.4], vec![1.2, -0.2, 0.0]],
            vec![vec![0.7, 0.7, -0.9], vec![0.3, 0.3, 0.3]],
            vec![vec![0.0, -0.6, 1.1], vec![-0.5, 0.9, 0.2]],
        ];
        for (i, l) in logits.iter().enumerate() {
            let xi = softmax_rows(&Logits::from_rows(l));
            buf.push(cell_input(&actions, &contexts, i % 3, i % 2, xi.as_flat()), (i as f64).sin() * 3.0);
        }
        let post = fit(&buf, kernel, NoiseModel::new(0.1), FitOptions::default()).unwrap();
        (actions, contexts, post)
    }

    #[test]
    fn surface_matches_direct_queries() {
        let (actions, contexts, post) = toy_problem();
        let xi = softmax_rows(&Logits::from_rows(&[vec![0.4, -0.1, 0.3], vec![-0.8, 0.6, 0.0]]));
        let surface = AcquisitionSurface::new(&post, &contexts, &actions, 1.7).unwrap();
        let fast = surface.evaluate(xi.as_flat(), true);
        let (slow, slow_grad) = mf_ucb_grad(&post, &xi, &contexts, &actions, 1.7).unwrap();
        assert!((fast.value - slow).abs() < 1e-10);
        assert!((mf_ucb(&post, &xi, &contexts, &actions, 1.7).unwrap() - slow).abs() < 1e-12);
        for (a, b) in fast.grad.unwrap().iter().zip(&slow_grad) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn logit_gradient_matches_finite_difference_mode() {
        let (actions, contexts, post) = toy_problem();
        let surface = AcquisitionSurface::new(&post, &contexts, &actions, 0.9).unwrap();
        let theta = vec![0.1, -0.4, 0.9, 0.0, 0.3, -0.2];
        let (_, _, ga) = surface.logit_objective(&theta, GradMode::Analytic, true);
        let (_, _, gf) = surface.logit_objective(&theta, GradMode::FiniteDifference, true);
        for (a, f) in ga.unwrap().iter().zip(gf.unwrap()) {
            assert!((a - f).abs() < 1e-6 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn larger_beta_never_lowers_value() {
        let (actions, contexts, post) = toy_problem();
        let xi = softmax_rows(&Logits::from_rows(&[vec![0.4, -0.1, 0.3], vec![-0.8, 0.6, 0.0]]));
        let lo = mf_ucb(&post, &xi, &contexts, &actions, 0.5).unwrap();
        let hi = mf_ucb(&post, &xi, &contexts, &actions, 2.5).unwrap();
        assert!(hi >= lo);
    }

    #[test]
    fn no_data_returns_uniform() {
        let actions = ActionSet::linspace(0.0, 1.0, 4).unwrap();
        let contexts = ContextMeasure::single();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = optimize_acquisition(None, 2.0, &contexts, &actions, &AcqOptConfig::default(), &mut rng).unwrap();
        assert_eq!(p.xi, ConditionalDistribution::uniform(1, 4));
    }

    #[test]
    fn optimum_not_below_uniform() {
        let (actions, contexts, post) = toy_problem();
        let cfg = AcqOptConfig { steps: 50, restarts: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = optimize_acquisition(Some(&post), 1.0, &contexts, &actions, &cfg, &mut rng).unwrap();
        let uniform = mf_ucb(&post, &ConditionalDistribution::uniform(2, 3), &contexts, &actions, 1.0).unwrap();
        assert!(p.value >= uniform - 1e-9);
        let direct = mf_ucb(&post, &p.xi, &contexts, &actions, 1.0).unwrap();
        assert!((direct - p.value).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let actions = ActionSet::linspace(0.0, 1.0, 4).unwrap();
        let cfg = AcqOptConfig { restarts: 0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            optimize_acquisition(None, 1.0, &ContextMeasure::single(), &actions, &cfg, &mut rng),
            Err(AcqError::InvalidConfig(_))
        ));
    }
}
