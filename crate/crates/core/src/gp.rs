//! Exact Gaussian-process regression over `(action, context, distribution)`
//! inputs with an additive RBF kernel
//!
//! ```text
//! k(z, z') = s · [ k(x, x') + k(c, c') + Σ_c k(ξ_c, ξ'_c) ]
//! ```
//!
//! where each distribution block `ξ_c` is one context's row of the
//! flattened conditional distribution. The posterior is the usual
//! Cholesky-based one with a `noise_std²` diagonal regulariser.

use nalgebra::{Cholesky, DMatrix};
use thiserror::Error;

/// Extra diagonal terms tried, in order, when the regularised Gram matrix
/// fails to factorise.
pub const JITTER_LADDER: [f64; 3] = [1e-8, 1e-6, 1e-4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("cannot fit a GP to an empty observation buffer")]
    EmptyBuffer,
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch { field: &'static str, expected: usize, found: usize },
    #[error("Gram matrix is not positive definite (tried jitters {jitters:?})")]
    Factorization { jitters: Vec<f64> },
    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),
    #[error("invalid kernel parameter `{0}`: must be finite and > 0")]
    InvalidParam(&'static str),
    #[error("non-finite target at index {0}")]
    NonFiniteTarget(usize),
}

pub type Result<T> = std::result::Result<T, GpError>;

/// One kernel input `z = (x, c, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpInput {
    pub action: Vec<f64>,
    pub context: Vec<f64>,
    /// Context-major flattening of the conditional distribution.
    pub dist: Vec<f64>,
}

impl GpInput {
    pub fn new(action: Vec<f64>, context: Vec<f64>, dist: Vec<f64>) -> Self {
        Self { action, context, dist }
    }
}

/// Dimensions every [`GpInput`] of one problem shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputShape {
    pub action_dim: usize,
    pub context_dim: usize,
    pub num_actions: usize,
    pub num_contexts: usize,
}

impl InputShape {
    /// Total input dimension `d_A + d_C + |A||C|`. Independent of the
    /// population size.
    pub fn input_dim(&self) -> usize {
        self.action_dim + self.context_dim + self.num_actions * self.num_contexts
    }

    pub fn dist_len(&self) -> usize {
        self.num_actions * self.num_contexts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbfForm {
    /// `exp(-‖u - u'‖² / (2 l²))`
    #[default]
    SquaredExponential,
    /// `exp(-‖u - u'‖ / (2 l))`; not differentiable at zero distance.
    Unsquared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub lengthscale_action: f64,
    pub lengthscale_context: f64,
    pub lengthscale_dist: f64,
    pub output_scale: f64,
    pub rbf_form: RbfForm,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            lengthscale_action: 1.0,
            lengthscale_context: 1.0,
            lengthscale_dist: 1.0,
            output_scale: 1.0,
            rbf_form: RbfForm::SquaredExponential,
        }
    }
}

impl KernelParams {
    fn validate(&self) -> Result<()> {
        let checks = [
            (self.lengthscale_action, "lengthscale_action"),
            (self.lengthscale_context, "lengthscale_context"),
            (self.lengthscale_dist, "lengthscale_dist"),
            (self.output_scale, "output_scale"),
        ];
        for (v, name) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(GpError::InvalidParam(name));
            }
        }
        Ok(())
    }
}

/// The additive kernel bound to one problem's input layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveKernel {
    params: KernelParams,
    shape: InputShape,
}

impl AdditiveKernel {
    pub fn new(params: KernelParams, shape: InputShape) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, shape })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn shape(&self) -> &InputShape {
        &self.shape
    }

    /// `k(z, z)`, identical for every input.
    pub fn prior_variance(&self) -> f64 {
        self.params.output_scale * (2 + self.shape.num_contexts) as f64
    }

    pub fn check(&self, z: &GpInput) -> Result<()> {
        let s = &self.shape;
        let fields = [
            ("action", s.action_dim, z.action.len()),
            ("context", s.context_dim, z.context.len()),
            ("dist", s.dist_len(), z.dist.len()),
        ];
        for (field, expected, found) in fields {
            if expected != found {
                return Err(GpError::DimensionMismatch { field, expected, found });
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn rbf(&self, sq_dist: f64, lengthscale: f64) -> f64 {
        match self.params.rbf_form {
            RbfForm::SquaredExponential => (-sq_dist / (2.0 * lengthscale * lengthscale)).exp(),
            RbfForm::Unsquared => (-sq_dist.sqrt() / (2.0 * lengthscale)).exp(),
        }
    }

    pub fn eval(&self, a: &GpInput, b: &GpInput) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn action_term(&self, a: &[f64], b: &[f64]) -> f64 {
        self.rbf(sq_dist(a, b), self.params.lengthscale_action)
    }

    pub(crate) fn context_term(&self, a: &[f64], b: &[f64]) -> f64 {
        self.rbf(sq_dist(a, b), self.params.lengthscale_context)
    }

    /// Σ over context blocks of the distribution RBF, unscaled.
    pub(crate) fn dist_term(&self, a: &[f64], b: &[f64]) -> f64 {
        a.chunks(self.shape.num_actions)
            .zip(b.chunks(self.shape.num_actions))
            .map(|(u, v)| self.rbf(sq_dist(u, v), self.params.lengthscale_dist))
            .sum()
    }

    fn eval_unchecked(&self, a: &GpInput, b: &GpInput) -> f64 {
        let k = self.action_term(&a.action, &b.action)
            + self.context_term(&a.context, &b.context)
            + self.dist_term(&a.dist, &b.dist);
        self.params.output_scale * k
    }

    pub fn gram(&self, inputs: &[GpInput]) -> Result<DMatrix<f64>> {
        for z in inputs {
            self.check(z)?;
        }
        let n = inputs.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.eval_unchecked(&inputs[i], &inputs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Observation noise `ε ~ N(0, noise_std²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub noise_std: f64,
}

impl NoiseModel {
    pub fn new(noise_std: f64) -> Self {
        assert!(noise_std >= 0.0, "noise_std must be nonnegative");
        Self { noise_std }
    }
}

/// Append-only training data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationBuffer {
    inputs: Vec<GpInput>,
    targets: Vec<f64>,
}

impl ObservationBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, z: GpInput, y: f64) {
        self.inputs.push(z);
        self.targets.push(y);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[GpInput] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Fit on `(y - mean) / std` and map predictions back. When on,
    /// `noise_std` is read in standardised units.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { standardize: true }
    }
}

/// A fitted GP. Immutable; safe to share between threads.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: AdditiveKernel,
    noise: NoiseModel,
    train_inputs: Vec<GpInput>,
    chol: DMatrix<f64>,
    alpha: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    jitter: f64,
}

/// Fits the posterior to `buffer`.
pub fn fit(
    buffer: &ObservationBuffer,
    kernel: AdditiveKernel,
    noise: NoiseModel,
    opts: FitOptions,
) -> Result<GpPosterior> {
    if buffer.is_empty() {
        return Err(GpError::EmptyBuffer);
    }
    if let Some(i) = buffer.targets.iter().position(|y| !y.is_finite()) {
        return Err(GpError::NonFiniteTarget(i));
    }
    let n = buffer.len();
    let (y_mean, y_scale) = if opts.standardize {
        let mean = buffer.targets.iter().sum::<f64>() / n as f64;
        let var = buffer.targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        (mean, if sd > 1e-12 { sd } else { 1.0 })
    } else {
        (0.0, 1.0)
    };

    let mut gram = kernel.gram(&buffer.inputs)?;
    let noise_var = noise.noise_std * noise.noise_std;
    for i in 0..n {
        gram[(i, i)] += noise_var;
    }

    let mut tried = Vec::new();
    let mut factor = Cholesky::new(gram.clone()).map(|c| (c, 0.0));
    for &jitter in &JITTER_LADDER {
        if factor.is_some() {
            break;
        }
        tried.push(jitter);
        log::debug!("cholesky failed, retrying with jitter {jitter:e}");
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        factor = Cholesky::new(m).map(|c| (c, jitter));
    }
    let (factor, jitter) = factor.ok_or(GpError::Factorization { jitters: tried })?;
    let chol = factor.unpack();

    let mut alpha: Vec<f64> = buffer.targets.iter().map(|y| (y - y_mean) / y_scale).collect();
    forward_sub(&chol, &mut alpha);
    back_sub_transposed(&chol, &mut alpha);

    Ok(GpPosterior { kernel, noise, train_inputs: buffer.inputs.clone(), chol, alpha, y_mean, y_scale, jitter })
}

impl GpPosterior {
    pub fn kernel(&self) -> &AdditiveKernel {
        &self.kernel
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn len(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_inputs.is_empty()
    }

    pub fn train_inputs(&self) -> &[GpInput] {
        &self.train_inputs
    }

    /// Lower Cholesky factor of `K + (noise_std² + jitter)·I`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `(K + noise_std²·I)⁻¹ y` in the (possibly standardised) target space.
    pub fn alpha_weights(&self) -> &[f64] {
        &self.alpha
    }

    /// Jitter added beyond the noise variance (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `(mean, std)` used to standardise targets; `(0, 1)` when off.
    pub fn target_transform(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    fn cross_kernel(&self, z: &GpInput) -> Vec<f64> {
        self.train_inputs.iter().map(|t| self.kernel.eval_unchecked(z, t)).collect()
    }

    /// Posterior mean and variance at `z`; the variance is clamped at 0.
    pub fn mean_var(&self, z: &GpInput) -> Result<(f64, f64)> {
        self.kernel.check(z)?;
        let mut v = self.cross_kernel(z);
        let mean: f64 = v.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        forward_sub(&self.chol, &mut v);
        let explained: f64 = v.iter().map(|x| x * x).sum();
        let var = (self.kernel.prior_variance() - explained).max(0.0);
        Ok((self.y_mean + self.y_scale * mean, self.y_scale * self.y_scale * var))
    }

    /// Gradients of the posterior mean and standard deviation with respect
    /// to every coordinate of `z.dist`. The σ-gradient is zero where σ = 0.
    pub fn grad_dist(&self, z: &GpInput) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.kernel.params.rbf_form != RbfForm::SquaredExponential {
            return Err(GpError::Unsupported("distribution gradients need the squared-exponential form"));
        }
        self.kernel.check(z)?;
        let na = self.kernel.shape.num_actions;
        let l2 = self.kernel.params.lengthscale_dist.powi(2);
        let scale = self.kernel.params.output_scale;
        let d = z.dist.len();
        let n = self.len();

        // dk[i][j] = ∂k(z, z_i) / ∂ξ_j
        let mut dk = vec![0.0; n * d];
        for (i, t) in self.train_inputs.iter().enumerate() {
            let row = &mut dk[i * d..(i + 1) * d];
            for ((u, v), g) in z.dist.chunks(na).zip(t.dist.chunks(na)).zip(row.chunks_mut(na)) {
                let e = scale * (-sq_dist(u, v) / (2.0 * l2)).exp();
                for ((gj, uj), vj) in g.iter_mut().zip(u).zip(v) {
                    *gj = -e * (uj - vj) / l2;
                }
            }
        }

        let mut v = self.cross_kernel(z);
        forward_sub(&self.chol, &mut v);
        let explained: f64 = v.iter().map(|x| x * x).sum();
        let var_std = (self.kernel.prior_variance() - explained).max(0.0);
        back_sub_transposed(&self.chol, &mut v); // v = K⁻¹ k_*

        let mut dmean = vec![0.0; d];
        let mut dsigma = vec![0.0; d];
        let sigma_std = var_std.sqrt();
        for i in 0..n {
            let row = &dk[i * d..(i + 1) * d];
            let a = self.alpha[i];
            let w = v[i];
            for j in 0..d {
                dmean[j] += a * row[j];
                dsigma[j] += w * row[j];
            }
        }
        for g in &mut dmean {
            *g *= self.y_scale;
        }
        if sigma_std > 0.0 {
            // ∂σ = -(K⁻¹k_*)ᵀ ∂k_* / σ, since k(z, z) does not depend on ξ.
            for g in &mut dsigma {
                *g *= -self.y_scale / sigma_std;
            }
        } else {
            dsigma.iter_mut().for_each(|g| *g = 0.0);
        }
        Ok((dmean, dsigma))
    }
}

/// Solves `L x = b` in place; `l` is lower triangular, column-major.
pub(crate) fn forward_sub(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    let data = l.as_slice();
    for j in 0..n {
        let col = &data[j * n..(j + 1) * n];
        let xj = b[j] / col[j];
        b[j] = xj;
        for i in j + 1..n {
            b[i] -= col[i] * xj;
        }
    }
}

/// Solves `Lᵀ x = b` in place.
pub(crate) fn back_sub_transposed(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    let data = l.as_slice();
    for j in (0..n).rev() {
        let col = &data[j * n..(j + 1) * n];
        let mut s = b[j];
        for i in j + 1..n {
            s -= col[i] * b[i];
        }
        b[j] = s / col[j];
    }
}
