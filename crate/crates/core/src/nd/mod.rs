//! Axis-aligned ellipsoids in dimension `d ≥ 3` for kernels that are even in
//! each coordinate.
//!
//! With `W⁰ = |x|^{2-d}` the diagonal Hessian conditions on the ellipsoid with
//! semi-axes `a` read `G_i(a) = 0`, where
//!
//! `G_i = ∫ ξ_i ∂_i W⁰ dσ - ∫ log|ξ/a| ∂_ii W⁰ dσ + I_i + F_i + (ω_d/d) ∏ a_j`,
//! `I_i = ∫ ξ_i ∂_i κ dσ`, `F_i = -∫ log|ξ/a| ∂_ii κ dσ`,
//!
//! and `|ξ/a|² = Σ ξ_j²/a_j²`. The unperturbed solution is the ball of
//! radius `(d-2)^{1/d}`.

pub mod kernels;
pub mod sphere;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernels::{
    KernelNd, KernelNdFactory, KernelNdRegistry, PowerKernel, SampledKernel, Smallness,
    SphereKernel, TraceFn,
};
pub use sphere::{default_degree, sphere_quadrature, surface_area, SphereRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdError {
    #[error("dimension must be at least 3 (got {0})")]
    Dimension(usize),
    #[error("semi-axis a_{index} = {value} must be positive")]
    Domain { index: usize, value: f64 },
    #[error("expected {expected} semi-axes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel is not even in coordinate {coordinate} (gap {gap:.3e})")]
    EvennessViolation { coordinate: usize, gap: f64 },
    #[error("kernel produced a non-finite value")]
    NonFinite,
    #[error("Newton did not converge in {iterations} iterations (|G| = {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iterate left the domain (a = {a:?})")]
    LeftDomain { a: Vec<f64> },
    #[error("unknown kernel type `{0}`")]
    UnknownKernel(String),
    #[error("invalid kernel spec: {0}")]
    Spec(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

/// Semi-axes `a_1..a_d` of `Σ x_i²/a_i² ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidParams {
    pub a: Vec<f64>,
}

impl EllipsoidParams {
    pub fn new(a: Vec<f64>) -> Result<Self, NdError> {
        for (index, &value) in a.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(NdError::Domain { index, value });
            }
        }
        Ok(EllipsoidParams { a })
    }

    /// The ball of radius `(d-2)^{1/d}`.
    pub fn ball(d: usize) -> Self {
        EllipsoidParams {
            a: vec![base_radius(d); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `(ω_d/d) ∏ a_j`.
    pub fn volume(&self) -> f64 {
        confinement_term(&self.a)
    }
}

/// `(d-2)^{1/d}`.
pub fn base_radius(d: usize) -> f64 {
    (d as f64 - 2.0).powf(1.0 / d as f64)
}

/// `(ω_d/d) ∏ a_j`, the volume of the ellipsoid.
pub fn confinement_term(a: &[f64]) -> f64 {
    let d = a.len();
    surface_area(d) / d as f64 * a.iter().product::<f64>()
}

/// `½ log Σ ξ_j²/a_j²`.
fn log_scaled_norm(xi: &[f64], a: &[f64]) -> f64 {
    0.5 * xi
        .iter()
        .zip(a)
        .map(|(x, s)| (x / s) * (x / s))
        .sum::<f64>()
        .ln()
}

/// Discretised diagonal system with the kernel derivatives cached at the
/// quadrature nodes.
#[derive(Debug, Clone)]
pub struct NdSystem {
    rule: SphereRule,
    /// `∂_i κ(ξ)` per node, stride `d`.
    grad: Vec<f64>,
    /// `∂_ii κ(ξ)` per node, stride `d`.
    hess_diag: Vec<f64>,
}

impl NdSystem {
    pub fn new(k: &KernelNd, degree: usize) -> Self {
        let d = k.dim();
        let rule = sphere_quadrature(d, degree);
        let per_node: Vec<(Vec<f64>, Vec<f64>)> = (0..rule.len())
            .into_par_iter()
            .map(|j| {
                let xi = rule.node(j);
                let g = (0..d).map(|i| k.partial(xi, i)).collect();
                let h = (0..d).map(|i| k.second(xi, i, i)).collect();
                (g, h)
            })
            .collect();
        let mut grad = Vec::with_capacity(rule.len() * d);
        let mut hess_diag = Vec::with_capacity(rule.len() * d);
        for (g, h) in per_node {
            grad.extend(g);
            hess_diag.extend(h);
        }
        NdSystem {
            rule,
            grad,
            hess_diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.rule.dim
    }

    pub fn rule(&self) -> &SphereRule {
        &self.rule
    }

    /// `I_i(κ) = ∫ ξ_i ∂_i κ dσ`.
    pub fn i_terms(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                self.rule
                    .iter()
                    .enumerate()
                    .map(|(j, (xi, w))| w * xi[i] * self.grad[j * d + i])
                    .sum()
            })
            .collect()
    }

    /// `F_i(a, κ) = -∫ log|ξ/a| ∂_ii κ dσ`.
    pub fn f_terms(&self, a: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (j, (xi, w)) in self.rule.iter().enumerate() {
            let l = log_scaled_norm(xi, a);
            for (i, o) in out.iter_mut().enumerate() {
                *o -= w * l * self.hess_diag[j * d + i];
            }
        }
        out
    }

    /// `G(a)`.
    pub fn g_eval(&self, a: &[f64]) -> Result<Vec<f64>, NdError> {
        let d = self.dim();
        if a.len() != d {
            return Err(NdError::DimensionMismatch {
                expected: d,
                got: a.len(),
            });
        }
        EllipsoidParams::new(a.to_vec())?;
        let c = 2.0 - d as f64;
        let dn = d as f64;
        let per_node: Vec<Vec<f64>> = (0..self.rule.len())
            .into_par_iter()
            .map(|j| {
                let xi = self.rule.node(j);
                let w = self.rule.weights[j];
                let l = log_scaled_norm(xi, a);
                (0..d)
                    .map(|i| {
                        let x2 = xi[i] * xi[i];
                        w * (c * x2 - l * c * (1.0 - dn * x2) + xi[i] * self.grad[j * d + i]
                            - l * self.hess_diag[j * d + i])
                    })
                    .collect()
            })
            .collect();
        let mut g = vec![confinement_term(a); d];
        for row in per_node {
            for (gi, v) in g.iter_mut().zip(row) {
                *gi += v;
            }
        }
        Ok(g)
    }

    /// Central-difference Jacobian `∂G_i/∂a_j`.
    pub fn jacobian(&self, a: &[f64], h: f64) -> Result<DMatrix<f64>, NdError> {
        let d = self.dim();
        let mut jac = DMatrix::zeros(d, d);
        let mut y = a.to_vec();
        for j in 0..d {
            y[j] = a[j] + h;
            let gp = self.g_eval(&y)?;
            y[j] = a[j] - h;
            let gm = self.g_eval(&y)?;
            y[j] = a[j];
            for i in 0..d {
                jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

/// `d (d-2)^{(d-1)/d} ∫ ξ_i² ξ_j² dσ`, the Jacobian at the ball when `κ = 0`.
pub fn base_jacobian(rule: &SphereRule) -> DMatrix<f64> {
    let d = rule.dim;
    let scale = d as f64 * (d as f64 - 2.0).powf((d as f64 - 1.0) / d as f64);
    DMatrix::from_fn(d, d, |i, j| {
        scale * rule.integrate(|x| x[i] * x[i] * x[j] * x[j])
    })
}

/// Off-diagonal principal value `p.v. ∫_E ∂_ij κ dx` for `i ≠ j`.
///
/// In polar coordinates the radial integral of the degree `-d` integrand is
/// `log(ρ(ξ)/ε)` with `ρ(ξ) = 1/|ξ/a|`, so the value is
/// `-∫ log|ξ/a| ∂_ij κ dσ` provided the cancellation `∫ ∂_ij κ dσ` vanishes.
/// Returns `(cancellation, value)`.
pub fn off_diagonal_pv(k: &KernelNd, a: &[f64], i: usize, j: usize, degree: usize) -> (f64, f64) {
    let rule = sphere_quadrature(k.dim(), degree);
    let mut cancel = 0.0;
    let mut value = 0.0;
    for (xi, w) in rule.iter() {
        let h = k.second(xi, i, j);
        cancel += w * h;
        value -= w * log_scaled_norm(xi, a) * h;
    }
    (cancel, value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdSolveOptions {
    /// Quadrature exactness degree; `None` selects [`default_degree`].
    pub degree: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian_step: f64,
}

impl Default for NdSolveOptions {
    fn default() -> Self {
        NdSolveOptions {
            degree: None,
            tol: 1e-12,
            max_iter: 50,
            jacobian_step: 1e-5,
        }
    }
}

impl NdSolveOptions {
    pub fn validate(&self) -> Result<(), NdError> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.jacobian_step > 0.0) {
            return Err(NdError::InvalidOptions(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdSolution {
    pub a: Vec<f64>,
    /// `max_i |G_i(a)|`.
    pub residual: f64,
    pub iterations: usize,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on `G(a) = 0` from the ball of radius `(d-2)^{1/d}`.
pub fn solve_nd(k: &KernelNd, opts: &NdSolveOptions) -> Result<NdSolution, NdError> {
    opts.validate()?;
    let d = k.dim();
    let system = NdSystem::new(k, opts.degree.unwrap_or_else(|| default_degree(d)));
    let mut a = EllipsoidParams::ball(d).a;
    let mut g = system.g_eval(&a)?;
    let mut iterations = 0;
    while sup(&g) >= opts.tol {
        if iterations == opts.max_iter {
            return Err(NdError::NoConvergence {
                iterations,
                residual: sup(&g),
            });
        }
        iterations += 1;
        let jac = system.jacobian(&a, opts.jacobian_step)?;
        let Some(step) = jac.lu().solve(&DVector::from_column_slice(&g)) else {
            return Err(NdError::NoConvergence {
                iterations,
                residual: sup(&g),
            });
        };
        let merit: f64 = g.iter().map(|v| v * v).sum();
        let mut t = 1.0;
        let mut outside = None;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, s)| x - t * s).collect();
            if trial.iter().any(|&x| !(x > 0.0)) {
                outside = Some(trial);
                t *= 0.5;
                continue;
            }
            let gt = system.g_eval(&trial)?;
            let mt: f64 = gt.iter().map(|v| v * v).sum();
            if mt <= (1.0 - 1e-4 * t) * merit || sup(&gt) < opts.tol {
                accepted = Some((trial, gt));
                break;
            }
            t *= 0.5;
        }
        match (accepted, outside) {
            (Some((trial, gt)), _) => {
                a = trial;
                g = gt;
            }
            (None, Some(a)) => return Err(NdError::LeftDomain { a }),
            (None, None) => {
                return Err(NdError::NoConvergence {
                    iterations,
                    residual: sup(&g),
                })
            }
        }
    }
    Ok(NdSolution {
        a,
        residual: sup(&g),
        iterations,
    })
}
