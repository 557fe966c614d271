//! First Euler–Lagrange system for the ellipse parameters and its Newton solver.
//!
//! Unknowns are `p = ab`, `λ = (a-b)/(a+b)` and the tilt `φ`. The kernel is
//! first rotated so that its `sin 2θ` coefficient vanishes, which removes the
//! constant term from the third equation; that equation is then divided by
//! `λ` so the Jacobian at the disc is invertible.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::FourierKernel2D;
use crate::quadrature::periodic_nodes;
use crate::spectral::{certify, PositivityCertificate};

/// Below this `|a - b|` the tilt is meaningless and reported as zero.
pub const DEGENERATE_AXES: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElError {
    #[error("lambda = {lambda} is outside (-1, 1)")]
    Domain { lambda: f64 },
    #[error("Newton did not converge in {iterations} iterations (|G| = {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iterate left the elliptic domain (p = {p}, lambda = {lambda}); kernel too large for the elliptic ansatz")]
    LeftDomain { p: f64, lambda: f64 },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

/// Solver coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub p: f64,
    pub lambda: f64,
    pub phi: f64,
}

impl EllipseParams {
    /// `q = a/b = (1+λ)/(1-λ)`.
    pub fn q(&self) -> f64 {
        (1.0 + self.lambda) / (1.0 - self.lambda)
    }

    pub fn in_domain(&self) -> bool {
        self.p > 0.0 && self.lambda > -1.0 && self.lambda < 1.0 && self.phi.is_finite()
    }

    pub fn to_ellipse(&self) -> Ellipse {
        let q = self.q();
        Ellipse {
            a: (self.p * q).sqrt(),
            b: (self.p / q).sqrt(),
            phi: self.phi,
        }
    }
}

/// `E(a, b, φ) = e^{iφ}{x²/a² + y²/b² ≤ 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
}

impl Ellipse {
    pub fn new(a: f64, b: f64, phi: f64) -> Self {
        Ellipse { a, b, phi }
    }

    pub fn disc(r: f64) -> Self {
        Ellipse::new(r, r, 0.0)
    }

    pub fn lambda(&self) -> f64 {
        (self.a - self.b) / (self.a + self.b)
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }

    pub fn to_params(&self) -> EllipseParams {
        EllipseParams {
            p: self.a * self.b,
            lambda: self.lambda(),
            phi: self.phi,
        }
    }

    /// `a ≥ b`, `φ ∈ [0, π)`, and `φ = 0` for a disc.
    pub fn canonical(&self) -> Ellipse {
        let (a, b, mut phi) = if self.a < self.b {
            (self.b, self.a, self.phi + FRAC_PI_2)
        } else {
            (self.a, self.b, self.phi)
        };
        phi = phi.rem_euclid(PI);
        if phi >= PI {
            phi = 0.0;
        }
        if (a - b).abs() < DEGENERATE_AXES {
            phi = 0.0;
        }
        Ellipse { a, b, phi }
    }

    /// Coordinates of `z` in the ellipse's own axes.
    pub fn to_frame(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        (c * x + s * y, -s * x + c * y)
    }

    pub fn from_frame(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        (c * u - s * v, s * u + c * v)
    }

    /// `x²/a² + y²/b²` in the ellipse frame; below one inside.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.to_frame(x, y);
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    /// Boundary point at elliptic angle τ.
    pub fn boundary_point(&self, tau: f64) -> (f64, f64) {
        self.from_frame(self.a * tau.cos(), self.b * tau.sin())
    }

    /// Outward unit normal at elliptic angle τ.
    pub fn outward_normal(&self, tau: f64) -> (f64, f64) {
        let (nu, nv) = (tau.cos() / self.a, tau.sin() / self.b);
        let r = nu.hypot(nv);
        self.from_frame(nu / r, nv / r)
    }
}

/// A solved (or candidate) ellipse with the data needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Canonical ellipse in the original frame.
    pub ellipse: Ellipse,
    /// Rotation ψ that removes the kernel's `sin 2θ` coefficient.
    pub pre_rotation: f64,
    /// Canonical parameters in the rotated frame (`φ̃ = φ + ψ`).
    pub params: EllipseParams,
    /// `‖L‖_∞` of the undivided system at the solution.
    pub residual: f64,
    pub iterations: usize,
    pub certificate: PositivityCertificate,
}

impl Solution {
    /// Packages an arbitrary ellipse as a solution candidate, evaluating its
    /// system residual. Used for verification of externally supplied ellipses.
    pub fn candidate(
        ellipse: Ellipse,
        k: &FourierKernel2D,
        opts: &SolveOptions,
    ) -> Result<Self, ElError> {
        let (psi, rotated) = pre_rotation(k);
        let canon = ellipse.canonical();
        let mut params = canon.to_params();
        params.phi = (canon.phi + psi).rem_euclid(PI);
        let system = ElSystem::new(&rotated, opts);
        let residual = system.l_residual(&params)?;
        Ok(Solution {
            ellipse: canon,
            pre_rotation: psi,
            params,
            residual,
            iterations: 0,
            certificate: certify(k),
        })
    }
}

/// Newton and quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub quad_nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian_step: f64,
    pub lambda_eps: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            quad_nodes: 2048,
            tol: 1e-12,
            max_iter: 50,
            jacobian_step: 1e-7,
            lambda_eps: 1e-6,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), ElError> {
        let bad = |m: &str| Err(ElError::InvalidOptions(m.to_string()));
        if self.quad_nodes < 8 {
            return bad("quad_nodes must be at least 8");
        }
        if !(self.tol > 0.0) || !(self.jacobian_step > 0.0) || !(self.lambda_eps > 0.0) {
            return bad("tolerances and steps must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        Ok(())
    }
}

/// `(I₁, I₂, I₃) = (a₁, -a₁, b₁)`.
pub fn i_integrals(k: &FourierKernel2D) -> [f64; 3] {
    [k.a_n(1), -k.a_n(1), k.b_n(1)]
}

/// ψ with `a₁ sin 2ψ + b₁ cos 2ψ = 0`, reduced to `[-π/4, π/4)`, together
/// with the kernel in the rotated coordinates `w = z e^{iψ}`.
pub fn pre_rotation(k: &FourierKernel2D) -> (f64, FourierKernel2D) {
    let (a1, b1) = (k.a_n(1), k.b_n(1));
    let mut psi = if a1 == 0.0 && b1 == 0.0 {
        0.0
    } else {
        -0.5 * b1.atan2(a1)
    };
    if psi < -FRAC_PI_4 {
        psi += FRAC_PI_2;
    } else if psi >= FRAC_PI_4 {
        psi -= FRAC_PI_2;
    }
    let mut rotated = k.rotated(psi);
    if psi != 0.0 {
        // Remove the round-off left in B₁ so the system sees it as exactly zero.
        let mut b: Vec<f64> = rotated.b().to_vec();
        b[0] = 0.0;
        rotated = FourierKernel2D::new(rotated.a().to_vec(), b).expect("finite coefficients");
    }
    (psi, rotated)
}

/// The system for a fixed kernel, with the kernel Hessian tabulated on the
/// quadrature nodes.
pub struct ElSystem {
    nodes: Vec<f64>,
    hess: Vec<[f64; 3]>,
    i: [f64; 3],
    lambda_eps: f64,
}

impl ElSystem {
    pub fn new(k: &FourierKernel2D, opts: &SolveOptions) -> Self {
        let nodes = periodic_nodes(opts.quad_nodes);
        let hess = nodes.iter().map(|&t| k.circle_jet(t).hess).collect();
        ElSystem {
            nodes,
            hess,
            i: i_integrals(k),
            lambda_eps: opts.lambda_eps,
        }
    }

    /// `(F₁, F₂, F₃)` with `F_j = -(1/2π)∮ log(cos²(θ-φ) + q² sin²(θ-φ)) h_j dθ`,
    /// where `h = (∂₁₁κ, ∂₂₂κ, ∂₁₂κ)`.
    pub fn f_integrals(&self, lambda: f64, phi: f64) -> Result<[f64; 3], ElError> {
        if !(lambda > -1.0 && lambda < 1.0) {
            return Err(ElError::Domain { lambda });
        }
        if lambda == 0.0 {
            return Ok([0.0; 3]);
        }
        // q² - 1 = 4λ/(1-λ)²; log1p keeps relative accuracy as λ → 0.
        let dq = 4.0 * lambda / (1.0 - lambda).powi(2);
        let mut acc = [0.0; 3];
        for (t, h) in self.nodes.iter().zip(&self.hess) {
            let s = (t - phi).sin();
            let w = (dq * s * s).ln_1p();
            acc[0] += w * h[0];
            acc[1] += w * h[2];
            acc[2] += w * h[1];
        }
        let scale = -1.0 / self.nodes.len() as f64;
        Ok(acc.map(|v| v * scale))
    }

    /// Undivided system `L(p, λ, φ)`.
    pub fn l_eval(&self, x: &EllipseParams) -> Result<[f64; 3], ElError> {
        let f = self.f_integrals(x.lambda, x.phi)?;
        let (s2, c2) = (2.0 * x.phi).sin_cos();
        Ok([
            x.p - 1.0 + c2 * x.lambda + f[0] + self.i[0],
            x.p - 1.0 - c2 * x.lambda + f[1] + self.i[1],
            s2 * x.lambda + f[2] + self.i[2],
        ])
    }

    pub fn l_residual(&self, x: &EllipseParams) -> Result<f64, ElError> {
        Ok(self.l_eval(x)?.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Regularized system `G`, the third equation divided by λ (or replaced
    /// by its λ-derivative at zero when `|λ| < λ_eps`).
    pub fn g_eval(&self, x: &EllipseParams) -> Result<[f64; 3], ElError> {
        let f = self.f_integrals(x.lambda, x.phi)?;
        let (s2, c2) = (2.0 * x.phi).sin_cos();
        let g3 = if x.lambda.abs() >= self.lambda_eps {
            s2 + (f[2] + self.i[2]) / x.lambda
        } else {
            let e = self.lambda_eps;
            let fp = self.f_integrals(e, x.phi)?[2];
            let fm = self.f_integrals(-e, x.phi)?[2];
            s2 + (fp - fm) / (2.0 * e)
        };
        Ok([
            x.p - 1.0 + c2 * x.lambda + f[0] + self.i[0],
            x.p - 1.0 - c2 * x.lambda + f[1] + self.i[1],
            g3,
        ])
    }

    /// Central-difference Jacobian of `G` in `(p, λ, φ)`.
    pub fn jacobian(&self, x: &EllipseParams, h: f64) -> Result<Matrix3<f64>, ElError> {
        let mut jac = Matrix3::zeros();
        for col in 0..3 {
            let shift = |d: f64| {
                let mut y = *x;
                match col {
                    0 => y.p += d,
                    1 => y.lambda += d,
                    _ => y.phi += d,
                }
                y
            };
            let gp = self.g_eval(&shift(h))?;
            let gm = self.g_eval(&shift(-h))?;
            for row in 0..3 {
                jac[(row, col)] = (gp[row] - gm[row]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

fn sup(v: &[f64; 3]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves the first Euler–Lagrange system by damped Newton from the disc.
pub fn solve(k: &FourierKernel2D, opts: &SolveOptions) -> Result<Solution, ElError> {
    opts.validate()?;
    let (psi, rotated) = pre_rotation(k);
    let system = ElSystem::new(&rotated, opts);
    let mut x = EllipseParams {
        p: 1.0,
        lambda: 0.0,
        phi: 0.0,
    };
    let mut g = system.g_eval(&x)?;
    let mut iterations = 0;
    while sup(&g) >= opts.tol {
        if iterations == opts.max_iter {
            return Err(ElError::NoConvergence {
                iterations,
                residual: sup(&g),
            });
        }
        iterations += 1;
        let jac = system.jacobian(&x, opts.jacobian_step)?;
        let rhs = Vector3::new(g[0], g[1], g[2]);
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(ElError::NoConvergence {
                iterations,
                residual: sup(&g),
            });
        };
        let merit = g.iter().map(|v| v * v).sum::<f64>();
        let mut t = 1.0;
        let mut outside = None;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = EllipseParams {
                p: x.p - t * step[0],
                lambda: x.lambda - t * step[1],
                phi: x.phi - t * step[2],
            };
            if !trial.in_domain() {
                outside = Some(trial);
                t *= 0.5;
                continue;
            }
            let gt = system.g_eval(&trial)?;
            let mt = gt.iter().map(|v| v * v).sum::<f64>();
            if mt <= (1.0 - 1e-4 * t) * merit || sup(&gt) < opts.tol {
                accepted = Some((trial, gt));
                break;
            }
            t *= 0.5;
        }
        match (accepted, outside) {
            (Some((trial, gt)), _) => {
                x = trial;
                g = gt;
            }
            (None, Some(o)) => {
                return Err(ElError::LeftDomain {
                    p: o.p,
                    lambda: o.lambda,
                })
            }
            (None, None) => {
                return Err(ElError::NoConvergence {
                    iterations,
                    residual: sup(&g),
                })
            }
        }
    }
    let residual = system.l_residual(&x)?;
    let rotated_ellipse = x.to_ellipse().canonical();
    let params = EllipseParams {
        p: x.p,
        lambda: rotated_ellipse.lambda(),
        phi: rotated_ellipse.phi,
    };
    let ellipse = Ellipse {
        phi: rotated_ellipse.phi - psi,
        ..rotated_ellipse
    }
    .canonical();
    Ok(Solution {
        ellipse,
        pre_rotation: psi,
        params,
        residual,
        iterations,
        certificate: certify(k),
    })
}
