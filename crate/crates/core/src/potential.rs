//! Potential of the normalized ellipse measure and Euler–Lagrange audits.
//!
//! `P(z) = (1/|E|)∫_E [-log|z-w| + κ(z-w)] dw + |z|²/2` is evaluated in polar
//! coordinates centred at `z`. Along each ray the radial integral is exact:
//! `∫ (-log r + f) r dr = r²/4 - (r²/2) log r + f r²/2`, so only the angular
//! integral is discretized. For `z` inside `E` every ray leaves `E` once and
//! the angular integrand is smooth and periodic (trapezoid rule). For `z`
//! outside, only a cone of directions meets `E`; the substitution
//! `θ = θ₀ + δ sin t` removes the square-root behaviour at the tangent
//! directions and Gauss–Legendre is used on `t`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::el_system::{ElError, Ellipse, Solution, SolveOptions};
use crate::kernel::{FourierKernel2D, HessEntry};
use crate::quadrature::{gauss_legendre, periodic_nodes, Rule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("quadrature at ({x}, {y}) did not settle within {nodes} nodes")]
    QuadratureBudgetExceeded { x: f64, y: f64, nodes: usize },
    #[error("point ({x}, {y}) is not inside the ellipse")]
    OutsideDomain { x: f64, y: f64 },
    #[error("Richardson extrapolation diverged (successive estimates {previous} and {last})")]
    ExtrapolationUnstable { previous: f64, last: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    System(#[from] ElError),
}

/// Quadrature settings for [`PotentialField`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialOptions {
    /// Starting trapezoid size for interior points.
    pub interior_nodes: usize,
    /// Starting Gauss–Legendre size for exterior points.
    pub exterior_nodes: usize,
    /// Stop when successive estimates differ by less than `rel_tol·(1 + |P|)`.
    pub rel_tol: f64,
    /// Interior rules may double this many times.
    pub max_interior_doublings: u32,
    /// Exterior rules may double this many times.
    pub max_exterior_doublings: u32,
    /// Points within `delta_skip·min(a, b)` of the boundary start with
    /// `boundary_boost` times more nodes.
    pub delta_skip: f64,
    pub boundary_boost: usize,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        PotentialOptions {
            interior_nodes: 256,
            exterior_nodes: 64,
            rel_tol: 1e-13,
            max_interior_doublings: 10,
            max_exterior_doublings: 6,
            delta_skip: 0.01,
            boundary_boost: 4,
        }
    }
}

/// Pieces of `P(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParts {
    /// `(-log|·| ⋆ χ_E/|E|)(z)`
    pub log: f64,
    /// `(κ ⋆ χ_E/|E|)(z)`
    pub kappa: f64,
    /// `|z|²/2`
    pub confinement: f64,
}

impl PotentialParts {
    pub fn total(&self) -> f64 {
        self.log + self.kappa + self.confinement
    }
}

const GL_LEVELS: usize = 12;

/// Gauss–Legendre rule with `16·2^level` nodes, built once per process.
fn gl_rule(level: usize) -> &'static Rule {
    static RULES: [OnceLock<Rule>; GL_LEVELS] = [const { OnceLock::new() }; GL_LEVELS];
    RULES[level].get_or_init(|| gauss_legendre(16 << level))
}

fn gl_level_for(n: usize) -> usize {
    let mut level = 0;
    while (16 << level) < n && level + 1 < GL_LEVELS {
        level += 1;
    }
    level
}

/// `r²/4 - (r²/2) log r`, the radial antiderivative of `-r log r`.
#[inline]
fn radial_log(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * (0.25 - 0.5 * r.ln())
    }
}

/// Ray/ellipse geometry for a fixed base point, in the ellipse frame.
#[derive(Debug, Clone, Copy)]
struct Ray {
    u: f64,
    v: f64,
    ia2: f64,
    ib2: f64,
    /// `u²/a² + v²/b² - 1`
    c: f64,
}

impl Ray {
    fn new(e: &Ellipse, x: f64, y: f64) -> Self {
        let (u, v) = e.to_frame(x, y);
        let ia2 = 1.0 / (e.a * e.a);
        let ib2 = 1.0 / (e.b * e.b);
        Ray {
            u,
            v,
            ia2,
            ib2,
            c: u * u * ia2 + v * v * ib2 - 1.0,
        }
    }

    /// Coefficients of `A r² + 2B r + C = 0` for direction `(cu, su)`.
    #[inline]
    fn coefficients(&self, cu: f64, su: f64) -> (f64, f64) {
        let a = cu * cu * self.ia2 + su * su * self.ib2;
        let b = self.u * cu * self.ia2 + self.v * su * self.ib2;
        (a, b)
    }

    /// Distance to the boundary from an interior point along a direction.
    #[inline]
    fn exit_radius(&self, cu: f64, su: f64) -> f64 {
        let (a, b) = self.coefficients(cu, su);
        let s = (b * b - a * self.c).max(0.0).sqrt();
        if b > 0.0 {
            -self.c / (b + s)
        } else {
            (s - b) / a
        }
    }

    /// Entry and exit radii from an exterior point; `None` if the ray misses.
    #[inline]
    fn chord(&self, cu: f64, su: f64) -> Option<(f64, f64)> {
        let (a, b) = self.coefficients(cu, su);
        let disc = b * b - a * self.c;
        if b >= 0.0 || disc <= 0.0 {
            return None;
        }
        let r2 = (disc.sqrt() - b) / a;
        Some((self.c / (a * r2), r2))
    }

    /// Centre direction θ₀ and half-width δ of the cone of directions that
    /// meet the ellipse, from the quadratic form `B² - AC = ξᵀMξ`.
    fn cone(&self) -> (f64, f64) {
        let (du, dv) = (self.u * self.ia2, self.v * self.ib2);
        let m11 = du * du - self.c * self.ia2;
        let m22 = dv * dv - self.c * self.ib2;
        let m12 = du * dv;
        let p0 = 0.5 * (m11 + m22);
        let half = 0.5 * (m11 - m22);
        let rr = half.hypot(m12);
        let mut theta0 = 0.5 * m12.atan2(half);
        let delta = if rr > 0.0 {
            0.5 * (-p0 / rr).clamp(-1.0, 1.0).acos()
        } else {
            FRAC_PI_2
        };
        if du * theta0.cos() + dv * theta0.sin() > 0.0 {
            theta0 += PI;
        }
        (theta0, delta)
    }
}

/// `P^κ` of the normalized characteristic function of one ellipse.
#[derive(Debug, Clone)]
pub struct PotentialField<'a> {
    ellipse: Ellipse,
    kernel: &'a FourierKernel2D,
    opts: PotentialOptions,
}

impl<'a> PotentialField<'a> {
    pub fn new(ellipse: Ellipse, kernel: &'a FourierKernel2D, opts: PotentialOptions) -> Self {
        PotentialField {
            ellipse,
            kernel,
            opts,
        }
    }

    pub fn ellipse(&self) -> &Ellipse {
        &self.ellipse
    }

    fn near_boundary(&self, ray: &Ray) -> bool {
        let d = ((ray.c + 1.0).sqrt() - 1.0).abs() * self.ellipse.a.min(self.ellipse.b);
        d < self.opts.delta_skip * self.ellipse.a.min(self.ellipse.b)
    }

    fn start_nodes(&self, base: usize, ray: &Ray) -> usize {
        if self.near_boundary(ray) {
            base * self.opts.boundary_boost.max(1)
        } else {
            base
        }
    }

    fn settled(&self, old: (f64, f64), new: (f64, f64)) -> bool {
        let tol = self.opts.rel_tol * (1.0 + new.0.abs() + new.1.abs());
        (old.0 - new.0).abs() <= tol && (old.1 - new.1).abs() <= tol
    }

    pub fn parts(&self, x: f64, y: f64) -> Result<PotentialParts, PotentialError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(PotentialError::InvalidInput("non-finite point".into()));
        }
        let ray = Ray::new(&self.ellipse, x, y);
        let (log, kappa) = if ray.c < 0.0 {
            self.interior(&ray, x, y)?
        } else {
            self.exterior(&ray, x, y)?
        };
        let norm = 1.0 / (PI * self.ellipse.a * self.ellipse.b);
        Ok(PotentialParts {
            log: log * norm,
            kappa: kappa * norm,
            confinement: 0.5 * (x * x + y * y),
        })
    }

    pub fn value(&self, x: f64, y: f64) -> Result<f64, PotentialError> {
        Ok(self.parts(x, y)?.total())
    }

    /// Unnormalized angular integrals for an interior point, by the nested
    /// periodic trapezoid rule.
    fn interior(&self, ray: &Ray, x: f64, y: f64) -> Result<(f64, f64), PotentialError> {
        let phi = self.ellipse.phi;
        let sample = |t: f64| {
            let (su, cu) = t.sin_cos();
            let r = ray.exit_radius(cu, su);
            let r2 = r * r;
            (radial_log(r), 0.5 * r2 * self.kernel.eval(t + phi))
        };
        let mut n = self.start_nodes(self.opts.interior_nodes, ray);
        let mut sum = (0.0, 0.0);
        for t in periodic_nodes(n) {
            let (l, k) = sample(t);
            sum.0 += l;
            sum.1 += k;
        }
        let mut est = (sum.0 * 2.0 * PI / n as f64, sum.1 * 2.0 * PI / n as f64);
        for _ in 0..self.opts.max_interior_doublings {
            let h = 2.0 * PI / n as f64;
            for j in 0..n {
                let (l, k) = sample((j as f64 + 0.5) * h);
                sum.0 += l;
                sum.1 += k;
            }
            n *= 2;
            let next = (sum.0 * 2.0 * PI / n as f64, sum.1 * 2.0 * PI / n as f64);
            if self.settled(est, next) {
                return Ok(next);
            }
            est = next;
        }
        Err(PotentialError::QuadratureBudgetExceeded { x, y, nodes: n })
    }

    /// Integrates `g(θ_frame, r₁, r₂)` over the cone of directions meeting
    /// the ellipse, with adaptive Gauss–Legendre on the sine-substituted
    /// variable.
    fn cone_integral<G>(
        &self,
        ray: &Ray,
        x: f64,
        y: f64,
        g: G,
    ) -> Result<(f64, f64), PotentialError>
    where
        G: Fn(f64, f64, f64) -> (f64, f64),
    {
        let (theta0, delta) = ray.cone();
        let eval = |level: usize| {
            let rule = gl_rule(level);
            let mut acc = (0.0, 0.0);
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                let t = FRAC_PI_2 * s;
                let (st, ct) = t.sin_cos();
                let theta = theta0 + delta * st;
                let (su, cu) = theta.sin_cos();
                if let Some((r1, r2)) = ray.chord(cu, su) {
                    let (p, q) = g(theta, r1, r2);
                    let jw = w * delta * ct * FRAC_PI_2;
                    acc.0 += jw * p;
                    acc.1 += jw * q;
                }
            }
            acc
        };
        let mut level = gl_level_for(self.start_nodes(self.opts.exterior_nodes, ray));
        let mut est = eval(level);
        for _ in 0..self.opts.max_exterior_doublings {
            if level + 1 >= GL_LEVELS {
                break;
            }
            level += 1;
            let next = eval(level);
            if self.settled(est, next) {
                return Ok(next);
            }
            est = next;
        }
        Err(PotentialError::QuadratureBudgetExceeded {
            x,
            y,
            nodes: 16 << level,
        })
    }

    fn exterior(&self, ray: &Ray, x: f64, y: f64) -> Result<(f64, f64), PotentialError> {
        let phi = self.ellipse.phi;
        self.cone_integral(ray, x, y, |theta, r1, r2| {
            (
                radial_log(r2) - radial_log(r1),
                0.5 * (r2 * r2 - r1 * r1) * self.kernel.eval(theta + phi),
            )
        })
    }

    /// Hessian `[∂₁₁P, ∂₁₂P, ∂₂₂P]` by central second differences with step `h`.
    pub fn hessian_fd(&self, x: f64, y: f64, h: f64) -> Result<[f64; 3], PotentialError> {
        let p = |dx: f64, dy: f64| self.value(x + dx, y + dy);
        let c = p(0.0, 0.0)?;
        let h2 = h * h;
        let d11 = (p(h, 0.0)? - 2.0 * c + p(-h, 0.0)?) / h2;
        let d22 = (p(0.0, h)? - 2.0 * c + p(0.0, -h)?) / h2;
        let d12 = (p(h, h)? - p(h, -h)? - p(-h, h)? + p(-h, -h)?) / (4.0 * h2);
        Ok([d11, d12, d22])
    }

    /// `2 + (Δκ ⋆ χ_E/|E|)(z)` at an exterior point, where
    /// `Δκ(z - w) = f''(θ)/r²` integrates radially to `f''(θ) log(r₂/r₁)`.
    pub fn laplacian_exterior(&self, x: f64, y: f64) -> Result<f64, PotentialError> {
        let ray = Ray::new(&self.ellipse, x, y);
        if ray.c <= 0.0 {
            return Err(PotentialError::InvalidInput(format!(
                "({x}, {y}) is not outside the ellipse"
            )));
        }
        let k = self.kernel;
        if (1..=k.order()).all(|n| k.a_n(n) == 0.0 && k.b_n(n) == 0.0) {
            return Ok(2.0);
        }
        let phi = self.ellipse.phi;
        let (val, _) = self.cone_integral(&ray, x, y, |theta, r1, r2| {
            (
                self.kernel.derivatives(theta + phi)[2] * (r2 / r1).ln(),
                0.0,
            )
        })?;
        Ok(2.0 + val / (PI * self.ellipse.a * self.ellipse.b))
    }
}

/// `P^κ(z)` with default quadrature.
pub fn potential_at(
    z: (f64, f64),
    e: &Ellipse,
    k: &FourierKernel2D,
) -> Result<f64, PotentialError> {
    PotentialField::new(*e, k, PotentialOptions::default()).value(z.0, z.1)
}

/// `((1/πz) ⋆ χ_E)(z) = z̄ - λ e^{-2iφ} z` for `z` inside `E`.
pub fn cauchy_transform_interior(z: Complex64, e: &Ellipse) -> Result<Complex64, PotentialError> {
    if e.level(z.re, z.im) >= 1.0 {
        return Err(PotentialError::OutsideDomain { x: z.re, y: z.im });
    }
    Ok(z.conj() - e.lambda() * Complex64::from_polar(1.0, -2.0 * e.phi) * z)
}

/// Nodes used by [`cz_constant`].
pub const CZ_NODES: usize = 2048;

/// Constant value on `E` of the principal-value convolution of `χ_E` with a
/// degree `-2` kernel whose circle trace is `h`:
/// `-½ ∮ log(⟨ξ,e^{iφ}⟩²/a² + ⟨ξ,ie^{iφ}⟩²/b²) h(ξ) dθ`.
pub fn cz_constant_with<H: Fn(f64) -> f64>(e: &Ellipse, nodes: usize, h: H) -> f64 {
    let (ia2, ib2) = (1.0 / (e.a * e.a), 1.0 / (e.b * e.b));
    let mut acc = 0.0;
    for t in periodic_nodes(nodes) {
        let (s, c) = (t - e.phi).sin_cos();
        acc += (c * c * ia2 + s * s * ib2).ln() * h(t);
    }
    -0.5 * acc * 2.0 * PI / nodes as f64
}

/// [`cz_constant_with`] for a Hessian entry of the kernel.
pub fn cz_constant(sel: HessEntry, e: &Ellipse, k: &FourierKernel2D) -> f64 {
    cz_constant_with(e, CZ_NODES, |t| k.circle_jet(t).hess_entry(sel))
}

/// Principal value `p.v.(∂_sel κ ⋆ χ_E)(z)` at an interior point, computed
/// directly around `z`: excising `B(z, ε)` leaves `∮ h(θ)(log R(θ) - log ε)`,
/// and the `log ε` term integrates to zero.
pub fn pv_hessian_convolution(
    z: (f64, f64),
    e: &Ellipse,
    k: &FourierKernel2D,
    sel: HessEntry,
    nodes: usize,
) -> Result<f64, PotentialError> {
    let ray = Ray::new(e, z.0, z.1);
    if ray.c >= 0.0 {
        return Err(PotentialError::OutsideDomain { x: z.0, y: z.1 });
    }
    let mut acc = 0.0;
    for t in periodic_nodes(nodes) {
        let (su, cu) = t.sin_cos();
        let r = ray.exit_radius(cu, su);
        acc += r.ln() * k.circle_jet(t + e.phi).hess_entry(sel);
    }
    Ok(acc * 2.0 * PI / nodes as f64)
}

/// Settings for the Euler–Lagrange audits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub quadrature: PotentialOptions,
    /// Interior sample count for the first condition.
    pub interior_samples: usize,
    /// Finite-difference step relative to `min(a, b)`.
    pub fd_step: f64,
    /// Exterior grid: rings × angles.
    pub radial: usize,
    pub angular: usize,
    /// Outer radius of the exterior grid relative to `max(a, b)`.
    pub r_max: f64,
    pub far_field_radius: f64,
    pub far_field_points: usize,
    pub parallel: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            quadrature: PotentialOptions::default(),
            interior_samples: 64,
            fd_step: 1e-4,
            radial: 100,
            angular: 100,
            r_max: 4.0,
            far_field_radius: 8.0,
            far_field_points: 8,
            parallel: true,
        }
    }
}

/// Result of the first-condition audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstElReport {
    /// Largest `|∂_ij P|` over interior samples.
    pub hessian_residual_interior: f64,
    /// `‖L‖_∞` of the ellipse system at the same ellipse.
    pub system_residual: f64,
    pub interior_samples: usize,
}

/// Result of the second-condition audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondElReport {
    /// `min (P(z) - C)` over the exterior grid.
    pub second_el_min_gap: f64,
    /// `C = P(0)`.
    pub c_kappa: f64,
    /// Smallest ring scale beyond which every sampled gap is positive.
    pub positive_gap_start: Option<f64>,
    /// `min (P(z) - C)` on the far-field circle.
    pub far_field_min_gap: f64,
    pub exterior_samples: usize,
    pub far_field_samples: usize,
}

/// Both audits together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ELReport {
    pub hessian_residual_interior: f64,
    pub system_residual: f64,
    pub second_el_min_gap: f64,
    #[serde(rename = "C_kappa")]
    pub c_kappa: f64,
    pub positive_gap_start: Option<f64>,
    pub far_field_min_gap: f64,
    pub sample_counts: SampleCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub interior: usize,
    pub exterior: usize,
    pub far_field: usize,
}

fn map_points<T, F>(points: &[(f64, f64)], parallel: bool, f: F) -> Result<Vec<T>, PotentialError>
where
    T: Send,
    F: Fn(f64, f64) -> Result<T, PotentialError> + Sync,
{
    if parallel {
        points.par_iter().map(|&(x, y)| f(x, y)).collect()
    } else {
        points.iter().map(|&(x, y)| f(x, y)).collect()
    }
}

/// `P(x, y)` at each point, in input order.
pub fn evaluate_many(
    field: &PotentialField<'_>,
    points: &[(f64, f64)],
    parallel: bool,
) -> Result<Vec<f64>, PotentialError> {
    map_points(points, parallel, |x, y| field.value(x, y))
}

/// Interior samples stratified by area in elliptic coordinates,
/// `ρ = ρ_max √((i + ½)/n)` with golden-angle spacing in τ.
pub fn interior_samples(e: &Ellipse, n: usize, rho_max: f64) -> Vec<(f64, f64)> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let rho = rho_max * ((i as f64 + 0.5) / n as f64).sqrt();
            let tau = golden * i as f64;
            e.from_frame(e.a * rho * tau.cos(), e.b * rho * tau.sin())
        })
        .collect()
}

/// Checks that the Hessian of `P` vanishes inside the solution ellipse.
pub fn verify_first_el(
    sol: &Solution,
    k: &FourierKernel2D,
    opts: &VerifyOptions,
) -> Result<FirstElReport, PotentialError> {
    if opts.interior_samples == 0 {
        return Err(PotentialError::InvalidInput(
            "need at least one sample".into(),
        ));
    }
    let e = sol.ellipse;
    let field = PotentialField::new(e, k, opts.quadrature);
    let m = e.a.min(e.b);
    let h = opts.fd_step * m;
    let rho_max = 1.0 - 2.0 * h / m;
    let points = interior_samples(&e, opts.interior_samples, rho_max);
    let hess = map_points(&points, opts.parallel, |x, y| field.hessian_fd(x, y, h))?;
    let worst = hess
        .iter()
        .flat_map(|h| h.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let system = Solution::candidate(e, k, &SolveOptions::default())?;
    Ok(FirstElReport {
        hessian_residual_interior: worst,
        system_residual: system.residual,
        interior_samples: points.len(),
    })
}

/// Exterior grid `z = s·(a cos τ, b sin τ)` rotated by φ, with
/// `s_i = 1 + (s_max - 1)(i + 1)/n_r` and `s_max = r_max·max(a,b)/min(a,b)`.
pub fn exterior_grid(e: &Ellipse, opts: &VerifyOptions) -> Vec<(f64, (f64, f64))> {
    let s_max = opts.r_max * e.a.max(e.b) / e.a.min(e.b);
    let mut pts = Vec::with_capacity(opts.radial * opts.angular);
    for i in 0..opts.radial {
        let s = 1.0 + (s_max - 1.0) * (i + 1) as f64 / opts.radial as f64;
        for j in 0..opts.angular {
            let tau = 2.0 * PI * j as f64 / opts.angular as f64;
            pts.push((s, e.from_frame(s * e.a * tau.cos(), s * e.b * tau.sin())));
        }
    }
    pts
}

/// Checks `P ≥ P(0)` outside the solution ellipse.
pub fn verify_second_el(
    sol: &Solution,
    k: &FourierKernel2D,
    opts: &VerifyOptions,
) -> Result<SecondElReport, PotentialError> {
    if opts.radial == 0 || opts.angular == 0 || !(opts.r_max > 1.0) {
        return Err(PotentialError::InvalidInput("empty exterior grid".into()));
    }
    let e = sol.ellipse;
    let field = PotentialField::new(e, k, opts.quadrature);
    let c = field.value(0.0, 0.0)?;
    let grid = exterior_grid(&e, opts);
    let points: Vec<(f64, f64)> = grid.iter().map(|g| g.1).collect();
    let gaps = map_points(&points, opts.parallel, |x, y| Ok(field.value(x, y)? - c))?;
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    // Walk rings inward while every gap stays positive.
    let mut start = None;
    for (ring, chunk) in gaps.chunks(opts.angular).enumerate().rev() {
        if chunk.iter().all(|&g| g > 0.0) {
            start = Some(grid[ring * opts.angular].0);
        } else {
            break;
        }
    }
    let far: Vec<(f64, f64)> = (0..opts.far_field_points)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / opts.far_field_points as f64;
            (
                opts.far_field_radius * t.cos(),
                opts.far_field_radius * t.sin(),
            )
        })
        .collect();
    let far_gaps = map_points(&far, opts.parallel, |x, y| Ok(field.value(x, y)? - c))?;
    Ok(SecondElReport {
        second_el_min_gap: min_gap,
        c_kappa: c,
        positive_gap_start: start,
        far_field_min_gap: far_gaps.iter().copied().fold(f64::INFINITY, f64::min),
        exterior_samples: points.len(),
        far_field_samples: far.len(),
    })
}

/// Runs both audits.
pub fn verify(
    sol: &Solution,
    k: &FourierKernel2D,
    opts: &VerifyOptions,
) -> Result<ELReport, PotentialError> {
    let first = verify_first_el(sol, k, opts)?;
    let second = verify_second_el(sol, k, opts)?;
    Ok(ELReport {
        hessian_residual_interior: first.hessian_residual_interior,
        system_residual: first.system_residual,
        second_el_min_gap: second.second_el_min_gap,
        c_kappa: second.c_kappa,
        positive_gap_start: second.positive_gap_start,
        far_field_min_gap: second.far_field_min_gap,
        sample_counts: SampleCounts {
            interior: first.interior_samples,
            exterior: second.exterior_samples,
            far_field: second.far_field_samples,
        },
    })
}

/// Extrapolated exterior limit of `ΔP` at a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianLimit {
    pub value: f64,
    /// Raw values at `t₀ 2^{-j}`.
    pub samples: Vec<f64>,
    pub error_estimate: f64,
}

/// `lim_{t→0⁺} ΔP(x + tν)` at the boundary point with elliptic angle `tau`,
/// by Richardson extrapolation over `t = t₀ 2^{-j}`, `j = 0..=levels`, with
/// `t₀ = 0.1·min(a, b)`.
pub fn laplacian_exterior_limit(
    tau: f64,
    sol: &Solution,
    k: &FourierKernel2D,
    opts: &PotentialOptions,
    levels: usize,
) -> Result<LaplacianLimit, PotentialError> {
    let e = sol.ellipse;
    let field = PotentialField::new(e, k, *opts);
    let (bx, by) = e.boundary_point(tau);
    let (nx, ny) = e.outward_normal(tau);
    let t0 = 0.1 * e.a.min(e.b);
    let samples = (0..=levels)
        .map(|j| {
            let t = t0 * 0.5f64.powi(j as i32);
            field.laplacian_exterior(bx + t * nx, by + t * ny)
        })
        .collect::<Result<Vec<_>, _>>()?;
    // Neville table for an expansion in integer powers of t.
    let mut table = vec![samples.clone()];
    for order in 1..=levels {
        let prev = &table[order - 1];
        let f = 2f64.powi(order as i32);
        let row: Vec<f64> = (1..prev.len())
            .map(|j| prev[j] + (prev[j] - prev[j - 1]) / (f - 1.0))
            .collect();
        table.push(row);
    }
    let diag: Vec<f64> = table.iter().map(|row| *row.last().unwrap()).collect();
    let value = *diag.last().unwrap();
    let error_estimate = if diag.len() > 1 {
        (value - diag[diag.len() - 2]).abs()
    } else {
        0.0
    };
    if !value.is_finite() || error_estimate > 1e-3 * (1.0 + value.abs()) {
        return Err(PotentialError::ExtrapolationUnstable {
            previous: diag[diag.len().saturating_sub(2)],
            last: value,
        });
    }
    Ok(LaplacianLimit {
        value,
        samples,
        error_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::el_system::solve;
    use crate::kernel::AnisotropicPreset;

    /// Closed-form `-log|·| ⋆ χ_E/|E|` in the ellipse frame (`a ≥ b`).
    fn log_potential_oracle(e: &Ellipse, x: f64, y: f64) -> f64 {
        let (u, v) = e.to_frame(x, y);
        let (a, b) = (e.a, e.b);
        if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
            0.5 - ((a + b) / 2.0).ln() - u * u / (a * (a + b)) - v * v / (b * (a + b))
        } else {
            let z = Complex64::new(u, v);
            let c = (a * a - b * b).sqrt();
            let s = (z - c).sqrt() * (z + c).sqrt();
            (-z / (s + z) - ((z + s) / 2.0).ln()).re + 0.5
        }
    }

    #[test]
    fn disc_value_at_origin() {
        let p = potential_at((0.0, 0.0), &Ellipse::disc(1.0), &FourierKernel2D::zero()).unwrap();
        assert!((p - 0.5).abs() < 1e-13);
    }

    #[test]
    fn disc_potential_constant_inside_and_larger_outside() {
        let e = Ellipse::disc(1.0);
        let k = FourierKernel2D::zero();
        for (x, y) in [(0.3, 0.1), (-0.5, 0.6), (0.0, -0.9), (0.99, 0.0)] {
            assert!((potential_at((x, y), &e, &k).unwrap() - 0.5).abs() < 1e-12);
        }
        assert!(potential_at((2.0, 0.0), &e, &k).unwrap() > 0.5);
    }

    #[test]
    fn log_part_matches_closed_form() {
        let k = FourierKernel2D::zero();
        for e in [Ellipse::new(2.0, 1.0, 0.0), Ellipse::new(1.3, 0.7, 0.9)] {
            let field = PotentialField::new(e, &k, PotentialOptions::default());
            for (x, y) in [
                (0.0, 0.0),
                (0.4, -0.3),
                (0.9, 0.2),
                (1.5, 1.2),
                (-3.0, 0.5),
                (0.2, 1.05),
            ] {
                let got = field.parts(x, y).unwrap().log;
                let want = log_potential_oracle(&e, x, y);
                assert!(
                    (got - want).abs() < 1e-11,
                    "{e:?} ({x},{y}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn near_boundary_matches_closed_form() {
        let e = Ellipse::new(1.2, 0.8, 0.4);
        let k = FourierKernel2D::zero();
        let field = PotentialField::new(e, &k, PotentialOptions::default());
        for s in [0.999, 0.9999, 1.0001, 1.001, 1.01] {
            let (x, y) = e.from_frame(s * 1.2 * 0.6f64.cos(), s * 0.8 * 0.6f64.sin());
            let got = field.parts(x, y).unwrap().log;
            assert!(
                (got - log_potential_oracle(&e, x, y)).abs() < 1e-10,
                "s = {s}"
            );
        }
    }

    #[test]
    fn kappa_part_of_constant_kernel_is_constant() {
        let e = Ellipse::new(1.4, 0.9, 0.3);
        let k = FourierKernel2D::constant(0.7);
        let field = PotentialField::new(e, &k, PotentialOptions::default());
        for (x, y) in [(0.1, 0.2), (2.0, -1.0), (0.0, 0.95)] {
            assert!((field.parts(x, y).unwrap().kappa - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_is_even() {
        let k = FourierKernel2D::new(vec![0.1, 0.05, 0.02], vec![0.03, -0.02]).unwrap();
        let e = Ellipse::new(1.1, 0.9, 0.7);
        let field = PotentialField::new(e, &k, PotentialOptions::default());
        for (x, y) in [(0.3, 0.2), (1.5, -0.4), (0.0, 2.5)] {
            let d = field.value(x, y).unwrap() - field.value(-x, -y).unwrap();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn cauchy_transform_examples() {
        let z = Complex64::new(0.3, -0.2);
        assert_eq!(
            cauchy_transform_interior(z, &Ellipse::disc(1.0)).unwrap(),
            z.conj()
        );
        let e = Ellipse::new(2.0, 1.0, 0.0);
        assert_eq!(
            cauchy_transform_interior(Complex64::new(0.0, 0.0), &e).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let w = cauchy_transform_interior(Complex64::new(0.1, 0.0), &e).unwrap();
        assert!((w.re - 0.2 / 3.0).abs() < 1e-15 && w.im.abs() < 1e-15);
        assert!(cauchy_transform_interior(Complex64::new(3.0, 0.0), &e).is_err());
    }

    #[test]
    fn interior_gradient_matches_cauchy_transform() {
        let e = Ellipse::new(1.3, 0.8, 0.6);
        let k = FourierKernel2D::zero();
        let field = PotentialField::new(e, &k, PotentialOptions::default());
        let h = 1e-5;
        for (x, y) in interior_samples(&e, 20, 0.9) {
            let u = |dx: f64, dy: f64| field.parts(x + dx, y + dy).unwrap().log;
            let ux = (u(h, 0.0) - u(-h, 0.0)) / (2.0 * h);
            let uy = (u(0.0, h) - u(0.0, -h)) / (2.0 * h);
            let dz = Complex64::new(0.5 * ux, -0.5 * uy);
            let want =
                -cauchy_transform_interior(Complex64::new(x, y), &e).unwrap() / (2.0 * e.a * e.b);
            assert!((dz - want).norm() < 1e-5);
        }
    }

    #[test]
    fn beurling_constants() {
        for (a, b, phi) in [(1.5, 0.7, 0.3), (0.8, 1.9, 2.0), (1.0, 1.0, 0.4)] {
            let e = Ellipse::new(a, b, phi);
            let re = cz_constant_with(&e, CZ_NODES, |t| (2.0 * t).cos() / PI);
            let im = cz_constant_with(&e, CZ_NODES, |t| (2.0 * t).sin() / PI);
            let l = e.lambda();
            assert!((re - l * (2.0 * phi).cos()).abs() < 1e-12);
            assert!((im - l * (2.0 * phi).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn cz_constant_is_scale_invariant_and_zero_on_discs() {
        let k = FourierKernel2D::new(vec![0.1, 0.2, -0.05], vec![0.1, 0.03]).unwrap();
        let e = Ellipse::new(1.2, 0.7, 0.5);
        for sel in HessEntry::ALL {
            let base = cz_constant(sel, &e, &k);
            for c in [0.5, 2.0] {
                let scaled = Ellipse::new(c * e.a, c * e.b, e.phi);
                assert!((cz_constant(sel, &scaled, &k) - base).abs() < 1e-12);
            }
            assert!(cz_constant(sel, &Ellipse::disc(1.3), &k).abs() < 1e-12);
        }
    }

    #[test]
    fn principal_value_is_constant_inside() {
        let k = FourierKernel2D::new(vec![0.1, 0.2, -0.05], vec![0.1, 0.03]).unwrap();
        let e = Ellipse::new(1.2, 0.7, 0.5);
        for sel in HessEntry::ALL {
            let want = cz_constant(sel, &e, &k);
            for z in [(0.0, 0.0), (0.5, 0.1), (-0.3, -0.4)] {
                let got = pv_hessian_convolution(z, &e, &k, sel, 4096).unwrap();
                assert!((got - want).abs() < 1e-4, "{sel:?} {z:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn first_el_examples() {
        let opts = VerifyOptions {
            interior_samples: 16,
            ..Default::default()
        };
        let zero = FourierKernel2D::zero();
        let disc = solve(&zero, &SolveOptions::default()).unwrap();
        let r = verify_first_el(&disc, &zero, &opts).unwrap();
        assert!(r.hessian_residual_interior < 5e-4);
        let k = AnisotropicPreset::kernel(0.2);
        let sol = solve(&k, &SolveOptions::default()).unwrap();
        let r = verify_first_el(&sol, &k, &opts).unwrap();
        assert!(r.hessian_residual_interior < 1e-3, "{r:?}");
        let wrong = Solution::candidate(Ellipse::disc(1.0), &k, &SolveOptions::default()).unwrap();
        let r = verify_first_el(&wrong, &k, &opts).unwrap();
        assert!(r.hessian_residual_interior > 0.05);
    }

    #[test]
    fn laplacian_limit_matches_symbol_formula() {
        let k = AnisotropicPreset::kernel(0.2);
        let sol = solve(&k, &SolveOptions::default()).unwrap();
        let e = sol.ellipse;
        for j in 0..4 {
            let tau = 0.4 + j as f64 * 1.3;
            let lim =
                laplacian_exterior_limit(tau, &sol, &k, &PotentialOptions::default(), 6).unwrap();
            let (nx, ny) = e.outward_normal(tau);
            let want = 2.0 * crate::spectral::symbol(&k, ny.atan2(nx)) / (e.a * e.b);
            assert!((lim.value - want).abs() < 1e-5, "{} vs {want}", lim.value);
        }
        let zero = FourierKernel2D::zero();
        let disc = solve(&zero, &SolveOptions::default()).unwrap();
        let lim =
            laplacian_exterior_limit(0.3, &disc, &zero, &PotentialOptions::default(), 6).unwrap();
        assert_eq!(lim.value, 2.0);
    }
}
