//! Even, zero-homogeneous perturbation kernels in the plane.
//!
//! A kernel is stored through its trace on the unit circle,
//! `κ(e^{iθ}) = Σ_{n=0}^{N} a_n cos(2nθ) + b_n sin(2nθ)`, and extended to
//! the punctured plane by `κ(z) = κ(z/|z|)`. Only even frequencies can be
//! represented, so evenness holds by construction.
//!
//! Derivatives on the circle follow from zero-homogeneity: the gradient is
//! tangential, `∇κ(e^{iθ}) = f'(θ)(-sin θ, cos θ)`, and the Hessian entries are
//! explicit combinations of `f'` and `f''` (see [`CircleJet2`]).

mod presets;
mod spec;

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

pub use presets::{
    AnisotropicPreset, KernelPreset, PowerPreset, PresetParams, PresetRegistry, ScrewPreset,
    ShearPreset,
};
pub use spec::KernelSpec;

/// Default truncation order for sampled kernels.
pub const DEFAULT_ORDER: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel coefficient is not finite")]
    NonFinite,
    #[error("odd-frequency energy fraction {odd_fraction:.3e} exceeds tolerance {tolerance:.3e}; kernel is not even")]
    EvennessViolation { odd_fraction: f64, tolerance: f64 },
    #[error("highest retained coefficient {tail:.3e} exceeds {tolerance:.1e} of the largest ({largest:.3e}); raise the order")]
    AliasWarning {
        tail: f64,
        largest: f64,
        tolerance: f64,
    },
    #[error("{samples} samples cannot resolve order {order}; need at least {needed}")]
    TooFewSamples {
        samples: usize,
        order: usize,
        needed: usize,
    },
    #[error("invalid preset parameters: {0}")]
    InvalidPreset(String),
    #[error("unknown kernel preset `{0}`")]
    UnknownPreset(String),
    #[error("malformed kernel spec: {0}")]
    Spec(String),
}

/// Truncated even Fourier series of a zero-homogeneous kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierKernel2D {
    // Both vectors have length N + 1; `sin[0]` is always zero.
    cos: Vec<f64>,
    sin: Vec<f64>,
}

/// Value, gradient and Hessian of a kernel at a point of the unit circle.
///
/// With `f(θ) = κ(e^{iθ})`:
/// `∂₁₁κ = sin2θ f' + sin²θ f''`, `∂₂₂κ = -sin2θ f' + cos²θ f''`,
/// `∂₁₂κ = -cos2θ f' - ½ sin2θ f''`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleJet2 {
    pub value: f64,
    pub grad: [f64; 2],
    /// `[∂₁₁κ, ∂₁₂κ, ∂₂₂κ]`
    pub hess: [f64; 3],
}

impl CircleJet2 {
    pub fn hess_entry(&self, sel: HessEntry) -> f64 {
        match sel {
            HessEntry::E11 => self.hess[0],
            HessEntry::E12 => self.hess[1],
            HessEntry::E22 => self.hess[2],
        }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[0] + self.hess[2]
    }
}

/// Selects one entry of a symmetric 2×2 Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HessEntry {
    E11,
    E12,
    E22,
}

impl HessEntry {
    pub const ALL: [HessEntry; 3] = [HessEntry::E11, HessEntry::E12, HessEntry::E22];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "11" => Some(HessEntry::E11),
            "12" | "21" => Some(HessEntry::E12),
            "22" => Some(HessEntry::E22),
            _ => None,
        }
    }
}

/// Options for [`FourierKernel2D::project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectOptions {
    /// Largest admissible odd-frequency share of the sample energy.
    pub evenness_tol: f64,
    /// Largest admissible `|a_N| + |b_N|` relative to the largest coefficient.
    pub alias_tol: f64,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        ProjectOptions {
            evenness_tol: 1e-10,
            alias_tol: 1e-10,
        }
    }
}

/// Successful projection of circle samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub kernel: FourierKernel2D,
    /// Odd-frequency share of the total sample energy.
    pub odd_fraction: f64,
}

impl FourierKernel2D {
    /// Builds a kernel from cosine coefficients `a_0..a_N` and sine
    /// coefficients `b_1..b_N`. Shorter lists are zero-padded; the order is at
    /// least one.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, KernelError> {
        if a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        let order = a.len().saturating_sub(1).max(b.len()).max(1);
        let mut cos = a;
        cos.resize(order + 1, 0.0);
        let mut sin = Vec::with_capacity(order + 1);
        sin.push(0.0);
        sin.extend(b);
        sin.resize(order + 1, 0.0);
        Ok(FourierKernel2D { cos, sin })
    }

    pub fn zero() -> Self {
        FourierKernel2D {
            cos: vec![0.0; 2],
            sin: vec![0.0; 2],
        }
    }

    pub fn constant(c: f64) -> Self {
        FourierKernel2D {
            cos: vec![c, 0.0],
            sin: vec![0.0; 2],
        }
    }

    /// Truncation order N.
    pub fn order(&self) -> usize {
        self.cos.len() - 1
    }

    /// Cosine coefficients `a_0..a_N`.
    pub fn a(&self) -> &[f64] {
        &self.cos
    }

    /// Sine coefficients `b_1..b_N`.
    pub fn b(&self) -> &[f64] {
        &self.sin[1..]
    }

    /// `a_n`, zero beyond the truncation order.
    pub fn a_n(&self, n: usize) -> f64 {
        self.cos.get(n).copied().unwrap_or(0.0)
    }

    /// `b_n`, zero for `n = 0` and beyond the truncation order.
    pub fn b_n(&self, n: usize) -> f64 {
        self.sin.get(n).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.cos
            .iter()
            .chain(&self.sin)
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Returns `c·κ`.
    pub fn scaled(&self, c: f64) -> Self {
        FourierKernel2D {
            cos: self.cos.iter().map(|x| c * x).collect(),
            sin: self.sin.iter().map(|x| c * x).collect(),
        }
    }

    /// Returns the kernel expressed in coordinates `w = z e^{iψ}`, i.e.
    /// `θ ↦ f(θ - ψ)`:
    /// `A_n = a_n cos(2nψ) - b_n sin(2nψ)`, `B_n = a_n sin(2nψ) + b_n cos(2nψ)`.
    pub fn rotated(&self, psi: f64) -> Self {
        let mut cos = self.cos.clone();
        let mut sin = self.sin.clone();
        for n in 1..=self.order() {
            let (s, c) = (2.0 * n as f64 * psi).sin_cos();
            cos[n] = self.cos[n] * c - self.sin[n] * s;
            sin[n] = self.cos[n] * s + self.sin[n] * c;
        }
        FourierKernel2D { cos, sin }
    }

    /// `κ(e^{iθ})`.
    pub fn eval(&self, theta: f64) -> f64 {
        let (s2, c2) = (2.0 * theta).sin_cos();
        self.eval_harmonic(c2, s2).0
    }

    /// Value and θ-derivative from `e^{2iθ} = c2 + i s2`, without trig calls.
    #[inline]
    pub fn eval_harmonic(&self, c2: f64, s2: f64) -> (f64, f64) {
        let mut value = self.cos[0];
        let mut deriv = 0.0;
        let (mut cn, mut sn) = (1.0, 0.0);
        for n in 1..self.cos.len() {
            let next_c = cn * c2 - sn * s2;
            sn = sn * c2 + cn * s2;
            cn = next_c;
            let (a, b) = (self.cos[n], self.sin[n]);
            value += a * cn + b * sn;
            deriv += 2.0 * n as f64 * (b * cn - a * sn);
        }
        (value, deriv)
    }

    /// `[f, f', f'', f''']` at θ.
    pub fn derivatives(&self, theta: f64) -> [f64; 4] {
        let (s2, c2) = (2.0 * theta).sin_cos();
        let mut out = [self.cos[0], 0.0, 0.0, 0.0];
        let (mut cn, mut sn) = (1.0, 0.0);
        for n in 1..self.cos.len() {
            let next_c = cn * c2 - sn * s2;
            sn = sn * c2 + cn * s2;
            cn = next_c;
            let (a, b) = (self.cos[n], self.sin[n]);
            let w = 2.0 * n as f64;
            let even = a * cn + b * sn;
            let odd = b * cn - a * sn;
            out[0] += even;
            out[1] += w * odd;
            out[2] -= w * w * even;
            out[3] -= w * w * w * odd;
        }
        out
    }

    /// Value, gradient and Hessian of the homogeneous extension at `e^{iθ}`.
    pub fn circle_jet(&self, theta: f64) -> CircleJet2 {
        let [f, f1, f2, _] = self.derivatives(theta);
        let (s, c) = theta.sin_cos();
        let (s2, c2) = (2.0 * theta).sin_cos();
        CircleJet2 {
            value: f,
            grad: [-s * f1, c * f1],
            hess: [
                s2 * f1 + s * s * f2,
                -c2 * f1 - 0.5 * s2 * f2,
                -s2 * f1 + c * c * f2,
            ],
        }
    }

    /// Third derivatives `[∂₁₁₁κ, ∂₁₁₂κ, ∂₁₂₂κ, ∂₂₂₂κ]` at `e^{iθ}`.
    ///
    /// Each Hessian entry is `r⁻² h(θ)`, so `∂₁ = -2cosθ h - sinθ h'` and
    /// `∂₂ = -2sinθ h + cosθ h'` on the circle.
    pub fn circle_third(&self, theta: f64) -> [f64; 4] {
        let [_, f1, f2, f3] = self.derivatives(theta);
        let (s, c) = theta.sin_cos();
        let (s2, c2) = (2.0 * theta).sin_cos();
        let h11 = s2 * f1 + s * s * f2;
        let h12 = -c2 * f1 - 0.5 * s2 * f2;
        let h22 = -s2 * f1 + c * c * f2;
        let dh11 = 2.0 * c2 * f1 + 2.0 * s2 * f2 + s * s * f3;
        let dh12 = 2.0 * s2 * f1 - 2.0 * c2 * f2 - 0.5 * s2 * f3;
        let dh22 = -2.0 * c2 * f1 - 2.0 * s2 * f2 + c * c * f3;
        [
            -2.0 * c * h11 - s * dh11,
            -2.0 * s * h11 + c * dh11,
            -2.0 * s * h12 + c * dh12,
            -2.0 * s * h22 + c * dh22,
        ]
    }

    /// `max_{j ≤ 3} sup_{|z|=1} |∇^j κ|` with Frobenius norms, sampled on
    /// `max(16N, 64)` equispaced angles.
    pub fn c3_norm(&self) -> f64 {
        let n = (16 * self.order()).max(64);
        let mut best = 0.0f64;
        for j in 0..n {
            let theta = PI * j as f64 / n as f64;
            let jet = self.circle_jet(theta);
            let third = self.circle_third(theta);
            let g = jet.grad[0].hypot(jet.grad[1]);
            let h = (jet.hess[0].powi(2) + 2.0 * jet.hess[1].powi(2) + jet.hess[2].powi(2)).sqrt();
            let t = (third[0].powi(2)
                + 3.0 * third[1].powi(2)
                + 3.0 * third[2].powi(2)
                + third[3].powi(2))
            .sqrt();
            best = best.max(jet.value.abs()).max(g).max(h).max(t);
        }
        best
    }

    /// Projects `2M` equispaced samples `f(jπ/M)`, `j = 0..2M`, onto even
    /// frequencies up to `2N`.
    pub fn project(samples: &[f64], order: usize) -> Result<Projection, KernelError> {
        Self::project_with(samples, order, ProjectOptions::default())
    }

    pub fn project_with(
        samples: &[f64],
        order: usize,
        opts: ProjectOptions,
    ) -> Result<Projection, KernelError> {
        let order = order.max(1);
        let needed = 4 * order + 4;
        if samples.len() < needed || samples.len() % 2 == 1 {
            return Err(KernelError::TooFewSamples {
                samples: samples.len(),
                order,
                needed,
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        let len = samples.len();
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(len).process(&mut buf);
        let scale = 1.0 / len as f64;
        let mut total = 0.0;
        let mut odd = 0.0;
        for (k, c) in buf.iter().enumerate() {
            let e = (c * scale).norm_sqr();
            total += e;
            if k % 2 == 1 {
                odd += e;
            }
        }
        // Energies and tails at the round-off level of O(1) samples are noise.
        let noise = 16.0 * f64::EPSILON * samples.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let odd_fraction = if total > 0.0 { odd / total } else { 0.0 };
        if odd_fraction > opts.evenness_tol && odd.sqrt() > noise {
            return Err(KernelError::EvennessViolation {
                odd_fraction,
                tolerance: opts.evenness_tol,
            });
        }
        let mut a = vec![0.0; order + 1];
        let mut b = vec![0.0; order];
        a[0] = buf[0].re * scale;
        for n in 1..=order {
            let c = buf[2 * n] * scale;
            a[n] = 2.0 * c.re;
            b[n - 1] = -2.0 * c.im;
        }
        let kernel = FourierKernel2D::new(a, b)?;
        let largest = kernel.max_abs_coefficient();
        let tail = kernel.a_n(order).abs() + kernel.b_n(order).abs();
        if tail > opts.alias_tol * largest && tail > noise {
            return Err(KernelError::AliasWarning {
                tail,
                largest,
                tolerance: opts.alias_tol,
            });
        }
        Ok(Projection {
            kernel,
            odd_fraction,
        })
    }

    /// Samples `f` at the `2M` angles `jπ/M` expected by [`Self::project`].
    pub fn sample_circle<F: Fn(f64) -> f64>(f: F, half_count: usize) -> Vec<f64> {
        (0..2 * half_count)
            .map(|j| f(PI * j as f64 / half_count as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kernel(a: &[f64], b: &[f64]) -> FourierKernel2D {
        FourierKernel2D::new(a.to_vec(), b.to_vec()).unwrap()
    }

    /// κ(x, y) = f(arg z), the homogeneous extension off the circle.
    fn extension(k: &FourierKernel2D, x: f64, y: f64) -> f64 {
        k.eval(y.atan2(x))
    }

    /// Fourth-order central difference of a scalar function.
    fn d1(f: impl Fn(f64) -> f64, h: f64) -> f64 {
        (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
    }

    fn fd_grad(k: &FourierKernel2D, x: f64, y: f64) -> [f64; 2] {
        let h = 1e-4;
        [
            d1(|t| extension(k, x + t, y), h),
            d1(|t| extension(k, x, y + t), h),
        ]
    }

    /// Hessian by differencing the finite-difference gradient.
    fn fd_hess(k: &FourierKernel2D, x: f64, y: f64) -> [f64; 3] {
        let h = 1e-3;
        [
            d1(|t| fd_grad(k, x + t, y)[0], h),
            d1(|t| fd_grad(k, x, y + t)[0], h),
            d1(|t| fd_grad(k, x, y + t)[1], h),
        ]
    }

    fn sample_kernel() -> FourierKernel2D {
        kernel(&[0.3, -0.2, 0.05, 0.01], &[0.15, -0.04, 0.02])
    }

    #[test]
    fn eval_examples() {
        assert_eq!(kernel(&[0.0, 0.5], &[0.0]).eval(0.0), 0.5);
        assert!(kernel(&[0.5, 0.5], &[0.0]).eval(PI / 2.0).abs() < 1e-16);
        assert!((kernel(&[0.0, 0.0], &[0.5]).eval(PI / 4.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn constant_kernel_has_flat_jet() {
        let k = kernel(&[0.7], &[]);
        assert_eq!(k.order(), 1);
        for j in 0..16 {
            let jet = k.circle_jet(0.37 * j as f64);
            assert_eq!(jet.grad, [0.0, 0.0]);
            assert_eq!(jet.hess, [0.0, 0.0, 0.0]);
            assert_eq!(jet.value, 0.7);
        }
    }

    #[test]
    fn jet_of_x_squared_at_zero() {
        // κ = x²/|z|²; frozen from the finite-difference oracle below.
        let k = kernel(&[0.5, 0.5], &[0.0]);
        let jet = k.circle_jet(0.0);
        let fd = fd_hess(&k, 1.0, 0.0);
        assert!(jet.grad[0].abs() < 1e-15 && jet.grad[1].abs() < 1e-15);
        assert!(jet.hess[0].abs() < 1e-15 && jet.hess[1].abs() < 1e-15);
        assert!((jet.hess[2] + 2.0).abs() < 1e-15);
        for (got, want) in jet.hess.iter().zip(fd) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn trace_of_hessian_is_second_angular_derivative() {
        let k = sample_kernel();
        for j in 0..50 {
            let theta = 0.1234 * j as f64;
            let jet = k.circle_jet(theta);
            let f2 = k.derivatives(theta)[2];
            assert!((jet.laplacian() - f2).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let k = sample_kernel();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let theta: f64 = rng.random_range(0.0..2.0 * PI);
            let (x, y) = (theta.cos(), theta.sin());
            let jet = k.circle_jet(theta);
            let g = fd_grad(&k, x, y);
            let gscale = 1.0 + jet.grad[0].hypot(jet.grad[1]);
            for i in 0..2 {
                assert!((jet.grad[i] - g[i]).abs() < 1e-8 * gscale);
            }
            let h = fd_hess(&k, x, y);
            let hscale = 1.0 + jet.hess.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for i in 0..3 {
                assert!(
                    (jet.hess[i] - h[i]).abs() < 1e-8 * hscale,
                    "θ={theta} entry {i}: {} vs {}",
                    jet.hess[i],
                    h[i]
                );
            }
        }
    }

    #[test]
    fn third_derivatives_match_finite_differences() {
        let k = sample_kernel();
        for j in 0..40 {
            let theta = 0.157 * j as f64 + 0.01;
            let (x, y) = (theta.cos(), theta.sin());
            let t = k.circle_third(theta);
            let h = 1e-4;
            let jet_at = |x: f64, y: f64| {
                let r2 = x * x + y * y;
                let jt = k.circle_jet(y.atan2(x));
                jt.hess.map(|v| v / r2)
            };
            let d111 = d1(|s| jet_at(x + s, y)[0], h);
            let d112 = d1(|s| jet_at(x, y + s)[0], h);
            let d112_alt = d1(|s| jet_at(x + s, y)[1], h);
            let d122 = d1(|s| jet_at(x, y + s)[1], h);
            let d222 = d1(|s| jet_at(x, y + s)[2], h);
            let scale = 1.0 + t.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (got, want) in t.iter().zip([d111, d112, d122, d222]) {
                assert!((got - want).abs() < 1e-8 * scale, "{got} vs {want}");
            }
            assert!((t[1] - d112_alt).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn hessian_entries_integrate_to_zero() {
        let k = sample_kernel();
        let n = 512;
        let mut sums = [0.0; 3];
        for theta in crate::quadrature::periodic_nodes(n) {
            let jet = k.circle_jet(theta);
            for i in 0..3 {
                sums[i] += jet.hess[i] * 2.0 * PI / n as f64;
            }
        }
        for s in sums {
            assert!(s.abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn project_exact_trig_polynomial() {
        let samples = FourierKernel2D::sample_circle(|t| 0.5 + 0.5 * (2.0 * t).cos(), 32);
        let p = FourierKernel2D::project(&samples, 4).unwrap();
        let want_a = [0.5, 0.5, 0.0, 0.0, 0.0];
        for (got, want) in p.kernel.a().iter().zip(want_a) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(p.kernel.b().iter().all(|b| b.abs() < 1e-15));
    }

    #[test]
    fn project_isotropic_screw_is_zero() {
        let samples = FourierKernel2D::sample_circle(
            |t| {
                let (s, c) = t.sin_cos();
                -0.5 * (c * c + s * s).ln()
            },
            32,
        );
        let p = FourierKernel2D::project(&samples, 4).unwrap();
        assert!(p.kernel.max_abs_coefficient() < 1e-15);
    }

    #[test]
    fn project_rejects_odd_samples() {
        let samples = FourierKernel2D::sample_circle(|t| t.cos(), 32);
        assert!(matches!(
            FourierKernel2D::project(&samples, 4),
            Err(KernelError::EvennessViolation { .. })
        ));
    }

    #[test]
    fn project_flags_truncated_tail() {
        let samples = FourierKernel2D::sample_circle(|t| (8.0 * t).cos(), 32);
        assert!(matches!(
            FourierKernel2D::project(&samples, 4),
            Err(KernelError::AliasWarning { .. })
        ));
    }

    #[test]
    fn project_requires_enough_samples() {
        let samples = FourierKernel2D::sample_circle(|_| 1.0, 9);
        assert!(matches!(
            FourierKernel2D::project(&samples, 4),
            Err(KernelError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn c3_norm_of_trivial_kernels() {
        assert_eq!(FourierKernel2D::zero().c3_norm(), 0.0);
        assert!((FourierKernel2D::constant(-0.4).c3_norm() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn c3_norm_is_linear_in_amplitude() {
        let base = kernel(&[0.5, 0.5], &[0.0]);
        let unit = base.c3_norm();
        assert!(unit > 0.0);
        for alpha in [0.05, 0.2, 0.7] {
            let got = base.scaled(alpha).c3_norm();
            assert!((got - alpha * unit).abs() < 1e-13 * unit);
        }
    }

    proptest! {
        #[test]
        fn evaluation_is_pi_periodic(
            a in proptest::collection::vec(-1.0f64..1.0, 1..6),
            b in proptest::collection::vec(-1.0f64..1.0, 0..5),
            theta in -10.0f64..10.0,
        ) {
            let k = FourierKernel2D::new(a, b).unwrap();
            let d = (k.eval(theta) - k.eval(theta + PI)).abs();
            prop_assert!(d <= 1e-13 * (1.0 + k.max_abs_coefficient()));
        }

        #[test]
        fn project_inverts_sampling(
            a in proptest::collection::vec(-1.0f64..1.0, 1..8),
            b in proptest::collection::vec(-1.0f64..1.0, 0..7),
        ) {
            let k = FourierKernel2D::new(a, b).unwrap();
            let n = k.order();
            let samples = FourierKernel2D::sample_circle(|t| k.eval(t), 2 * n + 2);
            let opts = ProjectOptions { alias_tol: f64::INFINITY, ..Default::default() };
            let p = FourierKernel2D::project_with(&samples, n, opts).unwrap();
            for i in 0..=n {
                prop_assert!((p.kernel.a_n(i) - k.a_n(i)).abs() < 1e-13);
                prop_assert!((p.kernel.b_n(i) - k.b_n(i)).abs() < 1e-13);
            }
        }

        #[test]
        fn rotation_shifts_the_angle(
            a in proptest::collection::vec(-1.0f64..1.0, 1..6),
            b in proptest::collection::vec(-1.0f64..1.0, 0..5),
            psi in -3.0f64..3.0,
            theta in -3.0f64..3.0,
        ) {
            let k = FourierKernel2D::new(a, b).unwrap();
            let d = (k.rotated(psi).eval(theta) - k.eval(theta - psi)).abs();
            prop_assert!(d < 1e-12);
        }
    }
}
