//! Perturbation kernels in dimension `d ≥ 3`, given by their trace on the
//! unit sphere and extended `(2-d)`-homogeneously.

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use super::NdError;

/// Central-difference step for first and second derivatives.
pub const FD_STEP: f64 = 1e-5;
/// Step used for the third-derivative estimate in the smallness norms.
pub const FD_STEP_THIRD: f64 = 1e-3;
/// Tolerance of the evenness checks.
pub const EVENNESS_TOL: f64 = 1e-10;

/// A kernel `κ` in `R^d`. Implementors supply the trace on `S^{d-1}`;
/// derivatives default to central differences of the homogeneous extension.
pub trait SphereKernel: Send + Sync {
    fn dim(&self) -> usize;

    /// `κ(ξ)` for `|ξ| = 1`.
    fn trace(&self, xi: &[f64]) -> f64;

    /// `κ(x) = |x|^{2-d} trace(x/|x|)`.
    fn value(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        let xi: Vec<f64> = x.iter().map(|v| v / r).collect();
        r.powi(2 - self.dim() as i32) * self.trace(&xi)
    }

    /// `∂_i κ(x)`.
    fn partial(&self, x: &[f64], i: usize) -> f64 {
        let h = FD_STEP;
        let mut y = x.to_vec();
        y[i] = x[i] + h;
        let fp = self.value(&y);
        y[i] = x[i] - h;
        let fm = self.value(&y);
        (fp - fm) / (2.0 * h)
    }

    /// `∂_ij κ(x)`.
    fn second(&self, x: &[f64], i: usize, j: usize) -> f64 {
        fd_second(&|y: &[f64]| self.value(y), x, i, j, FD_STEP)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn fd_second(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, j: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    if i == j {
        let f0 = f(x);
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        return (fp - 2.0 * f0 + fm) / (h * h);
    }
    let mut at = |si: f64, sj: f64| {
        y[i] = x[i] + si * h;
        y[j] = x[j] + sj * h;
        f(&y)
    };
    (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
}

/// Sup-norm estimates `sup_{|ξ|=1} |∇^j κ(ξ)|` for `j = 0..=3`, with the
/// Frobenius norm for tensors, taken over a degree-8 sphere rule plus the
/// coordinate axes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Smallness {
    pub sup: [f64; 4],
}

impl Smallness {
    pub fn max(&self) -> f64 {
        self.sup.iter().copied().fold(0.0, f64::max)
    }
}

/// A validated kernel: dimension at least three, even in each coordinate,
/// with cached smallness estimates.
pub struct KernelNd {
    inner: Box<dyn SphereKernel>,
    smallness: Smallness,
}

impl std::fmt::Debug for KernelNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelNd")
            .field("dim", &self.dim())
            .field("smallness", &self.smallness)
            .finish()
    }
}

impl KernelNd {
    pub fn new(inner: Box<dyn SphereKernel>) -> Result<Self, NdError> {
        let d = inner.dim();
        if d < 3 {
            return Err(NdError::Dimension(d));
        }
        check_evenness(inner.as_ref())?;
        let smallness = estimate_smallness(inner.as_ref());
        Ok(KernelNd { inner, smallness })
    }

    /// The zero perturbation.
    pub fn zero(d: usize) -> Result<Self, NdError> {
        Self::new(Box::new(PowerKernel {
            dim: d,
            axis: 0,
            epsilon: 0.0,
        }))
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn smallness(&self) -> Smallness {
        self.smallness
    }

    pub fn kernel(&self) -> &dyn SphereKernel {
        self.inner.as_ref()
    }

    pub fn trace(&self, xi: &[f64]) -> f64 {
        self.inner.trace(xi)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }

    pub fn partial(&self, x: &[f64], i: usize) -> f64 {
        self.inner.partial(x, i)
    }

    pub fn second(&self, x: &[f64], i: usize, j: usize) -> f64 {
        self.inner.second(x, i, j)
    }
}

/// Deterministic, irrational-looking probe directions on `S^{d-1}`.
fn probe_points(d: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let x: Vec<f64> = (0..d)
                .map(|i| ((k * d + i + 1) as f64 * 0.754_877_666_2 + 0.1).fract() - 0.5)
                .collect();
            let r = norm(&x);
            x.iter().map(|v| v / r).collect()
        })
        .collect()
}

fn check_evenness(k: &dyn SphereKernel) -> Result<(), NdError> {
    let d = k.dim();
    for xi in probe_points(d, 32) {
        let base = k.trace(&xi);
        if !base.is_finite() {
            return Err(NdError::NonFinite);
        }
        for i in 0..d {
            let mut r = xi.clone();
            r[i] = -r[i];
            let gap = (k.trace(&r) - base).abs();
            if gap > EVENNESS_TOL * base.abs().max(1.0) {
                return Err(NdError::EvennessViolation { coordinate: i, gap });
            }
        }
    }
    Ok(())
}

fn estimate_smallness(k: &dyn SphereKernel) -> Smallness {
    let d = k.dim();
    let rule = super::sphere::sphere_quadrature(d, 8);
    let mut points: Vec<Vec<f64>> = rule.iter().map(|(x, _)| x.to_vec()).collect();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        points.push(e);
    }
    let value = |y: &[f64]| k.value(y);
    let mut sup = [0.0f64; 4];
    for xi in &points {
        let xi = xi.as_slice();
        sup[0] = sup[0].max(k.trace(xi).abs());
        let g: f64 = (0..d).map(|i| k.partial(xi, i).powi(2)).sum();
        sup[1] = sup[1].max(g.sqrt());
        let mut h2 = 0.0;
        let mut h3 = 0.0;
        let h = FD_STEP_THIRD;
        let mut y = xi.to_vec();
        for i in 0..d {
            for j in 0..d {
                h2 += k.second(xi, i, j).powi(2);
                for l in 0..d {
                    y[l] = xi[l] + h;
                    let p = fd_second(&value, &y, i, j, h);
                    y[l] = xi[l] - h;
                    let m = fd_second(&value, &y, i, j, h);
                    y[l] = xi[l];
                    h3 += ((p - m) / (2.0 * h)).powi(2);
                }
            }
        }
        sup[2] = sup[2].max(h2.sqrt());
        sup[3] = sup[3].max(h3.sqrt());
    }
    Smallness { sup }
}

/// `κ(x) = ε x_a²/|x|^d`, whose trace is `ε ξ_a²`. Derivatives are analytic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerKernel {
    pub dim: usize,
    /// Zero-based axis.
    pub axis: usize,
    pub epsilon: f64,
}

impl SphereKernel for PowerKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn trace(&self, xi: &[f64]) -> f64 {
        self.epsilon * xi[self.axis] * xi[self.axis]
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.epsilon * x[self.axis].powi(2) * r2.powf(-0.5 * self.dim as f64)
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        let a = self.axis;
        let d = self.dim as f64;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let rd = r2.powf(-0.5 * d);
        let delta = if i == a { 1.0 } else { 0.0 };
        self.epsilon * (2.0 * delta * x[a] - d * x[a] * x[a] * x[i] / r2) * rd
    }

    fn second(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let a = self.axis;
        let d = self.dim as f64;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let rd = r2.powf(-0.5 * d);
        let kd = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
        let xa = x[a];
        let t = 2.0 * kd(i, a) * kd(j, a)
            - 2.0 * d * (kd(i, a) * x[j] + kd(j, a) * x[i]) * xa / r2
            - d * xa * xa * kd(i, j) / r2
            + d * (d + 2.0) * xa * xa * x[i] * x[j] / (r2 * r2);
        self.epsilon * t * rd
    }
}

/// An arbitrary trace given as a closure.
pub struct TraceFn<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> SphereKernel for TraceFn<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn trace(&self, xi: &[f64]) -> f64 {
        (self.f)(xi)
    }
}

/// Multi-indices `α` with `|α| = m` in `d` variables.
fn multi_indices(d: usize, m: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for k in (0..=m).rev() {
        for mut rest in multi_indices(d - 1, m - k) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

/// Trace fitted by least squares to sampled values, in the span of the even
/// monomials `ξ^{2α}`, `|α| = m`. On the sphere this span contains every
/// coordinate-even polynomial of degree `≤ 2m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    dim: usize,
    exponents: Vec<Vec<usize>>,
    coefficients: Vec<f64>,
    fit_residual: f64,
}

impl SampledKernel {
    pub const MAX_HALF_DEGREE: usize = 4;

    /// Picks the largest `m ≤ MAX_HALF_DEGREE` with at least two samples per
    /// basis function whose design matrix has full column rank. Sample points are normalised onto the sphere; samples
    /// that are coordinate reflections of each other must carry equal values.
    pub fn fit(dim: usize, points: &[Vec<f64>], values: &[f64]) -> Result<Self, NdError> {
        if dim < 3 {
            return Err(NdError::Dimension(dim));
        }
        if points.len() != values.len() || points.is_empty() {
            return Err(NdError::Spec(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let mut xs = Vec::with_capacity(points.len());
        for p in points {
            let r = norm(p);
            if p.len() != dim || !(r > 0.0 && r.is_finite()) {
                return Err(NdError::Spec(format!(
                    "sample point {p:?} is not a nonzero {dim}-vector"
                )));
            }
            xs.push(p.iter().map(|v| v / r).collect::<Vec<f64>>());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NdError::NonFinite);
        }
        for (a, (xa, va)) in xs.iter().zip(values).enumerate() {
            for (xb, vb) in xs.iter().zip(values).skip(a + 1) {
                let mirrored = (0..dim).all(|i| (xa[i].abs() - xb[i].abs()).abs() < 1e-12);
                if mirrored && (va - vb).abs() > EVENNESS_TOL * va.abs().max(1.0) {
                    let coordinate = (0..dim)
                        .find(|&i| (xa[i] - xb[i]).abs() > 1e-12)
                        .unwrap_or(0);
                    return Err(NdError::EvennessViolation {
                        coordinate,
                        gap: (va - vb).abs(),
                    });
                }
            }
        }
        let rhs = DVector::from_column_slice(values);
        let mut fitted = None;
        for m in (0..=Self::MAX_HALF_DEGREE).rev() {
            let exponents = multi_indices(dim, m);
            if 2 * exponents.len() > xs.len() {
                continue;
            }
            let design = DMatrix::from_fn(xs.len(), exponents.len(), |r, c| {
                monomial(&xs[r], &exponents[c])
            });
            let svd = design.clone().svd(true, true);
            let smax = svd.singular_values.max();
            if svd.singular_values.min() <= 1e-10 * smax {
                continue;
            }
            let coef = svd
                .solve(&rhs, 0.0)
                .map_err(|e| NdError::Spec(e.to_string()))?;
            fitted = Some((exponents, design, coef));
            break;
        }
        let (exponents, design, coef) = fitted.ok_or_else(|| {
            NdError::Spec("sample points do not determine any even polynomial fit".into())
        })?;
        let fit_residual = (&design * &coef - &rhs).amax();
        Ok(SampledKernel {
            dim,
            exponents,
            coefficients: coef.iter().copied().collect(),
            fit_residual,
        })
    }

    /// Largest absolute misfit over the samples.
    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }

    pub fn half_degree(&self) -> usize {
        self.exponents[0].iter().sum()
    }
}

fn monomial(x: &[f64], alpha: &[usize]) -> f64 {
    x.iter()
        .zip(alpha)
        .map(|(v, &k)| (v * v).powi(k as i32))
        .product()
}

impl SphereKernel for SampledKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn trace(&self, xi: &[f64]) -> f64 {
        let r2: f64 = xi.iter().map(|v| v * v).sum();
        let scale = r2.powi(-(self.half_degree() as i32));
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(alpha, c)| c * monomial(xi, alpha))
            .sum::<f64>()
            * scale
    }
}

/// Builds a kernel in a given dimension from JSON parameters.
pub trait KernelNdFactory: Send + Sync {
    fn name(&self) -> &'static str;

    fn build(
        &self,
        dim: usize,
        params: &Map<String, Value>,
    ) -> Result<Box<dyn SphereKernel>, NdError>;
}

fn allow_keys(name: &str, params: &Map<String, Value>, keys: &[&str]) -> Result<(), NdError> {
    match params.keys().find(|k| !keys.contains(&k.as_str())) {
        Some(k) => Err(NdError::Spec(format!("`{name}` does not take `{k}`"))),
        None => Ok(()),
    }
}

/// `{"type": "power", "axis": i, "epsilon": ε}` with a one-based axis.
pub struct PowerFactory;

impl KernelNdFactory for PowerFactory {
    fn name(&self) -> &'static str {
        "power"
    }

    fn build(
        &self,
        dim: usize,
        params: &Map<String, Value>,
    ) -> Result<Box<dyn SphereKernel>, NdError> {
        allow_keys(self.name(), params, &["axis", "epsilon"])?;
        let axis = params
            .get("axis")
            .and_then(Value::as_u64)
            .filter(|&a| a >= 1 && a as usize <= dim)
            .ok_or_else(|| NdError::Spec(format!("`axis` must be an integer in 1..={dim}")))?;
        let epsilon = params
            .get("epsilon")
            .and_then(Value::as_f64)
            .filter(|e| e.is_finite())
            .ok_or_else(|| NdError::Spec("`epsilon` must be a finite number".into()))?;
        Ok(Box::new(PowerKernel {
            dim,
            axis: axis as usize - 1,
            epsilon,
        }))
    }
}

/// `{"type": "samples", "points": [[..], ..], "values": [..]}`.
pub struct SamplesFactory;

impl KernelNdFactory for SamplesFactory {
    fn name(&self) -> &'static str {
        "samples"
    }

    fn build(
        &self,
        dim: usize,
        params: &Map<String, Value>,
    ) -> Result<Box<dyn SphereKernel>, NdError> {
        allow_keys(self.name(), params, &["points", "values"])?;
        let bad = || NdError::Spec("`points` must be an array of numeric arrays".into());
        let points = params
            .get("points")
            .and_then(Value::as_array)
            .ok_or_else(bad)?
            .iter()
            .map(|p| {
                p.as_array()
                    .ok_or_else(bad)?
                    .iter()
                    .map(|v| v.as_f64().ok_or_else(bad))
                    .collect::<Result<Vec<f64>, NdError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let values = params
            .get("values")
            .and_then(Value::as_array)
            .ok_or_else(|| NdError::Spec("`values` must be an array of numbers".into()))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| NdError::Spec("`values` must be an array of numbers".into()))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(Box::new(SampledKernel::fit(dim, &points, &values)?))
    }
}

/// Name-indexed kernel factories for `d ≥ 3`.
pub struct KernelNdRegistry {
    factories: Vec<Box<dyn KernelNdFactory>>,
}

impl KernelNdRegistry {
    pub fn empty() -> Self {
        KernelNdRegistry {
            factories: Vec::new(),
        }
    }

    /// power and samples.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(PowerFactory));
        reg.register(Box::new(SamplesFactory));
        reg
    }

    pub fn register(&mut self, factory: Box<dyn KernelNdFactory>) {
        self.factories.retain(|f| f.name() != factory.name());
        self.factories.push(factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.iter().map(|f| f.name()).collect()
    }

    /// Builds and validates the kernel described by a JSON object with a
    /// `type` field.
    pub fn build(&self, dim: usize, spec: &Value) -> Result<KernelNd, NdError> {
        let obj = spec
            .as_object()
            .ok_or_else(|| NdError::Spec("kernel spec must be a JSON object".into()))?;
        let name = obj
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| NdError::Spec("kernel spec needs a string `type`".into()))?;
        let factory = self
            .factories
            .iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| NdError::UnknownKernel(name.to_string()))?;
        let mut params = obj.clone();
        params.remove("type");
        KernelNd::new(factory.build(dim, &params)?)
    }

    pub fn build_json(&self, dim: usize, text: &str) -> Result<KernelNd, NdError> {
        let value: Value = serde_json::from_str(text).map_err(|e| NdError::Spec(e.to_string()))?;
        self.build(dim, &value)
    }
}

impl Default for KernelNdRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
