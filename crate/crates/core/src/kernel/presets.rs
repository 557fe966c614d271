//! Named kernel families, selectable at runtime through [`PresetRegistry`].

use serde_json::{Map, Value};

use super::{FourierKernel2D, KernelError};

/// Preset parameters as they appear in a kernel spec file.
pub type PresetParams = Map<String, Value>;

/// A parametrised family of kernels.
pub trait KernelPreset: Send + Sync {
    fn name(&self) -> &'static str;

    /// Parameter names accepted by [`KernelPreset::build`].
    fn params(&self) -> &'static [&'static str];

    fn build(&self, params: &PresetParams) -> Result<FourierKernel2D, KernelError>;
}

fn check_keys(preset: &dyn KernelPreset, params: &PresetParams) -> Result<(), KernelError> {
    for key in params.keys() {
        if !preset.params().contains(&key.as_str()) {
            return Err(KernelError::InvalidPreset(format!(
                "`{}` does not take parameter `{key}`",
                preset.name()
            )));
        }
    }
    Ok(())
}

fn real(params: &PresetParams, key: &str) -> Result<f64, KernelError> {
    let v = params
        .get(key)
        .ok_or_else(|| KernelError::InvalidPreset(format!("missing parameter `{key}`")))?;
    match v.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(KernelError::InvalidPreset(format!(
            "parameter `{key}` must be a finite number"
        ))),
    }
}

/// `κ = α x²/|z|²`.
#[derive(Debug, Default, Clone, Copy)]
pub struct AnisotropicPreset;

impl AnisotropicPreset {
    pub fn kernel(alpha: f64) -> FourierKernel2D {
        FourierKernel2D {
            cos: vec![alpha / 2.0, alpha / 2.0],
            sin: vec![0.0, 0.0],
        }
    }
}

impl KernelPreset for AnisotropicPreset {
    fn name(&self) -> &'static str {
        "anisotropic"
    }

    fn params(&self) -> &'static [&'static str] {
        &["alpha"]
    }

    fn build(&self, params: &PresetParams) -> Result<FourierKernel2D, KernelError> {
        check_keys(self, params)?;
        Ok(Self::kernel(real(params, "alpha")?))
    }
}

/// `κ = β xy/|z|²`.
#[derive(Debug, Default, Clone, Copy)]
pub struct ShearPreset;

impl ShearPreset {
    pub fn kernel(beta: f64) -> FourierKernel2D {
        FourierKernel2D {
            cos: vec![0.0, 0.0],
            sin: vec![0.0, beta / 2.0],
        }
    }
}

impl KernelPreset for ShearPreset {
    fn name(&self) -> &'static str {
        "shear"
    }

    fn params(&self) -> &'static [&'static str] {
        &["beta"]
    }

    fn build(&self, params: &PresetParams) -> Result<FourierKernel2D, KernelError> {
        check_keys(self, params)?;
        Ok(Self::kernel(real(params, "beta")?))
    }
}

/// `κ = β x^{2ℓ}/|z|^{2ℓ}`, expanded binomially:
/// `cos^{2ℓ}θ = 2^{-2ℓ} [C(2ℓ,ℓ) + 2 Σ_{n=1}^{ℓ} C(2ℓ,ℓ-n) cos 2nθ]`.
#[derive(Debug, Default, Clone, Copy)]
pub struct PowerPreset;

impl PowerPreset {
    pub fn kernel(beta: f64, ell: usize) -> FourierKernel2D {
        let ell = ell.max(1);
        let m = 2 * ell;
        // Binomial row C(m, 0..=m), built in floating point.
        let mut row = vec![1.0f64; m + 1];
        for k in 1..=m {
            row[k] = row[k - 1] * (m + 1 - k) as f64 / k as f64;
        }
        let scale = beta * 0.5f64.powi(m as i32);
        let mut cos = vec![scale * row[ell]];
        for n in 1..=ell {
            cos.push(2.0 * scale * row[ell - n]);
        }
        FourierKernel2D {
            sin: vec![0.0; cos.len()],
            cos,
        }
    }
}

impl KernelPreset for PowerPreset {
    fn name(&self) -> &'static str {
        "power"
    }

    fn params(&self) -> &'static [&'static str] {
        &["beta", "ell"]
    }

    fn build(&self, params: &PresetParams) -> Result<FourierKernel2D, KernelError> {
        check_keys(self, params)?;
        let beta = real(params, "beta")?;
        let ell = params
            .get("ell")
            .and_then(Value::as_u64)
            .filter(|&l| (1..=256).contains(&l))
            .ok_or_else(|| {
                KernelError::InvalidPreset("`ell` must be an integer in 1..=256".into())
            })?;
        Ok(Self::kernel(beta, ell as usize))
    }
}

/// Screw-dislocation interaction,
/// `κ = -½ log((αx² - 2βxy + γy²)/|z|²)`, projected with an adaptively
/// chosen order.
#[derive(Debug, Default, Clone, Copy)]
pub struct ScrewPreset;

impl ScrewPreset {
    const START_ORDER: usize = 32;
    const MAX_ORDER: usize = 512;

    pub fn kernel(alpha: f64, beta: f64, gamma: f64) -> Result<FourierKernel2D, KernelError> {
        if !(alpha > 0.0 && alpha * gamma - beta * beta > 0.0) {
            return Err(KernelError::InvalidPreset(format!(
                "screw needs alpha > 0 and alpha*gamma - beta^2 > 0 (got {alpha}, {beta}, {gamma})"
            )));
        }
        let f = |t: f64| {
            let (s, c) = t.sin_cos();
            -0.5 * (alpha * c * c - 2.0 * beta * c * s + gamma * s * s).ln()
        };
        let mut order = Self::START_ORDER;
        loop {
            let samples = FourierKernel2D::sample_circle(f, 4 * order);
            match FourierKernel2D::project(&samples, order) {
                Err(KernelError::AliasWarning { .. }) if order < Self::MAX_ORDER => order *= 2,
                other => return other.map(|p| p.kernel),
            }
        }
    }
}

impl KernelPreset for ScrewPreset {
    fn name(&self) -> &'static str {
        "screw"
    }

    fn params(&self) -> &'static [&'static str] {
        &["alpha", "beta", "gamma"]
    }

    fn build(&self, params: &PresetParams) -> Result<FourierKernel2D, KernelError> {
        check_keys(self, params)?;
        Self::kernel(
            real(params, "alpha")?,
            real(params, "beta")?,
            real(params, "gamma")?,
        )
    }
}

/// Name-indexed collection of kernel presets.
pub struct PresetRegistry {
    presets: Vec<Box<dyn KernelPreset>>,
}

impl PresetRegistry {
    pub fn empty() -> Self {
        PresetRegistry {
            presets: Vec::new(),
        }
    }

    /// anisotropic, shear, power and screw.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(AnisotropicPreset));
        reg.register(Box::new(ShearPreset));
        reg.register(Box::new(PowerPreset));
        reg.register(Box::new(ScrewPreset));
        reg
    }

    /// Adds a preset, replacing any existing one with the same name.
    pub fn register(&mut self, preset: Box<dyn KernelPreset>) {
        self.presets.retain(|p| p.name() != preset.name());
        self.presets.push(preset);
    }

    pub fn get(&self, name: &str) -> Option<&dyn KernelPreset> {
        self.presets
            .iter()
            .find(|p| p.name() == name)
            .map(|p| p.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.presets.iter().map(|p| p.name()).collect()
    }

    pub fn build(&self, name: &str, params: &PresetParams) -> Result<FourierKernel2D, KernelError> {
        self.get(name)
            .ok_or_else(|| KernelError::UnknownPreset(name.to_string()))?
            .build(params)
    }
}

impl Default for PresetRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::f64::consts::PI;

    fn params(v: Value) -> PresetParams {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn anisotropic_and_shear_coefficients() {
        let reg = PresetRegistry::builtin();
        let k = reg
            .build("anisotropic", &params(json!({"alpha": 0.2})))
            .unwrap();
        assert_eq!(k.a(), &[0.1, 0.1]);
        assert_eq!(k.b(), &[0.0]);
        let k = reg.build("shear", &params(json!({"beta": 0.2}))).unwrap();
        assert_eq!(k.a(), &[0.0, 0.0]);
        assert_eq!(k.b(), &[0.1]);
    }

    #[test]
    fn power_two_matches_quadrature_of_cos4() {
        let beta = 0.7;
        let k = PowerPreset::kernel(beta, 2);
        assert!((k.a_n(0) - 3.0 * beta / 8.0).abs() < 1e-15);
        assert!((k.a_n(1) - beta / 2.0).abs() < 1e-15);
        assert!((k.a_n(2) - beta / 8.0).abs() < 1e-15);
        // Independent oracle: Fourier coefficients of β cos⁴θ by trapezoid rule.
        let n = 64;
        for m in 0..=2usize {
            let mut acc = 0.0;
            for j in 0..n {
                let t = 2.0 * PI * j as f64 / n as f64;
                acc += beta * t.cos().powi(4) * (2.0 * m as f64 * t).cos();
            }
            let want = acc / n as f64 * if m == 0 { 1.0 } else { 2.0 };
            assert!((k.a_n(m) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn power_kernel_evaluates_cos_power() {
        for ell in 1..6 {
            let k = PowerPreset::kernel(1.3, ell);
            for j in 0..20 {
                let t = 0.31 * j as f64;
                let want = 1.3 * t.cos().powi(2 * ell as i32);
                assert!((k.eval(t) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn screw_reconstructs_off_grid() {
        let (alpha, beta, gamma) = (2.0, 0.0, 1.0);
        let k = ScrewPreset::kernel(alpha, beta, gamma).unwrap();
        assert!(k.a_n(1).abs() > k.a_n(2).abs() && k.a_n(2).abs() > k.a_n(3).abs());
        for j in 0..64 {
            let t = 0.0917 + 2.0 * PI * j as f64 / 64.0;
            let (s, c) = t.sin_cos();
            let want = -0.5 * (alpha * c * c - 2.0 * beta * c * s + gamma * s * s).ln();
            assert!((k.eval(t) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn screw_with_strong_anisotropy_raises_order() {
        let k = ScrewPreset::kernel(1.0, 0.0, 1e-2).unwrap();
        assert!(k.order() > ScrewPreset::START_ORDER);
        let t: f64 = 0.4;
        let want = -0.5 * (t.cos().powi(2) + 1e-2 * t.sin().powi(2)).ln();
        assert!((k.eval(t) - want).abs() < 1e-9);
    }

    #[test]
    fn screw_rejects_indefinite_form() {
        let reg = PresetRegistry::builtin();
        let bad = params(json!({"alpha": 1.0, "beta": 2.0, "gamma": 1.0}));
        assert!(matches!(
            reg.build("screw", &bad),
            Err(KernelError::InvalidPreset(_))
        ));
        let bad = params(json!({"alpha": -1.0, "beta": 0.0, "gamma": -1.0}));
        assert!(reg.build("screw", &bad).is_err());
    }

    #[test]
    fn registry_rejects_unknown_names_and_keys() {
        let reg = PresetRegistry::builtin();
        assert!(matches!(
            reg.build("edge", &PresetParams::new()),
            Err(KernelError::UnknownPreset(_))
        ));
        assert!(reg
            .build("shear", &params(json!({"beta": 0.1, "gamma": 1})))
            .is_err());
        assert!(reg.build("shear", &PresetParams::new()).is_err());
        assert_eq!(reg.names(), vec!["anisotropic", "shear", "power", "screw"]);
    }
}
