//! JSON description of a planar kernel.

use serde::{Deserialize, Serialize};

use super::{FourierKernel2D, KernelError, PresetParams, PresetRegistry};

/// `{"type":"fourier","a":[...],"b":[...]}` or
/// `{"type":"preset","name":"anisotropic","params":{"alpha":0.2}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Fourier {
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
    },
    Preset {
        name: String,
        #[serde(default)]
        params: PresetParams,
    },
}

impl KernelSpec {
    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        serde_json::from_str(text).map_err(|e| KernelError::Spec(e.to_string()))
    }

    pub fn build(&self, registry: &PresetRegistry) -> Result<FourierKernel2D, KernelError> {
        match self {
            KernelSpec::Fourier { a, b } => {
                if a.is_empty() {
                    return Err(KernelError::Spec("`a` must list at least a_0".into()));
                }
                FourierKernel2D::new(a.clone(), b.clone())
            }
            KernelSpec::Preset { name, params } => registry.build(name, params),
        }
    }
}
