//! Distance-dependent magnetic parameters δ(a), μ_S(a), μ_L(a) from
//! Gaussian-type fits, loaded from a TOML config.
//!
//! The Zeeman prefactor is taken as the combined moment, h(a) =
//! g_norm · [μ_S(a) + μ_L(a)] · μ_B · B₀, i.e. the gyromagnetic factors are
//! identified with the moment magnitudes in units of μ_B. `g_normalization`
//! in the config rescales this if a different convention is wanted.

use serde::Deserialize;

/// Bohr magneton in meV/T.
pub const MU_B: f64 = 0.05788381806;

#[derive(Debug, thiserror::Error)]
pub enum AnisotropyError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{fit}.width must be > 0 (got {value})")]
    NonPositiveWidth { fit: &'static str, value: f64 },
    #[error("B0_tesla must be >= 0 (got {0})")]
    NegativeField(f64),
}

/// f(a) = c₀ + c₁·exp(−(a−c₂)²/(2c₃²))
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct GaussianFit {
    pub offset: f64,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl GaussianFit {
    pub fn value(&self, a: f64) -> f64 {
        let u = a - self.center;
        self.offset + self.amplitude * (-u * u / (2.0 * self.width * self.width)).exp()
    }

    pub fn derivative(&self, a: f64) -> f64 {
        let u = a - self.center;
        let w2 = self.width * self.width;
        -self.amplitude * u / w2 * (-u * u / (2.0 * w2)).exp()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    delta: GaussianFit,
    mu_spin: GaussianFit,
    mu_orbital: GaussianFit,
    #[serde(rename = "B0_tesla")]
    b0_tesla: Option<f64>,
    g_normalization: Option<f64>,
}

/// Validated model of the tip-distance-dependent magnetic parameters.
#[derive(Debug, Clone)]
pub struct AnisotropyModel {
    pub delta_fit: GaussianFit,
    pub mu_spin_fit: GaussianFit,
    pub mu_orbital_fit: GaussianFit,
    /// Static field strength along x, in tesla. Defaults to 4 T.
    pub b0_tesla: f64,
    pub g_normalization: f64,
}

impl AnisotropyModel {
    /// h(a) = g_norm · [μ_S(a) + μ_L(a)] · μ_B · B₀, in meV.
    pub fn zeeman_strength(&self, a: f64) -> f64 {
        self.g_normalization
            * (self.mu_spin_fit.value(a) + self.mu_orbital_fit.value(a))
            * MU_B
            * self.b0_tesla
    }

    pub fn zeeman_strength_derivative(&self, a: f64) -> f64 {
        self.g_normalization
            * (self.mu_spin_fit.derivative(a) + self.mu_orbital_fit.derivative(a))
            * MU_B
            * self.b0_tesla
    }

    /// (δ(a), δ′(a)) in (meV, meV/Å).
    pub fn anisotropy_and_slope(&self, a: f64) -> (f64, f64) {
        (self.delta_fit.value(a), self.delta_fit.derivative(a))
    }
}

/// Parse and validate a config document.
pub fn load_model(config: &str) -> Result<AnisotropyModel, AnisotropyError> {
    let raw: RawConfig = toml::from_str(config).map_err(|e| AnisotropyError::Parse(e.to_string()))?;
    for (name, fit) in [
        ("delta", &raw.delta),
        ("mu_spin", &raw.mu_spin),
        ("mu_orbital", &raw.mu_orbital),
    ] {
        if fit.width <= 0.0 {
            return Err(AnisotropyError::NonPositiveWidth { fit: name, value: fit.width });
        }
    }
    let b0 = raw.b0_tesla.unwrap_or(4.0);
    if b0 < 0.0 {
        return Err(AnisotropyError::NegativeField(b0));
    }
    Ok(AnisotropyModel {
        delta_fit: raw.delta,
        mu_spin_fit: raw.mu_spin,
        mu_orbital_fit: raw.mu_orbital,
        b0_tesla: b0,
        g_normalization: raw.g_normalization.unwrap_or(1.0),
    })
}

/// The calibrated default fit parameters shipped with the crate
/// (see `default_config.toml` in the crate root).
pub fn default_config() -> &'static str {
    include_str!("../default_config.toml")
}
