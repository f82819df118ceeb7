//! Parameter charts of the model: physical `(B, A, ω)`, reduced `(ℓ, μ, η)` and Heun `(ℓ, μ, λ)`.

use crate::error::{ensure_finite, Error, Result};
use serde::{Deserialize, Serialize};

/// Physical parameters of `dφ/dt = −sin φ + B + A cos ωt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub omega: f64,
}

/// Reduced parameters of the torus equation `dθ/dτ = η cos θ + ℓ + 2μ cos τ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub ell: f64,
    pub mu: f64,
    pub eta: f64,
}

/// Parameters of the associated double confluent Heun equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeunParams {
    pub ell: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl PhysParams {
    pub fn new(b: f64, a: f64, omega: f64) -> Result<Self> {
        let p = PhysParams { b, a, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("B", self.b)?;
        ensure_finite("A", self.a)?;
        ensure_finite("omega", self.omega)?;
        if self.omega <= 0.0 {
            return Err(Error::Domain(format!("omega must be positive, got {}", self.omega)));
        }
        Ok(())
    }
}

impl ReducedParams {
    pub fn new(ell: f64, mu: f64, eta: f64) -> Result<Self> {
        let rp = ReducedParams { ell, mu, eta };
        rp.validate_finite()?;
        if eta <= 0.0 {
            return Err(Error::Domain(format!("eta must be positive, got {eta}")));
        }
        Ok(rp)
    }

    /// Finite check only; `η = 0` is a legitimate degenerate value for the flow.
    pub fn validate_finite(&self) -> Result<()> {
        ensure_finite("ell", self.ell)?;
        ensure_finite("mu", self.mu)?;
        ensure_finite("eta", self.eta)
    }

    pub fn omega(&self) -> f64 {
        1.0 / self.eta
    }
}

pub fn to_reduced(p: &PhysParams) -> Result<ReducedParams> {
    p.validate()?;
    Ok(ReducedParams { ell: p.b / p.omega, mu: p.a / (2.0 * p.omega), eta: 1.0 / p.omega })
}

pub fn from_reduced(rp: &ReducedParams) -> Result<PhysParams> {
    rp.validate_finite()?;
    if rp.eta <= 0.0 {
        return Err(Error::Domain(format!("eta must be positive, got {}", rp.eta)));
    }
    let omega = 1.0 / rp.eta;
    Ok(PhysParams { b: rp.ell * omega, a: 2.0 * rp.mu * omega, omega })
}

pub fn to_heun(p: &PhysParams) -> Result<HeunParams> {
    let rp = to_reduced(p)?;
    Ok(HeunParams { ell: rp.ell, mu: rp.mu, lambda: 1.0 / (4.0 * p.omega * p.omega) - rp.mu * rp.mu })
}

impl HeunParams {
    /// `λ + μ² = 1/(4ω²)` recovers the frequency.
    pub fn omega(&self) -> Option<f64> {
        let s = self.lambda + self.mu * self.mu;
        (s > 0.0).then(|| 0.5 / s.sqrt())
    }
}
