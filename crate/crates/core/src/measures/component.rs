use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{CbiError, Result};

/// One building block of a Lévy measure on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MeasureComponent {
    /// Point mass `mass · δ_location`.
    Atom { location: f64, mass: f64 },
    /// Density `mass · rate · e^{-rate z}` (total mass `mass`).
    ExpDensity { rate: f64, mass: f64 },
    /// Density `scale · z^{-1-alpha} e^{-tilt z}` with `alpha ∈ (0, 1)`; infinite total mass.
    TemperedPowerLaw { alpha: f64, tilt: f64, scale: f64 },
}

/// Integrands supported by [`MeasureComponent::integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `1`
    Mass,
    /// `z`
    Identity,
    /// `z ∧ z²`
    MinZZ2,
    /// `1 ∧ z`
    MinOneZ,
    /// `(z - 1)⁺`
    ExcessOverOne,
    /// `z · 1{z ≥ 1}`
    TailMoment,
    /// `e^{-λz}`
    Exp(f64),
    /// `1 - e^{-λz}`
    OneMinusExp(f64),
    /// `e^{-λz} - 1 + λ(1 ∧ z)`
    Compensated(f64),
}

impl Kernel {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Kernel::Mass => 1.0,
            Kernel::Identity => z,
            Kernel::MinZZ2 => z.min(z * z),
            Kernel::MinOneZ => z.min(1.0),
            Kernel::ExcessOverOne => (z - 1.0).max(0.0),
            Kernel::TailMoment => {
                if z >= 1.0 {
                    z
                } else {
                    0.0
                }
            }
            Kernel::Exp(l) => (-l * z).exp(),
            Kernel::OneMinusExp(l) => -(-l * z).exp_m1(),
            Kernel::Compensated(l) => (-l * z).exp_m1() + l * z.min(1.0),
        }
    }

    fn lambda(self) -> Option<f64> {
        match self {
            Kernel::Exp(l) | Kernel::OneMinusExp(l) | Kernel::Compensated(l) => Some(l),
            _ => None,
        }
    }
}

impl MeasureComponent {
    pub fn atom(location: f64, mass: f64) -> Result<Self> {
        if !(location.is_finite() && location > 0.0) {
            return Err(CbiError::InvalidInput(format!("atom location {location} must be finite and > 0")));
        }
        check_mass(mass)?;
        Ok(Self::Atom { location, mass })
    }

    pub fn exp_density(rate: f64, mass: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(CbiError::InvalidInput(format!("exponential rate {rate} must be finite and > 0")));
        }
        check_mass(mass)?;
        Ok(Self::ExpDensity { rate, mass })
    }

    pub fn tempered_power_law(alpha: f64, tilt: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CbiError::InvalidInput(format!("tempered power-law index {alpha} must lie in (0, 1)")));
        }
        if !(tilt.is_finite() && tilt > 0.0) {
            return Err(CbiError::InvalidInput(format!("tempered power-law tilt {tilt} must be finite and > 0")));
        }
        check_mass(scale)?;
        Ok(Self::TemperedPowerLaw { alpha, tilt, scale })
    }

    /// Re-checks parameter ranges, e.g. after deserialization.
    pub fn checked(self) -> Result<Self> {
        match self {
            Self::Atom { location, mass } => Self::atom(location, mass),
            Self::ExpDensity { rate, mass } => Self::exp_density(rate, mass),
            Self::TemperedPowerLaw { alpha, tilt, scale } => Self::tempered_power_law(alpha, tilt, scale),
        }
    }

    pub fn is_null(&self) -> bool {
        match *self {
            Self::Atom { mass, .. } | Self::ExpDensity { mass, .. } => mass == 0.0,
            Self::TemperedPowerLaw { scale, .. } => scale == 0.0,
        }
    }

    /// Density at `z` (zero for atoms).
    pub fn density(&self, z: f64) -> f64 {
        match *self {
            Self::Atom { .. } => 0.0,
            Self::ExpDensity { rate, mass } => mass * rate * (-rate * z).exp(),
            Self::TemperedPowerLaw { alpha, tilt, scale } => scale * z.powf(-1.0 - alpha) * (-tilt * z).exp(),
        }
    }

    /// Integral of `kernel` against this component over the interval `(a, b]`.
    pub fn integrate_interval(&self, kernel: Kernel, a: f64, b: f64) -> Result<f64> {
        if !(a < b) {
            return Ok(0.0);
        }
        if let Some(l) = kernel.lambda() {
            if !(l.is_finite() && l >= 0.0) {
                return Err(CbiError::InvalidInput(format!("kernel argument {l} must be finite and >= 0")));
            }
        }
        match *self {
            Self::Atom { location, mass } => Ok(if a < location && location <= b && mass > 0.0 {
                mass * kernel.eval(location)
            } else {
                0.0
            }),
            Self::ExpDensity { rate, mass } => {
                if mass == 0.0 {
                    return Ok(0.0);
                }
                Ok(mass * exp_kernel(rate, kernel, a, b))
            }
            Self::TemperedPowerLaw { alpha, tilt, scale } => {
                if scale == 0.0 {
                    return Ok(0.0);
                }
                Ok(scale * tempered_kernel(alpha, tilt, kernel, a, b)?)
            }
        }
    }
}

fn check_mass(mass: f64) -> Result<()> {
    if mass.is_finite() && mass >= 0.0 {
        Ok(())
    } else {
        Err(CbiError::InvalidInput(format!("mass {mass} must be finite and >= 0")))
    }
}

/// Splits `(a, b]` at 1 into `(a, min(b,1)]` and `(max(a,1), b]`.
fn split_at_one(a: f64, b: f64) -> ((f64, f64), (f64, f64)) {
    ((a, b.min(1.0)), (a.max(1.0), b))
}

// ---- exponential density θ e^{-θz}, unit mass ----

fn exp_tail(theta: f64, x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-theta * x).exp()
    }
}

/// ∫_a^b θ e^{-θz} dz
fn exp_mass(theta: f64, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if b.is_infinite() {
        return exp_tail(theta, a);
    }
    // e^{-θa}(1 - e^{-θ(b-a)}) keeps precision on short intervals.
    -exp_tail(theta, a) * (-theta * (b - a)).exp_m1()
}

/// ∫_a^b (z - s) θ e^{-θz} dz
fn exp_shifted_first(theta: f64, s: f64, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let f = |x: f64| {
        if x.is_infinite() {
            0.0
        } else {
            (x - s + 1.0 / theta) * (-theta * x).exp()
        }
    };
    f(a) - f(b)
}

/// ∫_a^b z² θ e^{-θz} dz
fn exp_second(theta: f64, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let f = |x: f64| {
        if x.is_infinite() {
            0.0
        } else {
            (x * x + 2.0 * x / theta + 2.0 / (theta * theta)) * (-theta * x).exp()
        }
    };
    f(a) - f(b)
}

fn exp_kernel(theta: f64, kernel: Kernel, a: f64, b: f64) -> f64 {
    let (lo, hi) = split_at_one(a, b);
    match kernel {
        Kernel::Mass => exp_mass(theta, a, b),
        Kernel::Identity => exp_shifted_first(theta, 0.0, a, b),
        Kernel::MinZZ2 => exp_second(theta, lo.0, lo.1) + exp_shifted_first(theta, 0.0, hi.0, hi.1),
        Kernel::MinOneZ => exp_shifted_first(theta, 0.0, lo.0, lo.1) + exp_mass(theta, hi.0, hi.1),
        Kernel::ExcessOverOne => exp_shifted_first(theta, 1.0, hi.0, hi.1),
        Kernel::TailMoment => exp_shifted_first(theta, 0.0, hi.0, hi.1),
        Kernel::Exp(l) => theta / (theta + l) * exp_mass(theta + l, a, b),
        Kernel::OneMinusExp(l) => exp_one_minus_exp(theta, l, a, b),
        Kernel::Compensated(l) => {
            l * exp_kernel(theta, Kernel::MinOneZ, a, b) - exp_one_minus_exp(theta, l, a, b)
        }
    }
}

/// ∫_a^b θ e^{-θz}(1 - e^{-λz}) dz
fn exp_one_minus_exp(theta: f64, l: f64, a: f64, b: f64) -> f64 {
    if l == 0.0 || a >= b {
        return 0.0;
    }
    if a == 0.0 && b.is_infinite() {
        return l / (theta + l);
    }
    exp_mass(theta, a, b) - theta / (theta + l) * exp_mass(theta + l, a, b)
}

// ---- tempered power law z^{-1-α} e^{-θz}, unit scale ----

/// Upper incomplete gamma Γ(s, x) for s > 0, x ∈ [0, ∞].
fn upper_gamma(s: f64, x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else if x == 0.0 {
        gamma(s)
    } else {
        gamma_ur(s, x) * gamma(s)
    }
}

/// Γ(-α, x) for α ∈ (0,1), x ∈ (0, ∞], via Γ(s+1,x) = sΓ(s,x) + x^s e^{-x}.
fn upper_gamma_neg(alpha: f64, x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (x.powf(-alpha) * (-x).exp() - upper_gamma(1.0 - alpha, x)) / alpha
}

/// ∫_a^b z^{p-1-α} e^{-θz} dz for p ∈ {1, 2}.
fn tempered_moment(alpha: f64, theta: f64, p: f64, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let s = p - alpha;
    theta.powf(-s) * (upper_gamma(s, theta * a) - upper_gamma(s, theta * b))
}

/// ∫_a^b z^{-1-α} e^{-θz} dz, infinite when a = 0.
fn tempered_mass(alpha: f64, theta: f64, a: f64, b: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    if a == 0.0 {
        return Err(CbiError::DivergentIntegral(
            "tempered power-law mass on a set whose closure contains 0".into(),
        ));
    }
    Ok(theta.powf(alpha) * (upper_gamma_neg(alpha, theta * a) - upper_gamma_neg(alpha, theta * b)))
}

/// ∫_a^b z^{-1-α} e^{-θz} (1 - e^{-λz}) dz, finite also for a = 0.
fn tempered_one_minus_exp(alpha: f64, theta: f64, l: f64, a: f64, b: f64) -> Result<f64> {
    if l == 0.0 || a >= b {
        return Ok(0.0);
    }
    if a > 0.0 {
        return Ok(tempered_mass(alpha, theta, a, b)? - tempered_mass(alpha, theta + l, a, b)?);
    }
    // Whole-line value Γ(-α)(θ^α - (θ+λ)^α) = Γ(1-α)/α · θ^α · expm1(α ln(1+λ/θ)).
    let whole = gamma(1.0 - alpha) / alpha * theta.powf(alpha) * (alpha * (l / theta).ln_1p()).exp_m1();
    let tail = if b.is_infinite() {
        0.0
    } else {
        tempered_mass(alpha, theta, b, f64::INFINITY)? - tempered_mass(alpha, theta + l, b, f64::INFINITY)?
    };
    Ok(whole - tail)
}

fn tempered_kernel(alpha: f64, theta: f64, kernel: Kernel, a: f64, b: f64) -> Result<f64> {
    let (lo, hi) = split_at_one(a, b);
    Ok(match kernel {
        Kernel::Mass => tempered_mass(alpha, theta, a, b)?,
        Kernel::Identity => tempered_moment(alpha, theta, 1.0, a, b),
        Kernel::MinZZ2 => tempered_moment(alpha, theta, 2.0, lo.0, lo.1) + tempered_moment(alpha, theta, 1.0, hi.0, hi.1),
        Kernel::MinOneZ => tempered_moment(alpha, theta, 1.0, lo.0, lo.1) + tempered_mass(alpha, theta, hi.0, hi.1)?,
        Kernel::ExcessOverOne => {
            tempered_moment(alpha, theta, 1.0, hi.0, hi.1) - tempered_mass(alpha, theta, hi.0, hi.1)?
        }
        Kernel::TailMoment => tempered_moment(alpha, theta, 1.0, hi.0, hi.1),
        Kernel::Exp(l) => tempered_mass(alpha, theta + l, a, b)?,
        Kernel::OneMinusExp(l) => tempered_one_minus_exp(alpha, theta, l, a, b)?,
        Kernel::Compensated(l) => {
            l * tempered_kernel(alpha, theta, Kernel::MinOneZ, a, b)? - tempered_one_minus_exp(alpha, theta, l, a, b)?
        }
    })
}
