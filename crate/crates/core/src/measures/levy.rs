use rand::Rng;

use super::component::{Kernel, MeasureComponent};
use super::quad;
use super::set::JumpSet;
use crate::error::{CbiError, Result};

/// Relative tolerance of the quadrature fallback for kernels without closed forms.
pub const QUAD_REL_TOL: f64 = 1e-10;

/// A component together with the set it is restricted to.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub component: MeasureComponent,
    pub support: JumpSet,
}

/// A Lévy measure on `(0, ∞)` built from restricted components.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevyMeasure {
    pieces: Vec<Piece>,
}

impl LevyMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(components: impl IntoIterator<Item = MeasureComponent>) -> Result<Self> {
        let mut pieces = Vec::new();
        for c in components {
            let component = c.checked()?;
            if !component.is_null() {
                pieces.push(Piece {
                    component,
                    support: JumpSet::full(),
                });
            }
        }
        Ok(Self { pieces })
    }

    pub fn atom(location: f64, mass: f64) -> Result<Self> {
        Self::new([MeasureComponent::atom(location, mass)?])
    }

    pub fn exp_density(rate: f64, mass: f64) -> Result<Self> {
        Self::new([MeasureComponent::exp_density(rate, mass)?])
    }

    pub fn tempered_power_law(alpha: f64, tilt: f64, scale: f64) -> Result<Self> {
        Self::new([MeasureComponent::tempered_power_law(alpha, tilt, scale)?])
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Sum of two measures.
    pub fn plus(&self, other: &LevyMeasure) -> LevyMeasure {
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Self { pieces }
    }

    /// Atom locations and masses, if the measure is purely atomic.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        self.pieces
            .iter()
            .map(|p| match p.component {
                MeasureComponent::Atom { location, mass } => Some((location, mass)),
                _ => None,
            })
            .collect()
    }

    pub fn has_infinite_activity(&self) -> bool {
        self.pieces.iter().any(|p| {
            matches!(p.component, MeasureComponent::TemperedPowerLaw { .. }) && p.support.touches_zero()
        })
    }

    /// `∫_set kernel dm`.
    pub fn integrate(&self, kernel: Kernel, set: &JumpSet) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            for &(a, b) in p.support.intersect(set).intervals() {
                total += p.component.integrate_interval(kernel, a, b)?;
            }
        }
        Ok(total)
    }

    pub fn mass(&self, set: &JumpSet) -> Result<f64> {
        self.integrate(Kernel::Mass, set)
    }

    pub fn total_mass(&self) -> Result<f64> {
        self.mass(&JumpSet::full())
    }

    /// Mass on `set`, with `+∞` instead of an error when it diverges.
    pub fn mass_or_inf(&self, set: &JumpSet) -> f64 {
        self.mass(set).unwrap_or(f64::INFINITY)
    }

    pub fn is_finite_on(&self, set: &JumpSet) -> bool {
        self.mass_or_inf(set).is_finite()
    }

    /// Integral of an arbitrary integrand over `set`; atoms are exact, densities use
    /// adaptive quadrature at relative tolerance [`QUAD_REL_TOL`].
    pub fn integrate_with<F: Fn(f64) -> f64>(&self, f: F, set: &JumpSet) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            for &(a, b) in p.support.intersect(set).intervals() {
                total += match p.component {
                    MeasureComponent::Atom { location, mass } => {
                        if a < location && location <= b {
                            mass * f(location)
                        } else {
                            0.0
                        }
                    }
                    c => {
                        let out = quad::integrate(|z| c.density(z) * f(z), a, b, QUAD_REL_TOL, 1e-300);
                        if !out.converged || !out.value.is_finite() {
                            return Err(CbiError::DivergentIntegral(format!(
                                "quadrature on ({a}, {b}] did not converge (estimate {:e})",
                                out.value
                            )));
                        }
                        out.value
                    }
                };
            }
        }
        Ok(total)
    }

    /// The measure `m(· ∩ set)`.
    pub fn restrict(&self, set: &JumpSet) -> LevyMeasure {
        let pieces = self
            .pieces
            .iter()
            .filter_map(|p| {
                let support = p.support.intersect(set);
                let keep = match p.component {
                    MeasureComponent::Atom { location, .. } => support.contains(location),
                    _ => !support.is_empty(),
                };
                keep.then_some(Piece {
                    component: p.component,
                    support,
                })
            })
            .collect();
        LevyMeasure { pieces }
    }

    /// Splits into `(large, small)`: infinite-activity pieces are cut at `eps`, with the part
    /// on `(0, eps]` going to `small`; every other piece stays whole in `large`.
    pub fn split_small_jumps(&self, eps: f64) -> (LevyMeasure, LevyMeasure) {
        let cut = JumpSet::interval(0.0, eps.max(0.0)).unwrap_or_else(|_| JumpSet::empty());
        let mut large = Vec::new();
        let mut small = Vec::new();
        for p in &self.pieces {
            let infinite = matches!(p.component, MeasureComponent::TemperedPowerLaw { .. }) && p.support.touches_zero();
            if !infinite {
                large.push(p.clone());
                continue;
            }
            let low = p.support.intersect(&cut);
            let high = p.support.difference(&cut);
            if !low.is_empty() {
                small.push(Piece { component: p.component, support: low });
            }
            if !high.is_empty() {
                large.push(Piece { component: p.component, support: high });
            }
        }
        (LevyMeasure { pieces: large }, LevyMeasure { pieces: small })
    }

    /// Draws one jump size from `m` restricted to `set` and normalized.
    pub fn sample<R: Rng + ?Sized>(&self, set: &JumpSet, rng: &mut R) -> Result<f64> {
        let mut cells = Vec::new();
        let mut total = 0.0;
        for p in &self.pieces {
            for &(a, b) in p.support.intersect(set).intervals() {
                let m = p.component.integrate_interval(Kernel::Mass, a, b)?;
                if m > 0.0 {
                    total += m;
                    cells.push((p.component, a, b, m));
                }
            }
        }
        if cells.is_empty() || total == 0.0 {
            return Err(CbiError::ZeroMass);
        }
        let mut target = rng.random::<f64>() * total;
        let mut chosen = cells[cells.len() - 1];
        for cell in &cells {
            if target < cell.3 {
                chosen = *cell;
                break;
            }
            target -= cell.3;
        }
        let (component, a, b, _) = chosen;
        Ok(sample_component(component, a, b, rng))
    }
}

/// Uniform on `(0, 1]`.
fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// `Exp(θ)` conditioned on `(a, b]`, by inverse CDF.
fn truncated_exp<R: Rng + ?Sized>(theta: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    let u = open_uniform(rng);
    if b.is_infinite() {
        return a - u.ln() / theta;
    }
    // F(z) = (1 - e^{-θ(z-a)}) / (1 - e^{-θ(b-a)})
    let span = -(-theta * (b - a)).exp_m1();
    let z = a - (-(1.0 - u) * span).ln_1p() / theta;
    z.clamp(a, b)
}

fn sample_component<R: Rng + ?Sized>(c: MeasureComponent, a: f64, b: f64, rng: &mut R) -> f64 {
    match c {
        MeasureComponent::Atom { location, .. } => location,
        MeasureComponent::ExpDensity { rate, .. } => loop {
            // the left endpoint is excluded; hitting it exactly is a rounding artifact
            let z = truncated_exp(rate, a, b, rng);
            if z > a {
                break z;
            }
        },
        MeasureComponent::TemperedPowerLaw { alpha, tilt, .. } => sample_tempered(alpha, tilt, a, b, rng),
    }
}

/// Rejection sampler for `z^{-1-α} e^{-θz}` on `(a, b]`, `a > 0`.
///
/// Below `m = max(a, 1/θ)` the proposal is the truncated Pareto part and the
/// acceptance probability `e^{-θ(z-a)}` is at least `e^{-1}`; above `m` the
/// proposal is the tilted exponential and the acceptance probability is `(z/m)^{-1-α}`.
fn sample_tempered<R: Rng + ?Sized>(alpha: f64, theta: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    let m = (1.0 / theta).max(a).min(b);
    let unit = MeasureComponent::TemperedPowerLaw {
        alpha,
        tilt: theta,
        scale: 1.0,
    };
    let low = unit.integrate_interval(Kernel::Mass, a, m).unwrap_or(0.0);
    let high = unit.integrate_interval(Kernel::Mass, m, b).unwrap_or(0.0);
    let use_low = rng.random::<f64>() * (low + high) < low;
    loop {
        if use_low {
            // truncated Pareto z^{-1-α} on (a, m]
            let (pa, pm) = (a.powf(-alpha), m.powf(-alpha));
            let u = open_uniform(rng);
            let z = (pa - u * (pa - pm)).powf(-1.0 / alpha).clamp(a, m);
            if z > a && rng.random::<f64>() < (-theta * (z - a)).exp() {
                return z;
            }
        } else {
            let z = truncated_exp(theta, m, b, rng);
            if z > m && rng.random::<f64>() < (z / m).powf(-1.0 - alpha) {
                return z;
            }
        }
    }
}
