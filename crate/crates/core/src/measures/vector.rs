use super::component::Kernel;
use super::levy::LevyMeasure;
use super::set::JumpSet;
use crate::error::{CbiError, Result};

/// Image of a scalar measure under `z ↦ offset + z·e_axis`.
///
/// `offset[axis]` is always zero, so `‖offset + z·e_axis‖² = ‖offset‖² + z²`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPiece {
    pub measure: LevyMeasure,
    pub axis: usize,
    pub offset: Vec<f64>,
}

impl VectorPiece {
    fn offset_norm(&self) -> f64 {
        self.offset.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `{z > 0 : ‖offset + z·e_axis‖ ∈ s}` as a scalar set.
    fn norm_preimage(&self, s: &JumpSet) -> JumpSet {
        let f = self.offset_norm();
        if f == 0.0 {
            return s.clone();
        }
        let pulled = s.intervals().iter().filter(|&&(_, b)| b > f).map(|&(a, b)| {
            let lo = (a.max(f).powi(2) - f * f).max(0.0).sqrt();
            let hi = if b.is_infinite() { b } else { (b * b - f * f).sqrt() };
            (lo, hi)
        });
        JumpSet::from_intervals(pulled.filter(|(a, b)| a < b)).expect("preimage endpoints are ordered")
    }

    /// `Σ_{j≠axis} λ_j offset_j`, skipping zero terms.
    fn offset_exponent(&self, lambda: &[f64]) -> f64 {
        self.offset
            .iter()
            .zip(lambda)
            .enumerate()
            .filter(|&(j, (&o, &l))| j != self.axis && o != 0.0 && l != 0.0)
            .map(|(_, (&o, &l))| o * l)
            .sum()
    }
}

/// Lévy measure on `R₊^d \ {0}` as a finite list of axis-aligned pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorMeasure {
    dim: usize,
    pieces: Vec<VectorPiece>,
}

/// Radial integrands for the admissibility moments of a vector measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKernel {
    /// `1 ∧ ‖r‖`
    MinOne,
    /// `‖r‖ ∧ ‖r‖²`
    MinSquare,
    /// `‖r‖ · 1{‖r‖ ≥ 1}`
    Tail,
}

impl NormKernel {
    fn scalar(self) -> Kernel {
        match self {
            NormKernel::MinOne => Kernel::MinOneZ,
            NormKernel::MinSquare => Kernel::MinZZ2,
            NormKernel::Tail => Kernel::TailMoment,
        }
    }
}

impl VectorMeasure {
    pub fn zero(dim: usize) -> Self {
        Self { dim, pieces: Vec::new() }
    }

    /// A measure on `(0, ∞)` viewed as a one-dimensional vector measure.
    pub fn from_scalar(m: LevyMeasure) -> Self {
        let pieces = if m.is_zero() {
            Vec::new()
        } else {
            vec![VectorPiece {
                measure: m,
                axis: 0,
                offset: vec![0.0],
            }]
        };
        Self { dim: 1, pieces }
    }

    /// Finite list of vector atoms `(location, mass)`.
    pub fn from_atoms(dim: usize, atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut pieces = Vec::new();
        for (i, (loc, mass)) in atoms.iter().enumerate() {
            if loc.len() != dim {
                return Err(CbiError::DimensionMismatch(format!(
                    "atom #{i} has {} coordinates, expected {dim}",
                    loc.len()
                )));
            }
            if loc.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(CbiError::InvalidInput(format!("atom #{i} must lie in the nonnegative orthant")));
            }
            let Some(axis) = loc.iter().position(|&x| x > 0.0) else {
                return Err(CbiError::InvalidInput(format!("atom #{i} sits at the origin")));
            };
            let mut offset = loc.clone();
            offset[axis] = 0.0;
            let measure = LevyMeasure::atom(loc[axis], *mass)?;
            if !measure.is_zero() {
                pieces.push(VectorPiece { measure, axis, offset });
            }
        }
        Ok(Self { dim, pieces })
    }

    /// Builds a measure from explicit pieces.
    pub fn from_pieces(dim: usize, pieces: Vec<VectorPiece>) -> Result<Self> {
        for (i, p) in pieces.iter().enumerate() {
            if p.offset.len() != dim || p.axis >= dim {
                return Err(CbiError::DimensionMismatch(format!("piece #{i} does not live in dimension {dim}")));
            }
            if p.offset[p.axis] != 0.0 || p.offset.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(CbiError::InvalidInput(format!("piece #{i} has an invalid offset")));
            }
        }
        Ok(Self {
            dim,
            pieces: pieces.into_iter().filter(|p| !p.measure.is_zero()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[VectorPiece] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    /// True when every piece is a finite list of atoms.
    pub fn is_atomic(&self) -> bool {
        self.pieces.iter().all(|p| p.measure.atoms().is_some())
    }

    /// Flattened atom list `(location, mass)`, if purely atomic.
    pub fn vector_atoms(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        let mut out = Vec::new();
        for p in &self.pieces {
            for (z, w) in p.measure.atoms()? {
                let mut loc = p.offset.clone();
                loc[p.axis] = z;
                out.push((loc, w));
            }
        }
        Some(out)
    }

    /// The underlying measure on `(0, ∞)` when `dim == 1`.
    pub fn scalar(&self) -> Option<LevyMeasure> {
        (self.dim == 1).then(|| {
            self.pieces
                .iter()
                .fold(LevyMeasure::zero(), |acc, p| acc.plus(&p.measure))
        })
    }

    /// Mass of `{r : ‖r‖ ∈ s}`.
    pub fn mass_norm(&self, s: &JumpSet) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            total += p.measure.mass(&p.norm_preimage(s))?;
        }
        Ok(total)
    }

    pub fn mass_norm_or_inf(&self, s: &JumpSet) -> f64 {
        self.mass_norm(s).unwrap_or(f64::INFINITY)
    }

    /// Restriction to `{r : ‖r‖ ∈ s}`.
    pub fn restrict_norm(&self, s: &JumpSet) -> VectorMeasure {
        let pieces = self
            .pieces
            .iter()
            .map(|p| VectorPiece {
                measure: p.measure.restrict(&p.norm_preimage(s)),
                axis: p.axis,
                offset: p.offset.clone(),
            })
            .filter(|p| !p.measure.is_zero())
            .collect();
        Self { dim: self.dim, pieces }
    }

    /// `∫ g(‖r‖)` for the radial kernels; exact when the offset vanishes.
    pub fn integrate_norm(&self, k: NormKernel) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            let f = p.offset_norm();
            total += if f == 0.0 {
                p.measure.integrate(k.scalar(), &JumpSet::full())?
            } else {
                p.measure.integrate_with(
                    |z| {
                        let r = (f * f + z * z).sqrt();
                        k.scalar().eval(r)
                    },
                    &JumpSet::full(),
                )?
            };
        }
        Ok(total)
    }

    /// `∫ r_j`.
    pub fn coord_moment(&self, j: usize) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            if j == p.axis {
                total += p.measure.integrate(Kernel::Identity, &JumpSet::full())?;
            } else if p.offset[j] != 0.0 {
                total += p.offset[j] * p.measure.total_mass()?;
            }
        }
        Ok(total)
    }

    /// `∫ (r_i - 1)⁺`.
    pub fn coord_excess(&self, i: usize) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            if i == p.axis {
                total += p.measure.integrate(Kernel::ExcessOverOne, &JumpSet::full())?;
            } else if p.offset[i] > 1.0 {
                total += (p.offset[i] - 1.0) * p.measure.total_mass()?;
            }
        }
        Ok(total)
    }

    /// `∫ (1 ∧ r_i)`.
    pub fn coord_min_one(&self, i: usize) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            if i == p.axis {
                total += p.measure.integrate(Kernel::MinOneZ, &JumpSet::full())?;
            } else if p.offset[i] != 0.0 {
                total += p.offset[i].min(1.0) * p.measure.total_mass()?;
            }
        }
        Ok(total)
    }

    /// `∫ (1 - e^{-⟨λ, r⟩})`.
    pub fn one_minus_exp(&self, lambda: &[f64]) -> Result<f64> {
        let full = JumpSet::full();
        let mut total = 0.0;
        for p in &self.pieces {
            let c = p.offset_exponent(lambda);
            let la = lambda[p.axis];
            if c > 0.0 {
                total += -(-c).exp_m1() * p.measure.total_mass()?;
            }
            if la > 0.0 {
                total += (-c).exp() * p.measure.integrate(Kernel::OneMinusExp(la), &full)?;
            }
        }
        Ok(total)
    }

    /// `∫ (e^{-⟨λ, r⟩} - 1 + λ_i (1 ∧ r_i))`.
    pub fn compensated(&self, i: usize, lambda: &[f64]) -> Result<f64> {
        let full = JumpSet::full();
        let li = lambda[i];
        let mut total = 0.0;
        for p in &self.pieces {
            let c = p.offset_exponent(lambda);
            let la = lambda[p.axis];
            if c == 0.0 && i == p.axis {
                total += p.measure.integrate(Kernel::Compensated(la), &full)?;
                continue;
            }
            if la > 0.0 {
                total -= (-c).exp() * p.measure.integrate(Kernel::OneMinusExp(la), &full)?;
            }
            if c > 0.0 {
                total += (-c).exp_m1() * p.measure.total_mass()?;
            }
            if li > 0.0 {
                total += li * if i == p.axis {
                    p.measure.integrate(Kernel::MinOneZ, &full)?
                } else if p.offset[i] != 0.0 {
                    p.offset[i].min(1.0) * p.measure.total_mass()?
                } else {
                    0.0
                };
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::component::MeasureComponent;

    fn direct(atoms: &[(Vec<f64>, f64)], f: impl Fn(&[f64]) -> f64) -> f64 {
        atoms.iter().map(|(r, w)| w * f(r)).sum()
    }

    fn sample_atoms() -> Vec<(Vec<f64>, f64)> {
        vec![
            (vec![0.5, 0.0, 2.0], 0.4),
            (vec![0.0, 1.5, 0.0], 1.2),
            (vec![0.0, 0.3, 0.7], 0.9),
            (vec![2.0, 2.0, 2.0], 0.1),
        ]
    }

    #[test]
    fn atom_axis_is_first_positive_coordinate() {
        let m = VectorMeasure::from_atoms(3, &sample_atoms()).unwrap();
        let axes: Vec<usize> = m.pieces().iter().map(|p| p.axis).collect();
        assert_eq!(axes, vec![0, 1, 1, 0]);
        assert_eq!(m.vector_atoms().unwrap(), sample_atoms());
        assert!(VectorMeasure::from_atoms(2, &[(vec![0.0, 0.0], 1.0)]).is_err());
        assert!(VectorMeasure::from_atoms(2, &[(vec![1.0], 1.0)]).is_err());
    }

    #[test]
    fn kernels_match_direct_sums() {
        let atoms = sample_atoms();
        let m = VectorMeasure::from_atoms(3, &atoms).unwrap();
        let lambda = [0.3, 1.7, 0.0];
        let dot = |r: &[f64]| r.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>();
        let got = m.one_minus_exp(&lambda).unwrap();
        let want = direct(&atoms, |r| 1.0 - (-dot(r)).exp());
        assert!((got - want).abs() < 1e-14);
        for i in 0..3 {
            let got = m.compensated(i, &lambda).unwrap();
            let want = direct(&atoms, |r| (-dot(r)).exp() - 1.0 + lambda[i] * r[i].min(1.0));
            assert!((got - want).abs() < 1e-14, "{i}: {got} vs {want}");
            let got = m.coord_excess(i).unwrap();
            assert!((got - direct(&atoms, |r| (r[i] - 1.0).max(0.0))).abs() < 1e-14);
            let got = m.coord_moment(i).unwrap();
            assert!((got - direct(&atoms, |r| r[i])).abs() < 1e-14);
            let got = m.coord_min_one(i).unwrap();
            assert!((got - direct(&atoms, |r| r[i].min(1.0))).abs() < 1e-14);
        }
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let got = m.integrate_norm(NormKernel::Tail).unwrap();
        let want = direct(&atoms, |r| if norm(r) >= 1.0 { norm(r) } else { 0.0 });
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn norm_restriction_of_atoms() {
        let atoms = sample_atoms();
        let m = VectorMeasure::from_atoms(3, &atoms).unwrap();
        let s = JumpSet::interval(1.0, 2.1).unwrap();
        let r = m.restrict_norm(&s);
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let want: Vec<_> = atoms.iter().filter(|(r, _)| s.contains(norm(r))).cloned().collect();
        assert_eq!(r.vector_atoms().unwrap(), want);
        assert!((m.mass_norm(&s).unwrap() - want.iter().map(|a| a.1).sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn offset_density_pieces() {
        // exponential density shifted by a unit counter in the second coordinate
        let e = LevyMeasure::new([MeasureComponent::exp_density(2.0, 0.6).unwrap()]).unwrap();
        let m = VectorMeasure::from_pieces(
            2,
            vec![VectorPiece {
                measure: e.clone(),
                axis: 0,
                offset: vec![0.0, 1.0],
            }],
        )
        .unwrap();
        let lambda = [0.8, 1.3];
        let want = 0.6 * (1.0 - (-1.3f64).exp() * 2.0 / 2.8);
        assert!((m.one_minus_exp(&lambda).unwrap() - want).abs() < 1e-14);
        // norm ≥ 1 everywhere, so 1 ∧ ‖r‖ integrates to the mass
        assert!((m.integrate_norm(NormKernel::MinOne).unwrap() - 0.6).abs() < 1e-12);
        let s = JumpSet::interval(0.0, 2f64.sqrt()).unwrap();
        let want = 0.6 * (1.0 - (-2.0f64).exp());
        assert!((m.mass_norm(&s).unwrap() - want).abs() < 1e-14);
    }
}
