//! Branching and immigration mechanisms, plain, censored and joint with jump counters.

use crate::error::{CbiError, Result};
use crate::measures::{JumpSet, Kernel, LevyMeasure};
use crate::params::{check_set_count, partition_cells, require_finite, restrict_for_jumps, CbiParams, MAX_SETS};

fn check_len(p: &CbiParams, lambda: &[f64]) -> Result<()> {
    if lambda.len() == p.dim {
        Ok(())
    } else {
        Err(CbiError::DimensionMismatch(format!(
            "argument has {} entries, parameters have d = {}",
            lambda.len(),
            p.dim
        )))
    }
}

/// `φ_i(λ) = c_i λ_i² - ⟨B e_i, λ⟩ + ∫(e^{-⟨λ,z⟩} - 1 + λ_i(1∧z_i)) μ_i(dz)`, written into `out`.
pub fn phi_into(p: &CbiParams, lambda: &[f64], out: &mut [f64]) -> Result<()> {
    check_len(p, lambda)?;
    for (i, o) in out.iter_mut().enumerate().take(p.dim) {
        let drift: f64 = (0..p.dim).map(|j| p.b[j][i] * lambda[j]).sum();
        *o = p.c[i] * lambda[i] * lambda[i] - drift + p.mu[i].compensated(i, lambda)?;
    }
    Ok(())
}

pub fn phi(p: &CbiParams, lambda: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; p.dim];
    phi_into(p, lambda, &mut out)?;
    Ok(out)
}

/// `ψ(λ) = ⟨β, λ⟩ + ∫(1 - e^{-⟨λ,r⟩}) ν(dr)`.
pub fn psi(p: &CbiParams, lambda: &[f64]) -> Result<f64> {
    check_len(p, lambda)?;
    let linear: f64 = p.beta.iter().zip(lambda).map(|(b, l)| b * l).sum();
    Ok(linear + p.nu.one_minus_exp(lambda)?)
}

/// Censored parameters for a marked set together with the marked masses.
#[derive(Debug, Clone)]
pub struct Censored {
    pub params: CbiParams,
    /// `μ_i(A)` for each type.
    pub mu_mass: Vec<f64>,
    /// `ν(A)`.
    pub nu_mass: f64,
}

impl Censored {
    pub fn new(p: &CbiParams, a: &JumpSet) -> Result<Self> {
        require_finite(p, a)?;
        Ok(Self {
            params: restrict_for_jumps(p, a)?,
            mu_mass: p.mu.iter().map(|m| m.mass_norm(a)).collect::<Result<_>>()?,
            nu_mass: p.nu.mass_norm(a)?,
        })
    }

    pub fn phi_into(&self, lambda: &[f64], out: &mut [f64]) -> Result<()> {
        phi_into(&self.params, lambda, out)
    }

    pub fn psi(&self, lambda: &[f64]) -> Result<f64> {
        psi(&self.params, lambda)
    }
}

/// `φ^{(A)}(λ)` for single-type parameters.
pub fn phi_restricted(p: &CbiParams, a: &JumpSet, lambda: f64) -> Result<f64> {
    p.require_single("phi_restricted")?;
    Ok(phi(&Censored::new(p, a)?.params, &[lambda])?[0])
}

/// `ψ^{(A)}(λ)` for single-type parameters.
pub fn psi_restricted(p: &CbiParams, a: &JumpSet, lambda: f64) -> Result<f64> {
    p.require_single("psi_restricted")?;
    psi(&Censored::new(p, a)?.params, &[lambda])
}

#[derive(Debug, Clone)]
struct Cell {
    mask: usize,
    mu: LevyMeasure,
    nu: LevyMeasure,
}

/// Single-type parameters split over the partition cells generated by `A_1..A_k`.
#[derive(Debug, Clone)]
pub struct JointContext {
    c: f64,
    b: f64,
    beta: f64,
    k: usize,
    cells: Vec<Cell>,
}

impl JointContext {
    pub fn new(p: &CbiParams, sets: &[JumpSet]) -> Result<Self> {
        Self::with_limit(p, sets, MAX_SETS)
    }

    pub fn with_limit(p: &CbiParams, sets: &[JumpSet], limit: usize) -> Result<Self> {
        p.require_single("joint mechanisms")?;
        check_set_count(sets.len(), limit)?;
        for s in sets {
            require_finite(p, s)?;
        }
        let mu = p.scalar_mu().expect("single-type");
        let nu = p.scalar_nu().expect("single-type");
        let cells = partition_cells(sets)
            .into_iter()
            .map(|(mask, cell)| Cell {
                mask,
                mu: mu.restrict(&cell),
                nu: nu.restrict(&cell),
            })
            .filter(|c| !(c.mu.is_zero() && c.nu.is_zero()))
            .collect();
        Ok(Self {
            c: p.c[0],
            b: p.b[0][0],
            beta: p.beta[0],
            k: sets.len(),
            cells,
        })
    }

    pub fn set_count(&self) -> usize {
        self.k
    }

    fn exponent(&self, mask: usize, lambda: &[f64]) -> f64 {
        lambda
            .iter()
            .enumerate()
            .filter(|&(i, &l)| mask >> i & 1 == 1 && l != 0.0)
            .map(|(_, l)| l)
            .sum()
    }

    fn check(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() == self.k {
            Ok(())
        } else {
            Err(CbiError::DimensionMismatch(format!("{} counter arguments for {} sets", lambda.len(), self.k)))
        }
    }

    /// `cλ0² - Bλ0 + ∫(e^{-λ0 z - Σλ_i 1_{A_i}(z)} - 1 + λ0(1∧z)) μ(dz)`.
    pub fn phi(&self, lambda0: f64, lambda: &[f64]) -> Result<f64> {
        self.check(lambda)?;
        let full = JumpSet::full();
        let mut total = self.c * lambda0 * lambda0 - self.b * lambda0;
        for cell in &self.cells {
            if cell.mu.is_zero() {
                continue;
            }
            let k = self.exponent(cell.mask, lambda);
            total += if k == 0.0 {
                cell.mu.integrate(Kernel::Compensated(lambda0), &full)?
            } else {
                (-k).exp() * cell.mu.integrate(Kernel::Exp(lambda0), &full)? - cell.mu.total_mass()?
                    + lambda0 * cell.mu.integrate(Kernel::MinOneZ, &full)?
            };
        }
        Ok(total)
    }

    /// `βλ0 + ∫(1 - e^{-λ0 r - Σλ_i 1_{A_i}(r)}) ν(dr)`.
    pub fn psi(&self, lambda0: f64, lambda: &[f64]) -> Result<f64> {
        self.check(lambda)?;
        let full = JumpSet::full();
        let mut total = self.beta * lambda0;
        for cell in &self.cells {
            if cell.nu.is_zero() {
                continue;
            }
            let k = self.exponent(cell.mask, lambda);
            total += if k == 0.0 {
                cell.nu.integrate(Kernel::OneMinusExp(lambda0), &full)?
            } else {
                cell.nu.total_mass()? - (-k).exp() * cell.nu.integrate(Kernel::Exp(lambda0), &full)?
            };
        }
        Ok(total)
    }
}

pub fn phi_joint(p: &CbiParams, sets: &[JumpSet], lambda0: f64, lambda: &[f64]) -> Result<f64> {
    JointContext::new(p, sets)?.phi(lambda0, lambda)
}

pub fn psi_joint(p: &CbiParams, sets: &[JumpSet], lambda0: f64, lambda: &[f64]) -> Result<f64> {
    JointContext::new(p, sets)?.psi(lambda0, lambda)
}

/// `A_λ = ⋃_{λ_i > 0} A_i`.
pub fn active_union(sets: &[JumpSet], lambda: &[f64]) -> JumpSet {
    sets.iter()
        .zip(lambda)
        .filter(|(_, &l)| l > 0.0)
        .fold(JumpSet::empty(), |acc, (s, _)| acc.union(s))
}
