//! Independent reference values: lattice chains, closed forms and limit probes.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{CbiError, Result};
use crate::measures::{JumpSet, Kernel, LevyMeasure};
use crate::mechanisms::active_union;
use crate::odeflow::{flow_v_joint, flow_v_set, SolverConfig};
use crate::params::CbiParams;

/// Truncation and tolerance of the lattice chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Largest lattice index `N`; states are `0, h, …, N h`.
    pub levels: usize,
    pub step: f64,
    /// Largest acceptable truncation bound.
    pub tolerance: f64,
    /// `levels` is doubled until the bound is met or this is exceeded.
    pub max_levels: usize,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            levels: 400,
            step: 1.0,
            tolerance: 1e-8,
            max_levels: 400 << 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CtmcResult {
    /// Survival probability of the truncated chain; the exact value lies in `[value, value + bound]`.
    pub value: f64,
    pub bound: f64,
    pub levels: usize,
}

fn lattice_index(v: f64, h: f64, what: &str) -> Result<usize> {
    let k = (v / h).round();
    if (k * h - v).abs() > 1e-9 * v.abs().max(h) || k < 0.0 {
        return Err(CbiError::PreconditionViolated(format!("{what} = {v} is not on the lattice of step {h}")));
    }
    Ok(k as usize)
}

fn lattice_atoms(m: &LevyMeasure, h: f64, what: &str) -> Result<Vec<(usize, f64, f64)>> {
    let atoms = m
        .atoms()
        .ok_or_else(|| CbiError::PreconditionViolated(format!("{what} must be purely atomic")))?;
    atoms
        .into_iter()
        .map(|(z, w)| Ok((lattice_index(z, h, what)?, z, w)))
        .collect()
}

struct Lattice {
    step: f64,
    branching: Vec<(usize, f64, f64)>,
    immigration: Vec<(usize, f64, f64)>,
}

impl Lattice {
    fn new(p: &CbiParams, step: f64) -> Result<Self> {
        p.require_single("ctmc_survival")?;
        p.require_admissible()?;
        if !(step.is_finite() && step > 0.0) {
            return Err(CbiError::InvalidInput(format!("lattice step {step} must be positive")));
        }
        if p.c[0] != 0.0 || p.beta[0] != 0.0 {
            return Err(CbiError::PreconditionViolated("lattice chains need c = 0 and β = 0".into()));
        }
        let mu = p.scalar_mu().expect("single type");
        let nu = p.scalar_nu().expect("single type");
        let drift = p.b[0][0] - mu.integrate(Kernel::MinOneZ, &JumpSet::full())?;
        if drift.abs() > 1e-12 * p.b[0][0].abs().max(1.0) {
            return Err(CbiError::PreconditionViolated(format!(
                "lattice chains need B = ∫(1∧z)μ(dz); the inter-jump drift is {drift:e}"
            )));
        }
        Ok(Self {
            step,
            branching: lattice_atoms(&mu, step, "μ atom")?,
            immigration: lattice_atoms(&nu, step, "ν atom")?,
        })
    }

    fn total_rate(&self, n: usize) -> f64 {
        let state = n as f64 * self.step;
        state * self.branching.iter().map(|a| a.2).sum::<f64>() + self.immigration.iter().map(|a| a.2).sum::<f64>()
    }

    /// Evolves `(dist, overflow)` for `dt` under the chain with jumps in `marked` killed.
    /// Returns the Poisson tail mass dropped by the series truncation.
    fn evolve(&self, dist: &mut Vec<f64>, overflow: &mut f64, marked: &JumpSet, dt: f64) -> f64 {
        let levels = dist.len() - 1;
        let rate = self.total_rate(levels);
        if dt == 0.0 || rate == 0.0 {
            return 0.0;
        }
        let kept = |atoms: &[(usize, f64, f64)]| -> Vec<(usize, f64)> {
            atoms
                .iter()
                .filter(|a| !marked.contains(a.1))
                .map(|a| (a.0, a.2))
                .collect()
        };
        let branching = kept(&self.branching);
        let immigration = kept(&self.immigration);
        let mean = rate * dt;
        let log_mean = mean.ln();
        let mut acc = vec![0.0; dist.len()];
        let mut acc_overflow = 0.0;
        let mut cumulative = 0.0;
        let mut cur = dist.clone();
        let mut cur_overflow = *overflow;
        let mut next = vec![0.0; dist.len()];
        let mut k = 0usize;
        loop {
            let w = (-mean + k as f64 * log_mean - ln_gamma(k as f64 + 1.0)).exp();
            cumulative += w;
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += w * c;
            }
            acc_overflow += w * cur_overflow;
            let tail = (1.0 - cumulative).max(0.0);
            if k as f64 > mean && (tail < 1e-17 || w < 1e-300) {
                break;
            }
            // one step of the uniformized kernel I + Q/rate
            next.iter_mut().for_each(|v| *v = 0.0);
            for (n, &mass) in cur.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let out = self.total_rate(n);
                next[n] += mass * (1.0 - out / rate);
                let state = n as f64 * self.step;
                let moves = branching
                    .iter()
                    .map(|&(j, w)| (j, state * w))
                    .chain(immigration.iter().copied());
                for (j, r) in moves {
                    let flow = mass * r / rate;
                    if n + j <= levels {
                        next[n + j] += flow;
                    } else {
                        cur_overflow += flow;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
            k += 1;
        }
        *dist = acc;
        *overflow = acc_overflow;
        (1.0 - cumulative).max(0.0)
    }
}

fn ctmc_once(lattice: &Lattice, levels: usize, start: usize, pairs: &[(JumpSet, f64)]) -> CtmcResult {
    let mut dist = vec![0.0; levels + 1];
    let mut overflow = 0.0;
    let mut tails = 0.0;
    if start <= levels {
        dist[start] = 1.0;
    } else {
        overflow = 1.0;
    }
    let mut prev = 0.0;
    for i in 0..pairs.len() {
        let marked = pairs[i..].iter().fold(JumpSet::empty(), |acc, (a, _)| acc.union(a));
        tails += lattice.evolve(&mut dist, &mut overflow, &marked, pairs[i].1 - prev);
        prev = pairs[i].1;
    }
    CtmcResult {
        value: dist.iter().sum(),
        bound: overflow + tails,
        levels,
    }
}

/// Joint survival `P_x(τ_{A_i} > t_i ∀i)` from the lattice chain, by uniformization.
pub fn ctmc_survival(spec: &LatticeSpec, p: &CbiParams, x: f64, pairs: &[(JumpSet, f64)]) -> Result<CtmcResult> {
    let lattice = Lattice::new(p, spec.step)?;
    let start = lattice_index(x, spec.step, "x")?;
    if pairs.windows(2).any(|w| w[0].1 > w[1].1) || pairs.iter().any(|(_, t)| !(t.is_finite() && *t >= 0.0)) {
        return Err(CbiError::UnsortedTimes);
    }
    let mut levels = spec.levels.max(1);
    loop {
        let r = ctmc_once(&lattice, levels, start, pairs);
        if r.bound <= spec.tolerance {
            return Ok(r);
        }
        if levels * 2 > spec.max_levels {
            return Err(CbiError::TruncationTooSmall {
                bound: r.bound,
                tolerance: spec.tolerance,
                levels,
            });
        }
        levels *= 2;
    }
}

/// Analytically solvable instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogId {
    /// No branching jump lands in `A`: `exp(-ν(A) t)`.
    PureImmigration,
    /// `c = β = 0` and every jump is marked: `exp(-ν(A) t - x μ(A) (1 - e^{-κt}) / κ)` with `κ = ∫(1∧z)μ - B`.
    InhomogeneousPoisson,
    /// As the previous case with `κ = 0`, so the state is frozen until the first jump: `exp(-(x μ(A) + ν(A)) t)`.
    FrozenLattice,
}

impl CatalogId {
    pub const ALL: [CatalogId; 3] = [CatalogId::PureImmigration, CatalogId::InhomogeneousPoisson, CatalogId::FrozenLattice];
}

fn mismatch(case: CatalogId, why: &str) -> CbiError {
    CbiError::CaseMismatch(format!("{case:?}: {why}"))
}

/// `P_x(τ_A > t)` in closed form for the catalog case.
pub fn closed_form_survival(case: CatalogId, p: &CbiParams, x: f64, t: f64, a: &JumpSet) -> Result<f64> {
    p.require_single("closed_form_survival")?;
    if !(x.is_finite() && x >= 0.0 && t.is_finite() && t >= 0.0) {
        return Err(CbiError::InvalidInput("x and t must be finite and >= 0".into()));
    }
    let mu = p.scalar_mu().expect("single type");
    let nu = p.scalar_nu().expect("single type");
    let nu_a = nu.mass(a)?;
    let mu_a = mu.mass_or_inf(a);
    let outside = a.complement();
    let tol = 1e-14;
    if case == CatalogId::PureImmigration {
        if mu_a != 0.0 {
            return Err(mismatch(case, "μ charges the marked set"));
        }
        return Ok((-nu_a * t).exp());
    }
    if p.c[0] != 0.0 || p.beta[0] != 0.0 {
        return Err(mismatch(case, "needs c = 0 and β = 0"));
    }
    if mu.mass_or_inf(&outside) != 0.0 || nu.mass_or_inf(&outside) != 0.0 {
        return Err(mismatch(case, "every jump must lie in the marked set"));
    }
    let kappa = mu.integrate(Kernel::MinOneZ, &JumpSet::full())? - p.b[0][0];
    match case {
        CatalogId::FrozenLattice => {
            if kappa.abs() > tol {
                return Err(mismatch(case, "needs B = ∫(1∧z)μ(dz)"));
            }
            Ok((-(x * mu_a + nu_a) * t).exp())
        }
        _ => {
            let decay = if kappa == 0.0 { t } else { -(-kappa * t).exp_m1() / kappa };
            Ok((-nu_a * t - x * mu_a * decay).exp())
        }
    }
}

/// Outcome of a limit probe for the joint flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub s_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// The limit value from the censored flow.
    pub bound: f64,
    pub gaps: Vec<f64>,
    pub monotone: bool,
    pub bounded: bool,
    pub gap_nonincreasing: bool,
    pub final_gap: f64,
    /// Numerical slack used in the three comparisons.
    pub slack: f64,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.bounded && self.gap_nonincreasing
    }
}

/// Evaluates `v^{(k)}(t, η(s), sλ)` along `s_grid` and compares with `v_{A_λ}(t, λ0)`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_probe(
    p: &CbiParams,
    sets: &[JumpSet],
    lambda0: f64,
    lambda: &[f64],
    t: f64,
    s_grid: &[f64],
    eta: impl Fn(f64) -> f64,
    cfg: &SolverConfig,
) -> Result<ProbeReport> {
    if s_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CbiError::InvalidInput("s grid must be increasing".into()));
    }
    let bound = flow_v_set(p, &active_union(sets, lambda), lambda0, t, cfg)?.final_value()[0];
    let values = s_grid
        .iter()
        .map(|&s| {
            let scaled: Vec<f64> = lambda.iter().map(|l| s * l).collect();
            Ok(flow_v_joint(p, sets, eta(s), &scaled, t, cfg)?.final_value()[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let gaps: Vec<f64> = values.iter().map(|v| bound - v).collect();
    let slack = 10.0 * cfg.rel_tol * bound.abs().max(1.0);
    Ok(ProbeReport {
        monotone: values.windows(2).all(|w| w[0] <= w[1] + slack),
        bounded: values.iter().all(|v| *v <= bound + slack),
        gap_nonincreasing: gaps.windows(2).all(|w| w[1] <= w[0] + slack),
        final_gap: gaps.last().copied().unwrap_or(0.0),
        s_grid: s_grid.to_vec(),
        values,
        bound,
        gaps,
        slack,
    })
}
