//! Survival functions of first jump times and Laplace transforms of the state and jump counts.
//!
//! Every result carries its natural logarithm as the canonical value.

use serde::Serialize;

use crate::error::{CbiError, Result};
use crate::measures::JumpSet;
use crate::odeflow::{flow_v, flow_v_joint, flow_v_marked, w_chain, y_chain, SolverConfig};
use crate::params::{finite_on, CbiParams};

/// A probability stored through its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogProb {
    pub log_value: f64,
}

impl LogProb {
    pub const ONE: LogProb = LogProb { log_value: 0.0 };

    /// Wraps `-exponent`, removing round-off that would push the value above 1.
    pub fn from_exponent(exponent: f64) -> Self {
        LogProb {
            log_value: (-exponent).min(0.0),
        }
    }

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

fn check_state(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(CbiError::DimensionMismatch(format!("x has {} entries, d = {dim}", x.len())));
    }
    if x.iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(())
    } else {
        Err(CbiError::InvalidInput("x must be finite and >= 0".into()))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(CbiError::InvalidInput(format!("time {t} must be finite and >= 0")))
    }
}

fn require_sets(p: &CbiParams, sets: &[&JumpSet]) -> Result<()> {
    for s in sets {
        let r = finite_on(p, s);
        if !r.finite {
            return Err(CbiError::InfiniteTotalMass(format!("set {s}")));
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stable ordering of the query times; entry `j` is the original index of the `j`-th smallest time.
pub fn sort_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    order
}

/// `E_x[exp(-⟨λ, X_t⟩)]`.
pub fn laplace_single_time(p: &CbiParams, x: &[f64], t: f64, lambda: &[f64], cfg: &SolverConfig) -> Result<LogProb> {
    check_state(x, p.dim)?;
    check_time(t)?;
    let sol = flow_v(p, lambda, t, cfg)?;
    Ok(LogProb::from_exponent(dot(x, &sol.final_value()) + sol.final_psi_integral()))
}

/// `E_x[exp(-Σ ⟨λ_i, X_{t_i}⟩)]` for pairs `(t_i, λ_i)` in any order.
pub fn laplace_multi_time(p: &CbiParams, x: &[f64], pairs: &[(f64, Vec<f64>)], cfg: &SolverConfig) -> Result<LogProb> {
    check_state(x, p.dim)?;
    if pairs.is_empty() {
        return Ok(LogProb::ONE);
    }
    for (t, _) in pairs {
        check_time(*t)?;
    }
    let times: Vec<f64> = pairs.iter().map(|(t, _)| *t).collect();
    let order = sort_order(&times);
    let sorted_t: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let sorted_l: Vec<Vec<f64>> = order.iter().map(|&i| pairs[i].1.clone()).collect();
    let chain = y_chain(p, &sorted_t, &sorted_l, cfg)?;
    let head = dot(x, &chain.legs[0].final_value());
    let tail: f64 = chain.legs.iter().map(|l| l.final_psi_integral()).sum();
    Ok(LogProb::from_exponent(head + tail))
}

/// `E_x[exp(-λ0 X_t - Σ λ_i J_t(A_i))]` for single-type parameters.
pub fn laplace_state_and_counts(
    p: &CbiParams,
    x: f64,
    t: f64,
    lambda0: f64,
    sets: &[JumpSet],
    lambda: &[f64],
    cfg: &SolverConfig,
) -> Result<LogProb> {
    p.require_single("laplace_state_and_counts")?;
    check_state(&[x], 1)?;
    check_time(t)?;
    require_sets(p, &sets.iter().collect::<Vec<_>>())?;
    let sol = flow_v_joint(p, sets, lambda0, lambda, t, cfg)?;
    Ok(LogProb::from_exponent(x * sol.final_value()[0] + sol.final_psi_integral()))
}

/// `P_x(τ_A > t)`, where `A` is read through the Euclidean norm when `d > 1`.
pub fn survival_first_jump(p: &CbiParams, x: &[f64], t: f64, a: &JumpSet, cfg: &SolverConfig) -> Result<LogProb> {
    check_state(x, p.dim)?;
    check_time(t)?;
    require_sets(p, &[a])?;
    p.require_first_moment()?;
    let nu_a = p.nu.mass_norm(a)?;
    let sol = flow_v_marked(p, a, t, cfg)?;
    Ok(LogProb::from_exponent(nu_a * t + dot(x, &sol.final_value()) + sol.final_psi_integral()))
}

/// `P_x(τ_{A_1} > t_1, …, τ_{A_k} > t_k)` for pairs `(A_i, t_i)` in any order.
pub fn survival_joint(p: &CbiParams, x: f64, pairs: &[(JumpSet, f64)], cfg: &SolverConfig) -> Result<LogProb> {
    p.require_single("survival_joint")?;
    check_state(&[x], 1)?;
    for (_, t) in pairs {
        check_time(*t)?;
    }
    require_sets(p, &pairs.iter().map(|(a, _)| a).collect::<Vec<_>>())?;
    p.require_first_moment()?;
    if pairs.is_empty() {
        return Ok(LogProb::ONE);
    }
    let times: Vec<f64> = pairs.iter().map(|(_, t)| *t).collect();
    let order = sort_order(&times);
    let sets: Vec<JumpSet> = order.iter().map(|&i| pairs[i].0.clone()).collect();
    let sorted_t: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let chain = w_chain(p, &sets, &sorted_t, cfg)?;
    let legs: f64 = chain.leg_integrals().iter().sum();
    Ok(LogProb::from_exponent(x * chain.w1_at_t1() + legs))
}

/// `P_x(τ_{A_1} > t, …, τ_{A_k} > t)`, i.e. no jump in the union of the sets up to `t`.
pub fn survival_same_time(p: &CbiParams, x: f64, t: f64, sets: &[JumpSet], cfg: &SolverConfig) -> Result<LogProb> {
    p.require_single("survival_same_time")?;
    let union = sets.iter().fold(JumpSet::empty(), |acc, s| acc.union(s));
    survival_first_jump(p, &[x], t, &union, cfg)
}
