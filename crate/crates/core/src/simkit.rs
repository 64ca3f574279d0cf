//! Path simulation, jump census and Monte Carlo estimators for single-type processes.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CbiError, Result};
use crate::measures::{JumpSet, Kernel, LevyMeasure};
use crate::params::CbiParams;

/// Inflation of the thinning bound over the window maximum.
const THINNING_SLACK: f64 = 1.0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Exact,
    Euler { dt: f64, eps_trunc: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpOrigin {
    Branching,
    Immigration,
}

impl JumpOrigin {
    fn label(self) -> &'static str {
        match self {
            JumpOrigin::Branching => "branching",
            JumpOrigin::Immigration => "immigration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub size: f64,
    pub origin: JumpOrigin,
}

/// A simulated trajectory. At a jump time the state is recorded twice, before and after.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    pub horizon: f64,
    pub scheme: Scheme,
}

impl PathRecord {
    pub fn final_state(&self) -> f64 {
        *self.states.last().expect("a path has at least its initial state")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x\n");
        for (t, x) in self.times.iter().zip(&self.states) {
            let _ = writeln!(out, "{t:.16e},{x:.16e}");
        }
        out
    }

    pub fn jumps_csv(&self) -> String {
        let mut out = String::from("u,z,origin\n");
        for j in &self.jumps {
            let _ = writeln!(out, "{:.16e},{:.16e},{}", j.time, j.size, j.origin.label());
        }
        out
    }
}

/// Marked jump times per set, up to the path horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpStatistics {
    pub horizon: f64,
    pub marked_times: Vec<Vec<f64>>,
}

impl JumpStatistics {
    /// `J_t(A_i)`.
    pub fn count_at(&self, i: usize, t: f64) -> usize {
        self.marked_times[i].partition_point(|&u| u <= t)
    }

    /// `τ_{A_i}`, or `None` when no marked jump happens before the horizon.
    pub fn first_time(&self, i: usize) -> Option<f64> {
        self.marked_times[i].first().copied()
    }

    /// Whether `τ_{A_i} > t`.
    pub fn survives(&self, i: usize, t: f64) -> bool {
        self.first_time(i).is_none_or(|u| u > t)
    }
}

pub fn jump_statistics(path: &PathRecord, sets: &[JumpSet]) -> JumpStatistics {
    let marked_times = sets
        .iter()
        .map(|s| path.jumps.iter().filter(|j| s.contains(j.size)).map(|j| j.time).collect())
        .collect();
    JumpStatistics {
        horizon: path.horizon,
        marked_times,
    }
}

fn check_start(x: f64, horizon: f64) -> Result<()> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(CbiError::InvalidInput(format!("initial state {x} must be finite and >= 0")));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(CbiError::InvalidInput(format!("horizon {horizon} must be finite and >= 0")));
    }
    Ok(())
}

fn finite_mass(m: &LevyMeasure, what: &str) -> Result<f64> {
    match m.total_mass() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CbiError::PreconditionViolated(format!("{what} has infinite total mass"))),
    }
}

/// Precomputed constants of the exact jump-flow scheme.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    kappa: f64,
    beta: f64,
    mu: LevyMeasure,
    nu: LevyMeasure,
    mu_total: f64,
    nu_total: f64,
}

impl ExactSampler {
    pub fn new(p: &CbiParams) -> Result<Self> {
        p.require_single("exact simulation")?;
        p.require_first_moment()?;
        if p.c[0] != 0.0 {
            return Err(CbiError::PreconditionViolated("exact simulation needs c = 0".into()));
        }
        let mu = p.scalar_mu().expect("single type");
        let nu = p.scalar_nu().expect("single type");
        let mu_total = finite_mass(&mu, "μ")?;
        let nu_total = finite_mass(&nu, "ν")?;
        let kappa = p.b[0][0] - mu.integrate(Kernel::MinOneZ, &JumpSet::full())?;
        Ok(Self {
            kappa,
            beta: p.beta[0],
            mu,
            nu,
            mu_total,
            nu_total,
        })
    }

    /// The inter-jump flow `x' = β + κx` after time `u`.
    fn flow(&self, x0: f64, u: f64) -> f64 {
        let grow = if self.kappa == 0.0 {
            u
        } else {
            (self.kappa * u).exp_m1() / self.kappa
        };
        (x0 + (x0 * self.kappa + self.beta) * grow).max(0.0)
    }

    pub fn simulate<R: Rng + ?Sized>(&self, x: f64, horizon: f64, rng: &mut R) -> Result<PathRecord> {
        check_start(x, horizon)?;
        let mut times = vec![0.0];
        let mut states = vec![x];
        let mut jumps = Vec::new();
        let window = if self.kappa == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.kappa.abs()
        };
        let full = JumpSet::full();
        let (mut s, mut xs) = (0.0, x);
        while s < horizon {
            let end = (s + window).min(horizon);
            let bound = xs.max(self.flow(xs, end - s)) * self.mu_total * THINNING_SLACK + self.nu_total;
            let proposal = if bound > 0.0 {
                s + Exp::new(bound).expect("positive rate").sample(rng)
            } else {
                f64::INFINITY
            };
            if proposal >= end {
                xs = self.flow(xs, end - s);
                s = end;
                continue;
            }
            let xu = self.flow(xs, proposal - s);
            s = proposal;
            xs = xu;
            let branching = xu * self.mu_total;
            let draw = rng.random::<f64>() * bound;
            if draw >= branching + self.nu_total {
                continue;
            }
            let (origin, size) = if draw < branching {
                (JumpOrigin::Branching, self.mu.sample(&full, rng)?)
            } else {
                (JumpOrigin::Immigration, self.nu.sample(&full, rng)?)
            };
            times.push(s);
            states.push(xs);
            xs += size;
            times.push(s);
            states.push(xs);
            jumps.push(JumpEvent { time: s, size, origin });
        }
        times.push(horizon);
        states.push(xs);
        Ok(PathRecord {
            times,
            states,
            jumps,
            horizon,
            scheme: Scheme::Exact,
        })
    }
}

/// Exact simulation for `c = 0` and finite-activity measures.
pub fn simulate_exact_jump<R: Rng + ?Sized>(p: &CbiParams, x: f64, horizon: f64, rng: &mut R) -> Result<PathRecord> {
    ExactSampler::new(p)?.simulate(x, horizon, rng)
}

/// Precomputed constants of the Euler scheme.
#[derive(Debug, Clone)]
pub struct EulerSampler {
    dt: f64,
    eps: f64,
    c: f64,
    beta_eff: f64,
    slope: f64,
    mu_large: LevyMeasure,
    nu_large: LevyMeasure,
    mu_rate: f64,
    nu_rate: f64,
    /// `∫_{z ≤ ε} z² μ(dz)`, which drives the truncation error.
    pub small_second_moment: f64,
}

impl EulerSampler {
    pub fn new(p: &CbiParams, dt: f64, eps_trunc: f64) -> Result<Self> {
        p.require_single("Euler simulation")?;
        p.require_first_moment()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CbiError::PreconditionViolated(format!("step size {dt} must be positive")));
        }
        if !(eps_trunc.is_finite() && eps_trunc >= 0.0) {
            return Err(CbiError::PreconditionViolated(format!("truncation level {eps_trunc} must be >= 0")));
        }
        let mu = p.scalar_mu().expect("single type");
        let nu = p.scalar_nu().expect("single type");
        let full = JumpSet::full();
        let (mu_large, mu_small) = mu.split_small_jumps(eps_trunc);
        let (nu_large, nu_small) = nu.split_small_jumps(eps_trunc);
        let mu_rate = finite_mass(&mu_large, "μ above the truncation level")?;
        let nu_rate = finite_mass(&nu_large, "ν above the truncation level")?;
        // large branching jumps are simulated uncompensated, so their compensator enters the drift
        let slope = p.b[0][0] + mu.integrate(Kernel::ExcessOverOne, &full)? - mu_large.integrate(Kernel::Identity, &full)?;
        let beta_eff = p.beta[0] + nu_small.integrate(Kernel::Identity, &full)?;
        let small_second_moment = mu_small.integrate_with(|z| z * z, &full)?;
        Ok(Self {
            dt,
            eps: eps_trunc,
            c: p.c[0],
            beta_eff,
            slope,
            mu_large,
            nu_large,
            mu_rate,
            nu_rate,
            small_second_moment,
        })
    }

    fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
        if mean > 0.0 {
            Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
        } else {
            0
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, x: f64, horizon: f64, rng: &mut R) -> Result<PathRecord> {
        check_start(x, horizon)?;
        let steps = (horizon / self.dt).ceil().max(0.0) as usize;
        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        let mut jumps = Vec::new();
        let full = JumpSet::full();
        let mut xs = x;
        times.push(0.0);
        states.push(x);
        for n in 0..steps {
            let t0 = n as f64 * self.dt;
            let t1 = if n + 1 == steps { horizon } else { (n + 1) as f64 * self.dt };
            let h = t1 - t0;
            let noise: f64 = rng.sample(StandardNormal);
            let mut next = xs + (self.beta_eff + self.slope * xs) * h + (2.0 * self.c * xs.max(0.0) * h).sqrt() * noise;
            let first = jumps.len();
            for (origin, rate, m) in [
                (JumpOrigin::Branching, self.mu_rate * xs, &self.mu_large),
                (JumpOrigin::Immigration, self.nu_rate, &self.nu_large),
            ] {
                for _ in 0..Self::poisson(rate * h, rng) {
                    let size = m.sample(&full, rng)?;
                    let time = t0 + h * (1.0 - rng.random::<f64>());
                    next += size;
                    jumps.push(JumpEvent { time, size, origin });
                }
            }
            jumps[first..].sort_by(|a, b| a.time.total_cmp(&b.time));
            xs = next.max(0.0);
            times.push(t1);
            states.push(xs);
        }
        Ok(PathRecord {
            times,
            states,
            jumps,
            horizon,
            scheme: Scheme::Euler {
                dt: self.dt,
                eps_trunc: self.eps,
            },
        })
    }
}

/// Euler scheme with exact large jumps and dropped compensated small branching jumps.
pub fn simulate_euler<R: Rng + ?Sized>(
    p: &CbiParams,
    x: f64,
    horizon: f64,
    dt: f64,
    eps_trunc: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    EulerSampler::new(p, dt, eps_trunc)?.simulate(x, horizon, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McQuery {
    /// Indicator of `τ_{A_i} > t_i` for every pair.
    JointSurvival { pairs: Vec<(JumpSet, f64)> },
    /// `exp(-λ0 X_t - Σ λ_i J_t(A_i))`.
    Laplace {
        t: f64,
        lambda0: f64,
        sets: Vec<JumpSet>,
        lambda: Vec<f64>,
    },
}

impl McQuery {
    fn horizon(&self) -> f64 {
        match self {
            McQuery::JointSurvival { pairs } => pairs.iter().map(|(_, t)| *t).fold(0.0, f64::max),
            McQuery::Laplace { t, .. } => *t,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match self {
            McQuery::JointSurvival { pairs } => pairs.iter().all(|(_, t)| t.is_finite() && *t >= 0.0),
            McQuery::Laplace { t, lambda0, sets, lambda } => {
                t.is_finite()
                    && *t >= 0.0
                    && lambda0.is_finite()
                    && *lambda0 >= 0.0
                    && sets.len() == lambda.len()
                    && lambda.iter().all(|l| l.is_finite() && *l >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CbiError::InvalidInput("malformed Monte Carlo query".into()))
        }
    }

    fn score(&self, path: &PathRecord) -> f64 {
        match self {
            McQuery::JointSurvival { pairs } => {
                let sets: Vec<JumpSet> = pairs.iter().map(|(a, _)| a.clone()).collect();
                let stats = jump_statistics(path, &sets);
                let alive = pairs.iter().enumerate().all(|(i, (_, t))| stats.survives(i, *t));
                if alive {
                    1.0
                } else {
                    0.0
                }
            }
            McQuery::Laplace { t, lambda0, sets, lambda } => {
                let stats = jump_statistics(path, sets);
                let counts: f64 = lambda.iter().enumerate().map(|(i, l)| l * stats.count_at(i, *t) as f64).sum();
                (-lambda0 * path.final_state() - counts).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub n: usize,
    pub mean: f64,
    /// `3 s / √n`.
    pub half_width: f64,
    pub std_dev: f64,
    pub seed: u64,
}

impl McEstimate {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.half_width
    }
}

/// The reproducible random stream of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

enum Sampler {
    Exact(ExactSampler),
    Euler(EulerSampler),
}

impl Sampler {
    fn simulate(&self, x: f64, horizon: f64, rng: &mut ChaCha8Rng) -> Result<PathRecord> {
        match self {
            Sampler::Exact(s) => s.simulate(x, horizon, rng),
            Sampler::Euler(s) => s.simulate(x, horizon, rng),
        }
    }
}

/// Monte Carlo estimate over `n` independent paths, independent of the worker count.
pub fn mc_estimate(
    p: &CbiParams,
    x: f64,
    query: &McQuery,
    n: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<McEstimate> {
    if n < 100 {
        return Err(CbiError::InvalidInput(format!("n = {n} is below the minimum of 100 paths")));
    }
    query.check()?;
    check_start(x, query.horizon())?;
    let sampler = match scheme {
        Scheme::Exact => Sampler::Exact(ExactSampler::new(p)?),
        Scheme::Euler { dt, eps_trunc } => Sampler::Euler(EulerSampler::new(p, dt, eps_trunc)?),
    };
    let horizon = query.horizon();
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            sampler.simulate(x, horizon, &mut rng).map(|path| query.score(&path))
        })
        .collect::<Result<_>>()?;
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    let std_dev = var.sqrt();
    Ok(McEstimate {
        n,
        mean,
        half_width: 3.0 * std_dev / (n as f64).sqrt(),
        std_dev,
        seed,
    })
}
