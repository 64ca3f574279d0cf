use crate::error::{CbiError, Result};
use crate::measures::{quad, JumpSet};
use crate::mechanisms::{phi_into, psi, Censored, JointContext};
use crate::params::CbiParams;

use super::solver::{integrate, FlowSolution, SolverConfig};

fn check_nonneg(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|x| x.is_finite() && *x >= 0.0) {
        Ok(())
    } else {
        Err(CbiError::InvalidInput(format!("{name} must be finite and >= 0")))
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    let ordered = times.windows(2).all(|w| w[0] <= w[1]);
    if ordered && times.iter().all(|t| t.is_finite() && *t >= 0.0) {
        Ok(())
    } else {
        Err(CbiError::UnsortedTimes)
    }
}

/// `∂_t v = -φ(v)`, `v(0) = λ`, accumulating `∫ψ(v)`.
pub fn flow_v(p: &CbiParams, lambda: &[f64], horizon: f64, cfg: &SolverConfig) -> Result<FlowSolution> {
    p.require_admissible()?;
    if lambda.len() != p.dim {
        return Err(CbiError::DimensionMismatch(format!("λ has {} entries, d = {}", lambda.len(), p.dim)));
    }
    check_nonneg("λ", lambda)?;
    integrate(lambda, horizon, cfg, |v, dv| {
        phi_into(p, v, dv)?;
        for x in dv.iter_mut() {
            *x = -*x;
        }
        psi(p, v)
    })
}

/// Scalar flow `∂_t v = -φ₁^{(k)}(v, λ)`, `v(0) = λ0`, accumulating `∫ψ^{(k)}(v, λ)`.
pub fn flow_v_joint(
    p: &CbiParams,
    sets: &[JumpSet],
    lambda0: f64,
    lambda: &[f64],
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<FlowSolution> {
    p.require_admissible()?;
    let ctx = JointContext::new(p, sets)?;
    flow_v_joint_ctx(&ctx, lambda0, lambda, horizon, cfg)
}

/// As [`flow_v_joint`] with a prebuilt context.
pub fn flow_v_joint_ctx(
    ctx: &JointContext,
    lambda0: f64,
    lambda: &[f64],
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<FlowSolution> {
    check_nonneg("λ0", &[lambda0])?;
    check_nonneg("λ", lambda)?;
    if lambda.len() != ctx.set_count() {
        return Err(CbiError::DimensionMismatch(format!(
            "{} counter arguments for {} sets",
            lambda.len(),
            ctx.set_count()
        )));
    }
    integrate(&[lambda0], horizon, cfg, |v, dv| {
        dv[0] = -ctx.phi(v[0], lambda)?;
        ctx.psi(v[0], lambda)
    })
}

fn censored_flow(c: &Censored, init: &[f64], horizon: f64, cfg: &SolverConfig) -> Result<FlowSolution> {
    integrate(init, horizon, cfg, |v, dv| {
        c.phi_into(v, dv)?;
        for (x, m) in dv.iter_mut().zip(&c.mu_mass) {
            *x = m - *x;
        }
        c.psi(v)
    })
}

/// `∂_t ṽ_i = μ_i(A) - φ_i^{(A)}(ṽ)`, `ṽ(0) = 0`, accumulating `∫ψ^{(A)}(ṽ)`.
pub fn flow_v_marked(p: &CbiParams, a: &JumpSet, horizon: f64, cfg: &SolverConfig) -> Result<FlowSolution> {
    p.require_admissible()?;
    let c = Censored::new(p, a)?;
    censored_flow(&c, &vec![0.0; p.dim], horizon, cfg)
}

/// `∂_t v = μ(C) - φ^{(C)}(v)`, `v(0) = λ0`, accumulating `∫ψ^{(C)}(v)`.
pub fn flow_v_set(p: &CbiParams, c: &JumpSet, lambda0: f64, horizon: f64, cfg: &SolverConfig) -> Result<FlowSolution> {
    p.require_single("flow_v_set")?;
    p.require_admissible()?;
    check_nonneg("λ0", &[lambda0])?;
    let censored = Censored::new(p, c)?;
    censored_flow(&censored, &[lambda0], horizon, cfg)
}

/// Legs of the nested recursion for the joint survival function of first jump times.
#[derive(Debug, Clone)]
pub struct WChain {
    /// `legs[i]` is `w_{i+1}` on `[0, t_{i+1} - t_i]`.
    pub legs: Vec<FlowSolution>,
    /// `C_i = ⋃_{j ≥ i} A_j`.
    pub unions: Vec<JumpSet>,
    /// `ν(C_i)`.
    pub nu_masses: Vec<f64>,
    pub times: Vec<f64>,
}

impl WChain {
    /// `w_1(t_1)`.
    pub fn w1_at_t1(&self) -> f64 {
        self.legs[0].final_value()[0]
    }

    /// `∫_0^{t_i - t_{i-1}} (ψ^{(C_i)}(w_i(u)) + ν(C_i)) du` for each leg.
    pub fn leg_integrals(&self) -> Vec<f64> {
        self.legs
            .iter()
            .zip(&self.nu_masses)
            .map(|(leg, nu)| leg.final_psi_integral() + nu * leg.horizon())
            .collect()
    }
}

pub fn w_chain(p: &CbiParams, sets: &[JumpSet], times: &[f64], cfg: &SolverConfig) -> Result<WChain> {
    p.require_single("w_chain")?;
    p.require_admissible()?;
    if sets.len() != times.len() || sets.is_empty() {
        return Err(CbiError::InvalidInput("w_chain needs one time per set and at least one set".into()));
    }
    check_times(times)?;
    let k = sets.len();
    let mut unions = vec![JumpSet::empty(); k];
    let mut acc = JumpSet::empty();
    for i in (0..k).rev() {
        acc = acc.union(&sets[i]);
        unions[i] = acc.clone();
    }
    let mut legs: Vec<Option<FlowSolution>> = vec![None; k];
    let mut nu_masses = vec![0.0; k];
    let mut init = 0.0;
    for i in (0..k).rev() {
        let start = if i == 0 { 0.0 } else { times[i - 1] };
        let censored = Censored::new(p, &unions[i])?;
        nu_masses[i] = censored.nu_mass;
        let leg = censored_flow(&censored, &[init], times[i] - start, cfg)?;
        init = leg.final_value()[0];
        legs[i] = Some(leg);
    }
    Ok(WChain {
        legs: legs.into_iter().map(|l| l.expect("every leg solved")).collect(),
        unions,
        nu_masses,
        times: times.to_vec(),
    })
}

/// Backward recursion of effective Laplace arguments for multi-time transforms.
#[derive(Debug, Clone)]
pub struct YChain {
    pub y: Vec<Vec<f64>>,
    /// `legs[i]` is `v(·, y_{i+1})` on `[0, t_{i+1} - t_i]`.
    pub legs: Vec<FlowSolution>,
    pub times: Vec<f64>,
}

pub fn y_chain(p: &CbiParams, times: &[f64], lambdas: &[Vec<f64>], cfg: &SolverConfig) -> Result<YChain> {
    p.require_admissible()?;
    if times.len() != lambdas.len() || times.is_empty() {
        return Err(CbiError::InvalidInput("y_chain needs one λ per time and at least one time".into()));
    }
    check_times(times)?;
    let k = times.len();
    let mut y = vec![Vec::new(); k];
    let mut legs: Vec<Option<FlowSolution>> = vec![None; k];
    let mut carry = vec![0.0; p.dim];
    for i in (0..k).rev() {
        if lambdas[i].len() != p.dim {
            return Err(CbiError::DimensionMismatch(format!("λ_{} has the wrong length", i + 1)));
        }
        check_nonneg("λ_i", &lambdas[i])?;
        y[i] = lambdas[i].iter().zip(&carry).map(|(l, c)| l + c).collect();
        let start = if i == 0 { 0.0 } else { times[i - 1] };
        let leg = flow_v(p, &y[i], times[i] - start, cfg)?;
        carry = leg.final_value();
        legs[i] = Some(leg);
    }
    Ok(YChain {
        y,
        legs: legs.into_iter().map(|l| l.expect("every leg solved")).collect(),
        times: times.to_vec(),
    })
}

/// The piecewise function `g(s) = v(t_i - s, y_i)` for `s ∈ (t_{i-1}, t_i]`.
#[derive(Debug, Clone)]
pub struct GPiecewise {
    pub chain: YChain,
    pub lambdas: Vec<f64>,
    params: CbiParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub worst_s: f64,
    pub points: usize,
}

impl GPiecewise {
    fn leg_index(&self, s: f64) -> usize {
        // first i with s <= t_i
        self.chain.times.partition_point(|&t| t < s).min(self.chain.times.len() - 1)
    }

    pub fn eval(&self, s: f64) -> f64 {
        let i = self.leg_index(s);
        self.chain.legs[i].scalar(self.chain.times[i] - s)
    }

    /// `lim_{u↓s} g(u)`.
    pub fn right_limit(&self, s: f64) -> f64 {
        let times = &self.chain.times;
        let i = times.partition_point(|&t| t <= s);
        if i >= times.len() {
            return 0.0;
        }
        self.chain.legs[i].scalar(times[i] - s)
    }

    /// `∫_a^b φ(g(u)) du` on a range inside one leg.
    fn phi_integral(&self, a: f64, b: f64, leg: usize) -> f64 {
        let t = self.chain.times[leg];
        let sol = &self.chain.legs[leg];
        let f = |u: f64| {
            let v = sol.scalar(t - u);
            let mut out = [0.0];
            phi_into(&self.params, &[v], &mut out).map(|_| out[0]).unwrap_or(f64::NAN)
        };
        quad::integrate(f, a, b, 1e-12, 1e-14).value
    }

    /// `|g(s) + ∫_s^{t_k} φ(g(u)) du - Σ λ_i 1_{[0,t_i]}(s)|` on `points` uniform grid points.
    pub fn residual(&self, points: usize) -> ResidualReport {
        let times = &self.chain.times;
        let tk = *times.last().expect("nonempty");
        let n = points.max(2);
        let grid: Vec<f64> = (0..n).map(|j| tk * j as f64 / (n - 1) as f64).collect();
        // split the grid cells at the leg boundaries so every quadrature range is smooth
        let mut tail = vec![0.0; n];
        for j in (0..n - 1).rev() {
            let (a, b) = (grid[j], grid[j + 1]);
            let mut cuts = vec![a];
            cuts.extend(times.iter().copied().filter(|&t| a < t && t < b));
            cuts.push(b);
            let piece: f64 = cuts
                .windows(2)
                .map(|w| self.phi_integral(w[0], w[1], self.leg_index(0.5 * (w[0] + w[1]))))
                .sum();
            tail[j] = tail[j + 1] + piece;
        }
        let mut worst = (0.0, 0.0);
        for (j, &s) in grid.iter().enumerate() {
            let target: f64 = times.iter().zip(&self.lambdas).filter(|(&t, _)| s <= t).map(|(_, l)| l).sum();
            let r = (self.eval(s) + tail[j] - target).abs();
            if !(r <= worst.0) {
                worst = (r, s);
            }
        }
        ResidualReport {
            max_residual: worst.0,
            worst_s: worst.1,
            points: n,
        }
    }
}

pub fn g_piecewise(p: &CbiParams, times: &[f64], lambdas: &[f64], cfg: &SolverConfig) -> Result<GPiecewise> {
    p.require_single("g_piecewise")?;
    let is_cb = p.beta[0] == 0.0 && p.nu.is_zero();
    if !is_cb {
        return Err(CbiError::PreconditionViolated("g_piecewise needs β = 0 and ν = 0".into()));
    }
    let strictly = times.windows(2).all(|w| w[0] < w[1]) && times.first().is_some_and(|&t| t > 0.0);
    if !strictly {
        return Err(CbiError::UnsortedTimes);
    }
    let lams: Vec<Vec<f64>> = lambdas.iter().map(|&l| vec![l]).collect();
    let chain = y_chain(p, times, &lams, cfg)?;
    Ok(GPiecewise {
        chain,
        lambdas: lambdas.to_vec(),
        params: p.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{LevyMeasure, MeasureComponent, VectorMeasure};
    use crate::mechanisms::active_union;
    use proptest::prelude::*;

    fn set(a: f64, b: f64) -> JumpSet {
        JumpSet::interval(a, b).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn tight() -> SolverConfig {
        SolverConfig::with_tolerances(1e-11, 1e-13)
    }

    fn atom_params(b: f64) -> CbiParams {
        CbiParams::single(0.0, 0.0, b, LevyMeasure::zero(), LevyMeasure::atom(1.0, 1.0).unwrap()).unwrap()
    }

    fn feller() -> CbiParams {
        CbiParams::single(1.0, 0.0, 0.0, LevyMeasure::zero(), LevyMeasure::zero()).unwrap()
    }

    fn rich_params() -> CbiParams {
        let mu = LevyMeasure::new([
            MeasureComponent::atom(0.8, 0.6).unwrap(),
            MeasureComponent::atom(2.2, 0.3).unwrap(),
            MeasureComponent::exp_density(1.4, 0.7).unwrap(),
            MeasureComponent::tempered_power_law(0.5, 1.0, 0.3).unwrap(),
        ])
        .unwrap();
        let nu = LevyMeasure::new([
            MeasureComponent::atom(1.5, 0.4).unwrap(),
            MeasureComponent::exp_density(0.9, 0.5).unwrap(),
        ])
        .unwrap();
        CbiParams::single(0.5, 0.3, -0.4, nu, mu).unwrap()
    }

    #[test]
    fn zero_argument_is_a_fixed_point() {
        let sol = flow_v(&rich_params(), &[0.0], 2.0, &cfg()).unwrap();
        assert_eq!(sol.final_value(), vec![0.0]);
        assert_eq!(sol.final_psi_integral(), 0.0);
    }

    #[test]
    fn closed_form_flows() {
        let p = CbiParams::single(0.0, 0.0, -0.5, LevyMeasure::zero(), LevyMeasure::zero()).unwrap();
        let v = flow_v(&p, &[2.0], 1.0, &cfg()).unwrap().final_value()[0];
        assert!((v - 2.0 * (-0.5f64).exp()).abs() < 1e-8);
        let v = flow_v(&feller(), &[1.0], 1.0, &cfg()).unwrap().final_value()[0];
        assert!((v - 0.5).abs() < 1e-8);
    }

    #[test]
    fn joint_flow_examples() {
        let p = rich_params();
        let sets = [set(0.5, 1.0)];
        let a = flow_v_joint(&p, &sets, 1.2, &[0.0], 1.5, &tight()).unwrap().final_value()[0];
        let b = flow_v(&p, &[1.2], 1.5, &tight()).unwrap().final_value()[0];
        assert!((a - b).abs() < 1e-10);
        let v = flow_v_joint(&atom_params(0.0), &[set(0.5, 1.5)], 0.0, &[50.0], 1.0, &tight())
            .unwrap()
            .final_value()[0];
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-6);
        let s = flow_v_joint(&p, &sets, 0.7, &[3.0], 0.0, &cfg()).unwrap();
        assert_eq!(s.final_value(), vec![0.7]);
    }

    #[test]
    fn marked_flow_examples() {
        let p = CbiParams::single(0.7, 0.2, -0.3, LevyMeasure::zero(), LevyMeasure::zero()).unwrap();
        let s = flow_v_marked(&p, &set(0.5, 1.5), 2.0, &cfg()).unwrap();
        assert_eq!(s.final_value(), vec![0.0]);
        let v = flow_v_marked(&atom_params(0.0), &set(0.5, 1.5), 1.0, &tight()).unwrap().final_value()[0];
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
        let v = flow_v_marked(&atom_params(1.0), &set(0.5, 1.5), 1.0, &tight()).unwrap().final_value()[0];
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn set_flow_examples() {
        let p = rich_params();
        let c = set(0.5, 2.5);
        let a = flow_v_set(&p, &c, 0.0, 1.3, &tight()).unwrap().final_value()[0];
        let b = flow_v_marked(&p, &c, 1.3, &tight()).unwrap().final_value()[0];
        assert_eq!(a, b);
        let a = flow_v_set(&p, &JumpSet::empty(), 0.9, 1.3, &tight()).unwrap().final_value()[0];
        let b = flow_v(&p, &[0.9], 1.3, &tight()).unwrap().final_value()[0];
        assert!((a - b).abs() < 1e-12);
        let l0 = 1.0 - (-0.5f64).exp();
        let v = flow_v_set(&atom_params(0.0), &set(0.5, 1.5), l0, 0.5, &tight()).unwrap().final_value()[0];
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn w_chain_examples() {
        let p = atom_params(0.0);
        let a = set(0.5, 1.5);
        let one = w_chain(&p, std::slice::from_ref(&a), &[1.0], &tight()).unwrap();
        let marked = flow_v_marked(&p, &a, 1.0, &tight()).unwrap();
        assert_eq!(one.w1_at_t1(), marked.final_value()[0]);
        let two = w_chain(&p, &[a.clone(), a.clone()], &[0.5, 1.0], &tight()).unwrap();
        assert!((two.w1_at_t1() - (1.0 - (-1.0f64).exp())).abs() < 1e-10);

        let q = rich_params();
        let sets = [set(0.5, 1.0), set(2.0, 3.0), set(0.2, 0.4)];
        let same = w_chain(&q, &sets, &[0.8, 0.8, 0.8], &tight()).unwrap();
        let union = sets.iter().fold(JumpSet::empty(), |a, s| a.union(s));
        let direct = flow_v_marked(&q, &union, 0.8, &tight()).unwrap();
        assert!((same.w1_at_t1() - direct.final_value()[0]).abs() < 1e-9);
        assert!(matches!(w_chain(&q, &sets, &[0.8, 0.5, 0.9], &cfg()), Err(CbiError::UnsortedTimes)));
    }

    #[test]
    fn y_chain_examples() {
        let p = feller();
        let c = y_chain(&p, &[1.0], &[vec![0.4]], &cfg()).unwrap();
        assert_eq!(c.y, vec![vec![0.4]]);
        let c = y_chain(&p, &[1.0, 1.0], &[vec![0.4], vec![0.3]], &cfg()).unwrap();
        assert!((c.y[0][0] - 0.7).abs() < 1e-15);
        let c = y_chain(&p, &[1.0, 2.0], &[vec![1.0], vec![1.0]], &tight()).unwrap();
        assert!((c.y[0][0] - 1.5).abs() < 1e-11);
        assert!(matches!(
            y_chain(&p, &[2.0, 1.0], &[vec![1.0], vec![1.0]], &cfg()),
            Err(CbiError::UnsortedTimes)
        ));
    }

    #[test]
    fn g_function_examples() {
        let p = CbiParams::single(0.8, 0.0, -0.3, LevyMeasure::zero(), LevyMeasure::atom(1.2, 0.5).unwrap()).unwrap();
        let g = g_piecewise(&p, &[1.5], &[0.9], &tight()).unwrap();
        let v = flow_v(&p, &[0.9], 1.5 - 0.4, &tight()).unwrap().final_value()[0];
        assert!((g.eval(0.4) - v).abs() < 1e-9);
        let times = [0.5, 1.2, 2.0];
        let lams = [0.4, 1.1, 0.7];
        let g = g_piecewise(&p, &times, &lams, &cfg()).unwrap();
        assert_eq!(g.eval(2.0), 0.7);
        for (i, &t) in times.iter().enumerate() {
            let jump = g.eval(t) - g.right_limit(t);
            assert!((jump - lams[i]).abs() < 1e-8, "jump at {t}: {jump}");
        }
        let r = g.residual(1000);
        assert!(r.max_residual <= 1e-7, "{r:?}");
        assert!(g_piecewise(&rich_params(), &times, &lams, &cfg()).is_err());
        assert!(g_piecewise(&p, &[0.5, 0.5], &[1.0, 1.0], &cfg()).is_err());
    }

    #[test]
    fn probe_gap_shrinks() {
        let p = atom_params(0.0);
        let sets = [set(0.5, 1.5)];
        let limit = flow_v_set(&p, &active_union(&sets, &[1.0]), 0.0, 1.0, &tight()).unwrap().final_value()[0];
        let mut prev = f64::INFINITY;
        for s in [10.0, 100.0, 1000.0, 10000.0] {
            let v = flow_v_joint(&p, &sets, 0.0, &[s], 1.0, &tight()).unwrap().final_value()[0];
            let gap = limit - v;
            assert!(gap >= -1e-12 && gap <= prev + 1e-12);
            prev = gap;
        }
        assert!(prev < 1e-4);
    }

    fn random_params(d: usize, seed: &[f64]) -> CbiParams {
        let mut it = seed.iter().copied().cycle();
        let mut next = move || it.next().unwrap();
        let c: Vec<f64> = (0..d).map(|_| next()).collect();
        let beta: Vec<f64> = (0..d).map(|_| next()).collect();
        let b: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { next() * 2.0 - 1.0 } else { next() * 0.5 }).collect())
            .collect();
        let atom = |next: &mut dyn FnMut() -> f64| -> (Vec<f64>, f64) {
            let mut loc: Vec<f64> = (0..d).map(|_| (next() * 2.0).max(0.0)).collect();
            loc[0] += 0.1;
            (loc, next())
        };
        let nu_atoms: Vec<_> = (0..2).map(|_| atom(&mut next)).collect();
        let nu = VectorMeasure::from_atoms(d, &nu_atoms).unwrap();
        let mu = (0..d)
            .map(|_| {
                let atoms: Vec<_> = (0..2).map(|_| atom(&mut next)).collect();
                VectorMeasure::from_atoms(d, &atoms).unwrap()
            })
            .collect();
        CbiParams::new(c, beta, b, nu, mu).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn semigroup_property(d in 1usize..4, seed in prop::collection::vec(0.0f64..1.0, 11),
                              t in 0.0f64..1.5, s in 0.0f64..1.5, lam in prop::collection::vec(0.0f64..3.0, 3)) {
            let p = random_params(d, &seed);
            let lambda = &lam[..d];
            let whole = flow_v(&p, lambda, t + s, &cfg()).unwrap().final_value();
            let mid = flow_v(&p, lambda, s, &cfg()).unwrap().final_value();
            let split = flow_v(&p, &mid, t, &cfg()).unwrap().final_value();
            for (a, b) in whole.iter().zip(&split) {
                prop_assert!((a - b).abs() <= 1e-7, "{:?} vs {:?}", whole, split);
            }
            let sol = flow_v(&p, lambda, t + s, &cfg()).unwrap();
            for j in 0..=20 {
                let u = (t + s) * j as f64 / 20.0;
                prop_assert!(sol.value(u).iter().all(|&x| x >= 0.0));
            }
        }

        #[test]
        fn comparison_and_monotonicity(l in 0.0f64..3.0, dl in 0.0f64..1.0, t in 0.1f64..2.0,
                                        l1 in 0.0f64..5.0, dl1 in 0.0f64..2.0) {
            let p = rich_params();
            let a = flow_v(&p, &[l], t, &cfg()).unwrap().final_value()[0];
            let b = flow_v(&p, &[l + dl], t, &cfg()).unwrap().final_value()[0];
            prop_assert!(a <= b + 1e-9);
            let sets = [set(0.5, 1.0), set(2.0, 3.0)];
            let j1 = flow_v_joint(&p, &sets, l, &[l1, 0.5], t, &cfg()).unwrap().final_value()[0];
            let j2 = flow_v_joint(&p, &sets, l, &[l1 + dl1, 0.5], t, &cfg()).unwrap().final_value()[0];
            prop_assert!(j1 <= j2 + 1e-9);
            let cap = flow_v_set(&p, &active_union(&sets, &[l1 + dl1, 0.5]), l, t, &cfg()).unwrap().final_value()[0];
            prop_assert!(j2 <= cap + 1e-9);
        }
    }
}
