//! Admissible parameter tuples, validation, jump censoring and counter lifting.

use serde::Serialize;

use crate::error::{CbiError, Result};
use crate::measures::{JumpSet, LevyMeasure, NormKernel, VectorMeasure, VectorPiece};

/// Default cap on the number of marked sets in joint mechanisms and lifting (`2^k` cells).
pub const MAX_SETS: usize = 12;

/// `(d, c, β, B, ν, μ)`; marked sets in dimension `d > 1` are sets of jump norms.
#[derive(Debug, Clone, PartialEq)]
pub struct CbiParams {
    pub dim: usize,
    pub c: Vec<f64>,
    pub beta: Vec<f64>,
    /// Row-major `d × d` drift matrix.
    pub b: Vec<Vec<f64>>,
    pub nu: VectorMeasure,
    pub mu: Vec<VectorMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    /// Computed integral or extreme entry backing the verdict, when there is one.
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub first_moment_ok: bool,
}

impl ValidationReport {
    /// All admissibility conditions hold (the first moment condition is tracked separately).
    pub fn admissible(&self) -> bool {
        self.checks.iter().filter(|c| c.name != "first_moment").all(|c| c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearCoefficients {
    pub b_tilde: Vec<Vec<f64>>,
    pub beta_tilde: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteReport {
    pub finite: bool,
    /// `ν(A) + Σ μ_i(A)`, possibly infinite.
    pub total_mass: f64,
    /// The sufficient condition: `0` is not in the closure of `A`.
    pub bounded_away_from_zero: bool,
}

impl CbiParams {
    /// Checks shapes only; admissibility is the business of [`validate`].
    pub fn new(c: Vec<f64>, beta: Vec<f64>, b: Vec<Vec<f64>>, nu: VectorMeasure, mu: Vec<VectorMeasure>) -> Result<Self> {
        let dim = c.len();
        if dim == 0 {
            return Err(CbiError::DimensionMismatch("dimension must be at least 1".into()));
        }
        let shape_ok = beta.len() == dim
            && b.len() == dim
            && b.iter().all(|row| row.len() == dim)
            && mu.len() == dim
            && nu.dim() == dim
            && mu.iter().all(|m| m.dim() == dim);
        if !shape_ok {
            return Err(CbiError::DimensionMismatch(format!(
                "c has {dim} entries but beta, B, nu or mu disagree"
            )));
        }
        let finite = c.iter().chain(&beta).chain(b.iter().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(CbiError::InvalidInput("c, beta and B must be finite".into()));
        }
        Ok(Self { dim, c, beta, b, nu, mu })
    }

    /// Single-type parameters `(1, c, β, B, ν, μ)`.
    pub fn single(c: f64, beta: f64, b: f64, nu: LevyMeasure, mu: LevyMeasure) -> Result<Self> {
        Self::new(
            vec![c],
            vec![beta],
            vec![vec![b]],
            VectorMeasure::from_scalar(nu),
            vec![VectorMeasure::from_scalar(mu)],
        )
    }

    pub fn scalar_nu(&self) -> Option<LevyMeasure> {
        self.nu.scalar()
    }

    pub fn scalar_mu(&self) -> Option<LevyMeasure> {
        self.mu[0].scalar()
    }

    pub fn require_single(&self, what: &str) -> Result<()> {
        if self.dim == 1 {
            Ok(())
        } else {
            Err(CbiError::DimensionMismatch(format!("{what} needs single-type parameters, got d = {}", self.dim)))
        }
    }

    /// Fails unless every admissibility condition holds.
    pub fn require_admissible(&self) -> Result<ValidationReport> {
        let report = validate(self);
        if report.admissible() {
            Ok(report)
        } else {
            Err(CbiError::NotAdmissible(report.failures().join(", ")))
        }
    }

    /// Fails unless the parameters are admissible and the first moment condition holds.
    pub fn require_first_moment(&self) -> Result<()> {
        let report = self.require_admissible()?;
        if report.first_moment_ok {
            Ok(())
        } else {
            Err(CbiError::MomentConditionViolated)
        }
    }
}

fn check(name: &str, passed: bool, value: Option<f64>, detail: impl Into<String>) -> ConditionCheck {
    ConditionCheck {
        name: name.to_string(),
        passed,
        value,
        detail: detail.into(),
    }
}

fn finite_integral(name: &str, value: Result<f64>, what: &str) -> ConditionCheck {
    match value {
        Ok(v) if v.is_finite() => check(name, true, Some(v), format!("{what} = {v:e}")),
        Ok(v) => check(name, false, Some(v), format!("{what} is infinite")),
        Err(e) => check(name, false, None, format!("{what} diverges: {e}")),
    }
}

pub fn validate(p: &CbiParams) -> ValidationReport {
    let d = p.dim;
    let mut checks = vec![check("dimension", d >= 1, Some(d as f64), format!("d = {d}"))];

    let c_min = p.c.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(check("diffusion", c_min >= 0.0, Some(c_min), "c has nonnegative entries"));

    let beta_min = p.beta.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(check("immigration_drift", beta_min >= 0.0, Some(beta_min), "beta has nonnegative entries"));

    let off_min = (0..d)
        .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| p.b[i][j])
        .fold(f64::INFINITY, f64::min);
    let off_ok = d == 1 || off_min >= 0.0;
    checks.push(check(
        "drift_matrix",
        off_ok,
        (d > 1).then_some(off_min),
        "off-diagonal entries of B are nonnegative",
    ));

    checks.push(finite_integral(
        "immigration_measure",
        p.nu.integrate_norm(NormKernel::MinOne),
        "∫(1∧‖r‖)ν(dr)",
    ));

    for (i, mu_i) in p.mu.iter().enumerate() {
        let value = mu_i.integrate_norm(NormKernel::MinSquare).and_then(|v| {
            (0..d)
                .filter(|&j| j != i)
                .try_fold(v, |acc, j| Ok(acc + mu_i.coord_min_one(j)?))
        });
        checks.push(finite_integral(
            &format!("branching_measure_{}", i + 1),
            value,
            &format!("∫(‖z‖∧‖z‖² + Σ_(j≠{0}) 1∧z_j)μ_{0}(dz)", i + 1),
        ));
    }

    let moment = finite_integral(
        "first_moment",
        p.nu.integrate_norm(NormKernel::Tail),
        "∫‖r‖1{‖r‖≥1}ν(dr)",
    );
    let first_moment_ok = moment.passed;
    checks.push(moment);
    ValidationReport { checks, first_moment_ok }
}

pub fn effective_linear(p: &CbiParams) -> Result<LinearCoefficients> {
    if !validate(p).first_moment_ok {
        return Err(CbiError::MomentConditionViolated);
    }
    let d = p.dim;
    let mut b_tilde = p.b.clone();
    for (i, row) in b_tilde.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry += if i == j {
                p.mu[j].coord_excess(i)?
            } else {
                p.mu[j].coord_moment(i)?
            };
        }
    }
    let beta_tilde = (0..d)
        .map(|i| Ok(p.beta[i] + p.nu.coord_moment(i)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(LinearCoefficients { b_tilde, beta_tilde })
}

pub fn finite_on(p: &CbiParams, a: &JumpSet) -> FiniteReport {
    let total_mass = p.nu.mass_norm_or_inf(a) + p.mu.iter().map(|m| m.mass_norm_or_inf(a)).sum::<f64>();
    FiniteReport {
        finite: total_mass.is_finite(),
        total_mass,
        bounded_away_from_zero: !a.touches_zero(),
    }
}

pub(crate) fn require_finite(p: &CbiParams, a: &JumpSet) -> Result<()> {
    let r = finite_on(p, a);
    if r.finite {
        Ok(())
    } else {
        Err(CbiError::InfiniteTotalMass(format!("set {a}")))
    }
}

/// Parameters of the process with every jump of norm in `a` removed.
pub fn restrict_for_jumps(p: &CbiParams, a: &JumpSet) -> Result<CbiParams> {
    require_finite(p, a)?;
    let keep = a.complement();
    let mut b = p.b.clone();
    for (i, row) in b.iter_mut().enumerate() {
        row[i] -= p.mu[i].restrict_norm(a).coord_min_one(i)?;
    }
    Ok(CbiParams {
        dim: p.dim,
        c: p.c.clone(),
        beta: p.beta.clone(),
        b,
        nu: p.nu.restrict_norm(&keep),
        mu: p.mu.iter().map(|m| m.restrict_norm(&keep)).collect(),
    })
}

/// The partition cells `A^ℓ`, indexed by the bit mask of sets containing the cell.
pub fn partition_cells(sets: &[JumpSet]) -> Vec<(usize, JumpSet)> {
    let k = sets.len();
    (0..1usize << k)
        .filter_map(|mask| {
            let cell = sets.iter().enumerate().fold(JumpSet::full(), |acc, (i, s)| {
                if mask >> i & 1 == 1 {
                    acc.intersect(s)
                } else {
                    acc.intersect(&s.complement())
                }
            });
            (!cell.is_empty()).then_some((mask, cell))
        })
        .collect()
}

pub(crate) fn check_set_count(k: usize, limit: usize) -> Result<()> {
    if k > limit {
        Err(CbiError::TooManySets { got: k, limit })
    } else {
        Ok(())
    }
}

/// `(k+1)`-type parameters of the process together with its jump counters on `sets`.
pub fn lift_with_counters(p: &CbiParams, sets: &[JumpSet]) -> Result<CbiParams> {
    lift_with_counters_limit(p, sets, MAX_SETS)
}

pub fn lift_with_counters_limit(p: &CbiParams, sets: &[JumpSet], limit: usize) -> Result<CbiParams> {
    p.require_single("counter lifting")?;
    check_set_count(sets.len(), limit)?;
    for s in sets {
        require_finite(p, s)?;
    }
    let k = sets.len();
    let dim = k + 1;
    let cells = partition_cells(sets);
    let lift = |m: &LevyMeasure| -> Result<VectorMeasure> {
        let pieces = cells
            .iter()
            .map(|(mask, cell)| {
                let mut offset = vec![0.0; dim];
                for (i, o) in offset.iter_mut().enumerate().skip(1) {
                    *o = (mask >> (i - 1) & 1) as f64;
                }
                VectorPiece {
                    measure: m.restrict(cell),
                    axis: 0,
                    offset,
                }
            })
            .collect();
        VectorMeasure::from_pieces(dim, pieces)
    };
    let nu = lift(&p.scalar_nu().expect("single-type"))?;
    let mut mu = vec![lift(&p.scalar_mu().expect("single-type"))?];
    mu.extend((1..dim).map(|_| VectorMeasure::zero(dim)));
    let mut b = vec![vec![0.0; dim]; dim];
    b[0][0] = p.b[0][0];
    let mut c = vec![0.0; dim];
    c[0] = p.c[0];
    let mut beta = vec![0.0; dim];
    beta[0] = p.beta[0];
    CbiParams::new(c, beta, b, nu, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Kernel, MeasureComponent};
    use crate::testutil::tanh_sinh;
    use proptest::prelude::*;

    fn set(a: f64, b: f64) -> JumpSet {
        JumpSet::interval(a, b).unwrap()
    }

    fn single_mu(mu: LevyMeasure, b: f64) -> CbiParams {
        CbiParams::single(0.0, 0.0, b, LevyMeasure::zero(), mu).unwrap()
    }

    #[test]
    fn feller_diffusion_is_admissible() {
        let p = CbiParams::single(1.0, 0.0, -1.0, LevyMeasure::zero(), LevyMeasure::zero()).unwrap();
        let r = validate(&p);
        assert!(r.all_passed(), "{r:?}");
        assert!(r.first_moment_ok);
    }

    #[test]
    fn negative_off_diagonal_fails() {
        let p = CbiParams::new(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![vec![0.0, -0.1], vec![0.0, 0.0]],
            VectorMeasure::zero(2),
            vec![VectorMeasure::zero(2), VectorMeasure::zero(2)],
        )
        .unwrap();
        let r = validate(&p);
        assert!(!r.admissible());
        assert_eq!(r.failures(), vec!["drift_matrix"]);
        assert!(p.require_admissible().is_err());
    }

    #[test]
    fn tempered_immigration_moment_condition() {
        let nu = LevyMeasure::tempered_power_law(0.5, 1.0, 1.0).unwrap();
        let p = CbiParams::single(0.0, 0.0, 0.0, nu, LevyMeasure::zero()).unwrap();
        let r = validate(&p);
        assert!(r.all_passed());
        let got = r.checks.iter().find(|c| c.name == "first_moment").unwrap().value.unwrap();
        let oracle = tanh_sinh(&|z: f64| z.powf(-0.5) * (-z).exp(), 1.0, f64::INFINITY);
        assert!((got - oracle).abs() < 1e-12 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn effective_linear_examples() {
        let p = single_mu(LevyMeasure::atom(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(effective_linear(&p).unwrap().b_tilde, vec![vec![0.0]]);
        let p = single_mu(LevyMeasure::atom(2.0, 0.5).unwrap(), 0.0);
        assert_eq!(effective_linear(&p).unwrap().b_tilde, vec![vec![0.5]]);
        let p = CbiParams::single(0.0, 0.0, 0.0, LevyMeasure::atom(3.0, 2.0).unwrap(), LevyMeasure::zero()).unwrap();
        assert_eq!(effective_linear(&p).unwrap().beta_tilde, vec![6.0]);
    }

    #[test]
    fn restriction_examples() {
        let p = single_mu(LevyMeasure::atom(1.0, 1.0).unwrap(), 0.0);
        let r = restrict_for_jumps(&p, &set(0.5, 1.5)).unwrap();
        assert_eq!(r.b, vec![vec![-1.0]]);
        assert!(r.mu[0].is_zero());
        assert_eq!(restrict_for_jumps(&p, &JumpSet::empty()).unwrap(), p);

        let (a, bm) = (0.3, 0.7);
        let mu = LevyMeasure::new([MeasureComponent::atom(1.0, a).unwrap(), MeasureComponent::atom(2.0, bm).unwrap()])
            .unwrap();
        let r = restrict_for_jumps(&single_mu(mu, 0.0), &set(1.5, 2.5)).unwrap();
        assert!((r.b[0][0] + bm).abs() < 1e-15);
        assert_eq!(r.scalar_mu().unwrap().atoms().unwrap(), vec![(1.0, a)]);
        assert!(validate(&r).all_passed());
    }

    #[test]
    fn finiteness_examples() {
        let p = single_mu(LevyMeasure::tempered_power_law(0.5, 1.0, 1.0).unwrap(), 0.0);
        let r = finite_on(&p, &set(0.0, 1.0));
        assert!(!r.finite && !r.bounded_away_from_zero);
        let r = finite_on(&p, &set(0.1, f64::INFINITY));
        assert!(r.finite && r.bounded_away_from_zero);
        assert!(matches!(restrict_for_jumps(&p, &set(0.0, 1.0)), Err(CbiError::InfiniteTotalMass(_))));
        let p = single_mu(LevyMeasure::atom(1.0, 1.0).unwrap(), 0.0);
        let r = finite_on(&p, &set(0.0, 1.0));
        assert!(r.finite && !r.bounded_away_from_zero);
        assert_eq!(r.total_mass, 1.0);
    }

    #[test]
    fn lifting_examples() {
        let p = single_mu(LevyMeasure::atom(1.0, 1.0).unwrap(), 0.0);
        let l = lift_with_counters(&p, &[set(0.5, 1.5)]).unwrap();
        assert_eq!(l.dim, 2);
        assert_eq!(l.mu[0].vector_atoms().unwrap(), vec![(vec![1.0, 1.0], 1.0)]);
        assert!(l.nu.is_zero() && l.mu[1].is_zero());

        let l = lift_with_counters(&p, &[set(0.5, 1.5), set(0.5, 1.5)]).unwrap();
        assert_eq!(l.mu[0].vector_atoms().unwrap(), vec![(vec![1.0, 1.0, 1.0], 1.0)]);

        let l = lift_with_counters(&p, &[set(2.0, 3.0)]).unwrap();
        assert_eq!(l.mu[0].vector_atoms().unwrap(), vec![(vec![1.0, 0.0], 1.0)]);
        assert!(validate(&l).all_passed());

        let many = vec![set(1.0, 2.0); 13];
        assert!(matches!(lift_with_counters(&p, &many), Err(CbiError::TooManySets { got: 13, limit: 12 })));
    }

    #[test]
    fn lifted_density_parameters_are_admissible() {
        let mu = LevyMeasure::new([
            MeasureComponent::exp_density(1.5, 0.8).unwrap(),
            MeasureComponent::tempered_power_law(0.5, 1.0, 0.3).unwrap(),
        ])
        .unwrap();
        let nu = LevyMeasure::exp_density(0.7, 1.1).unwrap();
        let p = CbiParams::single(0.4, 0.2, -0.3, nu, mu).unwrap();
        let l = lift_with_counters(&p, &[set(0.5, 2.0), set(1.0, f64::INFINITY)]).unwrap();
        let r = validate(&l);
        assert!(r.all_passed(), "{r:?}");
        // total mass of each lifted measure on the cells covering a set equals the scalar mass
        let scalar = p.scalar_mu().unwrap().mass(&set(0.5, 2.0)).unwrap();
        let lifted: f64 = l.mu[0]
            .pieces()
            .iter()
            .filter(|pc| pc.offset[1] == 1.0)
            .map(|pc| pc.measure.total_mass().unwrap())
            .sum();
        assert!((scalar - lifted).abs() < 1e-13);
    }

    fn arb_atoms() -> impl Strategy<Value = LevyMeasure> {
        prop::collection::vec((1u32..40, 0.0f64..2.0), 1..5).prop_map(|atoms| {
            LevyMeasure::new(atoms.into_iter().map(|(z, w)| MeasureComponent::atom(f64::from(z) * 0.1, w).unwrap()))
                .unwrap()
        })
    }

    fn arb_set() -> impl Strategy<Value = JumpSet> {
        prop::collection::vec((0u32..40, 1u32..15), 0..3).prop_map(|raw| {
            JumpSet::from_intervals(raw.into_iter().map(|(a, l)| (f64::from(a) * 0.1, f64::from(a + l) * 0.1))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn double_restriction_censors_once(mu in arb_atoms(), nu in arb_atoms(), a in arb_set(), s in arb_set(), b in -2.0f64..2.0) {
            let p = CbiParams::single(0.0, 0.1, b, nu, mu).unwrap();
            let once = restrict_for_jumps(&p, &a).unwrap();
            let twice = restrict_for_jumps(&once, &a).unwrap();
            for k in [Kernel::Mass, Kernel::Identity, Kernel::Compensated(0.8)] {
                let x = once.scalar_mu().unwrap().integrate(k, &s).unwrap();
                let y = twice.scalar_mu().unwrap().integrate(k, &s).unwrap();
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                let x = once.scalar_nu().unwrap().integrate(k, &s).unwrap();
                let y = twice.scalar_nu().unwrap().integrate(k, &s).unwrap();
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn censoring_cannot_increase_effective_drift(mu in arb_atoms(), a in arb_set(), b in -2.0f64..2.0) {
            let p = single_mu(mu, b);
            let full = effective_linear(&p).unwrap().b_tilde[0][0];
            let cut = effective_linear(&restrict_for_jumps(&p, &a).unwrap()).unwrap().b_tilde[0][0];
            prop_assert!(cut <= full + 1e-14);
        }
    }
}
