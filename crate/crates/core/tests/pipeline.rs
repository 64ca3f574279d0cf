use cbi_core::laws::{laplace_single_time, survival_first_jump, survival_joint, survival_same_time};
use cbi_core::measures::{JumpSet, LevyMeasure, MeasureComponent};
use cbi_core::odeflow::SolverConfig;
use cbi_core::oracle::{closed_form_survival, ctmc_survival, CatalogId, LatticeSpec};
use cbi_core::params::{validate, CbiParams};
use cbi_core::simkit::{mc_estimate, McQuery, Scheme};
use cbi_core::CbiError;
use proptest::prelude::*;

fn set(a: f64, b: f64) -> JumpSet {
    JumpSet::interval(a, b).unwrap()
}

fn cfg() -> SolverConfig {
    SolverConfig::with_tolerances(1e-10, 1e-12)
}

fn lattice_params() -> CbiParams {
    let mu = LevyMeasure::new([MeasureComponent::atom(1.0, 0.8).unwrap(), MeasureComponent::atom(2.0, 0.4).unwrap()])
        .unwrap();
    CbiParams::single(0.0, 0.0, 1.2, LevyMeasure::atom(1.0, 0.7).unwrap(), mu).unwrap()
}

fn tempered() -> CbiParams {
    let mu = LevyMeasure::new([
        MeasureComponent::exp_density(1.5, 0.6).unwrap(),
        MeasureComponent::tempered_power_law(0.4, 1.5, 0.3).unwrap(),
    ])
    .unwrap();
    CbiParams::single(0.3, 0.4, 0.2, LevyMeasure::exp_density(2.0, 0.5).unwrap(), mu).unwrap()
}

#[test]
fn formula_lattice_and_simulation_agree() {
    let p = lattice_params();
    assert!(validate(&p).all_passed());
    let pairs = vec![(set(0.5, 1.5), 0.4), (set(1.5, 2.5), 1.0)];
    let formula = survival_joint(&p, 1.0, &pairs, &cfg()).unwrap().value();
    let lattice = ctmc_survival(&LatticeSpec::default(), &p, 1.0, &pairs).unwrap();
    assert!((formula - lattice.value).abs() <= 1e-6 + lattice.bound);
    let mc = mc_estimate(&p, 1.0, &McQuery::JointSurvival { pairs }, 20_000, 11, Scheme::Exact).unwrap();
    assert!(mc.contains(formula), "{mc:?} vs {formula}");
}

#[test]
fn euler_scheme_tracks_laplace_transform() {
    let p = tempered();
    let exact = laplace_single_time(&p, &[1.0], 1.0, &[0.8], &cfg()).unwrap().value();
    let query = McQuery::Laplace { t: 1.0, lambda0: 0.8, sets: vec![], lambda: vec![] };
    let mc = mc_estimate(&p, 1.0, &query, 20_000, 3, Scheme::Euler { dt: 2e-3, eps_trunc: 1e-3 }).unwrap();
    // discretisation bias is well below the statistical band at this step
    assert!((mc.mean - exact).abs() <= mc.half_width + 2e-3, "{mc:?} vs {exact}");
}

#[test]
fn catalog_matches_formula_at_default_tolerance() {
    let p = CbiParams::single(0.0, 0.0, 0.4, LevyMeasure::atom(1.0, 0.3).unwrap(), LevyMeasure::atom(1.0, 1.0).unwrap())
        .unwrap();
    let a = set(0.5, 1.5);
    for t in [0.0, 0.3, 1.0, 2.5] {
        let exact = closed_form_survival(CatalogId::InhomogeneousPoisson, &p, 1.5, t, &a).unwrap();
        let got = survival_first_jump(&p, &[1.5], t, &a, &SolverConfig::default()).unwrap().value();
        assert!((exact - got).abs() < 1e-8);
    }
    assert!(matches!(
        closed_form_survival(CatalogId::FrozenLattice, &p, 1.5, 1.0, &a),
        Err(CbiError::CaseMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn joint_survival_is_sandwiched(t1 in 0.0f64..2.0, t2 in 0.0f64..2.0, x in 0.0f64..2.0) {
        let p = tempered();
        let (a, b) = (set(0.5, 1.0), set(1.2, 2.0));
        let joint = survival_joint(&p, x, &[(a.clone(), t1), (b.clone(), t2)], &cfg()).unwrap().value();
        let first_a = survival_first_jump(&p, &[x], t1, &a, &cfg()).unwrap().value();
        let first_b = survival_first_jump(&p, &[x], t2, &b, &cfg()).unwrap().value();
        let both = survival_same_time(&p, x, t1.max(t2), &[a, b], &cfg()).unwrap().value();
        prop_assert!(joint <= first_a.min(first_b) + 1e-9);
        prop_assert!(joint >= both - 1e-9);
    }
}
