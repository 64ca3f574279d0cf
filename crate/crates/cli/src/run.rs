//! Subcommand execution. Rows are evaluated in parallel and reported in configuration order.

use std::collections::BTreeMap;

use cbi_core::laws::{
    laplace_multi_time, laplace_single_time, laplace_state_and_counts, survival_first_jump, survival_joint, LogProb,
};
use cbi_core::odeflow::SolverConfig;
use cbi_core::oracle::{closed_form_survival, ctmc_survival};
use cbi_core::params::{validate, CbiParams, ValidationReport};
use cbi_core::simkit::{mc_estimate, McEstimate, McQuery, Scheme};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, McConfig, OracleConfig, Query, Row, RowInput};
use crate::error::{CliError, CliResult};

/// Identifies a row and its inputs in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowKey {
    pub query: String,
    pub row: usize,
    pub kind: &'static str,
    pub params: String,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl RowKey {
    fn of(row: &Row) -> Self {
        RowKey {
            query: row.query.clone(),
            row: row.index,
            kind: row.input.kind(),
            params: row.params.clone(),
            x: row.input.x().to_vec(),
            t: row.input.times(),
            lambda: row.input.lambdas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    #[serde(flatten)]
    pub key: RowKey,
    pub log_value: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRecord {
    #[serde(flatten)]
    pub key: RowKey,
    pub scheme: Scheme,
    #[serde(flatten)]
    pub estimate: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheck {
    pub n: usize,
    pub seed: u64,
    pub mean: f64,
    pub half_width: f64,
    pub diff: f64,
    pub allowed: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub source: String,
    pub value: f64,
    pub bound: f64,
    pub diff: f64,
    pub allowed: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRecord {
    #[serde(flatten)]
    pub key: RowKey,
    pub log_value: f64,
    pub value: f64,
    pub mc: Option<McCheck>,
    pub oracle: Option<OracleCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateRecord {
    pub name: String,
    pub admissible: bool,
    pub report: ValidationReport,
}

fn params_for<'a>(exp: &'a Experiment, row: &Row) -> &'a CbiParams {
    &exp.params[&row.params]
}

/// The analytic value of a row.
pub fn evaluate(p: &CbiParams, input: &RowInput, cfg: &SolverConfig) -> cbi_core::Result<LogProb> {
    match input {
        RowInput::Survival { x, pairs } => {
            if p.dim == 1 {
                survival_joint(p, x[0], pairs, cfg)
            } else {
                survival_first_jump(p, x, pairs[0].1, &pairs[0].0, cfg)
            }
        }
        RowInput::Laplace {
            x,
            t,
            lambda0,
            sets,
            lambda,
        } => {
            if sets.is_empty() {
                laplace_single_time(p, x, *t, lambda0, cfg)
            } else {
                laplace_state_and_counts(p, x[0], *t, lambda0[0], sets, lambda, cfg)
            }
        }
        RowInput::LaplaceMulti { x, pairs } => laplace_multi_time(p, x, pairs, cfg),
    }
}

/// The Monte Carlo query of a row, when simulation applies to it.
pub fn mc_query(p: &CbiParams, input: &RowInput) -> Option<(f64, McQuery)> {
    if p.dim != 1 {
        return None;
    }
    match input {
        RowInput::Survival { x, pairs } => Some((x[0], McQuery::JointSurvival { pairs: pairs.clone() })),
        RowInput::Laplace {
            x,
            t,
            lambda0,
            sets,
            lambda,
        } => Some((
            x[0],
            McQuery::Laplace {
                t: *t,
                lambda0: lambda0[0],
                sets: sets.clone(),
                lambda: lambda.clone(),
            },
        )),
        RowInput::LaplaceMulti { .. } => None,
    }
}

/// Seed of the row at position `slot` in the whole experiment.
pub fn row_seed(seed: u64, slot: usize) -> u64 {
    seed.wrapping_add((slot as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn context(row: &Row) -> String {
    format!("query `{}` row {}", row.query, row.index)
}

/// Runs `f` on every row in parallel and returns the results in order, or the first error in order.
fn per_row<T: Send>(
    rows: &[(usize, &Query, &Row)],
    f: impl Fn(usize, &Query, &Row) -> CliResult<T> + Sync,
) -> CliResult<Vec<T>> {
    let out: Vec<CliResult<T>> = rows.par_iter().map(|(slot, q, r)| f(*slot, q, r)).collect();
    out.into_iter().collect()
}

fn indexed(exp: &Experiment) -> Vec<(usize, &Query, &Row)> {
    exp.rows().enumerate().map(|(i, (q, r))| (i, q, r)).collect()
}

pub fn run_validate(exp: &Experiment) -> Vec<ValidateRecord> {
    exp.params
        .iter()
        .map(|(name, p)| {
            let report = validate(p);
            ValidateRecord {
                name: name.clone(),
                admissible: report.admissible(),
                report,
            }
        })
        .collect()
}

pub fn run_eval(exp: &Experiment) -> CliResult<Vec<EvalRecord>> {
    per_row(&indexed(exp), |_, _, row| {
        let v = evaluate(params_for(exp, row), &row.input, &exp.solver).map_err(|e| CliError::from_core(context(row), e))?;
        Ok(EvalRecord {
            key: RowKey::of(row),
            log_value: v.log_value,
            value: v.value(),
        })
    })
}

fn require_mc(exp: &Experiment) -> CliResult<&McConfig> {
    exp.mc
        .as_ref()
        .ok_or_else(|| CliError::config("mc", "this command needs an `mc` record"))
}

fn simulate_row(exp: &Experiment, mc: &McConfig, slot: usize, row: &Row) -> CliResult<Option<McEstimate>> {
    let p = params_for(exp, row);
    let Some((x, query)) = mc_query(p, &row.input) else {
        return Ok(None);
    };
    mc_estimate(p, x, &query, mc.n, row_seed(mc.seed, slot), mc.scheme)
        .map(Some)
        .map_err(|e| CliError::from_core(context(row), e))
}

pub fn run_simulate(exp: &Experiment) -> CliResult<Vec<McRecord>> {
    let mc = require_mc(exp)?;
    let rows: Vec<_> = indexed(exp).into_iter().filter(|(_, q, _)| q.mc).collect();
    let out = per_row(&rows, |slot, _, row| {
        Ok(simulate_row(exp, mc, slot, row)?.map(|estimate| McRecord {
            key: RowKey::of(row),
            scheme: mc.scheme,
            estimate,
        }))
    })?;
    Ok(out.into_iter().flatten().collect())
}

fn oracle_check(exp: &Experiment, oracle: &OracleConfig, row: &Row, analytic: f64) -> CliResult<Option<OracleCheck>> {
    let p = params_for(exp, row);
    let RowInput::Survival { x, pairs } = &row.input else {
        return Ok(None);
    };
    let tol = &exp.tolerances;
    let (source, value, bound, allowed) = match oracle {
        OracleConfig::Catalog(case) => {
            let (a, t) = &pairs[0];
            let v = closed_form_survival(*case, p, x[0], *t, a).map_err(|e| CliError::from_core(context(row), e))?;
            let name = serde_json::to_value(case).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            (format!("catalog:{name}"), v, 0.0, tol.catalog_abs)
        }
        OracleConfig::Lattice(cfg) => {
            let mut sorted = pairs.clone();
            sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
            let r = ctmc_survival(&cfg.spec(), p, x[0], &sorted).map_err(|e| CliError::from_core(context(row), e))?;
            ("lattice".to_string(), r.value, r.bound, tol.lattice_abs + r.bound)
        }
    };
    let diff = (analytic - value).abs();
    Ok(Some(OracleCheck {
        source,
        value,
        bound,
        diff,
        allowed,
        passed: diff <= allowed,
    }))
}

pub fn run_compare(exp: &Experiment) -> CliResult<Vec<CompareRecord>> {
    let tol = exp.tolerances;
    per_row(&indexed(exp), |slot, q, row| {
        let v = evaluate(params_for(exp, row), &row.input, &exp.solver).map_err(|e| CliError::from_core(context(row), e))?;
        let value = v.value();
        let mc = match (&exp.mc, q.mc) {
            (Some(cfg), true) => simulate_row(exp, cfg, slot, row)?.map(|est| {
                let diff = (value - est.mean).abs();
                let allowed = (tol.mc_band * est.half_width).min(tol.mc_abs);
                McCheck {
                    n: est.n,
                    seed: est.seed,
                    mean: est.mean,
                    half_width: est.half_width,
                    diff,
                    allowed,
                    passed: diff <= allowed,
                }
            }),
            _ => None,
        };
        let oracle = match &q.oracle {
            Some(o) => oracle_check(exp, o, row, value)?,
            None => None,
        };
        let passed = mc.as_ref().is_none_or(|m| m.passed) && oracle.as_ref().is_none_or(|o| o.passed);
        Ok(CompareRecord {
            key: RowKey::of(row),
            log_value: v.log_value,
            value,
            mc,
            oracle,
            passed,
        })
    })
}

/// A labelled survival curve as `(t, value)` points.
pub type Curve = (String, Vec<(f64, f64)>);

/// One curve per survival query: the survival value against the first query time, at the first state.
pub fn survival_series(exp: &Experiment) -> CliResult<Vec<Curve>> {
    let records = run_eval(exp)?;
    let mut curves: BTreeMap<usize, Curve> = BTreeMap::new();
    let order: BTreeMap<&str, usize> = exp.queries.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
    for r in records.iter().filter(|r| r.key.kind == "survival") {
        let qi = order[r.key.query.as_str()];
        let first_x = exp.queries[qi].rows[0].input.x();
        if r.key.x.as_slice() != first_x {
            continue;
        }
        let entry = curves.entry(qi).or_insert_with(|| (r.key.query.clone(), Vec::new()));
        entry.1.push((r.key.t[0], r.value));
    }
    Ok(curves.into_values().collect())
}
