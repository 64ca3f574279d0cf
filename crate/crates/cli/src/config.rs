//! Experiment configuration: parsing, reference resolution and grid expansion.

use std::collections::BTreeMap;
use std::path::Path;

use cbi_core::measures::{LevyMeasure, MeasureComponent, VectorMeasure};
use cbi_core::odeflow::SolverConfig;
use cbi_core::oracle::{CatalogId, LatticeSpec};
use cbi_core::params::CbiParams;
use cbi_core::simkit::Scheme;
use cbi_core::measures::JumpSet;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Scalars::One(v) => vec![*v],
            Scalars::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Matrix {
    One(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorAtom {
    pub location: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeasureConfig {
    Components(Vec<MeasureComponent>),
    Atoms { atoms: Vec<VectorAtom> },
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig::Components(Vec::new())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub c: Scalars,
    pub beta: Scalars,
    pub b: Matrix,
    #[serde(default)]
    pub nu: MeasureConfig,
    /// One measure per type; omitted entries are zero.
    #[serde(default)]
    pub mu: Vec<MeasureConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SetConfig {
    Interval([f64; 2]),
    Union(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateConfig {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl StateConfig {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            StateConfig::Scalar(v) => vec![*v],
            StateConfig::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TimesConfig {
    Grid { from: f64, to: f64, points: usize },
    Rows(Vec<Vec<f64>>),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max_levels: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Catalog(CatalogId),
    Lattice(LatticeConfig),
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
pub struct LaplacePairConfig {
    pub t: f64,
    pub lambda: StateConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryConfig {
    /// Joint survival of first jump times; each time row gives one time per set.
    Survival {
        id: String,
        params: String,
        sets: Vec<String>,
        x: Vec<StateConfig>,
        times: TimesConfig,
        #[serde(default)]
        oracle: Option<OracleConfig>,
        #[serde(default = "yes")]
        mc: bool,
    },
    /// Laplace transform of the state and, optionally, the jump counts at one time.
    Laplace {
        id: String,
        params: String,
        x: Vec<StateConfig>,
        times: TimesConfig,
        lambda0: Vec<StateConfig>,
        #[serde(default)]
        sets: Vec<String>,
        #[serde(default)]
        lambda: Vec<f64>,
        #[serde(default = "yes")]
        mc: bool,
    },
    /// Joint Laplace transform of the state at several times.
    LaplaceMulti {
        id: String,
        params: String,
        x: Vec<StateConfig>,
        pairs: Vec<LaplacePairConfig>,
    },
}

fn default_scheme() -> Scheme {
    Scheme::Exact
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, serde::Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest accepted `|analytic - mc|`, on top of the Monte Carlo half-width.
    pub mc_abs: f64,
    /// Multiplier of the reported 3σ half-width.
    pub mc_band: f64,
    /// Largest accepted `|analytic - lattice|`, on top of the truncation bound.
    pub lattice_abs: f64,
    /// Largest accepted `|analytic - closed form|`.
    pub catalog_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mc_abs: 5e-3,
            mc_band: 1.0,
            lattice_abs: 1e-6,
            catalog_abs: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_steps: d.max_steps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub params: BTreeMap<String, ParamsConfig>,
    #[serde(default)]
    pub sets: BTreeMap<String, SetConfig>,
    #[serde(default)]
    pub queries: Vec<QueryConfig>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub solver: SolverSettings,
}

/// What a query row asks for, with every reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum RowInput {
    Survival {
        x: Vec<f64>,
        pairs: Vec<(JumpSet, f64)>,
    },
    Laplace {
        x: Vec<f64>,
        t: f64,
        lambda0: Vec<f64>,
        sets: Vec<JumpSet>,
        lambda: Vec<f64>,
    },
    LaplaceMulti {
        x: Vec<f64>,
        pairs: Vec<(f64, Vec<f64>)>,
    },
}

impl RowInput {
    pub fn kind(&self) -> &'static str {
        match self {
            RowInput::Survival { .. } => "survival",
            RowInput::Laplace { .. } => "laplace",
            RowInput::LaplaceMulti { .. } => "laplace_multi",
        }
    }

    pub fn x(&self) -> &[f64] {
        match self {
            RowInput::Survival { x, .. } | RowInput::Laplace { x, .. } | RowInput::LaplaceMulti { x, .. } => x,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        match self {
            RowInput::Survival { pairs, .. } => pairs.iter().map(|(_, t)| *t).collect(),
            RowInput::Laplace { t, .. } => vec![*t],
            RowInput::LaplaceMulti { pairs, .. } => pairs.iter().map(|(t, _)| *t).collect(),
        }
    }

    /// Every Laplace argument in order: `λ0` then counter weights, or the per-time vectors.
    pub fn lambdas(&self) -> Vec<f64> {
        match self {
            RowInput::Survival { .. } => Vec::new(),
            RowInput::Laplace { lambda0, lambda, .. } => lambda0.iter().chain(lambda).copied().collect(),
            RowInput::LaplaceMulti { pairs, .. } => pairs.iter().flat_map(|(_, l)| l.iter().copied()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub query: String,
    pub index: usize,
    pub params: String,
    pub input: RowInput,
}

#[derive(Debug, Clone)]
pub struct Query {
    pub id: String,
    pub params: String,
    pub oracle: Option<OracleConfig>,
    pub mc: bool,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub params: BTreeMap<String, CbiParams>,
    pub queries: Vec<Query>,
    pub mc: Option<McConfig>,
    pub outputs: OutputsConfig,
    pub tolerances: Tolerances,
    pub solver: SolverConfig,
}

impl Experiment {
    pub fn rows(&self) -> impl Iterator<Item = (&Query, &Row)> {
        self.queries.iter().flat_map(|q| q.rows.iter().map(move |r| (q, r)))
    }
}

fn scalar_measure(comps: &[MeasureComponent], at: &str) -> CliResult<LevyMeasure> {
    LevyMeasure::new(comps.iter().copied()).map_err(|e| CliError::config(at, e.to_string()))
}

fn build_measure(m: &MeasureConfig, dim: usize, at: &str) -> CliResult<VectorMeasure> {
    match m {
        MeasureConfig::Components(comps) if comps.is_empty() => Ok(VectorMeasure::zero(dim)),
        MeasureConfig::Components(comps) => {
            if dim != 1 {
                return Err(CliError::config(at, "component lists need d = 1; use {\"atoms\": [...]} for d > 1"));
            }
            Ok(VectorMeasure::from_scalar(scalar_measure(comps, at)?))
        }
        MeasureConfig::Atoms { atoms } => {
            let list: Vec<(Vec<f64>, f64)> = atoms.iter().map(|a| (a.location.clone(), a.mass)).collect();
            VectorMeasure::from_atoms(dim, &list).map_err(|e| CliError::config(at, e.to_string()))
        }
    }
}

fn build_params(name: &str, cfg: &ParamsConfig) -> CliResult<CbiParams> {
    let at = format!("params.{name}");
    let c = cfg.c.to_vec();
    let dim = c.len();
    let b = match &cfg.b {
        Matrix::One(v) => vec![vec![*v]],
        Matrix::Rows(rows) => rows.clone(),
    };
    let nu = build_measure(&cfg.nu, dim, &format!("{at}.nu"))?;
    let mut mu = Vec::with_capacity(dim);
    for i in 0..dim {
        mu.push(match cfg.mu.get(i) {
            Some(m) => build_measure(m, dim, &format!("{at}.mu[{i}]"))?,
            None => VectorMeasure::zero(dim),
        });
    }
    if cfg.mu.len() > dim {
        return Err(CliError::config(format!("{at}.mu"), format!("{} measures for d = {dim}", cfg.mu.len())));
    }
    CbiParams::new(c, cfg.beta.to_vec(), b, nu, mu).map_err(|e| CliError::config(at, e.to_string()))
}

fn build_set(name: &str, cfg: &SetConfig) -> CliResult<JumpSet> {
    let at = format!("sets.{name}");
    let intervals: Vec<(f64, f64)> = match cfg {
        SetConfig::Interval([a, b]) => vec![(*a, *b)],
        SetConfig::Union(list) => list.iter().map(|[a, b]| (*a, *b)).collect(),
    };
    for (i, (a, b)) in intervals.iter().enumerate() {
        if !(a < b) {
            let here = match cfg {
                SetConfig::Interval(_) => at.clone(),
                SetConfig::Union(_) => format!("{at}[{i}]"),
            };
            return Err(CliError::config(here, format!("interval ({a}, {b}] needs a < b")));
        }
    }
    JumpSet::from_intervals(intervals).map_err(|e| CliError::config(at, e.to_string()))
}

fn expand_times(times: &TimesConfig, width: usize, at: &str) -> CliResult<Vec<Vec<f64>>> {
    let rows = match times {
        TimesConfig::Grid { from, to, points } => {
            if *points < 2 || !(from <= to) {
                return Err(CliError::config(at, "grid needs from <= to and at least 2 points"));
            }
            (0..*points)
                .map(|j| vec![from + (to - from) * j as f64 / (*points - 1) as f64; width])
                .collect()
        }
        TimesConfig::Values(v) => v.iter().map(|t| vec![*t; width]).collect(),
        TimesConfig::Rows(rows) => {
            for (j, r) in rows.iter().enumerate() {
                if r.len() != width {
                    return Err(CliError::config(format!("{at}[{j}]"), format!("expected {width} times, got {}", r.len())));
                }
            }
            rows.clone()
        }
    };
    for (j, r) in rows.iter().enumerate() {
        if r.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(CliError::config(format!("{at}[{j}]"), "times must be finite and >= 0"));
        }
    }
    Ok(rows)
}

fn states(list: &[StateConfig], dim: usize, at: &str) -> CliResult<Vec<Vec<f64>>> {
    if list.is_empty() {
        return Err(CliError::config(at, "at least one value is required"));
    }
    list.iter()
        .enumerate()
        .map(|(j, s)| {
            let v = s.to_vec();
            if v.len() != dim {
                return Err(CliError::config(format!("{at}[{j}]"), format!("expected {dim} entries, got {}", v.len())));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(CliError::config(format!("{at}[{j}]"), "entries must be finite and >= 0"));
            }
            Ok(v)
        })
        .collect()
}

fn resolve_sets(names: &[String], sets: &BTreeMap<String, JumpSet>, at: &str) -> CliResult<Vec<JumpSet>> {
    names
        .iter()
        .enumerate()
        .map(|(j, n)| {
            sets.get(n)
                .cloned()
                .ok_or_else(|| CliError::config(format!("{at}[{j}]"), format!("unknown set `{n}`")))
        })
        .collect()
}

fn build_query(
    i: usize,
    q: &QueryConfig,
    params: &BTreeMap<String, CbiParams>,
    sets: &BTreeMap<String, JumpSet>,
) -> CliResult<Query> {
    let at = format!("queries[{i}]");
    let (id, pname) = match q {
        QueryConfig::Survival { id, params, .. }
        | QueryConfig::Laplace { id, params, .. }
        | QueryConfig::LaplaceMulti { id, params, .. } => (id.clone(), params.clone()),
    };
    let p = params
        .get(&pname)
        .ok_or_else(|| CliError::config(format!("{at}.params"), format!("unknown parameter set `{pname}`")))?;
    let dim = p.dim;
    let mut inputs = Vec::new();
    let (oracle, mc) = match q {
        QueryConfig::Survival {
            sets: names,
            x,
            times,
            oracle,
            mc,
            ..
        } => {
            let resolved = resolve_sets(names, sets, &format!("{at}.sets"))?;
            if resolved.is_empty() {
                return Err(CliError::config(format!("{at}.sets"), "at least one set is required"));
            }
            if dim > 1 && resolved.len() > 1 {
                return Err(CliError::config(format!("{at}.sets"), "joint survival of several sets needs d = 1"));
            }
            if oracle.is_some() && dim > 1 {
                return Err(CliError::config(format!("{at}.oracle"), "oracles need d = 1"));
            }
            if let Some(OracleConfig::Catalog(_)) = oracle {
                if resolved.len() > 1 {
                    return Err(CliError::config(format!("{at}.oracle"), "catalog cases take a single set"));
                }
            }
            let rows = expand_times(times, resolved.len(), &format!("{at}.times"))?;
            for xv in states(x, dim, &format!("{at}.x"))? {
                for r in &rows {
                    inputs.push(RowInput::Survival {
                        x: xv.clone(),
                        pairs: resolved.iter().cloned().zip(r.iter().copied()).collect(),
                    });
                }
            }
            (oracle.clone(), *mc)
        }
        QueryConfig::Laplace {
            x,
            times,
            lambda0,
            sets: names,
            lambda,
            mc,
            ..
        } => {
            let resolved = resolve_sets(names, sets, &format!("{at}.sets"))?;
            if resolved.len() != lambda.len() {
                return Err(CliError::config(
                    format!("{at}.lambda"),
                    format!("{} weights for {} sets", lambda.len(), resolved.len()),
                ));
            }
            if !resolved.is_empty() && dim > 1 {
                return Err(CliError::config(format!("{at}.sets"), "jump counts need d = 1"));
            }
            if lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(CliError::config(format!("{at}.lambda"), "weights must be finite and >= 0"));
            }
            let rows = expand_times(times, 1, &format!("{at}.times"))?;
            let l0s = states(lambda0, dim, &format!("{at}.lambda0"))?;
            for xv in states(x, dim, &format!("{at}.x"))? {
                for r in &rows {
                    for l0 in &l0s {
                        inputs.push(RowInput::Laplace {
                            x: xv.clone(),
                            t: r[0],
                            lambda0: l0.clone(),
                            sets: resolved.clone(),
                            lambda: lambda.clone(),
                        });
                    }
                }
            }
            (None, *mc)
        }
        QueryConfig::LaplaceMulti { x, pairs, .. } => {
            if pairs.is_empty() {
                return Err(CliError::config(format!("{at}.pairs"), "at least one pair is required"));
            }
            let mut resolved = Vec::new();
            for (j, pr) in pairs.iter().enumerate() {
                let here = format!("{at}.pairs[{j}]");
                if !(pr.t.is_finite() && pr.t >= 0.0) {
                    return Err(CliError::config(format!("{here}.t"), "time must be finite and >= 0"));
                }
                let l = states(std::slice::from_ref(&pr.lambda), dim, &format!("{here}.lambda"))?;
                resolved.push((pr.t, l[0].clone()));
            }
            for xv in states(x, dim, &format!("{at}.x"))? {
                inputs.push(RowInput::LaplaceMulti {
                    x: xv,
                    pairs: resolved.clone(),
                });
            }
            (None, false)
        }
    };
    let rows = inputs
        .into_iter()
        .enumerate()
        .map(|(index, input)| Row {
            query: id.clone(),
            index,
            params: pname.clone(),
            input,
        })
        .collect();
    Ok(Query {
        id,
        params: pname,
        oracle,
        mc,
        rows,
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path.is_empty() { ".".into() } else { path }, e.inner().to_string())
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            action: "read",
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Resolves names, expands grids and builds the core objects.
    pub fn resolve(&self) -> CliResult<Experiment> {
        let params = self
            .params
            .iter()
            .map(|(k, v)| Ok((k.clone(), build_params(k, v)?)))
            .collect::<CliResult<BTreeMap<_, _>>>()?;
        let sets = self
            .sets
            .iter()
            .map(|(k, v)| Ok((k.clone(), build_set(k, v)?)))
            .collect::<CliResult<BTreeMap<_, _>>>()?;
        let mut ids = std::collections::BTreeSet::new();
        let mut queries = Vec::new();
        for (i, q) in self.queries.iter().enumerate() {
            let query = build_query(i, q, &params, &sets)?;
            if !ids.insert(query.id.clone()) {
                return Err(CliError::config(format!("queries[{i}].id"), format!("duplicate id `{}`", query.id)));
            }
            queries.push(query);
        }
        if let Some(mc) = &self.mc {
            if mc.n < 100 {
                return Err(CliError::config("mc.n", "at least 100 paths are required"));
            }
        }
        let solver = SolverConfig {
            rel_tol: self.solver.rel_tol,
            abs_tol: self.solver.abs_tol,
            max_steps: self.solver.max_steps,
            ..SolverConfig::default()
        };
        solver.check().map_err(|e| CliError::config("solver", e.to_string()))?;
        Ok(Experiment {
            params,
            queries,
            mc: self.mc.clone(),
            outputs: self.outputs.clone(),
            tolerances: self.tolerances,
            solver,
        })
    }
}

impl LatticeConfig {
    pub fn spec(&self) -> LatticeSpec {
        let d = LatticeSpec::default();
        LatticeSpec {
            levels: self.levels.unwrap_or(d.levels),
            step: self.step.unwrap_or(d.step),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            max_levels: self.max_levels.unwrap_or(d.max_levels),
        }
    }
}
