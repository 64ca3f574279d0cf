//! Dormand–Prince 5(4) with Hairer's continuous extension and a positivity guard.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{CbiError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Longest horizon a single flow may be asked for.
    pub max_time: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            max_time: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0 && self.max_time >= 0.0;
        if ok && !self.rel_tol.is_nan() && !self.abs_tol.is_nan() && !self.max_step.is_nan() {
            Ok(())
        } else {
            Err(CbiError::InvalidInput(format!("solver configuration {self:?} is not usable")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Dense-output solution `t ↦ v(t)` on `[0, T]` with the accumulated integral of the
/// immigration-type integrand carried as an extra state.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    dim: usize,
    horizon: f64,
    times: Vec<f64>,
    /// Augmented states `(v, ∫ψ)` at the step knots.
    states: Vec<Vec<f64>>,
    /// Per-step continuous extension coefficients `r1..r5`, flattened.
    dense: Vec<Vec<f64>>,
    stats: SolverStats,
}

impl FlowSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn knots(&self) -> &[f64] {
        &self.times
    }

    fn augmented(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, self.horizon);
        let n = self.times.len();
        let idx = self.times.partition_point(|&s| s <= t);
        if idx > 0 && self.times[idx - 1] == t {
            return self.states[idx - 1].clone();
        }
        if idx >= n {
            return self.states[n - 1].clone();
        }
        let step = idx - 1;
        let (t0, t1) = (self.times[step], self.times[step + 1]);
        let theta = (t - t0) / (t1 - t0);
        let theta1 = 1.0 - theta;
        let m = self.dim + 1;
        let r = &self.dense[step];
        (0..m)
            .map(|i| {
                r[i] + theta * (r[m + i] + theta1 * (r[2 * m + i] + theta * (r[3 * m + i] + theta1 * r[4 * m + i])))
            })
            .collect()
    }

    /// `v(t)`, clamped into `[0, T]`.
    pub fn value(&self, t: f64) -> Vec<f64> {
        let mut y = self.augmented(t);
        y.truncate(self.dim);
        for x in &mut y {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        y
    }

    /// First coordinate of `v(t)`; the whole state for scalar flows.
    pub fn scalar(&self, t: f64) -> f64 {
        self.value(t)[0]
    }

    pub fn final_value(&self) -> Vec<f64> {
        self.value(self.horizon)
    }

    /// `∫_0^t ψ(v(s)) ds`.
    pub fn psi_integral(&self, t: f64) -> f64 {
        self.augmented(t)[self.dim]
    }

    pub fn final_psi_integral(&self) -> f64 {
        self.states.last().expect("at least one knot")[self.dim]
    }

    /// CSV with columns `t, v_1..v_d, psi_integral` on `points` uniformly spaced times.
    pub fn to_csv(&self, points: usize) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dim {
            let _ = write!(out, ",v_{i}");
        }
        out.push_str(",psi_integral\n");
        let n = points.max(2);
        for j in 0..n {
            let t = if j + 1 == n {
                self.horizon
            } else {
                self.horizon * j as f64 / (n - 1) as f64
            };
            let _ = write!(out, "{t:.16e}");
            for v in self.value(t) {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = writeln!(out, ",{:.16e}", self.psi_integral(t));
        }
        out
    }
}

// The right-hand sides are autonomous, so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Field<'a, F> {
    dim: usize,
    rhs: &'a F,
    clamped: Vec<f64>,
    evaluations: usize,
}

impl<F> Field<'_, F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64>,
{
    /// Derivative of the augmented state; mechanisms are evaluated at `max(v, 0)`.
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        for (c, &v) in self.clamped.iter_mut().zip(y) {
            *c = v.max(0.0);
        }
        self.evaluations += 1;
        let q = (self.rhs)(&self.clamped, &mut dy[..self.dim])?;
        dy[self.dim] = q;
        Ok(())
    }
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

/// Integrates `v' = f(v)` and `q' = g(v)` from `v(0) = v0`, `q(0) = 0` over `[0, horizon]`.
///
/// `rhs(v, dv)` writes `f(v)` into `dv` and returns `g(v)`.
pub fn integrate<F>(v0: &[f64], horizon: f64, cfg: &SolverConfig, rhs: F) -> Result<FlowSolution>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64>,
{
    cfg.check()?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(CbiError::InvalidInput(format!("horizon {horizon} must be finite and >= 0")));
    }
    if horizon > cfg.max_time {
        return Err(CbiError::InvalidInput(format!(
            "horizon {horizon} exceeds the configured maximum {}",
            cfg.max_time
        )));
    }
    let dim = v0.len();
    let m = dim + 1;
    let mut y: Vec<f64> = v0.iter().copied().chain([0.0]).collect();
    let mut field = Field {
        dim,
        rhs: &rhs,
        clamped: vec![0.0; dim],
        evaluations: 0,
    };
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let mut dense = Vec::new();
    let mut stats = SolverStats::default();
    if horizon == 0.0 {
        return Ok(FlowSolution {
            dim,
            horizon,
            times,
            states,
            dense,
            stats,
        });
    }

    let scale = |a: &[f64], b: &[f64], i: usize| cfg.abs_tol + cfg.rel_tol * a[i].abs().max(b[i].abs());
    let mut k1 = vec![0.0; m];
    field.eval(&y, &mut k1)?;

    // initial step guess
    let mut h = {
        let d0 = rms((0..m).map(|i| y[i] / scale(&y, &y, i)), m);
        let d1 = rms((0..m).map(|i| k1[i] / scale(&y, &y, i)), m);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(horizon);
        let y1: Vec<f64> = (0..m).map(|i| y[i] + h0 * k1[i]).collect();
        let mut f1 = vec![0.0; m];
        field.eval(&y1, &mut f1)?;
        let d2 = rms((0..m).map(|i| (f1[i] - k1[i]) / scale(&y, &y, i)), m) / h0;
        let big = d1.max(d2);
        let h1 = if big <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / big).powf(0.2)
        };
        (100.0 * h0).min(h1).min(horizon).min(cfg.max_step)
    };

    let mut t = 0.0;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    let mut y1 = vec![0.0; m];
    let mut last_rejected = false;

    while t < horizon {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(CbiError::StepBudgetExhausted { t });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(CbiError::StepSizeUnderflow { t });
        }
        let last = t + h >= horizon;
        if last {
            h = horizon - t;
        }

        for i in 0..m {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        field.eval(&tmp, &mut k2)?;
        for i in 0..m {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        field.eval(&tmp, &mut k3)?;
        for i in 0..m {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        field.eval(&tmp, &mut k4)?;
        for i in 0..m {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        field.eval(&tmp, &mut k5)?;
        for i in 0..m {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        field.eval(&tmp, &mut k6)?;
        for i in 0..m {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }

        // positivity guard: reject clearly negative components outright
        if y1[..dim].iter().any(|&v| v < -cfg.abs_tol) {
            stats.rejected += 1;
            h *= 0.5;
            last_rejected = true;
            continue;
        }
        for v in &mut y1[..dim] {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        field.eval(&y1, &mut k7)?;

        let err = rms(
            (0..m).map(|i| {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                e / scale(&y, &y1, i)
            }),
            m,
        );
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        let mut fac = (0.9 * err.powf(-0.2)).clamp(0.2, 10.0);
        if err <= 1.0 {
            let mut r = vec![0.0; 5 * m];
            for i in 0..m {
                let dy = y1[i] - y[i];
                let bspl = h * k1[i] - dy;
                r[i] = y[i];
                r[m + i] = dy;
                r[2 * m + i] = bspl;
                r[3 * m + i] = dy - h * k7[i] - bspl;
                r[4 * m + i] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            dense.push(r);
            t = if last { horizon } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            times.push(t);
            states.push(y.clone());
            stats.accepted += 1;
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(cfg.max_step);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= fac.min(1.0);
        }
    }
    stats.evaluations = field.evaluations;
    Ok(FlowSolution {
        dim,
        horizon,
        times,
        states,
        dense,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_with_dense_output() {
        let sol = integrate(&[2.0], 3.0, &SolverConfig::default(), |v, dv| {
            dv[0] = -0.5 * v[0];
            Ok(1.0)
        })
        .unwrap();
        for &t in &[0.0f64, 0.37, 1.0, 2.2, 3.0] {
            let want = 2.0 * (-0.5 * t).exp();
            assert!((sol.scalar(t) - want).abs() < 1e-8, "t = {t}");
            assert!((sol.psi_integral(t) - t).abs() < 1e-10);
        }
        assert_eq!(sol.value(0.0), vec![2.0]);
    }

    #[test]
    fn riccati_tight_tolerance() {
        let cfg = SolverConfig::with_tolerances(1e-11, 1e-13);
        let sol = integrate(&[1.0], 4.0, &cfg, |v, dv| {
            dv[0] = -v[0] * v[0];
            Ok(v[0])
        })
        .unwrap();
        for &t in &[0.5, 1.0, 3.3, 4.0] {
            assert!((sol.scalar(t) - 1.0 / (1.0 + t)).abs() < 1e-11);
            assert!((sol.psi_integral(t) - (1.0 + t).ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_horizon_keeps_initial_value() {
        let sol = integrate(&[0.3, 0.7], 0.0, &SolverConfig::default(), |_, dv| {
            dv.fill(1.0);
            Ok(1.0)
        })
        .unwrap();
        assert_eq!(sol.final_value(), vec![0.3, 0.7]);
        assert_eq!(sol.final_psi_integral(), 0.0);
    }

    #[test]
    fn guard_keeps_states_nonnegative() {
        // v' = -1 would cross zero at t = 0.5; the clamped field stops at zero.
        let sol = integrate(&[0.5], 2.0, &SolverConfig::default(), |v, dv| {
            dv[0] = if v[0] > 0.0 { -1.0 } else { 0.0 };
            Ok(0.0)
        });
        match sol {
            Ok(s) => {
                for j in 0..=200 {
                    assert!(s.scalar(2.0 * j as f64 / 200.0) >= 0.0);
                }
            }
            Err(e) => assert!(matches!(e, CbiError::StepSizeUnderflow { .. })),
        }
    }

    #[test]
    fn csv_layout() {
        let sol = integrate(&[1.0], 1.0, &SolverConfig::default(), |v, dv| {
            dv[0] = -v[0];
            Ok(0.0)
        })
        .unwrap();
        let csv = sol.to_csv(3);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,v_1,psi_integral");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("1.0000000000000000e0,"));
    }

    #[test]
    fn bad_configuration_rejected() {
        let cfg = SolverConfig {
            rel_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(integrate(&[1.0], 1.0, &cfg, |_, _| Ok(0.0)).is_err());
        let cfg = SolverConfig {
            max_time: 1.0,
            ..SolverConfig::default()
        };
        assert!(integrate(&[1.0], 2.0, &cfg, |_, _| Ok(0.0)).is_err());
    }
}
