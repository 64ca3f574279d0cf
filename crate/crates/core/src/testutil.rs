//! Test-only numerical oracles that share no code with the production paths.

use std::f64::consts::FRAC_PI_2;

/// Double-exponential quadrature: tanh-sinh on finite ranges, exp-sinh on `[a, ∞)`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    if b.is_infinite() {
        return refine(|t| {
            let e = (FRAC_PI_2 * t.sinh()).exp();
            let z = a + e;
            let w = FRAC_PI_2 * t.cosh() * e;
            let fz = f(z);
            if fz == 0.0 || !w.is_finite() {
                0.0
            } else {
                fz * w
            }
        }, 5.5);
    }
    let d = 0.5 * (b - a);
    refine(|t| {
        let u = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        // distance from the nearer endpoint, without cancellation
        let gap = d * 2.0 * e / (1.0 + e);
        let z = if t < 0.0 { a + gap } else { b - gap };
        if gap == 0.0 {
            return 0.0;
        }
        let sech = 2.0 * (-u.abs()).exp() / (1.0 + e);
        d * FRAC_PI_2 * t.cosh() * sech * sech * f(z)
    }, 4.0)
}

fn refine<G: Fn(f64) -> f64>(g: G, tmax: f64) -> f64 {
    let mut h = 0.5;
    let mut sum = g(0.0);
    let mut k = 1;
    while (k as f64) * h <= tmax {
        let t = k as f64 * h;
        sum += g(t) + g(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= tmax {
            let t = k as f64 * h;
            sum += g(t) + g(-t);
            k += 2;
        }
        let next = sum * h;
        let done = (next - estimate).abs() <= 1e-15 * next.abs().max(1e-300);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).max((i as f64 + 1.0) / n - c)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sided KS critical value at level 0.001.
pub fn ks_critical_001(n: usize) -> f64 {
    1.9495 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 z^{-1/2} dz = 2
        let v = tanh_sinh(&|z: f64| z.powf(-0.5), 0.0, 1.0);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn half_line() {
        let v = tanh_sinh(&|z: f64| (-z).exp(), 0.0, f64::INFINITY);
        assert!((v - 1.0).abs() < 1e-13, "{v}");
    }
}
