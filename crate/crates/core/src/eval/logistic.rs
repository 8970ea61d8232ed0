//! Five-parameter logistic mapping from objective scores to MOS.
//!
//! `f(x) = b1 * (1/2 - 1/(1 + exp(b2 * (x - b3)))) + b4 * x + b5`, fit by
//! least squares with Nelder-Mead.

use super::neldermead::NelderMead;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub beta: [f64; 5],
    pub rmse: f64,
    pub converged: bool,
}

/// Evaluates the mapping for parameters `beta`.
#[inline]
pub fn logistic5(beta: &[f64], x: f64) -> f64 {
    let z = beta[1] * (x - beta[2]);
    // 1/2 - 1/(1+e^z) written to stay finite for large |z|
    let s = if z >= 0.0 {
        let e = (-z).exp();
        0.5 - e / (1.0 + e)
    } else {
        let e = z.exp();
        e / (1.0 + e) - 0.5
    };
    beta[0] * s + beta[3] * x + beta[4]
}

impl LogisticFit {
    pub fn eval(&self, x: f64) -> f64 {
        logistic5(&self.beta, x)
    }

    pub fn map(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

/// Fresh simplices built around the running optimum per starting point.
const MAX_RESTARTS: usize = 20;

fn mse(beta: &[f64], x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = logistic5(beta, a) - b;
            r * r
        })
        .sum::<f64>()
        / x.len() as f64
}

/// Fits the five-parameter logistic from two starting points (sigmoid-led and
/// line-led) and keeps the lower-error fit.
pub fn fit_logistic(scores: &[f64], mos: &[f64]) -> Result<LogisticFit, EvalError> {
    if scores.len() != mos.len() {
        return Err(EvalError::LengthMismatch(scores.len(), mos.len()));
    }
    if scores.len() < 5 {
        return Err(EvalError::TooFewSamples { need: 5, got: scores.len() });
    }
    if scores.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = scores.len() as f64;
    let (smin, smax) = min_max(scores);
    let (mmin, mmax) = min_max(mos);
    if smax == smin {
        return Err(EvalError::DegenerateInput);
    }
    let smean = scores.iter().sum::<f64>() / n;
    let mmean = mos.iter().sum::<f64>() / n;

    let sxx: f64 = scores.iter().map(|s| (s - smean) * (s - smean)).sum();
    let sxy: f64 = scores.iter().zip(mos).map(|(s, m)| (s - smean) * (m - mmean)).sum();
    let slope = sxy / sxx;
    let intercept = mmean - slope * smean;

    let starts = [
        [mmax - mmin, 10.0 / (smax - smin), smean, 0.0, mmean],
        [0.0, 10.0 / (smax - smin), smean, slope, intercept],
    ];
    // initial simplex offsets on the scale of each parameter
    let (ms, ss) = ((mmax - mmin).max(f64::MIN_POSITIVE), smax - smin);
    let steps = [0.1 * ms, 1.0 / ss, 0.1 * ss, 0.1 * ms / ss, 0.1 * ms];
    let nm = NelderMead::default();
    let mut best: Option<LogisticFit> = None;
    for start in starts {
        let mut r = nm.minimize_with_steps(|b| mse(b, scores, mos), &start, &steps);
        // a collapsed simplex can stall short of the optimum; restarting
        // from the best vertex rebuilds it at full size
        for _ in 0..MAX_RESTARTS {
            let again = nm.minimize_with_steps(|b| mse(b, scores, mos), &r.x, &steps);
            let improved = again.value < r.value * (1.0 - 1e-12);
            let converged = again.converged;
            r = if again.value <= r.value { again } else { r };
            r.converged = converged;
            if !improved {
                break;
            }
        }
        let fit = LogisticFit {
            beta: [r.x[0], r.x[1], r.x[2], r.x[3], r.x[4]],
            rmse: r.value.sqrt(),
            converged: r.converged,
        };
        if best.is_none_or(|b| fit.rmse < b.rmse) {
            best = Some(fit);
        }
    }
    Ok(best.expect("two starts"))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::pearson;

    #[test]
    fn identity_data() {
        let x: Vec<f64> = (0..20).map(|i| 1.0 + 0.4 * i as f64).collect();
        let fit = fit_logistic(&x, &x).unwrap();
        let r = pearson(&fit.map(&x), &x).unwrap();
        assert!(r >= 1.0 - 1e-6, "{r}");
        assert!(fit.rmse < 1e-6);
    }

    #[test]
    fn recovers_generated_betas() {
        let truth = [2.0, 1.0, 0.5, 0.1, 0.2];
        let x: Vec<f64> = (0..50).map(|i| -5.0 + 10.0 * i as f64 / 49.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| logistic5(&truth, v)).collect();
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(pearson(&fit.map(&x), &y).unwrap() >= 0.9999);
        assert!(fit.rmse < 1e-3, "{fit:?}");
    }

    #[test]
    fn anti_monotone_scores_never_get_worse() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 9.0 - 8.0 * v * v + 0.1 * (v * 40.0).sin()).collect();
        let fit = fit_logistic(&x, &y).unwrap();
        let mapped = pearson(&fit.map(&x), &y).unwrap();
        let raw = pearson(&x, &y).unwrap();
        assert!(mapped > 0.0);
        assert!(mapped.abs() >= raw.abs() - 1e-12, "{mapped} vs {raw}");
    }

    #[test]
    fn stays_finite_far_from_centre() {
        let b = [1.0, 1e3, 0.0, 0.0, 0.0];
        assert_eq!(logistic5(&b, 10.0), 0.5);
        assert_eq!(logistic5(&b, -10.0), -0.5);
    }

    #[test]
    fn errors() {
        assert_eq!(fit_logistic(&[1.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), Err(EvalError::DegenerateInput));
        assert!(matches!(fit_logistic(&[1.0, 2.0], &[1.0, 2.0]), Err(EvalError::TooFewSamples { .. })));
    }
}
