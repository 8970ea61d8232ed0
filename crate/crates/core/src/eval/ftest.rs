//! Variance-ratio test between the residuals of two quality models.

use super::special::f_quantile;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FOutcome {
    /// Model A has significantly smaller residual variance.
    SuperiorA,
    SuperiorB,
    Indistinguishable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FTest {
    /// Larger residual variance over the smaller one; infinite when one side is exact.
    pub f: f64,
    /// Upper `alpha / 2` point of `F(df_num, df_den)`.
    pub critical: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub outcome: FOutcome,
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Two-sided F-test at level `alpha` on the residual variances of A and B.
pub fn f_test(resid_a: &[f64], resid_b: &[f64], alpha: f64) -> Result<FTest, EvalError> {
    for r in [resid_a, resid_b] {
        if r.len() < 3 {
            return Err(EvalError::TooFewSamples { need: 3, got: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
    }
    assert!(alpha > 0.0 && alpha < 1.0, "alpha {alpha} outside (0, 1)");
    let (va, vb) = (sample_variance(resid_a), sample_variance(resid_b));
    if va == 0.0 && vb == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let a_wider = va >= vb;
    let (num, den, n_num, n_den) = if a_wider {
        (va, vb, resid_a.len(), resid_b.len())
    } else {
        (vb, va, resid_b.len(), resid_a.len())
    };
    let f = num / den;
    let (df_num, df_den) = (n_num - 1, n_den - 1);
    let critical = f_quantile(1.0 - alpha / 2.0, df_num as f64, df_den as f64);
    let outcome = if f > critical {
        if a_wider {
            FOutcome::SuperiorB
        } else {
            FOutcome::SuperiorA
        }
    } else {
        FOutcome::Indistinguishable
    };
    Ok(FTest {
        f,
        critical,
        df_num,
        df_den,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_residuals() {
        let r = [0.3, -0.1, 0.5, -0.7, 0.2];
        let t = f_test(&r, &r, 0.05).unwrap();
        assert_eq!(t.f, 1.0);
        assert_eq!(t.outcome, FOutcome::Indistinguishable);
    }

    #[test]
    fn small_ratio_is_not_significant() {
        let a: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b: Vec<f64> = a.iter().map(|v| v * 1.05f64.sqrt()).collect();
        let t = f_test(&a, &b, 0.05).unwrap();
        assert!((t.f - 1.05).abs() < 1e-12);
        assert!((t.critical - 4.026).abs() < 1e-3);
        assert_eq!(t.outcome, FOutcome::Indistinguishable);
    }

    #[test]
    fn large_ratio_is_significant() {
        let a: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v * 10.0).collect();
        let t = f_test(&a, &b, 0.05).unwrap();
        assert!((t.f - 100.0).abs() < 1e-9);
        assert_eq!(t.outcome, FOutcome::SuperiorA);
        assert_eq!(f_test(&b, &a, 0.05).unwrap().outcome, FOutcome::SuperiorB);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(f_test(&[1.0; 4], &[2.0; 5], 0.05), Err(EvalError::ZeroVariance));
        let exact = f_test(&[0.0; 4], &[1.0, -1.0, 0.5, 0.2], 0.05).unwrap();
        assert_eq!(exact.outcome, FOutcome::SuperiorA);
        assert!(f_test(&[1.0, 2.0], &[1.0, 2.0, 3.0], 0.05).is_err());
    }

    proptest! {
        #[test]
        fn swapping_arguments_mirrors_the_outcome(
            a in prop::collection::vec(-3.0..3.0f64, 3..25),
            b in prop::collection::vec(-30.0..30.0f64, 3..25),
        ) {
            if let (Ok(ab), Ok(ba)) = (f_test(&a, &b, 0.05), f_test(&b, &a, 0.05)) {
                let mirrored = match ab.outcome {
                    FOutcome::SuperiorA => FOutcome::SuperiorB,
                    FOutcome::SuperiorB => FOutcome::SuperiorA,
                    FOutcome::Indistinguishable => FOutcome::Indistinguishable,
                };
                prop_assert_eq!(ba.outcome, mirrored);
                prop_assert_eq!(ab.f, ba.f);
            }
        }
    }
}
