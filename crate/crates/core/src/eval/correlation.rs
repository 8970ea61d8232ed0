//! Rank and product-moment correlation.

use super::EvalError;

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(EvalError::TooFewSamples { need: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

/// Pearson product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation: Pearson on fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_orders() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let x = [0.5, 1.5, 2.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn ties_use_mean_ranks() {
        assert_eq!(fractional_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        // direct rank formula: ranks x = [1, 2.5, 2.5, 4], y = [1, 3, 2, 4]
        let rx = [1.0, 2.5, 2.5, 4.0];
        let ry = [1.0, 3.0, 2.0, 4.0];
        let mean = 2.5;
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
        let sxx: f64 = rx.iter().map(|a| (a - mean) * (a - mean)).sum();
        let syy: f64 = ry.iter().map(|b| (b - mean) * (b - mean)).sum();
        let oracle = sxy / (sxx * syy).sqrt();
        let got = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - 4.5 / 4.5f64.sqrt() / 5.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ten_point_fixture_matches_summation_formula() {
        let x = [3.1, 0.4, 2.2, 5.9, 1.0, 4.4, 2.8, 3.3, 0.9, 5.1];
        let y = [2.0, 0.7, 1.9, 6.2, 1.5, 3.9, 2.4, 3.8, 0.2, 4.6];
        let n = 10.0;
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((pearson(&x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(spearman(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]), Err(EvalError::ZeroVariance));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[5.0; 3]), Err(EvalError::ZeroVariance));
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(EvalError::TooFewSamples { need: 3, got: 2 })
        );
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0]), Err(EvalError::LengthMismatch(3, 1)));
    }

    proptest! {
        #[test]
        fn spearman_ignores_monotone_transforms(pairs in prop::collection::vec((0.01..10.0f64, -5.0..5.0f64), 3..40)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let cubed: Vec<f64> = x.iter().map(|v| v * v * v).collect();
            match (spearman(&x, &y), spearman(&cubed, &y)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }

        #[test]
        fn pearson_ignores_positive_affine_maps(
            pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3..40),
            scale in 0.1..10.0f64,
            shift in -10.0..10.0f64,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mapped: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            if let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&mapped, &y)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
