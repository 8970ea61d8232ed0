//! Correlation statistics, the logistic score mapping, significance testing
//! and the repeated content-disjoint train/test protocol.

mod correlation;
mod ftest;
mod logistic;
mod neldermead;
mod protocol;
pub mod special;

use thiserror::Error;

pub use correlation::{fractional_ranks, pearson, spearman};
pub use ftest::{f_test, FOutcome, FTest};
pub use logistic::{fit_logistic, logistic5, LogisticFit};
pub use neldermead::{NelderMead, NelderMeadResult};
pub use protocol::{
    classification_on_samples, extract_samples, load_images, run_classification, run_protocol, run_protocol_on, sweep, ClassRep,
    ClassificationReport, ProtocolError, ProtocolOptions, ProtocolReport, RepRecord, Sample,
    SplitSpec, SweepRow, sweep_csv,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("scores are constant; the logistic mapping is undetermined")]
    DegenerateInput,
}

/// Monotonicity and accuracy of one set of predictions against MOS.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub src: f64,
    /// Pearson correlation between the logistic-mapped scores and MOS.
    pub pcc: f64,
    pub fit: LogisticFit,
    /// `mos - f(score)` per sample.
    pub residuals: Vec<f64>,
    pub n: usize,
}

pub fn evaluate(scores: &[f64], mos: &[f64]) -> Result<EvalReport, EvalError> {
    let src = spearman(scores, mos)?;
    let fit = fit_logistic(scores, mos)?;
    let mapped = fit.map(scores);
    let pcc = pearson(&mapped, mos)?;
    let residuals = mos.iter().zip(&mapped).map(|(m, f)| m - f).collect();
    Ok(EvalReport {
        src,
        pcc,
        fit,
        residuals,
        n: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_monotone_scores() {
        let s: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let m: Vec<f64> = s.iter().map(|v| 1.0 + 8.0 * v.sqrt()).collect();
        let r = evaluate(&s, &m).unwrap();
        assert_eq!(r.n, 12);
        assert_eq!(r.residuals.len(), 12);
        assert!((r.src - 1.0).abs() < 1e-12);
        assert!(r.pcc > 0.99);
    }

    #[test]
    fn evaluate_rejects_constant_truth() {
        let s = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(evaluate(&s, &[3.0; 5]), Err(EvalError::ZeroVariance));
    }
}
