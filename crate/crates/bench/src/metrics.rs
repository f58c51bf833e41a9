//! Run-length and localization metrics.

use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlStats {
    pub runs: usize,
    /// Mean run length over every run, censored ones at their censored length.
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single run.
    pub std: f64,
    pub censored: usize,
    /// The same over alarmed runs only; absent when there are none.
    pub mean_uncensored: Option<f64>,
    pub std_uncensored: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// ARL from `(run length, censored)` pairs.
pub fn arl_stats(runs: &[(usize, bool)]) -> Result<ArlStats, BenchError> {
    if runs.is_empty() {
        return Err(BenchError::Metrics("no run lengths".into()));
    }
    let all: Vec<f64> = runs.iter().map(|r| r.0 as f64).collect();
    let alarmed: Vec<f64> = runs.iter().filter(|r| !r.1).map(|r| r.0 as f64).collect();
    let (mean, std) = mean_std(&all);
    let (mean_uncensored, std_uncensored) = if alarmed.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&alarmed);
        (Some(m), Some(s))
    };
    Ok(ArlStats {
        runs: runs.len(),
        mean,
        std,
        censored: runs.len() - alarmed.len(),
        mean_uncensored,
        std_uncensored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    /// Records whose true class is this one.
    pub support: usize,
    /// Records predicted as this class.
    pub predicted: usize,
    /// `None` when the denominator is zero.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub records: usize,
    pub accuracy: f64,
    pub classes: Vec<ClassMetrics>,
    /// Averages over the classes where the value is defined.
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn average(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Confusion arithmetic over `(true class, predicted class)` records. A
/// missing prediction (no alarm, or no location) counts as wrong for its true
/// class and is not credited to any class.
pub fn compute_confusion(records: &[(usize, Option<usize>)], classes: &[usize]) -> Result<Confusion, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Metrics("no localization records".into()));
    }
    if let Some(r) = records.iter().find(|r| !classes.contains(&r.0)) {
        return Err(BenchError::Metrics(format!("true class {} is not a candidate", r.0)));
    }
    let correct = records.iter().filter(|r| r.1 == Some(r.0)).count();
    let per_class: Vec<ClassMetrics> = classes
        .iter()
        .map(|&c| {
            let support = records.iter().filter(|r| r.0 == c).count();
            let predicted = records.iter().filter(|r| r.1 == Some(c)).count();
            let hits = records.iter().filter(|r| r.0 == c && r.1 == Some(c)).count();
            let precision = ratio(hits, predicted);
            let recall = ratio(hits, support);
            let f = match (precision, recall) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            ClassMetrics {
                class: c,
                support,
                predicted,
                precision,
                recall,
                f,
            }
        })
        .collect();
    Ok(Confusion {
        records: records.len(),
        accuracy: correct as f64 / records.len() as f64,
        macro_precision: average(per_class.iter().map(|c| c.precision)),
        macro_recall: average(per_class.iter().map(|c| c.recall)),
        macro_f: average(per_class.iter().map(|c| c.f)),
        classes: per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arl_of_three_runs() {
        let s = arl_stats(&[(10, false), (20, false), (30, false)]).unwrap();
        assert_eq!(s.mean, 20.0);
        assert_eq!(s.std, 10.0);
        assert_eq!(s.censored, 0);
        assert_eq!(s.mean_uncensored, Some(20.0));
    }

    #[test]
    fn censored_runs_are_reported_both_ways() {
        let s = arl_stats(&[(10, false), (100, true)]).unwrap();
        assert_eq!(s.mean, 55.0);
        assert_eq!(s.censored, 1);
        assert_eq!(s.mean_uncensored, Some(10.0));
        let s = arl_stats(&[(100, true)]).unwrap();
        assert_eq!(s.mean_uncensored, None);
        assert!(arl_stats(&[]).is_err());
    }

    #[test]
    fn all_correct() {
        let recs = [(2, Some(2)), (3, Some(3)), (6, Some(6))];
        let c = compute_confusion(&recs, &[2, 3, 6, 8]).unwrap();
        assert_eq!(c.accuracy, 1.0);
        assert_eq!(c.macro_f, Some(1.0));
        assert_eq!(c.classes[3].precision, None);
        assert_eq!(c.classes[3].recall, None);
    }

    #[test]
    fn three_of_four() {
        let recs = [(2, Some(2)), (3, Some(6)), (6, Some(6)), (8, Some(8))];
        let c = compute_confusion(&recs, &[2, 3, 6, 8]).unwrap();
        assert_eq!(c.accuracy, 0.75);
        let six = &c.classes[2];
        assert_eq!(six.precision, Some(0.5));
        assert_eq!(six.recall, Some(1.0));
        assert!((six.f.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let three = &c.classes[1];
        assert_eq!(three.precision, None);
        assert_eq!(three.recall, Some(0.0));
    }

    #[test]
    fn single_class_input() {
        let c = compute_confusion(&[(3, Some(3)), (3, None)], &[2, 3]).unwrap();
        assert_eq!(c.classes[1].recall, Some(0.5));
        assert_eq!(c.classes[1].precision, Some(1.0));
        assert_eq!(c.classes[0].recall, None);
        assert_eq!(c.classes[0].precision, None);
        assert_eq!(c.macro_recall, Some(0.5));
    }

    #[test]
    fn empty_and_unknown_records() {
        assert!(compute_confusion(&[], &[1]).is_err());
        assert!(compute_confusion(&[(9, Some(9))], &[1]).is_err());
    }
}
