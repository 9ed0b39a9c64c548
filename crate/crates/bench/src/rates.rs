//! Log–log rate fits of median MSE against `n`.

use std::collections::BTreeMap;

use crate::error::{BenchError, Result};
use crate::experiment::MeasuredSpectra;
use crate::records::{MethodTag, TrialRecord};

/// Median MSE per grid size for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMedians {
    pub method: MethodTag,
    /// `(n, median MSE)` in increasing `n`.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub method: MethodTag,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `−2β̂/(2α̂+1)` from measured spectra.
    pub predicted_exponent: Option<f64>,
    /// `median MSE(n_max) / median MSE(n_min)`.
    pub plateau_ratio: f64,
    pub cells: usize,
}

impl RateFit {
    pub fn predict(&self, n: f64) -> f64 {
        (self.intercept + self.slope * n.ln()).exp()
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    Some(if k % 2 == 1 { values[k / 2] } else { 0.5 * (values[k / 2 - 1] + values[k / 2]) })
}

/// Medians over successful trials, per method and `n`.
pub fn cell_medians(records: &[TrialRecord]) -> Vec<CellMedians> {
    let mut groups: BTreeMap<MethodTag, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        groups.entry(r.method).or_default().entry(r.n).or_default().push(r.mse.expect("ok record has mse"));
    }
    groups
        .into_iter()
        .map(|(method, cells)| CellMedians {
            method,
            points: cells.into_iter().filter_map(|(n, mut v)| median(&mut v).map(|m| (n, m))).collect(),
        })
        .collect()
}

/// Least squares of `ln y` on `ln n`: `(slope, intercept, R²)`.
pub fn loglog_fit(points: &[(usize, f64)]) -> Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, y)| *n > 0 && *y > 0.0 && y.is_finite())
        .map(|&(n, y)| ((n as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(BenchError::Fit(format!("rate fit needs at least 3 valid cells, got {}", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(BenchError::Fit("rate fit needs at least two distinct n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy <= f64::EPSILON * k * my.abs().max(1.0) { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok((slope, intercept, r2))
}

/// One fit per method present in `records`.
pub fn fit_rates(records: &[TrialRecord], spectra: Option<&MeasuredSpectra>) -> Result<Vec<RateFit>> {
    let predicted = spectra.map(|s| -2.0 * s.beta / (2.0 * s.alpha + 1.0));
    let medians = cell_medians(records);
    if medians.is_empty() {
        return Err(BenchError::Fit("no successful records".into()));
    }
    medians
        .iter()
        .map(|c| {
            let (slope, intercept, r_squared) = loglog_fit(&c.points)?;
            let first = c.points.first().expect("fit checked length").1;
            let last = c.points.last().expect("fit checked length").1;
            Ok(RateFit {
                method: c.method,
                slope,
                intercept,
                r_squared,
                predicted_exponent: predicted,
                plateau_ratio: last / first,
                cells: c.points.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(f: impl Fn(usize) -> f64, method: MethodTag) -> Vec<TrialRecord> {
        [64, 128, 256, 512, 1024]
            .iter()
            .flat_map(|&n| (0..3).map(move |t| (n, t)))
            .map(|(n, t)| TrialRecord {
                preset: "custom".into(),
                n,
                m: n,
                trial: t,
                method,
                gamma: Some(0.1),
                mse: Some(f(n) * (1.0 + 0.1 * (t as f64 - 1.0))),
                bias_sq: None,
                variance: None,
                iters: None,
                defect: None,
                wall_ms: None,
                error: None,
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let r = records(|n| 3.0 * (n as f64).powf(-0.8), MethodTag::Rat);
        let fit = &fit_rates(&r, None).unwrap()[0];
        assert!((fit.slope + 0.8).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.predict(64.0) - 3.0 * 64f64.powf(-0.8)).abs() < 1e-12);
        assert_eq!(fit.cells, 5);
    }

    #[test]
    fn constant_mse() {
        let r = records(|_| 0.25, MethodTag::Sm);
        let fit = &fit_rates(&r, None).unwrap()[0];
        assert!(fit.slope.abs() < 1e-12);
        assert!((fit.plateau_ratio - 1.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&fit.r_squared));
    }

    #[test]
    fn errors_are_skipped_and_short_grids_rejected() {
        let mut r = records(|n| 1.0 / n as f64, MethodTag::Rat);
        for rec in r.iter_mut().filter(|x| x.n >= 256) {
            rec.error = Some("boom".into());
        }
        assert!(matches!(fit_rates(&r, None), Err(BenchError::Fit(_))));
        assert!(matches!(fit_rates(&[], None), Err(BenchError::Fit(_))));
    }

    #[test]
    fn predicted_exponent_from_spectra() {
        let r = records(|n| 1.0 / n as f64, MethodTag::Rat);
        let s = MeasuredSpectra { n: 64, alpha: 1.0, beta: 1.0 };
        let fit = &fit_rates(&r, Some(&s)).unwrap()[0];
        assert!((fit.predicted_exponent.unwrap() + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn medians_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
