use serde::Serialize;

use super::rng::Rng;

/// One forward evaluation for finite differencing: the loss plus a signature
/// of every piecewise-linear branch taken (activation signs, argmax picks).
/// Two evaluations with different signatures straddle a kink.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub loss: f64,
    pub kinks: Vec<u64>,
}

impl Probe {
    pub fn smooth(loss: f64) -> Self {
        Self {
            loss,
            kinks: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index of the worst entry, if any entry was checked.
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub non_finite: bool,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        !self.non_finite && self.max_relative_error <= tolerance
    }
}

/// Central finite-difference check of an analytic gradient.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub step: f64,
    /// Check a random subset of this many entries instead of all of them.
    pub max_entries: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_entries: None,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

impl GradCheck {
    pub fn run<F>(
        &self,
        mut loss_fn: F,
        params: &[f64],
        analytic: &[f64],
        rng: &mut Rng,
    ) -> GradCheckReport
    where
        F: FnMut(&[f64]) -> Probe,
    {
        assert_eq!(
            params.len(),
            analytic.len(),
            "gradient length must match parameters"
        );
        let mut report = GradCheckReport {
            max_relative_error: 0.0,
            worst_index: None,
            checked: 0,
            skipped_kinks: 0,
            non_finite: false,
        };
        let base = loss_fn(params);
        if !base.loss.is_finite() {
            report.non_finite = true;
            report.max_relative_error = f64::INFINITY;
            return report;
        }

        let mut indices: Vec<usize> = (0..params.len()).collect();
        if let Some(k) = self.max_entries.filter(|&k| k < params.len()) {
            rng.shuffle(&mut indices);
            indices.truncate(k);
            indices.sort_unstable();
        }

        let mut work = params.to_vec();
        for i in indices {
            let original = work[i];
            work[i] = original + self.step;
            let plus = loss_fn(&work);
            work[i] = original - self.step;
            let minus = loss_fn(&work);
            work[i] = original;

            if !plus.loss.is_finite() || !minus.loss.is_finite() {
                report.non_finite = true;
                report.max_relative_error = f64::INFINITY;
                report.worst_index = Some(i);
                return report;
            }
            if plus.kinks != base.kinks || minus.kinks != base.kinks {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * self.step);
            let err = relative_error(analytic[i], numeric);
            report.checked += 1;
            if report.worst_index.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_index = Some(i);
            }
        }
        report
    }
}
