use serde::{Deserialize, Serialize};

use super::FitError;
use crate::events::GroupKey;
use crate::study::{GroupAverage, MeasureKind};

/// `z_ex(t) = z_H(t) - 1` for `t >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessSeries {
    pub group: Option<GroupKey>,
    pub measure: MeasureKind,
    /// `values[i]` belongs to `t = i + 1`.
    pub values: Vec<Option<f64>>,
}

impl ExcessSeries {
    pub fn value(&self, t: usize) -> Option<f64> {
        t.checked_sub(1)
            .and_then(|i| self.values.get(i))
            .copied()
            .flatten()
    }

    pub fn t_max(&self) -> usize {
        self.values.len()
    }
}

/// Relative excess over the baseline level, for `t = 1..=t_end`.
pub fn make_excess(avg: &GroupAverage) -> ExcessSeries {
    let values = (1..=avg.t_end())
        .map(|t| avg.mean_at(t).map(|z| z - 1.0))
        .collect();
    ExcessSeries {
        group: avg.group,
        measure: avg.measure,
        values,
    }
}

/// Inclusive event-time range of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitRange {
    pub t_min: usize,
    pub t_max: usize,
}

impl Default for FitRange {
    fn default() -> Self {
        FitRange { t_min: 1, t_max: 160 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub alpha: f64,
    pub amplitude_stderr: Option<f64>,
    /// From the asymptotic covariance `s^2 (J^T J)^-1`.
    pub alpha_stderr: Option<f64>,
    pub bootstrap_alpha_stderr: Option<f64>,
    pub fit_range: FitRange,
    pub sse: f64,
    /// `1 - SSE/SST` over the points with positive excess.
    pub r2: f64,
    pub converged: bool,
    pub n_points: usize,
    pub iterations: usize,
}

impl PowerLawFit {
    pub fn value(&self, t: f64) -> f64 {
        model(t, self.amplitude, self.alpha)
    }
}

/// `A * t^-alpha`.
pub fn model(t: f64, amplitude: f64, alpha: f64) -> f64 {
    amplitude * t.powf(-alpha)
}

/// Partial derivatives of [`model`] with respect to `(A, alpha)`.
pub fn jacobian(t: f64, amplitude: f64, alpha: f64) -> [f64; 2] {
    let decay = t.powf(-alpha);
    [decay, -amplitude * t.ln() * decay]
}

/// Damped Gauss–Newton least squares for `y ≈ A t^-alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFitter {
    pub max_iterations: usize,
    pub sse_rel_tol: f64,
    pub step_tol: f64,
    pub min_points: usize,
}

impl Default for PowerLawFitter {
    fn default() -> Self {
        PowerLawFitter {
            max_iterations: 200,
            sse_rel_tol: 1e-10,
            step_tol: 1e-8,
            min_points: 8,
        }
    }
}

const MAX_HALVINGS: usize = 60;

fn sse(ts: &[f64], ys: &[f64], a: f64, alpha: f64) -> f64 {
    ts.iter()
        .zip(ys)
        .map(|(&t, &y)| {
            let r = y - model(t, a, alpha);
            r * r
        })
        .sum()
}

/// Normal matrix `J^T J` (symmetric, stored as `[aa, ab, bb]`) and `J^T r`.
fn normal_equations(ts: &[f64], ys: &[f64], a: f64, alpha: f64) -> ([f64; 3], [f64; 2]) {
    let mut jtj = [0.0; 3];
    let mut jtr = [0.0; 2];
    for (&t, &y) in ts.iter().zip(ys) {
        let [ja, jb] = jacobian(t, a, alpha);
        let r = y - model(t, a, alpha);
        jtj[0] += ja * ja;
        jtj[1] += ja * jb;
        jtj[2] += jb * jb;
        jtr[0] += ja * r;
        jtr[1] += jb * r;
    }
    (jtj, jtr)
}

fn invert(m: [f64; 3]) -> Option<[f64; 3]> {
    let det = m[0] * m[2] - m[1] * m[1];
    if !(det.is_finite() && det > 0.0) {
        return None;
    }
    Some([m[2] / det, -m[1] / det, m[0] / det])
}

/// Ordinary least squares of `ln y` on `ln t` over the positive points.
fn log_log_start(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&t, &y)| (t.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if pts.len() < 2 || sxx <= 0.0 {
        // single usable point: unit exponent through it
        let (lt, ly) = pts[0];
        return ((ly + lt).exp(), 1.0);
    }
    let slope = sxy / sxx;
    ((my - slope * mx).exp(), -slope)
}

impl PowerLawFitter {
    /// Fits `(t, y)` pairs. `t` must be positive.
    pub fn fit(&self, ts: &[f64], ys: &[f64]) -> Result<PowerLawFit, FitError> {
        let n = ts.len();
        if n < self.min_points.max(3) {
            return Err(FitError::DegenerateData(format!(
                "{n} points, need at least {}",
                self.min_points.max(3)
            )));
        }
        if ys.iter().all(|&y| y <= 0.0) {
            return Err(FitError::DegenerateData("no positive values".into()));
        }
        let (mut a, mut alpha) = log_log_start(ts, ys);
        let mut cur = sse(ts, ys, a, alpha);
        let mut converged = cur == 0.0;
        let mut iterations = 0;

        while !converged {
            if iterations == self.max_iterations {
                return Err(FitError::NonConvergence { iterations });
            }
            iterations += 1;
            let (jtj, jtr) = normal_equations(ts, ys, a, alpha);
            let Some(inv) = invert(jtj) else {
                return Err(FitError::DegenerateData("singular normal matrix".into()));
            };
            let da = inv[0] * jtr[0] + inv[1] * jtr[1];
            let db = inv[1] * jtr[0] + inv[2] * jtr[1];

            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let (ca, cb) = (a + lambda * da, alpha + lambda * db);
                if ca > 0.0 {
                    let s = sse(ts, ys, ca, cb);
                    if s <= cur {
                        accepted = Some((ca, cb, s));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            // No descent along the Gauss–Newton direction: already at the
            // minimum to working precision.
            let Some((na, nb, ns)) = accepted else {
                converged = true;
                break;
            };
            let step = ((na - a).abs() / a.abs()).max((nb - alpha).abs() / alpha.abs().max(1.0));
            let rel_change = if cur > 0.0 { (cur - ns) / cur } else { 0.0 };
            a = na;
            alpha = nb;
            cur = ns;
            if step < self.step_tol || (lambda == 1.0 && rel_change < self.sse_rel_tol) || cur == 0.0 {
                converged = true;
            }
        }

        let (jtj, _) = normal_equations(ts, ys, a, alpha);
        let cov = invert(jtj);
        let dof = n - 2;
        let s2 = cur / dof as f64;
        let amplitude_stderr = cov.map(|c| (s2 * c[0]).sqrt());
        let alpha_stderr = cov.map(|c| (s2 * c[2]).sqrt());

        let positive: Vec<(f64, f64)> = ts
            .iter()
            .zip(ys)
            .filter(|(_, &y)| y > 0.0)
            .map(|(&t, &y)| (t, y))
            .collect();
        let mean_pos = positive.iter().map(|p| p.1).sum::<f64>() / positive.len() as f64;
        let sst: f64 = positive.iter().map(|p| (p.1 - mean_pos).powi(2)).sum();
        let sse_pos: f64 = positive
            .iter()
            .map(|&(t, y)| (y - model(t, a, alpha)).powi(2))
            .sum();
        let r2 = if sst > 0.0 {
            1.0 - sse_pos / sst
        } else if sse_pos == 0.0 {
            1.0
        } else {
            0.0
        };

        Ok(PowerLawFit {
            amplitude: a,
            alpha,
            amplitude_stderr,
            alpha_stderr,
            bootstrap_alpha_stderr: None,
            fit_range: FitRange {
                t_min: ts[0] as usize,
                t_max: ts[n - 1] as usize,
            },
            sse: cur,
            r2,
            converged,
            n_points: n,
            iterations,
        })
    }
}

/// Fits the non-missing points of `series` inside `range` with the default
/// fitter settings.
pub fn fit_power_law(series: &ExcessSeries, range: FitRange) -> Result<PowerLawFit, FitError> {
    fit_series(&PowerLawFitter::default(), series, range)
}

pub(crate) fn fit_series(
    fitter: &PowerLawFitter,
    series: &ExcessSeries,
    range: FitRange,
) -> Result<PowerLawFit, FitError> {
    if range.t_min < 1 || range.t_min > range.t_max {
        return Err(FitError::DegenerateData(format!(
            "invalid fit range [{}, {}]",
            range.t_min, range.t_max
        )));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = (range.t_min..=range.t_max)
        .filter_map(|t| series.value(t).map(|y| (t as f64, y)))
        .unzip();
    let mut fit = fitter.fit(&ts, &ys)?;
    fit.fit_range = range;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(a: f64, alpha: f64, ts: impl Iterator<Item = usize>) -> (Vec<f64>, Vec<f64>) {
        ts.map(|t| (t as f64, model(t as f64, a, alpha))).unzip()
    }

    #[test]
    fn recovers_exact_models() {
        for (a, alpha) in [(1.0, 0.5), (2.0, 1.0)] {
            let (ts, ys) = exact(a, alpha, 1..=160);
            let fit = PowerLawFitter::default().fit(&ts, &ys).unwrap();
            assert!((fit.amplitude - a).abs() < 1e-8);
            assert!((fit.alpha - alpha).abs() < 1e-8);
            assert!(fit.converged);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let ts: Vec<f64> = (1..=20).map(f64::from).collect();
        let neg: Vec<f64> = ts.iter().map(|t| -1.0 / t).collect();
        assert!(matches!(
            PowerLawFitter::default().fit(&ts, &neg),
            Err(FitError::DegenerateData(_))
        ));
        let zeros = vec![0.0; 20];
        assert!(matches!(
            PowerLawFitter::default().fit(&ts, &zeros),
            Err(FitError::DegenerateData(_))
        ));
        assert!(matches!(
            PowerLawFitter::default().fit(&ts[..5], &ts[..5]),
            Err(FitError::DegenerateData(_))
        ));
    }

    #[test]
    fn tolerates_negative_excursions() {
        let ts: Vec<f64> = (1..=160).map(f64::from).collect();
        let ys: Vec<f64> = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| model(t, 0.5, 1.2) + if i % 2 == 0 { 0.004 } else { -0.004 })
            .collect();
        assert!(ys.iter().any(|&y| y < 0.0));
        let fit = PowerLawFitter::default().fit(&ts, &ys).unwrap();
        assert!((fit.alpha - 1.2).abs() < 0.05, "{}", fit.alpha);
        assert!(fit.alpha_stderr.unwrap() > 0.0);
    }

    #[test]
    fn iteration_cap() {
        let ts: Vec<f64> = (1..=60).map(f64::from).collect();
        let ys: Vec<f64> = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| model(t, 1.5, 0.8) + if i % 3 == 0 { 0.05 } else { -0.01 })
            .collect();
        let fitter = PowerLawFitter {
            max_iterations: 1,
            sse_rel_tol: 0.0,
            step_tol: 0.0,
            ..PowerLawFitter::default()
        };
        assert!(matches!(
            fitter.fit(&ts, &ys),
            Err(FitError::NonConvergence { iterations: 1 })
        ));
    }

    #[test]
    fn excess_subtracts_one() {
        let avg = GroupAverage {
            group: None,
            measure: MeasureKind::Volume,
            t_start: -1,
            mean: vec![Some(9.0), Some(4.0), Some(2.0), None, Some(1.5)],
            stderr: vec![None; 5],
            n: vec![1, 1, 1, 0, 1],
        };
        let ex = make_excess(&avg);
        assert_eq!(ex.values, vec![Some(1.0), None, Some(0.5)]);
        assert_eq!(ex.value(3), Some(0.5));
        assert_eq!(ex.value(0), None);
    }
}
