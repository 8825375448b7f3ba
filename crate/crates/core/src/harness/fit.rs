use crate::error::{Error, Result};
use crate::opfamily::Expectation;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Least-squares fit of `log v = intercept + slope·log ε` with a 95% interval
/// for the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const MIN_FIT_POINTS: usize = 4;

pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidParam {
            name: "fit".into(),
            reason: format!("needs at least {MIN_FIT_POINTS} points, got {}", pairs.len()),
        });
    }
    if let Some(&(e, v)) = pairs.iter().find(|(e, v)| !(*e > 0.0 && *v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParam {
            name: "fit".into(),
            reason: format!("non-positive pair ({e}, {v})"),
        });
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParam {
            name: "fit".into(),
            reason: "all epsilon values coincide".into(),
        });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0).expect("n >= 4").inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        lo: slope - t * se,
        hi: slope + t * se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

pub const LINEAR_SLOPE: (f64, f64) = (0.85, 1.3);
pub const VANISHING_RATIO: f64 = 0.5;
pub const RATE_SLACK: f64 = 0.1;
pub const TRIVIAL_TOL: f64 = 1e-7;
pub const NON_DECAY_RATIO: f64 = 0.9;

/// Number of increases when walking from the largest to the smallest ε.
pub fn inversions(values_by_decreasing_eps: &[f64]) -> usize {
    values_by_decreasing_eps.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Verdict for values ordered by decreasing `ε`.
pub fn verdict(expect: Expectation, values: &[f64], fit: Option<&SlopeFit>) -> Verdict {
    let first = values.first().copied().unwrap_or(f64::NAN);
    let last = values.last().copied().unwrap_or(f64::NAN);
    let slope = fit.map(|f| f.slope);
    let shown = slope.map_or("none (too few points)".to_string(), |s| format!("{s:.4}"));
    match expect {
        Expectation::Linear => {
            let pass = slope.is_some_and(|s| (LINEAR_SLOPE.0..=LINEAR_SLOPE.1).contains(&s));
            Verdict {
                label: "O(eps)".into(),
                pass,
                detail: format!("slope {shown}, accepted [{}, {}]", LINEAR_SLOPE.0, LINEAR_SLOPE.1),
            }
        }
        Expectation::Rate(r) => {
            let pass = slope.is_some_and(|s| s >= r - RATE_SLACK);
            Verdict {
                label: format!("rate {r:.4}"),
                pass,
                detail: format!("slope {shown}, needs >= {:.4}", r - RATE_SLACK),
            }
        }
        Expectation::Vanishing => {
            let inv = inversions(values);
            let pass = last <= VANISHING_RATIO * first && inv <= 1;
            Verdict {
                label: "o(1)".into(),
                pass,
                detail: format!("ratio {:.4}, {inv} inversion(s)", last / first),
            }
        }
        Expectation::Trivial => {
            let worst = values.iter().copied().fold(0.0, f64::max);
            Verdict {
                label: "trivially adiabatic".into(),
                pass: worst <= TRIVIAL_TOL,
                detail: format!("max deviation {worst:.3e}"),
            }
        }
        Expectation::NonAdiabatic => Verdict {
            label: "non-adiabatic".into(),
            pass: last >= NON_DECAY_RATIO * first,
            detail: format!("ratio {:.4e}", last / first),
        },
    }
}
