use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `δ_{m₀} = ε^{1/(m₀(m₀+1))}`, `δ_{k−1} = η(δ_k)^{1/2}`.
    Quantitative,
    /// `δ_{m₀} = ε^{1/(m₀+1)²}` and the recursive max-definition for the rest.
    Qualitative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSchedule {
    /// `δ₁, …, δ_{m₀}`.
    pub deltas: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Eta<'a, F> {
    f: F,
    delta0: f64,
    warnings: &'a mut Vec<String>,
}

impl<F: Fn(f64) -> f64> Eta<'_, F> {
    fn clamp(&mut self, delta: f64) -> f64 {
        if delta > self.delta0 {
            self.warnings.push(format!("delta {delta:.6e} clamped to delta0 = {}", self.delta0));
            self.delta0
        } else {
            delta
        }
    }

    /// `η(δ)`, raised to `δ` when smaller.
    fn eval(&mut self, delta: f64) -> Result<f64> {
        let v = (self.f)(delta);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParam {
                name: "eta".into(),
                reason: format!("eta({delta:.6e}) = {v}"),
            });
        }
        if v < delta {
            self.warnings.push(format!("eta({delta:.6e}) = {v:.6e} < delta, raised to delta"));
            Ok(delta)
        } else {
            Ok(v)
        }
    }
}

/// Regularisation distances `δ₁..δ_{m₀}` for a given `ε`.
///
/// Components beyond `δ₀` are clamped and `η(δ) < δ` is raised to `δ`; both
/// are reported in `warnings`.
pub fn delta_schedule(eps: f64, m0: usize, eta: impl Fn(f64) -> f64, delta0: f64, kind: ScheduleKind) -> Result<DeltaSchedule> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParam {
            name: "epsilon".into(),
            reason: format!("{eps} is not positive"),
        });
    }
    if m0 == 0 || !(delta0 > 0.0) {
        return Err(Error::InvalidParam {
            name: "m0".into(),
            reason: "need m0 >= 1 and delta0 > 0".into(),
        });
    }
    let mut warnings = Vec::new();
    let mut eta = Eta {
        f: eta,
        delta0,
        warnings: &mut warnings,
    };
    let m = m0 as f64;
    // index i holds δ_{i+1}
    let mut d = vec![0.0; m0];
    match kind {
        ScheduleKind::Quantitative => {
            d[m0 - 1] = eta.clamp(eps.powf(1.0 / (m * (m + 1.0))));
            for k in (1..m0).rev() {
                let v = eta.eval(d[k])?.sqrt();
                d[k - 1] = eta.clamp(v);
            }
        }
        ScheduleKind::Qualitative => {
            let base = eps.powf(1.0 / ((m + 1.0) * (m + 1.0)));
            d[m0 - 1] = eta.clamp(base);
            for l in 1..m0 {
                // δ_{m₀−l} from δ_{m₀−l+1}, …, δ_{m₀}
                let target = m0 - l; // 1-based index of the new entry
                let mut best = base;
                for k in target + 1..=m0 {
                    let prod: f64 = (target + 1..k).map(|i| d[i - 1]).product();
                    let cand = (eta.eval(d[k - 1])? / prod).sqrt();
                    best = best.max(cand);
                }
                d[target - 1] = eta.clamp(best);
            }
        }
    }
    Ok(DeltaSchedule { deltas: d, warnings })
}

/// Rate exponent of the quantitative schedule for `η(δ) = c·δ^β`:
/// `2/(m₀(m₀+1)) · (β/2)^{m₀}`.
pub fn predicted_exponent(m0: usize, beta: f64) -> f64 {
    let m = m0 as f64;
    2.0 / (m * (m + 1.0)) * (beta / 2.0).powi(m0 as i32)
}

/// `max_k ε (Π_{i≤k} δ_i)^{−(m₀+1)}`, which must tend to zero with `ε`.
pub fn remainder_weight(eps: f64, deltas: &[f64]) -> f64 {
    let m = deltas.len() as i32;
    let mut prod = 1.0;
    let mut worst: f64 = 0.0;
    for &d in deltas {
        prod *= d;
        worst = worst.max(eps * prod.powi(-(m + 1)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_is_square_root() {
        let s = delta_schedule(1e-4, 1, |d| d, 1.0, ScheduleKind::Quantitative).unwrap();
        assert!((s.deltas[0] - 1e-2).abs() < 1e-15);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn identity_eta_two_terms() {
        let eps: f64 = 1e-6;
        let s = delta_schedule(eps, 2, |d| d, 1.0, ScheduleKind::Quantitative).unwrap();
        assert!((s.deltas[1] - eps.powf(1.0 / 6.0)).abs() < 1e-14);
        assert!((s.deltas[0] - eps.powf(1.0 / 12.0)).abs() < 1e-14);
        assert!(s.deltas[0] >= s.deltas[1]);
    }

    #[test]
    fn qualitative_is_monotone_and_vanishing() {
        let eta = |d: f64| 2.0 * d.sqrt();
        let mut last = f64::INFINITY;
        for k in 2..12 {
            let eps = 10f64.powi(-2 * k);
            let s = delta_schedule(eps, 3, eta, 1.0, ScheduleKind::Qualitative).unwrap();
            assert!(s.deltas.windows(2).all(|w| w[0] >= w[1]));
            let w = remainder_weight(eps, &s.deltas);
            assert!(w < last * 1.0001 || w < 1e-3);
            last = w;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn small_eta_is_raised_with_warning() {
        let s = delta_schedule(1e-8, 2, |d| d * d, 1.0, ScheduleKind::Quantitative).unwrap();
        assert!(!s.warnings.is_empty());
        assert!((s.deltas[0] - s.deltas[1].sqrt()).abs() < 1e-15);
    }

    #[test]
    fn large_delta_is_clamped() {
        let s = delta_schedule(0.5, 1, |d| d, 0.1, ScheduleKind::Quantitative).unwrap();
        assert_eq!(s.deltas, vec![0.1]);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn holder_exponent() {
        let alpha: f64 = 0.5;
        let p = predicted_exponent(1, alpha / (1.0 + alpha));
        assert!((p - alpha / (2.0 * (1.0 + alpha))).abs() < 1e-15);
    }
}
