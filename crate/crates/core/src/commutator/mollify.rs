use crate::error::{Error, Result};
use crate::matrixkit::{CMatrix, C64};
use crate::opfamily::ProjectionFamily;
use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;
use std::sync::Arc;

/// Gauss–Legendre nodes per convolution window.
pub const BUMP_NODES: usize = 24;

/// `Q_n = J_{1/n} * P'` with the bump `J(u) ∝ (1−u²)³` on `[−1, 1]`.
///
/// Near `t = 0` and `t = 1` the window is clipped to `[0, 1]` and the kernel
/// renormalised there, so `Q_n(t)` is always a convex combination of values
/// of `P'` and `sup‖Q_n‖ ≤ sup‖P'‖`.
#[derive(Clone)]
pub struct MollifiedDerivative {
    pub n: usize,
    source: ProjectionFamily,
    rule: Arc<GaussLegendre>,
}

impl std::fmt::Debug for MollifiedDerivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MollifiedDerivative").field("n", &self.n).finish()
    }
}

impl MollifiedDerivative {
    pub fn new(p: &ProjectionFamily, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParam {
                name: "n".into(),
                reason: "mollifier index must be at least 2".into(),
            });
        }
        let nodes = NonZeroUsize::new(BUMP_NODES).expect("nonzero");
        Ok(Self {
            n,
            source: p.clone(),
            rule: Arc::new(GaussLegendre::new(nodes)),
        })
    }

    pub fn kernel(u: f64) -> f64 {
        if u.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - u * u).powi(3)
        }
    }

    /// `Q_n(t)` for `t ∈ [0, 1]` (clamped outside).
    pub fn at(&self, t: f64) -> CMatrix {
        let t = t.clamp(0.0, 1.0);
        let h = 1.0 / self.n as f64;
        let (lo, hi) = ((t - h).max(0.0), (t + h).min(1.0));
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let d = self.source.dim;
        let mut acc = CMatrix::zeros(d, d);
        let mut mass = 0.0;
        for &(x, w) in self.rule.as_node_weight_pairs() {
            let s = mid + half * x;
            let weight = w * Self::kernel((t - s) / h);
            if weight == 0.0 {
                continue;
            }
            acc += self.source.derivative(s) * C64::from(weight);
            mass += weight;
        }
        acc / C64::from(mass)
    }
}
