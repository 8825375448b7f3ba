use super::MAX_JUMPS;
use crate::error::{Error, Result};
use crate::matrixkit::{self, adjoint, mul, norm2, CMatrix, C64};
use serde::{Deserialize, Serialize};

/// A complex matrix as nested row arrays; `im` may be omitted for real input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows: Vec<Vec<C64>> = match &self.im {
            None => self.re.iter().map(|r| r.iter().map(|&x| C64::from(x)).collect()).collect(),
            Some(im) => {
                if im.len() != self.re.len() || im.iter().zip(&self.re).any(|(a, b)| a.len() != b.len()) {
                    return Err(Error::Parse("real and imaginary parts differ in shape".into()));
                }
                self.re
                    .iter()
                    .zip(im)
                    .map(|(r, i)| r.iter().zip(i).map(|(&x, &y)| C64::new(x, y)).collect())
                    .collect()
            }
        };
        matrixkit::from_rows(&rows)
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&C64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        Self {
            re: rows(|z| z.re),
            im: Some(rows(|z| z.im)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecJson {
    dim: usize,
    hamiltonian: MatrixJson,
    #[serde(default)]
    jumps: Vec<MatrixJson>,
    #[serde(default = "default_p")]
    schatten_p: f64,
}

fn default_p() -> f64 {
    2.0
}

/// Hamiltonian, jump operators and the Schatten exponent `p ∈ (1, ∞)` (the
/// latter only affects reported norms).
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSpec {
    pub dim: usize,
    pub h: CMatrix,
    pub jumps: Vec<CMatrix>,
    pub p: f64,
}

impl LindbladSpec {
    pub fn new(h: CMatrix, jumps: Vec<CMatrix>) -> Self {
        Self {
            dim: h.nrows(),
            h,
            jumps,
            p: 2.0,
        }
    }

    /// Hermitian `H` to `1e-12`, weak dephasing `‖ΣBB* − ΣB*B‖ ≤ 1e-10`.
    pub fn validate(&self) -> Result<()> {
        let d = matrixkit::check_square(&self.h)?;
        if d != self.dim {
            return Err(Error::Dimension(format!("H is {d}x{d}, spec says {}", self.dim)));
        }
        matrixkit::check_finite(&self.h)?;
        if self.jumps.len() > MAX_JUMPS {
            return Err(Error::InvalidParam {
                name: "jumps".into(),
                reason: format!("at most {MAX_JUMPS} jump operators"),
            });
        }
        if !(self.p > 1.0) {
            return Err(Error::InvalidParam {
                name: "schatten_p".into(),
                reason: "must lie in (1, inf)".into(),
            });
        }
        let herm = matrixkit::hermitian_defect(&self.h);
        if herm > 1e-12 * norm2(&self.h).max(1.0) {
            return Err(Error::NotHermitian(herm));
        }
        let mut diff = CMatrix::zeros(d, d);
        let mut scale: f64 = 1.0;
        for b in &self.jumps {
            if b.shape() != (d, d) {
                return Err(Error::Dimension("jump operator shape".into()));
            }
            matrixkit::check_finite(b)?;
            diff += mul(b, &adjoint(b)) - mul(&adjoint(b), b);
            scale = scale.max(norm2(b).powi(2));
        }
        let defect = norm2(&diff);
        if defect > 1e-10 * scale {
            return Err(Error::NotWeaklyDephasing(defect));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SpecJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let spec = Self {
            dim: raw.dim,
            h: raw.hamiltonian.to_matrix()?,
            jumps: raw.jumps.iter().map(MatrixJson::to_matrix).collect::<Result<_>>()?,
            p: raw.schatten_p,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let raw = SpecJson {
            dim: self.dim,
            hamiltonian: MatrixJson::from_matrix(&self.h),
            jumps: self.jumps.iter().map(MatrixJson::from_matrix).collect(),
            schatten_p: self.p,
        };
        serde_json::to_string_pretty(&raw).expect("spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let text = r#"{"dim": 2, "hamiltonian": {"re": [[0, 0], [0, 1]]}, "jumps": [{"re": [[1, 0], [0, -1]], "im": [[0, 0], [0, 0]]}]}"#;
        let spec = LindbladSpec::from_json(text).unwrap();
        assert_eq!(spec.p, 2.0);
        let again = LindbladSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn rejects_non_hermitian_and_non_normal_sum() {
        let text = r#"{"dim": 2, "hamiltonian": {"re": [[0, 1], [0, 0]]}}"#;
        assert!(matches!(LindbladSpec::from_json(text), Err(Error::NotHermitian(_))));
        let text = r#"{"dim": 2, "hamiltonian": {"re": [[0, 0], [0, 0]]}, "jumps": [{"re": [[0, 1], [0, 0]]}]}"#;
        assert!(matches!(LindbladSpec::from_json(text), Err(Error::NotWeaklyDephasing(_))));
    }
}
