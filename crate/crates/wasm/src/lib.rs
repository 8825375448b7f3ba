//! Browser bindings: every export takes plain numbers and strings and returns
//! a JSON string, so the page needs no generated TypeScript glue.

use adiabatica::harness::{self, geometric, ExperimentConfig};
use adiabatica::matrixkit::eigenvalues;
use adiabatica::opfamily::{example, manifest_json, Params};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest dimension the page will build; keeps a click under a few seconds.
const MAX_DIM: usize = 160;

fn parse_params(json: &str) -> Result<Params, String> {
    if json.trim().is_empty() {
        return Ok(Params::new());
    }
    serde_json::from_str(json).map_err(|e| format!("parameters: {e}"))
}

fn config(name: &str, params_json: &str, eps: Vec<f64>, grid_points: usize) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::new(name);
    cfg.params = parse_params(params_json)?;
    cfg.epsilon.values = Some(eps);
    cfg.grid_points = grid_points;
    cfg.commutator = false;
    let ex = example(name, &cfg.params).map_err(|e| e.to_string())?;
    if ex.family.dim > MAX_DIM {
        return Err(format!("dimension {} exceeds the demo limit {MAX_DIM}", ex.family.dim));
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct Profile {
    t: Vec<f64>,
    deviation: Vec<f64>,
    sup: f64,
    adiab_resid: f64,
}

pub fn deviation_profile_json(name: &str, params_json: &str, eps: f64, grid_points: usize) -> Result<String, String> {
    let cfg = config(name, params_json, vec![eps], grid_points)?;
    let report = harness::run(&ExperimentConfig { force: true, ..cfg }, 1).map_err(|e| e.to_string())?;
    let r = &report.records[0];
    let out = Profile {
        t: report.grid.clone(),
        deviation: r.profile.clone(),
        sup: r.sup_dev,
        adiab_resid: r.adiab_resid,
    };
    Ok(serde_json::to_string(&out).expect("profile serializes"))
}

#[derive(Serialize)]
struct Sweep {
    eps: Vec<f64>,
    deviation: Vec<f64>,
    slope: Option<f64>,
    slope_lo: Option<f64>,
    slope_hi: Option<f64>,
    expected: Option<f64>,
    verdict: String,
    pass: bool,
    notes: Vec<String>,
}

pub fn epsilon_sweep_json(name: &str, params_json: &str, eps_max: f64, eps_min: f64, points: usize) -> Result<String, String> {
    if !(eps_min > 0.0 && eps_min < eps_max) || points < 2 {
        return Err("need 0 < eps_min < eps_max and at least 2 points".into());
    }
    let cfg = config(name, params_json, geometric(eps_max, eps_min, points), 21)?;
    let report = harness::run(&cfg, 1).map_err(|e| e.to_string())?;
    let out = Sweep {
        eps: report.records.iter().map(|r| r.eps).collect(),
        deviation: report.records.iter().map(|r| r.sup_dev).collect(),
        slope: report.fit.map(|f| f.slope),
        slope_lo: report.fit.map(|f| f.lo),
        slope_hi: report.fit.map(|f| f.hi),
        expected: harness::expected_slope(report.expectation),
        verdict: report.verdict.label.clone(),
        pass: report.verdict.pass,
        notes: report.notes.clone(),
    };
    Ok(serde_json::to_string(&out).expect("sweep serializes"))
}

#[derive(Serialize)]
struct Spectrum {
    re: Vec<f64>,
    im: Vec<f64>,
    curve: [f64; 2],
}

pub fn spectrum_json(name: &str, params_json: &str, t: f64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&t) {
        return Err("t must lie in [0, 1]".into());
    }
    let ex = example(name, &parse_params(params_json)?).map_err(|e| e.to_string())?;
    if ex.family.dim > MAX_DIM {
        return Err(format!("dimension {} exceeds the demo limit {MAX_DIM}", ex.family.dim));
    }
    let ev = eigenvalues(&ex.family.at(t)).map_err(|e| e.to_string())?;
    let lam = (ex.curve.lambda)(t);
    let out = Spectrum {
        re: ev.iter().map(|z| z.re).collect(),
        im: ev.iter().map(|z| z.im).collect(),
        curve: [lam.re, lam.im],
    };
    Ok(serde_json::to_string(&out).expect("spectrum serializes"))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn list_examples() -> String {
    manifest_json()
}

/// `‖U_ε(t) − V_ε(t)‖` (or the projected variant) on a uniform grid of [0, 1].
#[wasm_bindgen]
pub fn deviation_profile(name: &str, params_json: &str, eps: f64, grid_points: usize) -> Result<String, JsError> {
    js(deviation_profile_json(name, params_json, eps, grid_points))
}

/// Geometric ε-sweep with slope fit and verdict.
#[wasm_bindgen]
pub fn epsilon_sweep(name: &str, params_json: &str, eps_max: f64, eps_min: f64, points: usize) -> Result<String, JsError> {
    js(epsilon_sweep_json(name, params_json, eps_max, eps_min, points))
}

/// Eigenvalues of `A(t)` and the tracked curve point `λ(t)`.
#[wasm_bindgen]
pub fn spectrum(name: &str, params_json: &str, t: f64) -> Result<String, JsError> {
    js(spectrum_json(name, params_json, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_has_one_value_per_grid_point() {
        let v: serde_json::Value = serde_json::from_str(&deviation_profile_json("gap_crossing", "", 0.05, 11).unwrap()).unwrap();
        assert_eq!(v["deviation"].as_array().unwrap().len(), 11);
        assert_eq!(v["deviation"][0].as_f64(), Some(0.0));
    }

    #[test]
    fn sweep_reports_a_linear_rate() {
        let v: serde_json::Value = serde_json::from_str(&epsilon_sweep_json("gap_uniform", r#"{"d": 4}"#, 0.1, 0.01, 4).unwrap()).unwrap();
        let s = v["slope"].as_f64().unwrap();
        assert!((0.85..=1.3).contains(&s), "{s}");
        assert_eq!(v["expected"].as_f64(), Some(1.0));
    }

    #[test]
    fn spectrum_contains_the_curve() {
        let v: serde_json::Value = serde_json::from_str(&spectrum_json("gap_uniform", "", 0.3).unwrap()).unwrap();
        let (re, im) = (v["re"].as_array().unwrap(), v["im"].as_array().unwrap());
        let c = (v["curve"][0].as_f64().unwrap(), v["curve"][1].as_f64().unwrap());
        assert!(re.iter().zip(im).any(|(a, b)| (a.as_f64().unwrap() - c.0).abs() + (b.as_f64().unwrap() - c.1).abs() < 1e-8));
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(spectrum_json("nope", "", 0.1).is_err());
        assert!(spectrum_json("gap_uniform", "{not json", 0.1).is_err());
        assert!(epsilon_sweep_json("gap_uniform", "", 0.01, 0.1, 4).is_err());
        assert!(deviation_profile_json("hölder_density", r#"{"D": 127}"#, 0.1, 11).is_err());
    }
}
