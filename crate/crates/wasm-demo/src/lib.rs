//! Browser bindings: a thin JSON facade over the core solver for the static
//! demo page in `www/`. Every export takes a parameter object serialized as
//! JSON and returns JSON, with failures mapped to `{"error": ...}` so the
//! page never deals with exceptions.
//!
//! The logic is target-independent; native tests exercise the same entry
//! points the browser calls.

use ccbe_core::runner::{self, RunReport};
use ccbe_core::scenario::Scenario;
use serde::Deserialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    #[serde(default = "defaults::family")]
    family: String,
    #[serde(default = "defaults::k")]
    k: f64,
    #[serde(default = "defaults::alpha")]
    alpha: f64,
    #[serde(default)]
    theta: f64,
    #[serde(default = "defaults::efficiency")]
    e: f64,
    #[serde(default = "defaults::tau")]
    tau: u8,
    #[serde(default = "defaults::n")]
    n: f64,
    #[serde(default = "defaults::cells")]
    cells: u32,
    #[serde(default = "defaults::t_end")]
    t_end: f64,
}

mod defaults {
    pub fn family() -> String {
        "singular-bound".into()
    }
    pub fn k() -> f64 {
        1.0
    }
    pub fn alpha() -> f64 {
        0.25
    }
    pub fn efficiency() -> f64 {
        0.7
    }
    pub fn tau() -> u8 {
        1
    }
    pub fn n() -> f64 {
        10.0
    }
    pub fn cells() -> u32 {
        128
    }
    pub fn t_end() -> f64 {
        1.0
    }
}

impl Params {
    fn parse(text: &str) -> Result<Params, String> {
        let p: Params = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !(p.cells >= 8 && p.cells <= 512) {
            return Err(format!("cells must be in [8, 512], got {}", p.cells));
        }
        Ok(p)
    }

    /// The demo keeps ~40 saves regardless of horizon so plots stay smooth.
    fn scenario(&self, tau: u8) -> Result<Scenario, String> {
        let save_every = self.t_end / 40.0;
        let text = format!(
            r#"
            [kernel]
            family = "{family}"
            k = {k}
            alpha = {alpha}

            [efficiency]
            model = "constant:{e}"

            [daughter]
            theta = {theta}

            [grid]
            n = {n}
            cells = {cells}

            [truncation]
            tau = {tau}

            [integrator]
            t_end = {t_end}
            save_every = {save_every}
            "#,
            family = self.family,
            k = self.k,
            alpha = self.alpha,
            e = self.e,
            theta = self.theta,
            n = self.n,
            cells = self.cells,
            t_end = self.t_end,
        );
        Scenario::parse_str(&text).map_err(|e| e.to_string())
    }
}

fn err_json(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

fn mass_account(report: &RunReport) -> serde_json::Value {
    let rows = &report.moments.rows;
    json!({
        "times": rows.iter().map(|r| r.t).collect::<Vec<_>>(),
        "m0": rows.iter().map(|r| r.m0).collect::<Vec<_>>(),
        "mass_pivot": rows.iter().map(|r| r.mass_pivot).collect::<Vec<_>>(),
        "lost_mass": rows.iter().map(|r| r.lost_mass).collect::<Vec<_>>(),
        "subgrid_mass": rows.iter().map(|r| r.subgrid_mass).collect::<Vec<_>>(),
    })
}

fn simulate_impl(params_json: &str) -> Result<String, String> {
    let params = Params::parse(params_json)?;
    let scenario = params.scenario(params.tau)?;
    let report = runner::run(&scenario).map_err(|e| e.to_string())?;
    let grid = &report.grid;
    let first = &report.trajectory.states[0];
    let last = report.trajectory.states.last().expect("non-empty trajectory");
    let value = json!({
        "reps": grid.reps(),
        "density_initial": first.g,
        "density_final": last.g,
        "account": mass_account(&report),
        "admissibility": report.admissibility,
        "violations": report.violations,
        "integration_failure": report.integration_failure,
        "exit_code": report.exit_code(),
    });
    Ok(value.to_string())
}

fn check_params_impl(params_json: &str) -> Result<String, String> {
    let params = Params::parse(params_json)?;
    let scenario = params.scenario(params.tau)?;
    // Resolve without the hard gate: a rejection still yields the report.
    let resolved = scenario.resolve().map_err(|e| e.to_string())?;
    let value = json!({
        "admissibility": resolved.admissibility,
        "passes": resolved.admissibility.passes(),
    });
    Ok(value.to_string())
}

fn tau_compare_impl(params_json: &str) -> Result<String, String> {
    let params = Params::parse(params_json)?;
    let conservative = runner::run(&params.scenario(1)?).map_err(|e| e.to_string())?;
    let nonconservative = runner::run(&params.scenario(0)?).map_err(|e| e.to_string())?;
    let value = json!({
        "conservative": mass_account(&conservative),
        "nonconservative": mass_account(&nonconservative),
        "lost_final": nonconservative
            .trajectory
            .states
            .last()
            .map(|s| s.lost_mass),
    });
    Ok(value.to_string())
}

/// Run one scenario and return densities, the mass account and the
/// admissibility report.
#[wasm_bindgen]
pub fn simulate(params_json: &str) -> String {
    simulate_impl(params_json).unwrap_or_else(err_json)
}

/// Admissibility check only; never integrates.
#[wasm_bindgen]
pub fn check_params(params_json: &str) -> String {
    check_params_impl(params_json).unwrap_or_else(err_json)
}

/// Run the same parameters under both truncation regimes and return the two
/// mass accounts side by side.
#[wasm_bindgen]
pub fn tau_compare(params_json: &str) -> String {
    tau_compare_impl(params_json).unwrap_or_else(err_json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_returns_densities_and_account() {
        let out = simulate(r#"{"cells": 64, "t_end": 0.2, "n": 5.0}"#);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "{out}");
        assert_eq!(v["exit_code"], 0);
        assert_eq!(v["reps"].as_array().unwrap().len(), 64);
        assert_eq!(v["density_initial"].as_array().unwrap().len(), 64);
        let times = v["account"]["times"].as_array().unwrap();
        assert!(times.len() >= 2);
    }

    #[test]
    fn check_params_reports_threshold() {
        let out = check_params(r#"{}"#);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["passes"], true);
        assert_eq!(v["admissibility"]["efficiency_threshold"], 2.0 / 3.0);

        let out = check_params(r#"{"e": 0.5}"#);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["passes"], false);
    }

    #[test]
    fn tau_compare_books_loss_only_without_conservation() {
        let out = tau_compare(r#"{"cells": 64, "t_end": 0.2, "n": 5.0, "k": 4.0}"#);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "{out}");
        let lost_cons = v["conservative"]["lost_mass"].as_array().unwrap();
        assert!(lost_cons.iter().all(|x| x.as_f64().unwrap() == 0.0));
        assert!(v["lost_final"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn bad_parameters_return_error_objects() {
        for bad in [
            r#"{"cells": 4}"#,
            r#"{"alpha": 0.6}"#,
            r#"{"unknown_key": 1}"#,
            "not json",
        ] {
            let v: serde_json::Value = serde_json::from_str(&simulate(bad)).unwrap();
            assert!(v.get("error").is_some(), "{bad} should fail");
        }
    }
}
