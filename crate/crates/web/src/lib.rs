//! Browser bindings: JSON in, JSON out. The pure functions in [`demo`] do the
//! work and are tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use wasm_bindgen::prelude::*;

pub mod demo {
    use cellfree_ris::{generate_channels, run_baseline, MethodId, Position, ScenarioConfig, SolveOptions};
    use serde::{Deserialize, Serialize};

    /// Slider state sent by the page. Missing fields take the defaults.
    #[derive(Debug, Clone, Deserialize)]
    #[serde(default)]
    pub struct Params {
        pub p_max_dbm: f64,
        pub user_x: f64,
        pub ris_elements: usize,
        pub num_users: usize,
        pub seed: u64,
        pub seeds: u64,
        pub method: MethodId,
    }

    impl Default for Params {
        fn default() -> Self {
            Self {
                p_max_dbm: 20.0,
                user_x: 60.0,
                ris_elements: 100,
                num_users: 4,
                seed: 0,
                seeds: 2,
                method: MethodId::PdWithRis,
            }
        }
    }

    impl Params {
        fn config(&self) -> Result<ScenarioConfig, String> {
            let mut c = ScenarioConfig {
                p_max_dbm: self.p_max_dbm,
                user_circle_center: Position::new(self.user_x, 0.0),
                ris_elements: self.ris_elements,
                ..ScenarioConfig::default()
            };
            c.set_num_users(self.num_users);
            c.validate().map_err(|e| e.to_string())?;
            Ok(c)
        }
    }

    #[derive(Debug, Serialize)]
    pub struct TracePoint {
        pub iteration: usize,
        pub sum_rate: f64,
        pub surrogate: f64,
    }

    #[derive(Debug, Serialize)]
    pub struct Trace {
        pub method: MethodId,
        pub initial_sum_rate: f64,
        pub points: Vec<TracePoint>,
        pub final_sum_rate: f64,
        pub converged: bool,
        pub signaling_paper: u64,
        pub signaling_actual: u64,
        /// Final RIS phases in radians.
        pub theta_phase: Vec<f64>,
        pub theta_modulus: Vec<f64>,
    }

    #[derive(Debug, Serialize)]
    pub struct MethodRate {
        pub method: MethodId,
        pub sum_rate: f64,
        pub iterations: usize,
    }

    #[derive(Debug, Serialize)]
    pub struct Curve {
        pub method: MethodId,
        pub x: Vec<f64>,
        pub mean: Vec<f64>,
    }

    fn parse(json: &str) -> Result<Params, String> {
        if json.trim().is_empty() {
            return Ok(Params::default());
        }
        serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))
    }

    /// Convergence trace of one method on one realization.
    pub fn solve_trace(json: &str) -> Result<String, String> {
        let p = parse(json)?;
        let config = p.config()?;
        let ch = generate_channels(&config, p.seed).map_err(|e| e.to_string())?;
        let (state, report) =
            run_baseline(p.method, &config, &ch, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let trace = Trace {
            method: p.method,
            initial_sum_rate: report.initial_sum_rate,
            points: report
                .trace
                .iter()
                .map(|r| TracePoint { iteration: r.iteration, sum_rate: r.sum_rate, surrogate: r.surrogate })
                .collect(),
            final_sum_rate: report.final_sum_rate(),
            converged: report.converged,
            signaling_paper: report.ledger.paper_total(),
            signaling_actual: report.ledger.actual_total(),
            theta_phase: state.theta.iter().map(|z| z.arg()).collect(),
            theta_modulus: state.theta.iter().map(|z| z.norm()).collect(),
        };
        serde_json::to_string(&trace).map_err(|e| e.to_string())
    }

    /// Sum rate of every scheme on one shared realization.
    pub fn compare_methods(json: &str) -> Result<String, String> {
        let p = parse(json)?;
        let config = p.config()?;
        let ch = generate_channels(&config, p.seed).map_err(|e| e.to_string())?;
        let rates = MethodId::ALL
            .iter()
            .map(|&m| {
                run_baseline(m, &config, &ch, &SolveOptions::default())
                    .map(|(_, r)| MethodRate { method: m, sum_rate: r.final_sum_rate(), iterations: r.iterations })
                    .map_err(|e| format!("{m}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        serde_json::to_string(&rates).map_err(|e| e.to_string())
    }

    /// Mean sum rate against the user-cluster position for the RIS-optimized
    /// and RIS-free distributed schemes, averaged over `seeds` realizations.
    pub fn location_sweep(json: &str) -> Result<String, String> {
        let p = parse(json)?;
        let xs: Vec<f64> = (0..=6).map(|i| 20.0 * i as f64).collect();
        let seeds = p.seeds.max(1);
        let mut curves: Vec<Curve> = [MethodId::PdWithRis, MethodId::PdNoRis]
            .into_iter()
            .map(|method| Curve { method, x: xs.clone(), mean: Vec::new() })
            .collect();
        for &x in &xs {
            let config = Params { user_x: x, ..p.clone() }.config()?;
            let mut sums = vec![0.0; curves.len()];
            for seed in p.seed..p.seed + seeds {
                let ch = generate_channels(&config, seed).map_err(|e| e.to_string())?;
                for (sum, curve) in sums.iter_mut().zip(&curves) {
                    let (_, r) = run_baseline(curve.method, &config, &ch, &SolveOptions::default())
                        .map_err(|e| e.to_string())?;
                    *sum += r.final_sum_rate();
                }
            }
            for (curve, sum) in curves.iter_mut().zip(sums) {
                curve.mean.push(sum / seeds as f64);
            }
        }
        serde_json::to_string(&curves).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen(js_name = solveTrace)]
pub fn solve_trace(params: &str) -> Result<String, JsError> {
    demo::solve_trace(params).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = compareMethods)]
pub fn compare_methods(params: &str) -> Result<String, JsError> {
    demo::compare_methods(params).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = locationSweep)]
pub fn location_sweep(params: &str) -> Result<String, JsError> {
    demo::location_sweep(params).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::demo;
    use serde_json::Value;

    #[test]
    fn trace_has_points_and_phases() {
        let out: Value =
            serde_json::from_str(&demo::solve_trace(r#"{"ris_elements": 20, "seed": 3}"#).unwrap()).unwrap();
        assert_eq!(out["theta_phase"].as_array().unwrap().len(), 20);
        assert!(!out["points"].as_array().unwrap().is_empty());
        assert!(out["final_sum_rate"].as_f64().unwrap() > 0.0);
        assert!(out["theta_modulus"].as_array().unwrap().iter().all(|m| m.as_f64().unwrap() <= 1.0 + 1e-12));
    }

    #[test]
    fn comparison_covers_all_methods() {
        let out: Value = serde_json::from_str(&demo::compare_methods(r#"{"ris_elements": 10}"#).unwrap()).unwrap();
        let names: Vec<&str> = out.as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
        assert_eq!(
            names,
            ["centralized_with_ris", "pd_with_ris", "pd_random_ris", "pd_no_ris", "zf_no_ris", "mrt_no_ris"]
        );
    }

    #[test]
    fn sweep_has_seven_points_per_curve() {
        let out: Value =
            serde_json::from_str(&demo::location_sweep(r#"{"ris_elements": 10, "seeds": 1, "num_users": 2}"#).unwrap())
                .unwrap();
        for curve in out.as_array().unwrap() {
            assert_eq!(curve["mean"].as_array().unwrap().len(), 7);
        }
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(demo::solve_trace("{").is_err());
        assert!(demo::solve_trace(r#"{"method": "nope"}"#).is_err());
        assert!(demo::compare_methods(r#"{"num_users": 0}"#).is_err());
        assert!(demo::solve_trace("").is_ok());
    }
}
