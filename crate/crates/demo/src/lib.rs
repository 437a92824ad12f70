//! Browser bindings for a small interactive page: the program value on the
//! `sqrt(3)-1` family, the geometric-mean pooling of an instance, and an
//! exact-plus-Monte-Carlo evaluation of a synthesized policy.

use wasm_bindgen::prelude::*;

pub mod ops {
    use prophet_core::dist::{exact_expected_max, geometric_mean_cdf, merged_support};
    use prophet_core::families::sqrt3_example;
    use prophet_core::oracle::{exact_policy_value, optimal_value};
    use prophet_core::policy::extract_policy;
    use prophet_core::program::build_reduced;
    use prophet_core::simulate::monte_carlo;
    use prophet_core::{Instance, ModelKind};

    fn err(e: impl std::fmt::Display) -> String {
        e.to_string()
    }

    /// Program value on the `sqrt(3)-1` example for each `n`.
    pub fn sqrt3_curve(ns: &[u32]) -> Result<Vec<f64>, String> {
        ns.iter()
            .map(|&n| {
                let inst = sqrt3_example(n as usize).map_err(err)?;
                Ok(build_reduced(&inst, ModelKind::ProphetSecretary).map_err(err)?.solve().map_err(err)?.delta)
            })
            .collect()
    }

    /// Triples `(x, G(x), law gap)` over the merged support of the instance,
    /// where `G` pools every variable and the gap compares the law of the
    /// maximum of `n` draws from `G` with the law of the original maximum.
    pub fn geometric_mean(text: &str) -> Result<Vec<f64>, String> {
        let inst = Instance::parse(text).map_err(err)?;
        let g = geometric_mean_cdf(inst.dists()).map_err(err)?;
        let n = inst.n() as i32;
        Ok(merged_support(inst.dists())
            .into_iter()
            .flat_map(|x| {
                let original: f64 = inst.dists().iter().map(|d| d.cdf(x)).product();
                [x, g.cdf(x), (g.cdf(x).powi(n) - original).abs()]
            })
            .collect())
    }

    /// `[delta, exact ratio, exact min visit, MC ratio, MC stderr of the
    /// ratio, optimal online ratio]` for the program policy of the instance.
    pub fn evaluate(text: &str, model: &str, episodes: u32, seed: u64) -> Result<Vec<f64>, String> {
        let inst = Instance::parse(text).map_err(err)?;
        let model: ModelKind = model.parse().map_err(err)?;
        let solved = build_reduced(&inst, model).map_err(err)?.solve().map_err(err)?;
        let policy = extract_policy(&solved).map_err(err)?;
        let exact = exact_policy_value(&policy, &inst, model).map_err(err)?;
        let mc = monte_carlo(&policy, &inst, model, episodes.max(1) as usize, seed).map_err(err)?;
        let emax = exact_expected_max(&inst);
        let opt = optimal_value(&inst, model).map_err(err)?;
        Ok(vec![
            solved.delta,
            exact.ratio,
            exact.min_visit(),
            mc.ratio,
            mc.stderr / emax,
            opt / emax,
        ])
    }
}

#[wasm_bindgen(js_name = sqrt3Curve)]
pub fn sqrt3_curve(ns: Vec<u32>) -> Result<Vec<f64>, JsError> {
    ops::sqrt3_curve(&ns).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = geometricMean)]
pub fn geometric_mean(instance: &str) -> Result<Vec<f64>, JsError> {
    ops::geometric_mean(instance).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn evaluate(instance: &str, model: &str, episodes: u32, seed: u64) -> Result<Vec<f64>, JsError> {
    ops::evaluate(instance, model, episodes, seed).map_err(|e| JsError::new(&e))
}
