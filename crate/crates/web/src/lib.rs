//! Browser demo: a one-dimensional two-group quadratic instance
//! `L_a(w) = k_a (w - c_a)^2 + d_a` explored three ways. Every export takes and
//! returns JSON so the page needs no generated bindings beyond strings.

use lossbalance::data::{QuadraticLoss, SyntheticQuadratic};
use lossbalance::el::{disadvantaged_group, Segment};
use lossbalance::{group_optima, optimal_gamma_el, suboptimal_gamma_el, ElConfig, SolverConfig, TwoGroupProblem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct Instance {
    pub c0: f64,
    pub c1: f64,
    pub k0: f64,
    pub k1: f64,
    #[serde(default)]
    pub d0: f64,
    #[serde(default)]
    pub d1: f64,
    /// Share of group 0.
    pub p0: f64,
}

impl Instance {
    fn problem(&self) -> Result<SyntheticQuadratic, String> {
        let finite = [self.c0, self.c1, self.k0, self.k1, self.d0, self.d1, self.p0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err("all parameters must be finite".into());
        }
        if self.k0 <= 0.0 || self.k1 <= 0.0 {
            return Err("curvatures must be positive".into());
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err("group-0 share must lie in (0, 1)".into());
        }
        let unit = |c: f64, k: f64, d: f64| QuadraticLoss {
            center: DVector::from_element(1, c),
            curvature: DMatrix::from_element(1, 1, k),
            offset: d,
        };
        Ok(SyntheticQuadratic {
            groups: [unit(self.c0, self.k0, self.d0), unit(self.c1, self.k1, self.d1)],
            weights: (self.p0, 1.0 - self.p0),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub gamma: f64,
    pub algo: &'static str,
    pub w: Option<f64>,
    pub loss: Option<f64>,
    pub gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ProfilePoint {
    pub beta: f64,
    pub gap: f64,
    pub loss: f64,
}

#[derive(Debug, Serialize)]
pub struct Profile {
    pub disadvantaged: usize,
    pub w_o: f64,
    pub w_target: f64,
    pub points: Vec<ProfilePoint>,
}

#[derive(Debug, Serialize)]
pub struct Landscape {
    pub w: Vec<f64>,
    pub loss_g0: Vec<f64>,
    pub loss_g1: Vec<f64>,
    pub loss: Vec<f64>,
    pub feasible: Vec<bool>,
    pub alg2: Option<f64>,
    pub alg3: Option<f64>,
    pub error: Option<String>,
}

fn parse(json: &str) -> Result<SyntheticQuadratic, String> {
    let inst: Instance = serde_json::from_str(json).map_err(|e| format!("bad instance: {e}"))?;
    inst.problem()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn el_config(gamma: f64) -> ElConfig {
    ElConfig::new(gamma, 1e-8)
}

/// Alg2 and Alg3 solutions for each gamma.
pub fn tradeoff_curve_json(instance: &str, gammas: &[f64]) -> Result<String, String> {
    let p = parse(instance)?;
    let mut points = Vec::new();
    for &gamma in gammas {
        let runs = [
            ("alg2", optimal_gamma_el(&p, &el_config(gamma))),
            ("alg3", suboptimal_gamma_el(&p, &el_config(gamma))),
        ];
        for (algo, result) in runs {
            points.push(match result {
                Ok(r) => CurvePoint {
                    gamma,
                    algo,
                    w: Some(r.w.as_slice()[0]),
                    loss: Some(r.train.overall),
                    gap: Some(r.train.gap),
                    error: None,
                },
                Err(e) => CurvePoint {
                    gamma,
                    algo,
                    w: None,
                    loss: None,
                    gap: None,
                    error: Some(e.to_string()),
                },
            });
        }
    }
    to_json(&points)
}

/// Gap and overall loss along the segment from `w_O` to the disadvantaged group's optimum.
pub fn segment_profile_json(instance: &str, steps: usize) -> Result<String, String> {
    let p = parse(instance)?;
    let steps = steps.clamp(2, 1000);
    let optima = group_optima(&p, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let a = disadvantaged_group(&p, &optima.w_o);
    let seg = Segment::new(&p, &optima.w_o, optima.group(a), a);
    let points = (0..=steps)
        .map(|i| {
            let beta = i as f64 / steps as f64;
            ProfilePoint {
                beta,
                gap: seg.gap(beta),
                loss: seg.overall(beta),
            }
        })
        .collect();
    to_json(&Profile {
        disadvantaged: a.index(),
        w_o: optima.w_o[0],
        w_target: optima.group(a)[0],
        points,
    })
}

/// Group and overall losses on a grid of `w`, with the feasible set and both solutions.
pub fn landscape_json(instance: &str, gamma: f64, lo: f64, hi: f64, steps: usize) -> Result<String, String> {
    let p = parse(instance)?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err("plot range must satisfy lo < hi".into());
    }
    let steps = steps.clamp(2, 5000);
    let mut out = Landscape {
        w: Vec::with_capacity(steps + 1),
        loss_g0: Vec::with_capacity(steps + 1),
        loss_g1: Vec::with_capacity(steps + 1),
        loss: Vec::with_capacity(steps + 1),
        feasible: Vec::with_capacity(steps + 1),
        alg2: None,
        alg3: None,
        error: None,
    };
    for i in 0..=steps {
        let w = lo + (hi - lo) * i as f64 / steps as f64;
        let l = p.losses(&DVector::from_element(1, w));
        out.w.push(w);
        out.loss_g0.push(l.loss_g0);
        out.loss_g1.push(l.loss_g1);
        out.loss.push(l.overall);
        out.feasible.push(l.gap <= gamma);
    }
    match optimal_gamma_el(&p, &el_config(gamma)) {
        Ok(r) => out.alg2 = Some(r.w.as_slice()[0]),
        Err(e) => out.error = Some(e.to_string()),
    }
    match suboptimal_gamma_el(&p, &el_config(gamma)) {
        Ok(r) => out.alg3 = Some(r.w.as_slice()[0]),
        Err(e) => out.error = out.error.or(Some(e.to_string())),
    }
    to_json(&out)
}

#[wasm_bindgen]
pub fn tradeoff_curve(instance: &str, gammas: &[f64]) -> Result<String, JsValue> {
    tradeoff_curve_json(instance, gammas).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn segment_profile(instance: &str, steps: usize) -> Result<String, JsValue> {
    segment_profile_json(instance, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn landscape(instance: &str, gamma: f64, lo: f64, hi: f64, steps: usize) -> Result<String, JsValue> {
    landscape_json(instance, gamma, lo, hi, steps).map_err(|e| JsValue::from_str(&e))
}
