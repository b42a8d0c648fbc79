use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Coefficients of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.1,
            beta: 0.01,
            lambda1: 0.005,
            lambda2: 0.005,
            lambda3: 0.005,
            lambda4: 0.005,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ]
    }

    /// Coefficient per generator term, in [`TERM_NAMES`] order.
    pub fn coefficients(&self) -> [f64; 8] {
        [1.0, 1.0, self.alpha, self.beta, self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }

    /// Only the supervised terms.
    pub fn without_adversarial(self) -> Self {
        LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            ..self
        }
    }
}

/// Generator term names in objective order.
pub const TERM_NAMES: [&str; 8] = [
    "con_s",
    "con_t",
    "rec",
    "vgg",
    "inter_s_g",
    "inter_t_g",
    "intra_s_g",
    "intra_t_g",
];

/// Scalar values of one iteration. Adversarial entries are `None` when the
/// corresponding game is disabled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub con_s: f64,
    pub con_t: f64,
    pub rec: f64,
    pub vgg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter_s_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter_t_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_s_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_t_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter_s_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter_t_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_s_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_t_d: Option<f64>,
    pub total: f64,
}

impl LossReport {
    /// Generator terms in [`TERM_NAMES`] order.
    pub fn terms(&self) -> [Option<f64>; 8] {
        [
            Some(self.con_s),
            Some(self.con_t),
            Some(self.rec),
            Some(self.vgg),
            self.inter_s_g,
            self.inter_t_g,
            self.intra_s_g,
            self.intra_t_g,
        ]
    }

    /// Every present value with its name, generator terms first.
    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        let mut out: Vec<(&'static str, f64)> = TERM_NAMES
            .iter()
            .zip(self.terms())
            .filter_map(|(n, v)| v.map(|v| (*n, v)))
            .collect();
        for (n, v) in [
            ("inter_s_d", self.inter_s_d),
            ("inter_t_d", self.inter_t_d),
            ("intra_s_d", self.intra_s_d),
            ("intra_t_d", self.intra_t_d),
        ] {
            if let Some(v) = v {
                out.push((n, v));
            }
        }
        out.push(("total", self.total));
        out
    }

    /// First non-finite value, by name.
    pub fn check_finite(&self) -> Result<()> {
        match self.named_values().into_iter().find(|(_, v)| !v.is_finite()) {
            Some((term, _)) => Err(Error::NonFinite { term: term.to_string() }),
            None => Ok(()),
        }
    }
}

/// `con_s + con_t + α·rec + β·vgg + Σ λᵢ·advᵢ`, absent adversarial terms
/// contributing nothing.
pub fn total_objective(report: &LossReport, w: &LossWeights) -> Result<f64> {
    weighted_total(report, &w.coefficients())
}

/// `Σ cᵢ·termᵢ` over the present terms, in [`TERM_NAMES`] order, with
/// Neumaier compensation.
pub fn weighted_total(report: &LossReport, coefficients: &[f64; 8]) -> Result<f64> {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for ((name, term), coef) in TERM_NAMES.iter().zip(report.terms()).zip(coefficients) {
        if let Some(v) = term {
            if !v.is_finite() {
                return Err(Error::NonFinite { term: name.to_string() });
            }
            let x = coef * v;
            let t = sum + x;
            comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
            sum = t;
        }
    }
    Ok(sum + comp)
}
