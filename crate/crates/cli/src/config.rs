//! JSON configuration: one document with `model`, `cost`, `learner`,
//! `comparator`, `sweep`, and `output` sections. Every field is optional and
//! falls back to the controlled synthetic instance defaults.

use ndarray::{Array1, Array2};
use oco_s2_core::comparator::SolverOptions;
use oco_s2_core::costs::CostConfig;
use oco_s2_core::experiments::{BaseSettings, SweepKind, SweepPlan};
use oco_s2_core::learner::Variant;
use oco_s2_core::lti::{DisturbanceParams, SystemModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    pub a_diag: f64,
    pub b_diag: f64,
    pub e_diag: f64,
    /// Full matrices override the diagonal scalars; they require an explicit
    /// stability certificate (`c_a`, `rho`).
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub e: Option<Vec<Vec<f64>>>,
    pub c_a: Option<f64>,
    pub rho: Option<f64>,
    pub k_check: usize,
    pub disturbance: DisturbanceParams,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            n: 10,
            a_diag: 0.95,
            b_diag: 0.1,
            e_diag: -0.1,
            a: None,
            b: None,
            e: None,
            c_a: None,
            rho: None,
            k_check: 200,
            disturbance: DisturbanceParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub alpha: f64,
    pub beta: f64,
    pub clients: Option<usize>,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            alpha: 0.2,
            beta: 0.8,
            clients: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub t: usize,
    pub k: usize,
    /// `null` means theory-sized for the horizon.
    pub h: Option<usize>,
    pub eta_b: f64,
    pub m: usize,
    pub variant: Variant,
    /// `zero`, `oracle`, `prev`, `noisy:<scale>`, or `file:<path>`.
    pub predictions: String,
    pub u1: Option<Vec<f64>>,
    pub sampling_seed: Option<u64>,
}

impl Default for LearnerSection {
    fn default() -> Self {
        LearnerSection {
            t: 200,
            k: 10,
            h: None,
            eta_b: 0.04,
            m: 5,
            variant: Variant::Plain,
            predictions: "zero".to_string(),
            u1: None,
            sampling_seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparatorSection {
    pub budget_fraction: f64,
    /// Explicit budget override; `null` derives it from the disturbance drift.
    pub v_t: Option<f64>,
    pub tol: f64,
    pub path_tol: f64,
    pub max_iters: usize,
    pub stall_window: usize,
    pub stall_tol: f64,
}

impl Default for ComparatorSection {
    fn default() -> Self {
        let opts = SolverOptions::default();
        ComparatorSection {
            budget_fraction: 0.45,
            v_t: None,
            tol: opts.tol,
            path_tol: opts.path_tol,
            max_iters: opts.max_iters,
            stall_window: opts.stall_window,
            stall_tol: opts.stall_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub kind: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub seeds: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            kind: None,
            grid: None,
            seeds: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub format: String,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".to_string(),
            format: "csv".to_string(),
            svg: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub model: ModelSection,
    pub cost: CostSection,
    pub learner: LearnerSection,
    pub comparator: ComparatorSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Config {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))
    }

    pub fn build_model(&self) -> Result<SystemModel, CliError> {
        let section = &self.model;
        match (&section.a, &section.b, &section.e) {
            (None, None, None) => SystemModel::diagonal(
                section.n,
                section.a_diag,
                section.b_diag,
                section.e_diag,
            )
            .map_err(Into::into),
            (Some(a), Some(b), Some(e)) => {
                let (c_a, rho) = match (section.c_a, section.rho) {
                    (Some(c_a), Some(rho)) => (c_a, rho),
                    _ => {
                        return Err(CliError::Config(
                            "full matrices require an explicit certificate (c_a, rho)".into(),
                        ))
                    }
                };
                SystemModel::new(
                    to_matrix(a, "a")?,
                    to_matrix(b, "b")?,
                    to_matrix(e, "e")?,
                    c_a,
                    rho,
                    section.k_check,
                )
                .map_err(Into::into)
            }
            _ => Err(CliError::Config(
                "either give all of a, b, e or none of them".into(),
            )),
        }
    }

    pub fn build_cost(&self, model: &SystemModel) -> Result<CostConfig, CliError> {
        let n_u = model.n_u();
        let clients = self.cost.clients.unwrap_or(n_u);
        if clients != n_u {
            return Err(CliError::Config(format!(
                "coordinate ownership requires clients == n_u (got {clients} vs {n_u})"
            )));
        }
        CostConfig::coordinate_owned(self.cost.alpha, self.cost.beta, n_u).map_err(Into::into)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.comparator.tol,
            path_tol: self.comparator.path_tol,
            max_iters: self.comparator.max_iters,
            stall_window: self.comparator.stall_window,
            stall_tol: self.comparator.stall_tol,
        }
    }

    pub fn base_settings(&self) -> Result<BaseSettings, CliError> {
        let model = self.build_model()?;
        let cost = self.build_cost(&model)?;
        let u1 = match &self.learner.u1 {
            None => None,
            Some(v) => {
                if v.len() != model.n_u() {
                    return Err(CliError::Config(
                        "u1 width does not match the model".into(),
                    ));
                }
                Some(Array1::from_vec(v.clone()))
            }
        };
        Ok(BaseSettings {
            model,
            cost,
            dist_params: self.model.disturbance.clone(),
            t: self.learner.t,
            k: self.learner.k,
            h: self.learner.h,
            eta_b: self.learner.eta_b,
            m: self.learner.m,
            budget_fraction: self.comparator.budget_fraction,
            u1,
            solver: self.solver_options(),
        })
    }

    pub fn sweep_plan(&self, kind: SweepKind) -> Result<SweepPlan, CliError> {
        let base = self.base_settings()?;
        let mut plan = SweepPlan::new(kind, base);
        if let Some(grid) = &self.sweep.grid {
            plan.grid = grid.clone();
        }
        plan.seeds = self.sweep.seeds;
        Ok(plan)
    }
}

pub fn parse_sweep_kind(raw: &str) -> Result<SweepKind, CliError> {
    match raw {
        "k" => Ok(SweepKind::BlockLength),
        "h" => Ok(SweepKind::Memory),
        "participation" => Ok(SweepKind::Participation),
        "scaling" => Ok(SweepKind::HorizonScaling),
        "prediction" => Ok(SweepKind::PredictionMismatch),
        other => Err(CliError::Config(format!(
            "unknown sweep kind '{other}' (expected k, h, participation, scaling, or prediction)"
        ))),
    }
}

fn to_matrix(rows: &[Vec<f64>], name: &str) -> Result<Array2<f64>, CliError> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("matrix '{name}' must be rectangular and nonempty")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| CliError::Config(format!("matrix '{name}': {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_resolves_to_the_default_instance() {
        let cfg: Config = serde_json::from_str("{}").unwrap();
        let base = cfg.base_settings().unwrap();
        assert_eq!(base.t, 200);
        assert_eq!(base.k, 10);
        assert_eq!(base.m, 5);
        assert_eq!(base.model.n_u(), 10);
        assert_eq!(base.resolved_h(200), 104);
        assert!((base.eta_b - 0.04).abs() < 1e-15);
        assert!((base.budget_fraction - 0.45).abs() < 1e-15);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<Config>("{\"learner\": {\"tt\": 3}}").is_err());
    }

    #[test]
    fn full_matrices_need_a_certificate() {
        let raw = r#"{"model": {"a": [[0.5]], "b": [[1.0]], "e": [[0.0]]}}"#;
        let cfg: Config = serde_json::from_str(raw).unwrap();
        assert!(matches!(cfg.build_model(), Err(CliError::Config(_))));
        let raw = r#"{"model": {"a": [[0.5]], "b": [[1.0]], "e": [[0.0]], "c_a": 1.0, "rho": 0.5},
                      "cost": {"clients": 1}}"#;
        let cfg: Config = serde_json::from_str(raw).unwrap();
        assert!(cfg.base_settings().is_ok());
    }
}
