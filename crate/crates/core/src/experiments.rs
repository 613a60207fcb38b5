//! Sweep campaigns: block length, memory, participation, horizon scaling,
//! and prediction mismatch, with per-setting seed aggregation.
//!
//! Disturbance realizations are keyed by `(seed, T)` only, so every setting
//! within a sweep at a fixed horizon faces an identical environment and the
//! swept parameter is isolated. The comparator is solved once per
//! `(seed, T)` and shared across settings through [`ComparatorCache`].

use std::collections::HashMap;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use crate::comparator::{
    default_budget, solve_comparator, ComparatorDiagnostics, ComparatorSolution, SolverOptions,
};
use crate::costs::{estimate_constants, CostConfig, SurrogateContext};
use crate::learner::{
    run_ogd, run_ogd_p, theory_memory, LearnerConfig, PredictionSource, RunResult,
};
use crate::lti::{generate_disturbances, DisturbanceParams, DisturbanceSequence, SystemModel};
use crate::metrics::{comm_blk, regret_bound_rhs, theory_constants, BoundVariant};
use crate::{config_err, Result};

/// Instance and learner defaults shared by every setting of a sweep.
#[derive(Debug, Clone)]
pub struct BaseSettings {
    pub model: SystemModel,
    pub cost: CostConfig,
    pub dist_params: DisturbanceParams,
    pub t: usize,
    pub k: usize,
    /// `None` resolves to the theory-sized memory for the setting's horizon.
    pub h: Option<usize>,
    pub eta_b: f64,
    pub m: usize,
    pub budget_fraction: f64,
    /// `None` resolves to the box center.
    pub u1: Option<Array1<f64>>,
    pub solver: SolverOptions,
}

impl BaseSettings {
    /// The controlled synthetic instance: `N = n_χ = n_u = 10`, diagonal
    /// `A = 0.95·I`, `B = 0.1·I`, `E = −0.1·I`, `α = 0.2`, `β = 0.8`,
    /// `T = 200`, `K = 10`, `η_B = 0.04`, theory-sized `H`, `m = 5`,
    /// budget fraction `0.45`.
    pub fn default_instance() -> Result<Self> {
        Ok(BaseSettings {
            model: SystemModel::diagonal(10, 0.95, 0.1, -0.1)?,
            cost: CostConfig::coordinate_owned(0.2, 0.8, 10)?,
            dist_params: DisturbanceParams::default(),
            t: 200,
            k: 10,
            h: None,
            eta_b: 0.04,
            m: 5,
            budget_fraction: 0.45,
            u1: None,
            solver: SolverOptions::default(),
        })
    }

    pub fn resolved_h(&self, t: usize) -> usize {
        self.h.unwrap_or_else(|| theory_memory(t, self.model.rho()))
    }

    pub fn resolved_u1(&self) -> Array1<f64> {
        self.u1
            .clone()
            .unwrap_or_else(|| Array1::from_elem(self.model.n_u(), 0.5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    #[serde(rename = "k")]
    BlockLength,
    #[serde(rename = "h")]
    Memory,
    Participation,
    #[serde(rename = "scaling")]
    HorizonScaling,
    #[serde(rename = "prediction")]
    PredictionMismatch,
}

impl SweepKind {
    pub fn label(&self) -> &'static str {
        match self {
            SweepKind::BlockLength => "k",
            SweepKind::Memory => "h",
            SweepKind::Participation => "participation",
            SweepKind::HorizonScaling => "scaling",
            SweepKind::PredictionMismatch => "prediction",
        }
    }

    pub fn default_grid(&self) -> Vec<f64> {
        match self {
            SweepKind::BlockLength => vec![1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 100.0, 200.0],
            SweepKind::Memory => vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 104.0],
            SweepKind::Participation => vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0],
            SweepKind::HorizonScaling => vec![200.0, 400.0, 800.0, 1600.0],
            SweepKind::PredictionMismatch => vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub seeds: u64,
    pub base: BaseSettings,
}

impl SweepPlan {
    pub fn new(kind: SweepKind, base: BaseSettings) -> Self {
        SweepPlan {
            grid: kind.default_grid(),
            kind,
            seeds: 5,
            base,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).collect()
    }
}

/// One `(setting, seed)` outcome, mirroring the record-file schema (the
/// serialized field names match the CSV header).
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub sweep: String,
    pub setting: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "eta_B")]
    pub eta_b: f64,
    pub final_regret: f64,
    pub avg_regret: f64,
    pub comm_total: u64,
    #[serde(rename = "comm_over_sqrtT")]
    pub comm_over_sqrt_t: f64,
    pub pred_mismatch: Option<f64>,
    pub comparator_success: bool,
    pub runtime_ms: u64,
}

/// Side audit per run, consumed by the acceptance gates (movement bound,
/// bound dominance). Not part of the record-file schema.
#[derive(Debug, Clone, Serialize)]
pub struct RunAudit {
    pub setting: String,
    pub seed: u64,
    pub g_loc: f64,
    pub movement_ratio: f64,
    pub bound_rhs: f64,
    pub regret: f64,
    pub v_t: f64,
    pub mean_sampling_dev_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub setting: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub kind: SweepKind,
    pub records: Vec<SweepRecord>,
    pub summaries: Vec<SummaryRow>,
    pub audits: Vec<RunAudit>,
    /// Smallest grid `H` whose mean regret is within 1% of the largest-`H`
    /// mean (memory sweep only).
    pub saturation_h: Option<usize>,
    pub diagnostics: Vec<(String, u64, ComparatorDiagnostics)>,
}

impl SweepOutcome {
    pub fn all_comparators_converged(&self) -> bool {
        self.records.iter().all(|r| r.comparator_success)
    }

    pub fn setting_mean(&self, setting: &str, metric: &str) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| s.setting == setting && s.metric == metric)
            .map(|s| s.mean)
    }
}

/// Comparator solutions keyed by `(seed, T)`.
#[derive(Default)]
pub struct ComparatorCache {
    entries: HashMap<(u64, usize), CacheEntry>,
}

struct CacheEntry {
    solution: ComparatorSolution,
    diagnostics: ComparatorDiagnostics,
    v_t: f64,
}

impl ComparatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Solves every missing `(seed, T)` pair in parallel.
    fn prefill(&mut self, base: &BaseSettings, keys: &[(u64, usize)]) -> Result<()> {
        let missing: Vec<(u64, usize)> = keys
            .iter()
            .copied()
            .filter(|k| !self.entries.contains_key(k))
            .collect();
        let solved: Vec<((u64, usize), Result<CacheEntry>)> = missing
            .par_iter()
            .map(|&(seed, t)| {
                let entry = (|| {
                    let d =
                        generate_disturbances(t, base.model.n_d(), seed, &base.dist_params)?;
                    let v_t = default_budget(&d, base.budget_fraction);
                    let (solution, diagnostics) =
                        solve_comparator(&base.model, &d, &base.cost, v_t, &base.solver)?;
                    Ok(CacheEntry {
                        solution,
                        diagnostics,
                        v_t,
                    })
                })();
                ((seed, t), entry)
            })
            .collect();
        for (key, entry) in solved {
            self.entries.insert(key, entry?);
        }
        Ok(())
    }

    fn get(&self, seed: u64, t: usize) -> &CacheEntry {
        &self.entries[&(seed, t)]
    }
}

/// One fully resolved setting of a sweep.
#[derive(Debug, Clone)]
struct Setting {
    label: String,
    t: usize,
    k: usize,
    h: usize,
    m: usize,
    eta_b: f64,
    prediction: Option<PredictionSource>,
}

fn resolve_settings(plan: &SweepPlan) -> Result<Vec<Setting>> {
    if plan.grid.is_empty() {
        return config_err("sweep grid must not be empty");
    }
    if plan.seeds == 0 {
        return config_err("at least one seed per setting is required");
    }
    let base = &plan.base;
    let n_clients = base.cost.n_clients();
    let as_positive_int = |v: f64, name: &str| -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            return config_err(format!("{name} grid values must be positive integers, got {v}"));
        }
        Ok(v as usize)
    };
    plan.grid
        .iter()
        .map(|&g| {
            Ok(match plan.kind {
                SweepKind::BlockLength => {
                    let k = as_positive_int(g, "K")?;
                    if k > base.t {
                        return config_err(format!("K = {k} exceeds the horizon T = {}", base.t));
                    }
                    Setting {
                        label: format!("K={k}"),
                        t: base.t,
                        k,
                        h: base.resolved_h(base.t),
                        m: base.m,
                        eta_b: base.eta_b,
                        prediction: None,
                    }
                }
                SweepKind::Memory => {
                    let h = as_positive_int(g, "H")?;
                    Setting {
                        label: format!("H={h}"),
                        t: base.t,
                        k: base.k,
                        h,
                        m: base.m,
                        eta_b: base.eta_b,
                        prediction: None,
                    }
                }
                SweepKind::Participation => {
                    let m = as_positive_int(g, "m")?;
                    if m > n_clients {
                        return config_err(format!("m = {m} exceeds N = {n_clients}"));
                    }
                    Setting {
                        label: format!("m={m}"),
                        t: base.t,
                        k: base.k,
                        h: base.resolved_h(base.t),
                        m,
                        eta_b: base.eta_b,
                        prediction: None,
                    }
                }
                SweepKind::HorizonScaling => {
                    let t = as_positive_int(g, "T")?;
                    let k = (t as f64).sqrt().ceil() as usize;
                    Setting {
                        label: format!("T={t}"),
                        t,
                        k,
                        h: theory_memory(t, base.model.rho()),
                        m: base.m,
                        eta_b: base.eta_b,
                        prediction: None,
                    }
                }
                SweepKind::PredictionMismatch => {
                    if g < 0.0 {
                        return config_err("noise scales must be nonnegative");
                    }
                    Setting {
                        label: format!("noise={g}"),
                        t: base.t,
                        k: base.k,
                        h: base.resolved_h(base.t),
                        m: base.m,
                        eta_b: base.eta_b,
                        prediction: Some(PredictionSource::NoisyOracle { scale: g }),
                    }
                }
            })
        })
        .collect()
}

/// Runs one `(setting, seed)` job against a pre-solved comparator.
fn run_job(
    base: &BaseSettings,
    setting: &Setting,
    seed: u64,
    d: &DisturbanceSequence,
    cmp: (&ComparatorSolution, &ComparatorDiagnostics, f64),
    sweep_label: &str,
) -> Result<(SweepRecord, RunAudit)> {
    let started = Instant::now();
    let (cmp_solution, cmp_diag, v_t) = cmp;

    let cfg = LearnerConfig::new(
        setting.t,
        setting.k,
        setting.h,
        setting.eta_b,
        setting.m,
        base.resolved_u1(),
    );
    let run: RunResult = match &setting.prediction {
        None => run_ogd(&base.model, d, &base.cost, &cfg, seed)?,
        Some(source) => run_ogd_p(&base.model, d, &base.cost, &cfg, source, seed)?,
    };

    // audited constants for this (realization, H)
    let ctx = SurrogateContext::build(&base.model, &base.cost, d, setting.h)?;
    let ac = estimate_constants(&ctx);
    let tc = theory_constants(&base.model, &ac, setting.m, base.cost.n_clients())?;
    let bound_variant = match run.pred_mismatch {
        Some(mismatch) => BoundVariant::Prediction { mismatch },
        None => BoundVariant::Baseline,
    };
    let bound_rhs = if setting.eta_b > 0.0 {
        regret_bound_rhs(
            &tc,
            &ac,
            &base.model,
            v_t,
            setting.eta_b,
            setting.k,
            setting.t,
            setting.h,
            bound_variant,
        )?
    } else {
        f64::INFINITY
    };

    let regret = run.j_online - cmp_solution.objective;
    let comm = comm_blk(setting.t, setting.k, setting.m, base.model.n_u());
    debug_assert_eq!(comm, run.comm_total);
    let mean_dev = if run.sampling_dev_sq.is_empty() {
        0.0
    } else {
        run.sampling_dev_sq.iter().sum::<f64>() / run.sampling_dev_sq.len() as f64
    };

    let record = SweepRecord {
        sweep: sweep_label.to_string(),
        setting: setting.label.clone(),
        seed,
        t: setting.t,
        k: setting.k,
        h: setting.h,
        m: setting.m,
        n: base.cost.n_clients(),
        eta_b: setting.eta_b,
        final_regret: regret,
        avg_regret: regret / setting.t as f64,
        comm_total: comm,
        comm_over_sqrt_t: comm as f64 / (setting.t as f64).sqrt(),
        pred_mismatch: run.pred_mismatch,
        comparator_success: cmp_diag.success,
        runtime_ms: started.elapsed().as_millis() as u64,
    };
    let audit = RunAudit {
        setting: setting.label.clone(),
        seed,
        g_loc: ac.g_loc,
        movement_ratio: run.max_movement_ratio(setting.eta_b, setting.k, ac.g_loc),
        bound_rhs,
        regret,
        v_t,
        mean_sampling_dev_sq: mean_dev,
    };
    Ok((record, audit))
}

/// Executes a full sweep. Comparators already present in the cache are
/// reused; new `(seed, T)` pairs are solved and cached.
pub fn run_sweep(plan: &SweepPlan, cache: &mut ComparatorCache) -> Result<SweepOutcome> {
    let settings = resolve_settings(plan)?;
    let seeds = plan.seed_list();

    let mut keys: Vec<(u64, usize)> = Vec::new();
    for setting in &settings {
        for &seed in &seeds {
            keys.push((seed, setting.t));
        }
    }
    keys.sort_unstable();
    keys.dedup();
    cache.prefill(&plan.base, &keys)?;

    let jobs: Vec<(usize, u64)> = settings
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();

    let sweep_label = plan.kind.label();
    let mut results: Vec<((usize, u64), (SweepRecord, RunAudit))> = jobs
        .par_iter()
        .map(|&(idx, seed)| {
            let setting = &settings[idx];
            let d = generate_disturbances(
                setting.t,
                plan.base.model.n_d(),
                seed,
                &plan.base.dist_params,
            )?;
            let entry = cache.get(seed, setting.t);
            let out = run_job(
                &plan.base,
                setting,
                seed,
                &d,
                (&entry.solution, &entry.diagnostics, entry.v_t),
                sweep_label,
            )?;
            Ok(((idx, seed), out))
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|(key, _)| *key);

    let mut records = Vec::with_capacity(results.len());
    let mut audits = Vec::with_capacity(results.len());
    for (_, (record, audit)) in results {
        records.push(record);
        audits.push(audit);
    }

    let summaries = aggregate(&records)?;
    let saturation_h = match plan.kind {
        SweepKind::Memory => saturation_point(&settings, &summaries),
        _ => None,
    };
    let diagnostics = keys
        .iter()
        .map(|&(seed, t)| {
            let entry = cache.get(seed, t);
            (format!("T={t}"), seed, entry.diagnostics.clone())
        })
        .collect();

    Ok(SweepOutcome {
        kind: plan.kind,
        records,
        summaries,
        audits,
        saturation_h,
        diagnostics,
    })
}

fn saturation_point(settings: &[Setting], summaries: &[SummaryRow]) -> Option<usize> {
    let mean_of = |label: &str| -> Option<f64> {
        summaries
            .iter()
            .find(|s| s.setting == label && s.metric == "avg_regret")
            .map(|s| s.mean)
    };
    let last = settings.last()?;
    let reference = mean_of(&last.label)?;
    for setting in settings {
        let mean = mean_of(&setting.label)?;
        if (mean - reference).abs() <= 0.01 * reference.abs().max(f64::MIN_POSITIVE) {
            return Some(setting.h);
        }
    }
    None
}

/// Per-setting mean and sample (n−1) standard deviation of every numeric
/// record column. Order follows the first appearance of each setting.
pub fn aggregate(records: &[SweepRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return config_err("cannot aggregate an empty record set");
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.setting.as_str()) {
            order.push(&r.setting);
        }
    }
    let mut rows = Vec::new();
    for setting in order {
        let group: Vec<&SweepRecord> = records.iter().filter(|r| r.setting == setting).collect();
        let n = group.len();
        let mut push = |metric: &str, values: Vec<f64>| {
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                setting: setting.to_string(),
                metric: metric.to_string(),
                mean,
                std,
                n,
            });
        };
        push(
            "final_regret",
            group.iter().map(|r| r.final_regret).collect(),
        );
        push("avg_regret", group.iter().map(|r| r.avg_regret).collect());
        push(
            "comm_total",
            group.iter().map(|r| r.comm_total as f64).collect(),
        );
        push(
            "comm_over_sqrtT",
            group.iter().map(|r| r.comm_over_sqrt_t).collect(),
        );
        if group.iter().any(|r| r.pred_mismatch.is_some()) {
            push(
                "pred_mismatch",
                group.iter().filter_map(|r| r.pred_mismatch).collect(),
            );
        }
    }
    Ok(rows)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_base() -> BaseSettings {
        let mut base = BaseSettings::default_instance().unwrap();
        base.t = 30;
        base.k = 5;
        base.h = Some(10);
        base
    }

    #[test]
    fn aggregate_examples() {
        let record = |setting: &str, seed: u64, regret: f64| SweepRecord {
            sweep: "k".into(),
            setting: setting.into(),
            seed,
            t: 30,
            k: 5,
            h: 10,
            m: 5,
            n: 10,
            eta_b: 0.04,
            final_regret: regret,
            avg_regret: regret / 30.0,
            comm_total: 600,
            comm_over_sqrt_t: 600.0 / 30f64.sqrt(),
            pred_mismatch: None,
            comparator_success: true,
            runtime_ms: 1,
        };
        // single seed -> std 0
        let rows = aggregate(&[record("K=5", 0, 2.0)]).unwrap();
        let fr = rows.iter().find(|r| r.metric == "final_regret").unwrap();
        assert_eq!((fr.mean, fr.std, fr.n), (2.0, 0.0, 1));
        // two records (1, 3) -> mean 2, std sqrt(2)
        let rows = aggregate(&[record("K=5", 0, 1.0), record("K=5", 1, 3.0)]).unwrap();
        let fr = rows.iter().find(|r| r.metric == "final_regret").unwrap();
        assert_eq!(fr.mean, 2.0);
        assert!((fr.std - 2.0_f64.sqrt()).abs() < 1e-15);
        // permutation invariance
        let rows_rev = aggregate(&[record("K=5", 1, 3.0), record("K=5", 0, 1.0)]).unwrap();
        let fr_rev = rows_rev.iter().find(|r| r.metric == "final_regret").unwrap();
        assert_eq!(fr.mean, fr_rev.mean);
        assert_eq!(fr.std, fr_rev.std);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn block_sweep_single_setting_at_full_horizon() {
        let base = tiny_base();
        let mut plan = SweepPlan::new(SweepKind::BlockLength, base);
        plan.grid = vec![30.0];
        plan.seeds = 2;
        let mut cache = ComparatorCache::new();
        let out = run_sweep(&plan, &mut cache).unwrap();
        assert_eq!(out.records.len(), 2);
        // K = T -> exactly one communication round
        for r in &out.records {
            assert_eq!(r.comm_total, 2 * 5 * 10);
        }
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn comm_strictly_decreases_along_the_block_grid() {
        let base = tiny_base();
        let mut plan = SweepPlan::new(SweepKind::BlockLength, base);
        plan.grid = vec![1.0, 3.0, 10.0, 30.0];
        plan.seeds = 1;
        let mut cache = ComparatorCache::new();
        let out = run_sweep(&plan, &mut cache).unwrap();
        let comms: Vec<u64> = out.records.iter().map(|r| r.comm_total).collect();
        for w in comms.windows(2) {
            assert!(w[1] < w[0], "comm must strictly decrease over {comms:?}");
        }
    }

    #[test]
    fn sweeps_are_reproducible() {
        let base = tiny_base();
        let mut plan = SweepPlan::new(SweepKind::Participation, base);
        plan.grid = vec![2.0, 10.0];
        plan.seeds = 2;
        let mut cache_a = ComparatorCache::new();
        let out_a = run_sweep(&plan, &mut cache_a).unwrap();
        let mut cache_b = ComparatorCache::new();
        let out_b = run_sweep(&plan, &mut cache_b).unwrap();
        assert_eq!(out_a.records.len(), out_b.records.len());
        for (a, b) in out_a.records.iter().zip(out_b.records.iter()) {
            assert_eq!(a.setting, b.setting);
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.final_regret.to_bits(), b.final_regret.to_bits());
            assert_eq!(a.comm_total, b.comm_total);
            assert_eq!(a.pred_mismatch.map(f64::to_bits), b.pred_mismatch.map(f64::to_bits));
        }
    }

    #[test]
    fn records_comm_matches_recomputation() {
        let base = tiny_base();
        let mut plan = SweepPlan::new(SweepKind::BlockLength, base);
        plan.grid = vec![1.0, 5.0, 30.0];
        plan.seeds = 1;
        let mut cache = ComparatorCache::new();
        let out = run_sweep(&plan, &mut cache).unwrap();
        for r in &out.records {
            assert_eq!(r.comm_total, comm_blk(r.t, r.k, r.m, 10));
        }
    }

    #[test]
    fn memory_sweep_saturates_for_deep_windows() {
        // The action part of the surrogate state is sum_{i<H} A^i B u, so
        // two deep windows differ only through a rho^H tail: regrets agree
        // to far better than the 1% saturation margin.
        let base = tiny_base();
        let mut plan = SweepPlan::new(SweepKind::Memory, base);
        plan.grid = vec![200.0, 300.0];
        plan.seeds = 2;
        let mut cache = ComparatorCache::new();
        let out = run_sweep(&plan, &mut cache).unwrap();
        for seed in 0..2u64 {
            let a = out
                .records
                .iter()
                .find(|r| r.setting == "H=200" && r.seed == seed)
                .unwrap();
            let b = out
                .records
                .iter()
                .find(|r| r.setting == "H=300" && r.seed == seed)
                .unwrap();
            let rel = (a.final_regret - b.final_regret).abs() / b.final_regret.abs().max(1e-9);
            assert!(rel < 1e-3, "seed {seed}: relative gap {rel}");
        }
        assert_eq!(out.saturation_h, Some(200));
    }

    #[test]
    fn full_participation_is_sampling_noise_free() {
        let base = tiny_base();
        let mut plan = SweepPlan::new(SweepKind::Participation, base);
        plan.grid = vec![10.0];
        plan.seeds = 2;
        let mut cache = ComparatorCache::new();
        let out = run_sweep(&plan, &mut cache).unwrap();
        for audit in &out.audits {
            assert_eq!(audit.mean_sampling_dev_sq, 0.0);
        }
    }

    #[test]
    fn zero_noise_prediction_sweep_has_zero_mismatch() {
        let base = tiny_base();
        let mut plan = SweepPlan::new(SweepKind::PredictionMismatch, base);
        plan.grid = vec![0.0];
        plan.seeds = 1;
        let mut cache = ComparatorCache::new();
        let out = run_sweep(&plan, &mut cache).unwrap();
        assert_eq!(out.records[0].pred_mismatch, Some(0.0));
    }

    #[test]
    fn scaling_sweep_sets_sqrt_block_lengths() {
        let mut base = tiny_base();
        base.t = 64;
        let mut plan = SweepPlan::new(SweepKind::HorizonScaling, base);
        plan.grid = vec![64.0, 100.0];
        plan.seeds = 1;
        let mut cache = ComparatorCache::new();
        let out = run_sweep(&plan, &mut cache).unwrap();
        let r64 = out.records.iter().find(|r| r.setting == "T=64").unwrap();
        assert_eq!(r64.k, 8);
        let r100 = out.records.iter().find(|r| r.setting == "T=100").unwrap();
        assert_eq!(r100.k, 10);
        // doubling T never decreases total communication
        assert!(r100.comm_total >= r64.comm_total);
    }
}
