//! Block online gradient descent with sparse communication, and its
//! prediction-augmented variant.
//!
//! A horizon of `T` rounds is partitioned into `B_T = ⌈T/K⌉` blocks; the
//! deployed decision is held fixed within each block. After a block is
//! observed, `m` of `N` clients are sampled uniformly without replacement
//! and return local surrogate gradients summed over the block; the server
//! performs one projected step for the next block. The prediction variant
//! keeps an internal anchor and deploys a prediction-shifted projection of
//! it.

use ndarray::{Array1, Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::costs::{CostConfig, SurrogateContext};
use crate::linalg::norm2;
use crate::lti::{DisturbanceSequence, SystemModel, Trajectory};
use crate::rng::{substream, STREAM_PARTICIPATION, STREAM_PREDICTION_NOISE};
use crate::{config_err, Error, Result};

/// Which learner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Prediction,
}

/// Block learner parameters.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub t: usize,
    pub k: usize,
    pub h: usize,
    pub eta_b: f64,
    pub m: usize,
    /// Initial block decision (plain) or initial anchor (prediction variant).
    pub u1: Array1<f64>,
    /// Optional dedicated seed for participation sampling; defaults to the
    /// run seed. With `m = N` sampling has no effect at all.
    pub sampling_seed: Option<u64>,
}

impl LearnerConfig {
    pub fn new(t: usize, k: usize, h: usize, eta_b: f64, m: usize, u1: Array1<f64>) -> Self {
        LearnerConfig {
            t,
            k,
            h,
            eta_b,
            m,
            u1,
            sampling_seed: None,
        }
    }

    fn validate(&self, n_clients: usize, n_u: usize) -> Result<()> {
        if self.t == 0 {
            return config_err("horizon T must be at least 1");
        }
        if self.k == 0 {
            return config_err("block length K must be at least 1");
        }
        if self.h == 0 {
            return config_err("memory length H must be at least 1");
        }
        // eta = 0 is degenerate but legal: the iterate stays at u1.
        if !(self.eta_b >= 0.0 && self.eta_b.is_finite()) {
            return config_err("step size eta_B must be finite and nonnegative");
        }
        if self.m == 0 || self.m > n_clients {
            return config_err(format!(
                "participation m must satisfy 1 <= m <= N (got m={}, N={})",
                self.m, n_clients
            ));
        }
        if self.u1.len() != n_u {
            return config_err("initial point width does not match the model");
        }
        if self.u1.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return config_err("initial point must lie in the unit box");
        }
        Ok(())
    }

    pub fn block_count(&self) -> usize {
        block_count(self.t, self.k)
    }
}

pub fn block_count(t: usize, k: usize) -> usize {
    (t + k - 1) / k
}

/// Inclusive round range of block `b` (1-indexed): `{(b-1)K+1, …, min(bK, T)}`.
pub fn block_rounds(b: usize, k: usize, t: usize) -> std::ops::RangeInclusive<usize> {
    let start = (b - 1) * k + 1;
    let end = (b * k).min(t);
    start..=end
}

/// Coordinate-wise projection onto the unit box.
pub fn project_box(v: &Array1<f64>) -> Array1<f64> {
    v.mapv(|x| x.clamp(0.0, 1.0))
}

/// Uniform sample of `m` distinct clients out of `0..n`, sorted.
pub fn sample_participants(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return config_err(format!("cannot sample {m} of {n} clients"));
    }
    if m == n {
        return Ok((0..n).collect());
    }
    let mut picked = rand::seq::index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Sampled block gradient `(1/|S|) Σ_{i∈S} Σ_{t∈I_b} ∇c_{i,t}(u)`.
/// The surrogate windows only reach rounds `< t`, so everything here is
/// available once the block has been observed.
pub fn block_gradient(
    ctx: &SurrogateContext<'_>,
    rounds: std::ops::RangeInclusive<usize>,
    u: ArrayView1<f64>,
    participants: &[usize],
) -> Result<Array1<f64>> {
    if rounds.is_empty() {
        return config_err("empty block");
    }
    if participants.is_empty() {
        return config_err("at least one participant is required");
    }
    let mut acc = Array1::zeros(ctx.n_u());
    for &i in participants {
        for t in rounds.clone() {
            acc += &ctx.local_gradient(i, t, u)?;
        }
    }
    Ok(acc / participants.len() as f64)
}

/// Full-population block gradient `G_b` (all `N` clients), computed with the
/// same accumulation order as [`block_gradient`] so full participation
/// reproduces it bit for bit.
pub fn block_full_gradient(
    ctx: &SurrogateContext<'_>,
    rounds: std::ops::RangeInclusive<usize>,
    u: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let all: Vec<usize> = (0..ctx.cfg.n_clients()).collect();
    block_gradient(ctx, rounds, u, &all)
}

/// Where block predictions come from.
#[derive(Debug, Clone)]
pub enum PredictionSource {
    /// `M_b = 0`; reduces the variant to the baseline learner.
    Zero,
    /// `M_b` solves `M = G_b(Π(q_b − η M))`, i.e. the prediction equals the
    /// realized full block gradient at the deployed point. Test-only advice
    /// with zero realized mismatch.
    Oracle,
    /// `M_b = G_{b-1}` evaluated at the previous deployed decision; `M_1 = 0`.
    PreviousBlock,
    /// Oracle plus Gaussian noise of the given scale, renormalized to the
    /// admissible prediction norm.
    NoisyOracle { scale: f64 },
    /// Externally supplied sequence (e.g. loaded from JSON).
    Given(PredictionSequence),
}

/// A validated exogenous prediction sequence: one vector per block with
/// `‖M_b‖ ≤ K·G_P`.
#[derive(Debug, Clone)]
pub struct PredictionSequence {
    vectors: Vec<Array1<f64>>,
    pub k: usize,
    pub g_p: f64,
}

impl PredictionSequence {
    /// Validates the norm cap on every block; violations are rejected, not
    /// clamped.
    pub fn new(vectors: Vec<Array1<f64>>, k: usize, g_p: f64) -> Result<Self> {
        let cap = k as f64 * g_p;
        for (b0, v) in vectors.iter().enumerate() {
            let norm = norm2(v);
            if norm > cap * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "prediction for block {} has norm {norm} > K*G_P = {cap}",
                    b0 + 1
                )));
            }
        }
        Ok(PredictionSequence { vectors, k, g_p })
    }

    /// Loads a JSON array of `B_T` vectors.
    pub fn from_json_str(json: &str, k: usize, g_p: f64) -> Result<Self> {
        let raw: Vec<Vec<f64>> = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("prediction JSON: {e}")))?;
        let vectors = raw.into_iter().map(Array1::from_vec).collect();
        PredictionSequence::new(vectors, k, g_p)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
    pub fn at(&self, b: usize) -> &Array1<f64> {
        &self.vectors[b - 1]
    }
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    /// Block iterates `ū_1..ū_{B_T+1}` (the last one is never deployed).
    pub iterates: Array2<f64>,
    /// Anchors `q_1..q_{B_T+1}` for the prediction variant.
    pub anchors: Option<Array2<f64>>,
    /// Sampled participant sets per block.
    pub participants: Vec<Vec<usize>>,
    /// Synchronization scalars exchanged: `2·m·n_u·B_T`.
    pub comm_total: u64,
    /// Incurred cumulative cost `J_T`.
    pub j_online: f64,
    /// Realized prediction mismatch `Σ_b ‖G_b − M_b‖²` (prediction variant).
    pub pred_mismatch: Option<f64>,
    pub mismatch_per_block: Option<Vec<f64>>,
    /// Per-block `‖ĝ_b − G_b‖²` against the full-population gradient.
    pub sampling_dev_sq: Vec<f64>,
    pub provenance: u64,
}

impl RunResult {
    pub fn block_count(&self) -> usize {
        self.iterates.nrows() - 1
    }

    /// Largest `‖ū_{b+1} − ū_b‖ / (η_B K G_loc)` over blocks; the movement
    /// bound holds iff this is at most 1.
    pub fn max_movement_ratio(&self, eta_b: f64, k: usize, g_loc: f64) -> f64 {
        let denom = eta_b * k as f64 * g_loc;
        if denom == 0.0 {
            // eta = 0 forbids movement entirely
            let mut worst = 0.0_f64;
            for b in 0..self.block_count() {
                let diff = &self.iterates.row(b + 1) - &self.iterates.row(b);
                worst = worst.max(norm2(&diff.to_owned()));
            }
            return if worst == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let mut worst = 0.0_f64;
        for b in 0..self.block_count() {
            let diff = &self.iterates.row(b + 1) - &self.iterates.row(b);
            worst = worst.max(norm2(&diff.to_owned()) / denom);
        }
        worst
    }
}

struct RunState {
    u_rows: Array2<f64>,
    states: Array2<f64>,
    stage_costs: Array1<f64>,
    chi: Array1<f64>,
    j_online: f64,
}

impl RunState {
    fn new(t: usize, n_u: usize, n_chi: usize) -> Self {
        RunState {
            u_rows: Array2::zeros((t, n_u)),
            states: Array2::zeros((t + 1, n_chi)),
            stage_costs: Array1::zeros(t),
            chi: Array1::zeros(n_chi),
            j_online: 0.0,
        }
    }

    fn deploy_block(
        &mut self,
        model: &SystemModel,
        cfg: &CostConfig,
        d: &DisturbanceSequence,
        rounds: std::ops::RangeInclusive<usize>,
        u: &Array1<f64>,
    ) {
        for t in rounds {
            self.u_rows.row_mut(t - 1).assign(u);
            let c = crate::costs::stage_cost(self.chi.view(), u.view(), d.at(t), cfg);
            self.stage_costs[t - 1] = c;
            self.j_online += c;
            self.chi = model.a().dot(&self.chi) + model.b().dot(u) + model.e().dot(&d.at(t));
            self.states.row_mut(t).assign(&self.chi);
        }
    }
}

/// Runs the baseline block learner.
pub fn run_ogd(
    model: &SystemModel,
    d: &DisturbanceSequence,
    cost_cfg: &CostConfig,
    cfg: &LearnerConfig,
    seed: u64,
) -> Result<RunResult> {
    run_inner(model, d, cost_cfg, cfg, seed, None)
}

/// Runs the prediction-augmented learner.
pub fn run_ogd_p(
    model: &SystemModel,
    d: &DisturbanceSequence,
    cost_cfg: &CostConfig,
    cfg: &LearnerConfig,
    predictions: &PredictionSource,
    seed: u64,
) -> Result<RunResult> {
    run_inner(model, d, cost_cfg, cfg, seed, Some(predictions))
}

fn run_inner(
    model: &SystemModel,
    d: &DisturbanceSequence,
    cost_cfg: &CostConfig,
    cfg: &LearnerConfig,
    seed: u64,
    predictions: Option<&PredictionSource>,
) -> Result<RunResult> {
    cfg.validate(cost_cfg.n_clients(), model.n_u())?;
    if d.horizon() != cfg.t {
        return config_err(format!(
            "disturbances cover {} rounds but the learner is configured for {}",
            d.horizon(),
            cfg.t
        ));
    }
    let ctx = SurrogateContext::build(model, cost_cfg, d, cfg.h)?;
    let b_total = cfg.block_count();
    let n_u = model.n_u();

    if let Some(PredictionSource::Given(seq)) = predictions {
        if seq.len() != b_total {
            return config_err(format!(
                "prediction sequence has {} blocks but the run needs {b_total}",
                seq.len()
            ));
        }
    }

    let mut part_rng = substream(cfg.sampling_seed.unwrap_or(seed), STREAM_PARTICIPATION);
    let mut noise_rng = substream(seed, STREAM_PREDICTION_NOISE);
    // norm cap for renormalized noisy advice, audited once per run
    let noisy_g_p = match predictions {
        Some(PredictionSource::NoisyOracle { .. }) => {
            Some(crate::costs::estimate_constants(&ctx).g_p)
        }
        _ => None,
    };

    let mut state = RunState::new(cfg.t, n_u, model.n_chi());
    let mut iterates = Array2::zeros((b_total + 1, n_u));
    let mut anchors = predictions.map(|_| Array2::zeros((b_total + 1, n_u)));
    let mut participants_log = Vec::with_capacity(b_total);
    let mut sampling_dev_sq = Vec::with_capacity(b_total);
    let mut mismatch_per_block = predictions.map(|_| Vec::with_capacity(b_total));

    // Plain learner: `current` is the deployed iterate. Prediction variant:
    // `current` is the anchor q_b and the deployed point is derived per block.
    let mut current = cfg.u1.clone();
    let mut prev_full_gradient: Option<Array1<f64>> = None;

    for b in 1..=b_total {
        let rounds = block_rounds(b, cfg.k, cfg.t);

        let (deployed, prediction) = match predictions {
            None => (current.clone(), None),
            Some(source) => {
                let (m_b, deploy_override) = form_prediction(
                    source,
                    &ctx,
                    rounds.clone(),
                    &current,
                    cfg,
                    b,
                    prev_full_gradient.as_ref(),
                    &mut noise_rng,
                    noisy_g_p,
                )?;
                let deployed = match deploy_override {
                    Some(point) => point,
                    None => project_box(&(&current - &(&m_b * cfg.eta_b))),
                };
                (deployed, Some(m_b))
            }
        };

        if let Some(anchor_rows) = anchors.as_mut() {
            anchor_rows.row_mut(b - 1).assign(&current);
        }
        iterates.row_mut(b - 1).assign(&deployed);

        state.deploy_block(model, cost_cfg, d, rounds.clone(), &deployed);

        let set = sample_participants(cost_cfg.n_clients(), cfg.m, &mut part_rng)?;
        let sampled = block_gradient(&ctx, rounds.clone(), deployed.view(), &set)?;
        let full = block_full_gradient(&ctx, rounds.clone(), deployed.view())?;
        sampling_dev_sq.push(norm2(&(&sampled - &full)).powi(2));
        participants_log.push(set);

        if let (Some(log), Some(m_b)) = (mismatch_per_block.as_mut(), prediction.as_ref()) {
            log.push(norm2(&(&full - m_b)).powi(2));
        }

        current = project_box(&(&current - &(&sampled * cfg.eta_b)));
        prev_full_gradient = Some(full);
    }
    let final_row = match predictions {
        // plain: the never-deployed u_{B+1} produced by the last update
        None => current.clone(),
        // prediction variant: repeat the last deployed decision (the final
        // anchor lives in `anchors`); there is no prediction to shift it with
        Some(_) => iterates.row(b_total - 1).to_owned(),
    };
    iterates.row_mut(b_total).assign(&final_row);
    if let Some(anchor_rows) = anchors.as_mut() {
        anchor_rows.row_mut(b_total).assign(&current);
    }

    let trajectory = Trajectory {
        u: state.u_rows,
        states: state.states,
        stage_costs: Some(state.stage_costs),
        provenance: d.provenance(),
    };
    let pred_mismatch = mismatch_per_block.as_ref().map(|v| v.iter().sum());
    Ok(RunResult {
        trajectory,
        iterates,
        anchors,
        participants: participants_log,
        comm_total: 2 * cfg.m as u64 * n_u as u64 * b_total as u64,
        j_online: state.j_online,
        pred_mismatch,
        mismatch_per_block,
        sampling_dev_sq,
        provenance: d.provenance(),
    })
}

/// Builds `M_b` for one block. For the oracle sources the implicit equation
/// `M = G_b(Π(q − η M))` is solved by fixed-point iteration (the map is a
/// contraction for `η_B K L_β < 1`); at the bitwise fixed point the deployed
/// decision, the prediction, and the realized full gradient are mutually
/// consistent, so the recorded mismatch is exactly zero.
#[allow(clippy::too_many_arguments)]
fn form_prediction(
    source: &PredictionSource,
    ctx: &SurrogateContext<'_>,
    rounds: std::ops::RangeInclusive<usize>,
    anchor: &Array1<f64>,
    cfg: &LearnerConfig,
    b: usize,
    prev_full: Option<&Array1<f64>>,
    noise_rng: &mut ChaCha8Rng,
    noisy_g_p: Option<f64>,
) -> Result<(Array1<f64>, Option<Array1<f64>>)> {
    match source {
        PredictionSource::Zero => Ok((Array1::zeros(ctx.n_u()), None)),
        PredictionSource::Given(seq) => Ok((seq.at(b).clone(), None)),
        PredictionSource::PreviousBlock => Ok((
            prev_full
                .cloned()
                .unwrap_or_else(|| Array1::zeros(ctx.n_u())),
            None,
        )),
        PredictionSource::Oracle => {
            let (g, point) = oracle_fixed_point(ctx, rounds, anchor, cfg.eta_b)?;
            Ok((g, Some(point)))
        }
        PredictionSource::NoisyOracle { scale } => {
            if *scale == 0.0 {
                let (g, point) = oracle_fixed_point(ctx, rounds, anchor, cfg.eta_b)?;
                return Ok((g, Some(point)));
            }
            let (g, _) = oracle_fixed_point(ctx, rounds.clone(), anchor, cfg.eta_b)?;
            let noise: Array1<f64> =
                Array1::from_shape_fn(ctx.n_u(), |_| StandardNormal.sample(noise_rng));
            let mut m_b = &g + &(&noise * *scale);
            // keep the advice admissible: renormalize onto the norm cap
            let k_len = rounds.end() - rounds.start() + 1;
            let cap = k_len as f64 * noisy_g_p.expect("cap audited for noisy advice");
            let norm = norm2(&m_b);
            if norm > cap {
                m_b *= cap / norm;
            }
            Ok((m_b, None))
        }
    }
}

fn oracle_fixed_point(
    ctx: &SurrogateContext<'_>,
    rounds: std::ops::RangeInclusive<usize>,
    anchor: &Array1<f64>,
    eta_b: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let mut point = anchor.clone();
    let mut grad = block_full_gradient(ctx, rounds.clone(), point.view())?;
    for _ in 0..10_000 {
        let next = project_box(&(anchor - &(&grad * eta_b)));
        if next == point {
            break;
        }
        point = next;
        grad = block_full_gradient(ctx, rounds.clone(), point.view())?;
    }
    // `point == Π(anchor − η·grad)` bitwise at convergence, and `grad` is the
    // full gradient at `point`, so deploying `point` with prediction `grad`
    // realizes zero mismatch by construction.
    Ok((grad, point))
}

/// Step-size and memory rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningRule {
    /// `η_B = 1/√(KT)`.
    Simple,
    /// `η_B = D / (2√(K T Λ_blk))`.
    TheoremA { d_diam: f64, lambda_blk: f64 },
}

/// Returns `(η_B, H)` under the selected rule; both rules share
/// `H = ⌈log T / |log ρ|⌉` (at least 1).
pub fn tuned_params(t: usize, k: usize, rho: f64, rule: TuningRule) -> (f64, usize) {
    let h = theory_memory(t, rho);
    let kt = (k as f64) * (t as f64);
    let eta = match rule {
        TuningRule::Simple => 1.0 / kt.sqrt(),
        TuningRule::TheoremA { d_diam, lambda_blk } => d_diam / (2.0 * (kt * lambda_blk).sqrt()),
    };
    (eta, h)
}

/// Theory-sized memory `⌈log T / |log ρ|⌉`, clamped to at least 1.
pub fn theory_memory(t: usize, rho: f64) -> usize {
    let raw = ((t as f64).ln() / rho.ln().abs()).ceil();
    (raw as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{generate_disturbances, DisturbanceParams, SystemModel};
    use ndarray::array;
    use rand::Rng;

    fn default_model() -> SystemModel {
        SystemModel::diagonal(10, 0.95, 0.1, -0.1).unwrap()
    }

    fn default_cost() -> CostConfig {
        CostConfig::coordinate_owned(0.2, 0.8, 10).unwrap()
    }

    fn center(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 0.5)
    }

    #[test]
    fn block_rounds_cover_partial_final_block() {
        // T = 7, K = 3 -> blocks {1..3}, {4..6}, {7}
        assert_eq!(block_count(7, 3), 3);
        assert_eq!(block_rounds(1, 3, 7), 1..=3);
        assert_eq!(block_rounds(3, 3, 7), 7..=7);
    }

    #[test]
    fn projection_examples() {
        let v = array![-0.5, 0.3, 1.7];
        assert_eq!(project_box(&v), array![0.0, 0.3, 1.0]);
        let inside = array![0.2, 0.9];
        assert_eq!(project_box(&inside), inside);
    }

    #[test]
    fn projection_is_nonexpansive() {
        let mut rng = substream(31, 6);
        for _ in 0..500 {
            let a = Array1::from_shape_fn(8, |_| rng.gen_range(-2.0..3.0));
            let b = Array1::from_shape_fn(8, |_| rng.gen_range(-2.0..3.0));
            let pa = project_box(&a);
            let pb = project_box(&b);
            assert!(norm2(&(&pa - &pb)) <= norm2(&(&a - &b)) + 1e-15);
        }
    }

    #[test]
    fn full_participation_returns_everyone() {
        let mut rng = substream(32, 6);
        assert_eq!(sample_participants(5, 5, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(sample_participants(5, 6, &mut rng).is_err());
    }

    #[test]
    fn singleton_sampling_is_symmetric() {
        let mut rng = substream(33, 6);
        let mut counts = [0usize; 2];
        let draws = 20_000;
        for _ in 0..draws {
            let s = sample_participants(2, 1, &mut rng).unwrap();
            counts[s[0]] += 1;
        }
        let freq = counts[0] as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn subset_sampling_is_uniform_within_three_sigma() {
        // N = 5, m = 2: each of the 10 subsets has probability 0.1.
        let mut rng = substream(34, 6);
        let mut counts = std::collections::BTreeMap::new();
        let draws = 100_000usize;
        for _ in 0..draws {
            let s = sample_participants(5, 2, &mut rng).unwrap();
            *counts.entry((s[0], s[1])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 10);
        let p = 0.1;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for (&subset, &c) in &counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - p).abs() <= 3.0 * sigma,
                "subset {subset:?} freq {freq} outside 3 sigma"
            );
        }
    }

    #[test]
    fn block_gradient_full_set_matches_full_gradient_bitwise() {
        let model = default_model();
        let cost = default_cost();
        let d = generate_disturbances(40, 10, 5, &DisturbanceParams::default()).unwrap();
        let ctx = SurrogateContext::build(&model, &cost, &d, 8).unwrap();
        let u = center(10);
        let all: Vec<usize> = (0..10).collect();
        let a = block_gradient(&ctx, 11..=20, u.view(), &all).unwrap();
        let b = block_full_gradient(&ctx, 11..=20, u.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn block_gradient_zero_at_stationary_point() {
        let model = default_model();
        let cost = default_cost();
        let d = crate::lti::DisturbanceSequence::from_array(Array2::zeros((20, 10)), 0);
        let ctx = SurrogateContext::build(&model, &cost, &d, 4).unwrap();
        let u = Array1::zeros(10);
        let g = block_full_gradient(&ctx, 1..=10, u.view()).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn subset_average_of_block_gradients_is_unbiased() {
        // N = 3, m = 2: mean over the 3 subsets equals the full gradient.
        let model = SystemModel::diagonal(3, 0.95, 0.1, -0.1).unwrap();
        let cost = CostConfig::coordinate_owned(0.2, 0.8, 3).unwrap();
        let d = generate_disturbances(12, 3, 9, &DisturbanceParams::default()).unwrap();
        let ctx = SurrogateContext::build(&model, &cost, &d, 4).unwrap();
        let u = array![0.2, 0.6, 0.9];
        let subsets: [[usize; 2]; 3] = [[0, 1], [0, 2], [1, 2]];
        let mut mean = Array1::<f64>::zeros(3);
        for s in subsets {
            mean += &block_gradient(&ctx, 5..=8, u.view(), &s).unwrap();
        }
        mean /= 3.0;
        let full = block_full_gradient(&ctx, 5..=8, u.view()).unwrap();
        for (a, b) in mean.iter().zip(full.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn quick_run(seed: u64, cfg: &LearnerConfig) -> RunResult {
        let model = default_model();
        let cost = default_cost();
        let d = generate_disturbances(cfg.t, 10, seed, &DisturbanceParams::default()).unwrap();
        run_ogd(&model, &d, &cost, cfg, seed).unwrap()
    }

    #[test]
    fn zero_step_size_freezes_the_iterate() {
        let cfg = LearnerConfig::new(40, 10, 20, 0.0, 5, center(10));
        let run = quick_run(2, &cfg);
        for b in 0..run.block_count() {
            assert_eq!(run.iterates.row(b), center(10).view());
        }
        for t in 1..=40 {
            assert_eq!(run.trajectory.decision_at(t), center(10).view());
        }
    }

    #[test]
    fn decisions_stay_feasible_and_hold_within_blocks() {
        let cfg = LearnerConfig::new(55, 10, 30, 0.04, 5, center(10));
        let run = quick_run(3, &cfg);
        assert_eq!(run.block_count(), 6);
        for t in 1..=55 {
            let b = (t - 1) / 10;
            assert_eq!(run.trajectory.decision_at(t), run.iterates.row(b));
            assert!(run
                .trajectory
                .decision_at(t)
                .iter()
                .all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert_eq!(run.comm_total, 2 * 5 * 10 * 6);
    }

    #[test]
    fn scalar_tracking_converges_monotonically() {
        // alpha = 0, constant disturbance: plain quadratic tracking toward d.
        let model = SystemModel::new(
            array![[0.95]],
            array![[0.1]],
            array![[-0.1]],
            1.0,
            0.95,
            5,
        )
        .unwrap();
        let cost = CostConfig::coordinate_owned(0.0, 0.8, 1).unwrap();
        let target = 0.65;
        let d = crate::lti::DisturbanceSequence::from_array(
            Array2::from_elem((300, 1), target),
            0,
        );
        let cfg = LearnerConfig::new(300, 10, 5, 0.04, 1, Array1::from_elem(1, 0.05));
        // contraction factor 1 - eta*K*beta = 0.68 per block over 30 blocks
        let run = run_ogd(&model, &d, &cost, &cfg, 0).unwrap();
        let mut prev_gap = f64::INFINITY;
        for b in 0..=run.block_count() {
            let gap = (run.iterates[[b, 0]] - target).abs();
            assert!(gap <= prev_gap + 1e-15, "block {b}: {gap} > {prev_gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 0.01, "final gap {prev_gap}");
    }

    #[test]
    fn movement_respects_audited_bound() {
        let model = default_model();
        let cost = default_cost();
        let d = generate_disturbances(60, 10, 8, &DisturbanceParams::default()).unwrap();
        let cfg = LearnerConfig::new(60, 10, 30, 0.04, 5, center(10));
        let run = run_ogd(&model, &d, &cost, &cfg, 8).unwrap();
        let ctx = SurrogateContext::build(&model, &cost, &d, 30).unwrap();
        let constants = crate::costs::estimate_constants(&ctx);
        assert!(run.max_movement_ratio(0.04, 10, constants.g_loc) <= 1.0);
    }

    #[test]
    fn runs_are_seed_deterministic() {
        let cfg = LearnerConfig::new(50, 10, 25, 0.04, 5, center(10));
        let a = quick_run(11, &cfg);
        let b = quick_run(11, &cfg);
        assert_eq!(a.trajectory.u, b.trajectory.u);
        assert_eq!(a.trajectory.states, b.trajectory.states);
        assert_eq!(a.j_online.to_bits(), b.j_online.to_bits());
        assert_eq!(a.participants, b.participants);
    }

    #[test]
    fn zero_predictions_reduce_to_the_baseline_bitwise() {
        let model = default_model();
        let cost = default_cost();
        let d = generate_disturbances(60, 10, 13, &DisturbanceParams::default()).unwrap();
        let cfg = LearnerConfig::new(60, 10, 30, 0.04, 5, center(10));
        let base = run_ogd(&model, &d, &cost, &cfg, 13).unwrap();
        let pred = run_ogd_p(&model, &d, &cost, &cfg, &PredictionSource::Zero, 13).unwrap();
        assert_eq!(base.trajectory.u, pred.trajectory.u);
        assert_eq!(base.trajectory.states, pred.trajectory.states);
        assert_eq!(base.j_online.to_bits(), pred.j_online.to_bits());
        assert_eq!(base.participants, pred.participants);
    }

    #[test]
    fn oracle_predictions_have_zero_mismatch_at_full_participation() {
        let model = default_model();
        let cost = default_cost();
        let d = generate_disturbances(60, 10, 17, &DisturbanceParams::default()).unwrap();
        let cfg = LearnerConfig::new(60, 10, 30, 0.04, 10, center(10));
        let run = run_ogd_p(&model, &d, &cost, &cfg, &PredictionSource::Oracle, 17).unwrap();
        assert_eq!(run.pred_mismatch, Some(0.0));
        // anchors and deployed decisions all stay in the box
        for b in 0..run.block_count() {
            assert!(run.iterates.row(b).iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn prediction_norm_violation_is_rejected() {
        let vectors = vec![Array1::from_elem(10, 10.0)];
        assert!(PredictionSequence::new(vectors, 1, 0.5).is_err());
        let ok = PredictionSequence::from_json_str("[[0.1, 0.0]]", 2, 1.0).unwrap();
        assert_eq!(ok.len(), 1);
    }

    #[test]
    fn full_participation_ignores_sampling_seed() {
        let model = default_model();
        let cost = default_cost();
        let d = generate_disturbances(40, 10, 19, &DisturbanceParams::default()).unwrap();
        let mut cfg = LearnerConfig::new(40, 10, 20, 0.04, 10, center(10));
        cfg.sampling_seed = Some(111);
        let a = run_ogd(&model, &d, &cost, &cfg, 19).unwrap();
        cfg.sampling_seed = Some(222);
        let b = run_ogd(&model, &d, &cost, &cfg, 19).unwrap();
        assert_eq!(a.trajectory.u, b.trajectory.u);
        assert_eq!(a.j_online.to_bits(), b.j_online.to_bits());
    }

    #[test]
    fn tuned_params_examples() {
        let (_, h) = tuned_params(200, 10, 0.95, TuningRule::Simple);
        assert_eq!(h, 104);
        let (eta, _) = tuned_params(400, 1, 0.5, TuningRule::Simple);
        assert!((eta - 1.0 / 20.0).abs() < 1e-15);
        let d_diam = 10.0_f64.sqrt();
        let lambda = 3.7;
        let (eta_a, _) = tuned_params(200, 10, 0.95, TuningRule::TheoremA {
            d_diam,
            lambda_blk: lambda,
        });
        let want = d_diam / (2.0 * (10.0 * 200.0 * lambda).sqrt());
        assert!((eta_a - want).abs() < 1e-12 * want);
    }
}
