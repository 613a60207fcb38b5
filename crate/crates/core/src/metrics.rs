//! Regret and communication metrics, plus evaluation of the theoretical
//! constants and bound right-hand sides for bound-vs-empirical comparisons.

use serde::Serialize;

use crate::comparator::ComparatorSolution;
use crate::costs::{stage_cost, AssumptionConstants, CostConfig};
use crate::learner::RunResult;
use crate::linalg::spectral_norm;
use crate::lti::{DisturbanceSequence, SystemModel};
use crate::{config_err, Error, Result};

/// Incurred cumulative cost `J_T = Σ_t c_t(χ_t, u_t)`, recomputed from the
/// trajectory rows rather than trusting any stored per-stage values.
pub fn incurred_cost(
    traj: &crate::lti::Trajectory,
    d: &DisturbanceSequence,
    cfg: &CostConfig,
) -> Result<f64> {
    let t_len = traj.horizon();
    if t_len != d.horizon() {
        return config_err("trajectory and disturbances cover different horizons");
    }
    let mut total = 0.0;
    for t in 1..=t_len {
        total += stage_cost(traj.state_at(t), traj.decision_at(t), d.at(t), cfg);
    }
    Ok(total)
}

/// Synchronization scalars exchanged by the block protocol:
/// `2 m n_u ⌈T/K⌉`. Exact integer arithmetic.
pub fn comm_blk(t: usize, k: usize, m: usize, n_u: usize) -> u64 {
    let blocks = ((t + k - 1) / k) as u64;
    2 * m as u64 * n_u as u64 * blocks
}

/// Constants of the formal regret bounds, derived from the model and the
/// audited assumption constants.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryConstants {
    /// `C_A ‖B‖ / (1−ρ)²`.
    pub c_mem: f64,
    /// `C_A/(1−ρ) (‖B‖R + ‖E‖D_d)`.
    pub d_chi: f64,
    /// `½(G_β² + (N−m)/(m(N−1)) σ²) + L_χ C_mem G_loc`.
    pub lambda_blk: f64,
    /// `G_loc + 2 G_P`.
    pub g_ext: f64,
    /// `½ (N−m)/(m(N−1)) σ² + ½ L_χ C_mem G_ext`.
    pub lambda_ext: f64,
    pub participation_factor: f64,
}

pub fn theory_constants(
    model: &SystemModel,
    ac: &AssumptionConstants,
    m: usize,
    n: usize,
) -> Result<TheoryConstants> {
    if m == 0 || m > n {
        return config_err("need 1 <= m <= N");
    }
    if m < n && n < 2 {
        return config_err("partial participation requires N >= 2");
    }
    let factor = AssumptionConstants::participation_factor(m, n);
    let c_mem = model.c_a() * spectral_norm(model.b()) / (1.0 - model.rho()).powi(2);
    // D_chi was certified when the constants were audited (same formula,
    // realized disturbance bound)
    let d_chi = ac.d_chi;
    let lambda_blk =
        0.5 * (ac.g_beta * ac.g_beta + factor * ac.sigma_het_sq) + ac.l_chi * c_mem * ac.g_loc;
    let g_ext = ac.g_loc + 2.0 * ac.g_p;
    let lambda_ext = 0.5 * factor * ac.sigma_het_sq + 0.5 * ac.l_chi * c_mem * g_ext;
    Ok(TheoryConstants {
        c_mem,
        d_chi,
        lambda_blk,
        g_ext,
        lambda_ext,
        participation_factor: factor,
    })
}

/// Which bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundVariant {
    /// Baseline learner bound.
    Baseline,
    /// Prediction-augmented bound with the realized mismatch plugged in.
    Prediction { mismatch: f64 },
}

/// Untuned bound right-hand side:
/// `D²/(2η) + (D/η)V + 2ηKTΛ_blk + (G_β K + L_χ C_mem)V + 2T L_χ C_A D_χ ρ^H`,
/// with the prediction variant adding `(η/2)·E_T(M)` and using `Λ_ext`.
#[allow(clippy::too_many_arguments)]
pub fn regret_bound_rhs(
    tc: &TheoryConstants,
    ac: &AssumptionConstants,
    model: &SystemModel,
    v_t: f64,
    eta_b: f64,
    k: usize,
    t: usize,
    h: usize,
    variant: BoundVariant,
) -> Result<f64> {
    if !(eta_b > 0.0) {
        return config_err("the bound needs eta_B > 0");
    }
    let d = ac.d_diam;
    let kt = k as f64 * t as f64;
    let descent = d * d / (2.0 * eta_b) + d * v_t / eta_b;
    let drift = (ac.g_beta * k as f64 + ac.l_chi * tc.c_mem) * v_t;
    let truncation =
        2.0 * t as f64 * ac.l_chi * model.c_a() * tc.d_chi * model.rho().powi(h as i32);
    let optimization = match variant {
        BoundVariant::Baseline => 2.0 * eta_b * kt * tc.lambda_blk,
        BoundVariant::Prediction { mismatch } => {
            0.5 * eta_b * mismatch + 2.0 * eta_b * kt * tc.lambda_ext
        }
    };
    Ok(descent + optimization + drift + truncation)
}

/// Tuned closed form of the baseline bound:
/// `2(D+V)√(KTΛ_blk) + (G_β K + L_χ C_mem)V + 2 L_χ C_A D_χ`.
pub fn tuned_bound_closed_form(
    tc: &TheoryConstants,
    ac: &AssumptionConstants,
    model: &SystemModel,
    v_t: f64,
    k: usize,
    t: usize,
) -> f64 {
    let kt = k as f64 * t as f64;
    2.0 * (ac.d_diam + v_t) * (kt * tc.lambda_blk).sqrt()
        + (ac.g_beta * k as f64 + ac.l_chi * tc.c_mem) * v_t
        + 2.0 * ac.l_chi * model.c_a() * tc.d_chi
}

/// Regret and communication summary for one run against one comparator.
#[derive(Debug, Clone, Serialize)]
pub struct RegretReport {
    pub j_online: f64,
    pub j_comparator: f64,
    pub dynamic_regret: f64,
    pub avg_regret: f64,
    pub comm_total: u64,
    pub comm_over_sqrt_t: f64,
    pub pred_mismatch: Option<f64>,
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub n_u: usize,
    pub comparator_converged: bool,
}

/// Assembles the report; both runs must have been produced from the same
/// disturbance realization.
pub fn regret_report(
    run: &RunResult,
    cmp: &ComparatorSolution,
    t: usize,
    k: usize,
    m: usize,
    n_u: usize,
) -> Result<RegretReport> {
    if run.provenance != cmp.provenance {
        return Err(Error::Provenance(format!(
            "run was produced from disturbance realization {:#x} but the comparator from {:#x}",
            run.provenance, cmp.provenance
        )));
    }
    let comm_total = comm_blk(t, k, m, n_u);
    debug_assert_eq!(comm_total, run.comm_total);
    let dynamic_regret = run.j_online - cmp.objective;
    Ok(RegretReport {
        j_online: run.j_online,
        j_comparator: cmp.objective,
        dynamic_regret,
        avg_regret: dynamic_regret / t as f64,
        comm_total,
        comm_over_sqrt_t: comm_total as f64 / (t as f64).sqrt(),
        pred_mismatch: run.pred_mismatch,
        t,
        k,
        m,
        n_u,
        comparator_converged: cmp.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::SurrogateContext;
    use crate::lti::{generate_disturbances, simulate, DisturbanceParams};
    use crate::rng::substream;
    use ndarray::{Array1, Array2};
    use rand::Rng;

    #[test]
    fn comm_examples() {
        assert_eq!(comm_blk(200, 10, 5, 10), 2000);
        assert_eq!(comm_blk(1600, 40, 5, 10), 4000);
        // one block when K = T
        assert_eq!(comm_blk(64, 64, 3, 7), 2 * 3 * 7);
        // K = ceil(sqrt(1600)) = 40 -> 40 blocks
        assert_eq!(comm_blk(1600, 40, 5, 10), 2 * 5 * 10 * 40);
    }

    #[test]
    fn comm_sqrt_envelope_holds_for_all_horizons() {
        let (m, n_u) = (5, 10);
        for t in 1..=4000usize {
            let k = (t as f64).sqrt().ceil() as usize;
            let comm = comm_blk(t, k, m, n_u) as f64;
            let sqrt_t = (t as f64).sqrt();
            assert!(comm / sqrt_t <= 2.0 * (m * n_u) as f64 * (1.0 + 2.0 / sqrt_t) + 1e-9);
            assert!(comm <= 2.0 * (m * n_u) as f64 * (sqrt_t + 1.0) + 1e-9);
        }
    }

    #[test]
    fn incurred_cost_zero_run_and_additivity() {
        let model = SystemModel::diagonal(4, 0.9, 0.1, -0.1).unwrap();
        let cfg = CostConfig::coordinate_owned(0.2, 0.8, 4).unwrap();
        let d = crate::lti::DisturbanceSequence::from_array(Array2::zeros((20, 4)), 0);
        let traj = simulate(&model, &Array2::zeros((20, 4)), &d).unwrap();
        assert_eq!(incurred_cost(&traj, &d, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn incurred_cost_matches_duplicate_summation() {
        let model = SystemModel::diagonal(6, 0.95, 0.1, -0.1).unwrap();
        let cfg = CostConfig::coordinate_owned(0.2, 0.8, 6).unwrap();
        let d = generate_disturbances(60, 6, 5, &DisturbanceParams::default()).unwrap();
        let mut rng = substream(51, 6);
        let u = Array2::from_shape_fn((60, 6), |_| rng.gen_range(0.0..1.0));
        let traj = simulate(&model, &u, &d).unwrap();
        let fast = incurred_cost(&traj, &d, &cfg).unwrap();
        // independent summation: reversed order, expanded quadratic forms
        let mut slow = 0.0;
        for t in (1..=60usize).rev() {
            let chi = traj.state_at(t);
            let mut chi_sq = 0.0;
            for &x in chi.iter() {
                chi_sq += x * x;
            }
            let mut track_sq = 0.0;
            for j in 0..6 {
                let diff = traj.decision_at(t)[j] - d.at(t)[j];
                track_sq += diff * diff;
            }
            slow += 0.1 * chi_sq + 0.4 * track_sq;
        }
        assert!((fast - slow).abs() <= 1e-9 * fast.abs().max(1.0));
        // additivity over a horizon split
        let mut head = 0.0;
        let mut tail = 0.0;
        for t in 1..=60usize {
            let c = stage_cost(traj.state_at(t), traj.decision_at(t), d.at(t), &cfg);
            if t <= 25 {
                head += c;
            } else {
                tail += c;
            }
        }
        assert!((head + tail - fast).abs() <= 1e-12 * fast.max(1.0));
    }

    fn audited() -> (SystemModel, AssumptionConstants) {
        let model = SystemModel::diagonal(10, 0.95, 0.1, -0.1).unwrap();
        let cfg = CostConfig::coordinate_owned(0.2, 0.8, 10).unwrap();
        let d = generate_disturbances(80, 10, 7, &DisturbanceParams::default()).unwrap();
        let ctx = SurrogateContext::build(&model, &cfg, &d, 12).unwrap();
        let ac = crate::costs::estimate_constants(&ctx);
        (model, ac)
    }

    #[test]
    fn theory_constants_examples() {
        let (model, ac) = audited();
        let tc = theory_constants(&model, &ac, 5, 10).unwrap();
        // C_mem = 1 * 0.1 / 0.05^2 = 40
        assert!((tc.c_mem - 40.0).abs() < 1e-9);
        // participation factor (10-5)/(5*9) = 1/9
        assert!((tc.participation_factor - 5.0 / 45.0).abs() < 1e-15);
        let full = theory_constants(&model, &ac, 10, 10).unwrap();
        assert_eq!(full.participation_factor, 0.0);
        let solo = theory_constants(&model, &ac, 1, 1).unwrap();
        assert_eq!(solo.participation_factor, 0.0);
        assert!(theory_constants(&model, &ac, 0, 10).is_err());
        // d_chi matches the plug-in formula (1/0.05)(0.1 sqrt(10) + 0.1 D_d)
        let expected = ac.d_chi;
        assert!((tc.d_chi - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn lambda_constants_recompute_from_fields() {
        let (model, ac) = audited();
        for (m, n) in [(1usize, 10usize), (5, 10), (10, 10)] {
            let tc = theory_constants(&model, &ac, m, n).unwrap();
            let factor = AssumptionConstants::participation_factor(m, n);
            let lambda = 0.5 * (ac.g_beta.powi(2) + factor * ac.sigma_het_sq)
                + ac.l_chi * tc.c_mem * ac.g_loc;
            assert!((tc.lambda_blk - lambda).abs() <= 1e-12 * lambda.max(1.0));
            let g_ext = ac.g_loc + 2.0 * ac.g_p;
            assert!((tc.g_ext - g_ext).abs() <= 1e-12 * g_ext);
            let lambda_ext = 0.5 * factor * ac.sigma_het_sq + 0.5 * ac.l_chi * tc.c_mem * g_ext;
            assert!((tc.lambda_ext - lambda_ext).abs() <= 1e-12 * lambda_ext.max(1.0));
        }
    }

    #[test]
    fn bound_drops_terms_when_budget_and_mismatch_vanish() {
        let (model, ac) = audited();
        let tc = theory_constants(&model, &ac, 5, 10).unwrap();
        let eta = 0.04;
        let (k, t, h) = (10usize, 200usize, 104usize);
        let full = regret_bound_rhs(&tc, &ac, &model, 0.0, eta, k, t, h, BoundVariant::Baseline)
            .unwrap();
        let descent = ac.d_diam.powi(2) / (2.0 * eta);
        let optimization = 2.0 * eta * (k * t) as f64 * tc.lambda_blk;
        let truncation =
            2.0 * t as f64 * ac.l_chi * model.c_a() * tc.d_chi * model.rho().powi(h as i32);
        assert!((full - (descent + optimization + truncation)).abs() <= 1e-9 * full);
    }

    #[test]
    fn bound_is_monotone_in_budget_and_horizon() {
        let (model, ac) = audited();
        let tc = theory_constants(&model, &ac, 5, 10).unwrap();
        let eta = 0.04;
        let mut prev = 0.0;
        for v in [0.0, 1.0, 5.0, 20.0] {
            let b = regret_bound_rhs(&tc, &ac, &model, v, eta, 10, 200, 104, BoundVariant::Baseline)
                .unwrap();
            assert!(b >= prev);
            prev = b;
        }
        let mut prev = 0.0;
        for t in [100usize, 200, 400, 800] {
            let b = regret_bound_rhs(&tc, &ac, &model, 3.0, eta, 10, t, 104, BoundVariant::Baseline)
                .unwrap();
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn tuned_bound_matches_the_closed_form() {
        // With eta = D/(2 sqrt(KT Lambda)) the three eta-dependent terms
        // collapse to 2(D+V) sqrt(KT Lambda); the truncation term satisfies
        // T rho^H <= 1, so the untuned bound is dominated by the closed form.
        let (model, ac) = audited();
        let tc = theory_constants(&model, &ac, 5, 10).unwrap();
        let (k, t) = (10usize, 200usize);
        let v_t = 3.0;
        let (eta, h) = crate::learner::tuned_params(
            t,
            k,
            model.rho(),
            crate::learner::TuningRule::TheoremA {
                d_diam: ac.d_diam,
                lambda_blk: tc.lambda_blk,
            },
        );
        let kt = (k * t) as f64;
        let eta_terms =
            ac.d_diam.powi(2) / (2.0 * eta) + ac.d_diam * v_t / eta + 2.0 * eta * kt * tc.lambda_blk;
        let closed_eta_terms = 2.0 * (ac.d_diam + v_t) * (kt * tc.lambda_blk).sqrt();
        assert!(
            (eta_terms - closed_eta_terms).abs() <= 1e-10 * closed_eta_terms,
            "{eta_terms} vs {closed_eta_terms}"
        );
        let untuned =
            regret_bound_rhs(&tc, &ac, &model, v_t, eta, k, t, h, BoundVariant::Baseline).unwrap();
        let closed = tuned_bound_closed_form(&tc, &ac, &model, v_t, k, t);
        assert!(untuned <= closed * (1.0 + 1e-12));
        // and the gap is exactly the truncation slack 2 L_chi C_A D_chi (1 - T rho^H)
        let slack = 2.0 * ac.l_chi * model.c_a() * tc.d_chi
            * (1.0 - t as f64 * model.rho().powi(h as i32));
        assert!(((closed - untuned) - slack).abs() <= 1e-9 * closed);
    }

    #[test]
    fn report_guards_provenance_and_computes_ratios() {
        let model = SystemModel::diagonal(10, 0.95, 0.1, -0.1).unwrap();
        let cost = CostConfig::coordinate_owned(0.2, 0.8, 10).unwrap();
        let d = generate_disturbances(40, 10, 3, &DisturbanceParams::default()).unwrap();
        let cfg = crate::learner::LearnerConfig::new(40, 10, 20, 0.04, 5, Array1::from_elem(10, 0.5));
        let run = crate::learner::run_ogd(&model, &d, &cost, &cfg, 3).unwrap();
        let v = crate::comparator::default_budget(&d, 0.45);
        let (sol, _) = crate::comparator::solve_comparator(
            &model,
            &d,
            &cost,
            v,
            &crate::comparator::SolverOptions::default(),
        )
        .unwrap();
        let report = regret_report(&run, &sol, 40, 10, 5, 10).unwrap();
        assert!((report.dynamic_regret - (report.j_online - report.j_comparator)).abs() < 1e-15);
        assert!((report.avg_regret - report.dynamic_regret / 40.0).abs() < 1e-15);
        assert_eq!(report.comm_total, 2 * 5 * 10 * 4);

        // different realization -> provenance error
        let d2 = generate_disturbances(40, 10, 4, &DisturbanceParams::default()).unwrap();
        let (sol2, _) = crate::comparator::solve_comparator(
            &model,
            &d2,
            &cost,
            v,
            &crate::comparator::SolverOptions::default(),
        )
        .unwrap();
        assert!(regret_report(&run, &sol2, 40, 10, 5, 10).is_err());
    }

    #[test]
    fn equal_sequences_have_zero_regret() {
        let model = SystemModel::diagonal(10, 0.95, 0.1, -0.1).unwrap();
        let cost = CostConfig::coordinate_owned(0.2, 0.8, 10).unwrap();
        let d = generate_disturbances(30, 10, 9, &DisturbanceParams::default()).unwrap();
        let v = crate::comparator::default_budget(&d, 0.45);
        let (sol, _) = crate::comparator::solve_comparator(
            &model,
            &d,
            &cost,
            v,
            &crate::comparator::SolverOptions::default(),
        )
        .unwrap();
        let traj = simulate(&model, &sol.u, &d).unwrap();
        let j = incurred_cost(&traj, &d, &cost).unwrap();
        // same decisions incur (numerically) the comparator objective
        assert!((j - sol.objective).abs() <= 1e-9 * j.max(1.0));
    }
}
