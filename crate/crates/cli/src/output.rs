//! File emission: atomic writes, 17-significant-digit CSV numbers, and the
//! record/summary/diagnostics schemas.

use std::path::{Path, PathBuf};

use oco_s2_core::comparator::{AggregateDiagnostics, ComparatorDiagnostics};
use oco_s2_core::experiments::{SummaryRow, SweepRecord};
use oco_s2_core::lti::{DisturbanceSequence, Trajectory};

use crate::CliError;

/// Writes via a temp file plus rename so interrupted runs never leave a
/// truncated file behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut tmp: PathBuf = path.to_path_buf();
    let mut name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{} has no file name", path.display())))?
        .to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub const RECORD_HEADER: &str = "sweep,setting,seed,T,K,H,m,N,eta_B,final_regret,avg_regret,comm_total,comm_over_sqrtT,pred_mismatch,comparator_success,runtime_ms";

pub fn records_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.sweep,
            r.setting,
            r.seed,
            r.t,
            r.k,
            r.h,
            r.m,
            r.n,
            fmt_f64(r.eta_b),
            fmt_f64(r.final_regret),
            fmt_f64(r.avg_regret),
            r.comm_total,
            fmt_f64(r.comm_over_sqrt_t),
            fmt_opt(r.pred_mismatch),
            r.comparator_success,
            r.runtime_ms,
        ));
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("setting,metric,mean,std,n\n");
    for s in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.setting,
            s.metric,
            fmt_f64(s.mean),
            fmt_f64(s.std),
            s.n
        ));
    }
    out
}

pub const DIAGNOSTICS_HEADER: &str = "setting,seed,success,iterations,realized_path_length,budget_slack,max_dynamics_residual,max_box_violation,max_path_budget_violation,max_relative_objective_mismatch";

pub fn diagnostics_csv(rows: &[(String, u64, ComparatorDiagnostics)]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for (setting, seed, d) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            setting,
            seed,
            d.success,
            d.iterations,
            fmt_f64(d.realized_path_length),
            fmt_f64(d.budget_slack),
            fmt_f64(d.max_dynamics_residual),
            fmt_f64(d.max_box_violation),
            fmt_f64(d.max_path_budget_violation),
            fmt_f64(d.max_relative_objective_mismatch),
        ));
    }
    out
}

pub fn diagnostics_summary_csv(agg: &AggregateDiagnostics) -> String {
    let header = "success_rate,n,iterations_mean,iterations_min,iterations_max,path_length_mean,path_length_min,path_length_max,budget_slack_mean,budget_slack_min,budget_slack_max,max_dynamics_residual,max_box_violation,max_path_budget_violation,max_relative_objective_mismatch";
    format!(
        "{header}\n{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        fmt_f64(agg.success_rate),
        agg.n,
        fmt_f64(agg.iterations_mean),
        agg.iterations_min,
        agg.iterations_max,
        fmt_f64(agg.path_length_mean),
        fmt_f64(agg.path_length_min),
        fmt_f64(agg.path_length_max),
        fmt_f64(agg.budget_slack_mean),
        fmt_f64(agg.budget_slack_min),
        fmt_f64(agg.budget_slack_max),
        fmt_f64(agg.max_dynamics_residual),
        fmt_f64(agg.max_box_violation),
        fmt_f64(agg.max_path_budget_violation),
        fmt_f64(agg.max_relative_objective_mismatch),
    )
}

/// Per-round CSV of a run: decisions, states, disturbances, stage costs.
pub fn trajectory_csv(traj: &Trajectory, d: &DisturbanceSequence) -> String {
    let n_u = traj.u.ncols();
    let n_chi = traj.states.ncols();
    let n_d = d.dim();
    let mut out = String::from("t");
    for j in 0..n_u {
        out.push_str(&format!(",u_{j}"));
    }
    for j in 0..n_chi {
        out.push_str(&format!(",chi_{j}"));
    }
    for j in 0..n_d {
        out.push_str(&format!(",d_{j}"));
    }
    out.push_str(",stage_cost\n");
    let costs = traj.stage_costs.as_ref();
    for t in 1..=traj.horizon() {
        out.push_str(&t.to_string());
        for v in traj.decision_at(t).iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        for v in traj.state_at(t).iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        for v in d.at(t).iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push(',');
        out.push_str(&fmt_f64(costs.map(|c| c[t - 1]).unwrap_or(f64::NAN)));
        out.push('\n');
    }
    out
}

pub fn pretty_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Io(format!("serializing JSON: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}
