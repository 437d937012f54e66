//! Deployment of policies trained against different force sources on the
//! surrogate finger.

use tendonsim_rl::{deploy_metrics, deploy_policy, DeployConfig, DeployRow, Phase, PolicySnapshot};

use crate::error::Result;
use crate::report::{bytes_hash, condition_metrics, ExperimentOutput, MetricReport, Trace};
use crate::setup::EvalSetup;

#[derive(Debug, Clone)]
pub struct TransferConfig {
    pub deploy: DeployConfig,
    /// Start of each opening step excluded from the opening maximum, s.
    pub transient_skip_s: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            deploy: DeployConfig::default(),
            transient_skip_s: 0.25,
        }
    }
}

fn deploy_trace(name: &str, log: &[DeployRow]) -> Trace {
    let mut trace = Trace::new(
        format!("stairs_{name}"),
        &[
            "t", "alpha", "down", "action", "theta_d", "theta", "force", "tip_x", "tip_y", "goal_x", "goal_y", "error_mm",
        ],
    );
    for r in log {
        trace.push(vec![
            r.t,
            r.alpha,
            (r.phase == Phase::Down) as u8 as f64,
            r.action,
            r.theta_d,
            r.theta,
            r.force,
            r.tip_x,
            r.tip_y,
            r.goal_x,
            r.goal_y,
            r.error * 1e3,
        ]);
    }
    trace
}

/// Stairs deployment of both snapshots. Condition RMSEs are in mm.
pub fn eval_policy_transfer(
    learned: &PolicySnapshot,
    ideal: &PolicySnapshot,
    setup: &EvalSetup,
    cfg: &TransferConfig,
) -> Result<ExperimentOutput> {
    setup.validate()?;
    let deploy = DeployConfig {
        servo: setup.servo.clone(),
        rates: setup.rates,
        ..cfg.deploy.clone()
    };
    let finger = setup.finger();
    let mut report = MetricReport::new("policy", "mm");
    let mut traces = Vec::new();
    let mut rmses = Vec::new();
    for (name, snap) in [("learned", learned), ("ideal", ideal)] {
        let log = deploy_policy(snap, &finger, &deploy)?;
        let trace = deploy_trace(name, &log);
        let m = deploy_metrics(&log, deploy.rates, cfg.transient_skip_s);
        for (cond, phase) in [("all", None), ("up", Some(Phase::Up)), ("down", Some(Phase::Down))] {
            let errs: Vec<f64> = log
                .iter()
                .filter(|r| phase.is_none_or(|p| r.phase == p))
                .map(|r| r.error * 1e3)
                .collect();
            let zeros = vec![0.0; errs.len()];
            report.conditions.push(condition_metrics(name, cond, &errs, &zeros, &trace.name)?);
        }
        report.summary.insert(format!("rmse_mm/{name}"), m.rmse * 1e3);
        report.summary.insert(format!("opening_max_error_mm/{name}"), m.opening_max_error * 1e3);
        report.hashes.insert(format!("policy/{name}"), bytes_hash(&snap.to_container().to_bytes()));
        rmses.push(m.rmse);
        traces.push(trace);
    }
    report.summary.insert("rmse_ratio".into(), rmses[0] / rmses[1]);
    Ok(ExperimentOutput { report, traces })
}
