//! Lottery policies with promised values, recovered from a solved dual value
//! field, and Monte Carlo simulation of the chained policy.

mod simulate;
mod stage;

pub use simulate::{simulate, GroupCheck, PathRow, SimulateOptions, SimulationReport, Start};
pub use stage::{check_stage, recover_stage, RecoverOptions, StageLottery, StageResiduals};

use crate::model::{Horizon, ModelSpec};

/// Slack promise for the root stage: one below the smallest attainable
/// value of each constraint (discounted sum for infinite horizons, current
/// period otherwise).
pub fn initial_promise(spec: &ModelSpec) -> Vec<f64> {
    (0..spec.num_constraints())
        .map(|i| {
            let mut lo = f64::INFINITY;
            for x in 0..spec.num_states {
                for a in 0..spec.num_actions {
                    for s in 0..spec.num_shocks {
                        lo = lo.min(spec.constraint(i, x, a, s));
                    }
                }
            }
            match spec.horizons[i] {
                Horizon::Infinite => lo / (1.0 - spec.beta) - 1.0,
                Horizon::Two => lo - 1.0,
            }
        })
        .collect()
}
