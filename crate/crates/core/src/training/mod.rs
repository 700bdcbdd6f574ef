//! Composite loss, optimizers and the two-stage schedule.

mod adam;
mod lbfgs;
mod problem;

use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::AdError;
use crate::network::MultiscaleNetwork;
use crate::parallel::ExecMode;

pub use adam::AdamState;
pub use lbfgs::{Evaluation, LbfgsConfig, LbfgsState, StepInfo, StepOutcome};
pub use problem::{
    assemble_loss, BoundarySet, InteriorSet, LossBreakdown, LossWeights, Problem, Term, ValueSet, TERMS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("invalid training input: {0}")]
    Invalid(String),
    #[error("active loss term `{0}` has an empty batch")]
    EmptyBatch(&'static str),
    #[error("non-finite {0}")]
    NonFinite(String),
}

impl TrainError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, TrainError::NonFinite(_) | TrainError::Ad(AdError::NonFinite { .. }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub n_adam: usize,
    pub lr: f64,
    pub n_lbfgs: usize,
    pub grad_tol: f64,
    pub history: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            n_adam: 30000,
            lr: 1e-3,
            n_lbfgs: 20000,
            grad_tol: 1e-9,
            history: 50,
        }
    }
}

impl Schedule {
    /// Short profile for quick runs.
    pub fn desk() -> Self {
        Schedule {
            n_adam: 5000,
            n_lbfgs: 2000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        self.lbfgs_config().validate()
    }

    pub fn lbfgs_config(&self) -> LbfgsConfig {
        LbfgsConfig {
            history: self.history,
            grad_tol: self.grad_tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: LossBreakdown,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
}

pub const LOG_HEADER: &str = "epoch,phase,total,L_f,L_g,L_h,L_data,seconds";

impl RunLog {
    pub fn push(&mut self, r: EpochRecord) {
        if let Some(last) = self.records.last() {
            assert!(r.epoch > last.epoch, "epochs must increase");
        }
        self.records.push(r);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{LOG_HEADER}")?;
        for r in &self.records {
            let l = &r.loss;
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:.3}",
                r.epoch,
                r.phase.name(),
                l.total,
                l.equation,
                l.initial,
                l.boundary,
                l.data,
                r.seconds
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainStatus {
    Completed,
    /// L-BFGS stopped early at a gradient below tolerance.
    Converged,
    /// Aborted; the parameters are the last finite iterate.
    Diverged { epoch: usize, reason: String },
}

pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub log: RunLog,
    pub status: TrainStatus,
    /// Loss at the returned parameters, when it is finite.
    pub final_loss: Option<LossBreakdown>,
    pub lbfgs_fallbacks: usize,
}

/// A full-batch loss with its parameter gradient.
pub trait Objective {
    fn evaluate(&self, params: &[f64]) -> Result<(LossBreakdown, Vec<f64>), TrainError>;
}

/// The composite loss of a [`Problem`].
pub struct MhdObjective<'a> {
    pub net: &'a MultiscaleNetwork,
    pub problem: &'a Problem,
    pub weights: &'a LossWeights,
    pub mode: ExecMode,
}

impl<'a> MhdObjective<'a> {
    pub fn new(net: &'a MultiscaleNetwork, problem: &'a Problem, weights: &'a LossWeights, mode: ExecMode) -> Result<Self, TrainError> {
        weights.validate().map_err(TrainError::Invalid)?;
        Ok(MhdObjective {
            net,
            problem,
            weights,
            mode,
        })
    }
}

impl Objective for MhdObjective<'_> {
    fn evaluate(&self, params: &[f64]) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
        assemble_loss(self.net, params, self.problem, self.weights, self.mode)
    }
}

/// Full-batch Adam for `n_adam` epochs, then L-BFGS until the gradient
/// tolerance or `n_lbfgs` iterations.
pub fn train<O: Objective + ?Sized>(
    obj: &O,
    params: Vec<f64>,
    schedule: &Schedule,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    schedule.validate().map_err(TrainError::Invalid)?;
    let start = Instant::now();
    let mut log = RunLog::default();
    let mut epoch = 0;
    let mut params = params;
    let mut record = |log: &mut RunLog, epoch: usize, phase: Phase, loss: LossBreakdown| {
        let r = EpochRecord {
            epoch,
            phase,
            loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        observer(&r);
        log.push(r);
    };
    let diverged = |epoch: usize, e: TrainError, params: Vec<f64>, log: RunLog, fallbacks: usize| {
        if e.is_divergence() {
            Ok(TrainOutcome {
                params,
                log,
                status: TrainStatus::Diverged {
                    epoch,
                    reason: e.to_string(),
                },
                final_loss: None,
                lbfgs_fallbacks: fallbacks,
            })
        } else {
            Err(e)
        }
    };

    let mut adam = AdamState::new(params.len(), schedule.lr);
    let mut good = params.clone();
    for _ in 0..schedule.n_adam {
        epoch += 1;
        let (b, g) = match obj.evaluate(&params) {
            Ok(v) => v,
            Err(e) => return diverged(epoch, e, good, log, 0),
        };
        record(&mut log, epoch, Phase::Adam, b);
        good.copy_from_slice(&params);
        if let Err(e) = adam.step(&mut params, &g) {
            return diverged(epoch, e, good, log, 0);
        }
    }

    let mut status = TrainStatus::Completed;
    let mut fallbacks = 0;
    let mut last: Option<LossBreakdown> = None;
    let mut objective = |x: &[f64]| -> Result<Evaluation<LossBreakdown>, TrainError> {
        // Non-finite trial points are rejected by the line search.
        match obj.evaluate(x) {
            Ok((b, g)) => Ok(Evaluation {
                value: b.total,
                grad: g,
                extra: b,
            }),
            Err(e) if e.is_divergence() => Ok(Evaluation {
                value: f64::INFINITY,
                grad: vec![f64::NAN; x.len()],
                extra: LossBreakdown::default(),
            }),
            Err(e) => Err(e),
        }
    };
    if schedule.n_lbfgs > 0 {
        let mut cur = objective(&params)?;
        if !cur.value.is_finite() {
            let e = TrainError::NonFinite("loss".into());
            return diverged(epoch + 1, e, good, log, 0);
        }
        let mut state = LbfgsState::new(schedule.lbfgs_config());
        for _ in 0..schedule.n_lbfgs {
            match state.step(&mut params, &mut cur, &mut objective)?.outcome {
                StepOutcome::Moved => {
                    epoch += 1;
                    record(&mut log, epoch, Phase::Lbfgs, cur.extra);
                }
                StepOutcome::Converged => {
                    status = TrainStatus::Converged;
                    break;
                }
                StepOutcome::Stalled => break,
            }
        }
        fallbacks = state.fallbacks;
        last = Some(cur.extra);
    }
    let final_loss = match last {
        Some(b) => Some(b),
        None => match obj.evaluate(&params) {
            Ok((b, _)) => Some(b),
            Err(e) if e.is_divergence() => None,
            Err(e) => return Err(e),
        },
    };
    Ok(TrainOutcome {
        params,
        log,
        status,
        final_loss,
        lbfgs_fallbacks: fallbacks,
    })
}

#[cfg(test)]
mod tests;
