//! Fixed-step RK4 integration of the plant/controller interconnection.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::controller::{baseline_rhs_with, sgf_rhs_with, ControlEvaluation, ControllerParams, RunContext};
use crate::hocbf::BarrierChain;
use crate::linalg::inf_norm;
use crate::model::{PlantModel, ProblemSpec};
use crate::qp::ActiveSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_stride: usize,
    /// Threshold on `‖(f(x, u), q)‖∞`.
    pub settle_tol: f64,
    /// Time the residual has to stay below `settle_tol`.
    pub settle_window: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 1e-3, t_final: 30.0, record_stride: 1, settle_tol: 1e-7, settle_window: 1.0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("settle_tol", self.settle_tol),
            ("settle_window", self.settle_window),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.dt > self.t_final {
            return Err(Error::InvalidParameter(format!("dt = {} must not exceed t_final = {}", self.dt, self.t_final)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        libm::round(self.t_final / self.dt) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RhsKind {
    Sgf,
    Baseline,
    /// `u̇ = 0`: the plant runs open loop on the initial input.
    HoldInput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSample {
    pub qnorm: f64,
    pub lambda_b: f64,
    pub lambda_h: f64,
    pub active: ActiveSet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbortReason {
    Controller(Error),
    NonFiniteState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Settled { x: DVector<f64>, u: DVector<f64>, time: f64 },
    TimedOut,
    Aborted { reason: AbortReason, time: f64 },
}

impl Outcome {
    pub fn is_settled(&self) -> bool {
        matches!(self, Outcome::Settled { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Settled { .. } => "settled",
            Outcome::TimedOut => "timed_out",
            Outcome::Aborted { .. } => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub h_trace: Vec<f64>,
    pub b_trace: Vec<f64>,
    pub chain_trace: Vec<Vec<f64>>,
    pub qp_trace: Vec<QpSample>,
    pub outcome: Outcome,
    /// Whether the initial point satisfied `b ≥ 0` and every `hᵢ ≥ 0`.
    pub safe_start: bool,
    /// Minima over every integration step, recorded or not.
    pub min_h: f64,
    pub min_b: f64,
    pub min_chain: Vec<f64>,
    pub final_state: DVector<f64>,
    pub final_input: DVector<f64>,
}

impl Trajectory {
    fn new(x0: &DVector<f64>, u0: &DVector<f64>, levels: usize, safe_start: bool) -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            inputs: Vec::new(),
            h_trace: Vec::new(),
            b_trace: Vec::new(),
            chain_trace: Vec::new(),
            qp_trace: Vec::new(),
            outcome: Outcome::TimedOut,
            safe_start,
            min_h: f64::INFINITY,
            min_b: f64::INFINITY,
            min_chain: alloc::vec![f64::INFINITY; levels],
            final_state: x0.clone(),
            final_input: u0.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest value over all steps of `b` and every chain level.
    pub fn min_constraint(&self) -> f64 {
        self.min_chain.iter().copied().fold(self.min_b, f64::min)
    }
}

struct Stage {
    dx: DVector<f64>,
    du: DVector<f64>,
    eval: Option<ControlEvaluation>,
}

fn stage(
    plant: &PlantModel,
    spec: &ProblemSpec,
    chain: &BarrierChain,
    params: &ControllerParams,
    kind: RhsKind,
    x: &DVector<f64>,
    u: &DVector<f64>,
    ctx: &mut RunContext,
) -> Result<Stage> {
    let dx = plant.f(x, u);
    let eval = match kind {
        RhsKind::Sgf => Some(sgf_rhs_with(plant, spec, chain, params, x, u, ctx)?),
        RhsKind::Baseline => Some(baseline_rhs_with(plant, spec, params, x, u, ctx)?),
        RhsKind::HoldInput => None,
    };
    let du = eval.as_ref().map_or_else(|| DVector::zeros(u.len()), |e| e.q.clone());
    Ok(Stage { dx, du, eval })
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Runs the closed loop from `(x0, u0)` until it settles, times out or the
/// controller fails.
pub fn integrate(
    plant: &PlantModel,
    spec: &ProblemSpec,
    chain: &BarrierChain,
    params: &ControllerParams,
    kind: RhsKind,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    cfg: &SimConfig,
) -> Trajectory {
    let levels = chain.relative_degree() + 1;
    let setup = cfg
        .validate()
        .and_then(|_| params.validate())
        .and_then(|_| spec.check_plant(plant))
        .and_then(|_| {
            if x0.len() != plant.state_dim() || u0.len() != plant.input_dim() {
                Err(Error::Dimension(format!(
                    "initial point is in R^{} x R^{}, plant expects R^{} x R^{}",
                    x0.len(),
                    u0.len(),
                    plant.state_dim(),
                    plant.input_dim()
                )))
            } else {
                Ok(())
            }
        });
    if let Err(err) = setup {
        let mut traj = Trajectory::new(x0, u0, levels, false);
        traj.outcome = Outcome::Aborted { reason: AbortReason::Controller(err), time: 0.0 };
        return traj;
    }
    if !all_finite(x0) || !all_finite(u0) {
        let mut traj = Trajectory::new(x0, u0, levels, false);
        traj.outcome = Outcome::Aborted { reason: AbortReason::NonFiniteState, time: 0.0 };
        return traj;
    }

    let chain0 = chain.eval_chain(x0, u0);
    let safe_start = spec.b.value(u0) >= 0.0 && chain0.iter().all(|&h| h >= 0.0);
    let mut traj = Trajectory::new(x0, u0, levels, safe_start);

    let mut ctx = RunContext::default();
    let mut x = x0.clone();
    let mut u = u0.clone();
    let dt = cfg.dt;
    let steps = cfg.steps();
    let window_steps = libm::ceil(cfg.settle_window / dt) as usize;
    let mut quiet_steps = 0usize;

    for step in 0..=steps {
        let t = step as f64 * dt;
        let k1 = match stage(plant, spec, chain, params, kind, &x, &u, &mut ctx) {
            Ok(s) => s,
            Err(err) => {
                traj.outcome = Outcome::Aborted { reason: AbortReason::Controller(err), time: t };
                break;
            }
        };

        let h = spec.h.value(&x);
        let b = spec.b.value(&u);
        let levels_now = chain.eval_chain(&x, &u);
        traj.min_h = traj.min_h.min(h);
        traj.min_b = traj.min_b.min(b);
        for (lo, v) in traj.min_chain.iter_mut().zip(&levels_now) {
            *lo = lo.min(*v);
        }
        if step % cfg.record_stride == 0 {
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.inputs.push(u.clone());
            traj.h_trace.push(h);
            traj.b_trace.push(b);
            traj.chain_trace.push(levels_now);
            traj.qp_trace.push(match &k1.eval {
                Some(e) => QpSample {
                    qnorm: e.q.norm(),
                    lambda_b: e.qp.lambda1,
                    lambda_h: e.qp.lambda2,
                    active: e.qp.active,
                },
                None => QpSample { qnorm: 0.0, lambda_b: 0.0, lambda_h: 0.0, active: ActiveSet::None },
            });
        }
        traj.final_state = x.clone();
        traj.final_input = u.clone();

        let residual = inf_norm(&k1.dx).max(inf_norm(&k1.du));
        if residual < cfg.settle_tol {
            quiet_steps += 1;
            if quiet_steps > window_steps {
                traj.outcome = Outcome::Settled { x: x.clone(), u: u.clone(), time: t };
                break;
            }
        } else {
            quiet_steps = 0;
        }
        if step == steps {
            break;
        }

        let advanced = (|| -> Result<(DVector<f64>, DVector<f64>)> {
            let half = 0.5 * dt;
            let (x2, u2) = (&x + &k1.dx * half, &u + &k1.du * half);
            let k2 = stage(plant, spec, chain, params, kind, &x2, &u2, &mut ctx)?;
            let (x3, u3) = (&x + &k2.dx * half, &u + &k2.du * half);
            let k3 = stage(plant, spec, chain, params, kind, &x3, &u3, &mut ctx)?;
            let (x4, u4) = (&x + &k3.dx * dt, &u + &k3.du * dt);
            let k4 = stage(plant, spec, chain, params, kind, &x4, &u4, &mut ctx)?;
            let sixth = dt / 6.0;
            Ok((
                &x + (&k1.dx + (&k2.dx + &k3.dx) * 2.0 + &k4.dx) * sixth,
                &u + (&k1.du + (&k2.du + &k3.du) * 2.0 + &k4.du) * sixth,
            ))
        })();
        match advanced {
            Ok((xn, un)) if all_finite(&xn) && all_finite(&un) => {
                x = xn;
                u = un;
            }
            Ok(_) => {
                traj.outcome = Outcome::Aborted { reason: AbortReason::NonFiniteState, time: t };
                break;
            }
            Err(err) => {
                traj.outcome = Outcome::Aborted { reason: AbortReason::Controller(err), time: t };
                break;
            }
        }
    }
    traj
}
