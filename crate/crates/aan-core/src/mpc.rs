//! Constrained receding-horizon torque controller.
//!
//! Minimizes the mode-scaled tracking cost plus control effort
//!
//! ```text
//! V(u) = sum_k  m*w_theta*(theta_r_k - theta_k)^2 + w_tau*u_k^2
//! ```
//!
//! over a short horizon, subject to the joint dynamics and box constraints.
//! Input torque bounds are hard (projection after every gradient step);
//! angle and velocity bounds are adjoined to the cost as augmented-Lagrangian
//! terms whose multipliers are updated between rounds of projected-gradient
//! inner iterations. Gradients come from the exact discrete adjoint of the
//! RK4 prediction model, so the inner descent is monotone up to line-search
//! tolerance.
//!
//! [`Controller`] wraps the solver with per-step memory for real-time use:
//! a bounded iteration budget per call, the previous plan shifted by one node
//! as warm start, and the multipliers carried across steps.

use crate::plant::{JointState, PlantParams};
use crate::{Error, Result};

/// Number of soft state constraints per horizon node.
const STATE_CONSTRAINTS: usize = 4;
/// Penalty growth factor when a multiplier round fails to reduce violation.
const PENALTY_GROWTH: f64 = 2.0;
const PENALTY_MAX: f64 = 1e8;
/// Line-search floor; below this step size the solve is flagged degraded.
const ALPHA_MIN: f64 = 1e-14;
const ALPHA_MAX: f64 = 1e3;

/// Controller tuning and limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcConfig {
    /// Prediction horizon length in seconds.
    pub horizon: f64,
    /// Horizon discretization steps (node spacing horizon/steps).
    pub steps: usize,
    /// Tracking weight w_theta.
    pub tracking_weight: f64,
    /// Torque weight w_tau.
    pub torque_weight: f64,
    /// Joint angle bounds in rad.
    pub angle_bounds: (f64, f64),
    /// Joint velocity bounds in rad/s.
    pub velocity_bounds: (f64, f64),
    /// Exoskeleton torque bounds in N·m (hard).
    pub torque_bounds: (f64, f64),
    /// Gradient iterations per control step.
    pub grad_iters: usize,
    /// Multiplier update rounds per control step.
    pub al_rounds: usize,
    /// Initial augmented-Lagrangian penalty.
    pub penalty: f64,
    /// Step scale applied to multiplier updates.
    pub multiplier_rate: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 0.2,
            steps: 20,
            tracking_weight: 100.0,
            torque_weight: 0.01,
            angle_bounds: (0.0, 1.4),
            velocity_bounds: (-2.0, 2.0),
            torque_bounds: (-25.0, 25.0),
            grad_iters: 30,
            al_rounds: 3,
            penalty: 2000.0,
            multiplier_rate: 1.0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.steps < 2 {
            return Err(Error::Config("horizon needs at least 2 steps".into()));
        }
        if !(self.tracking_weight > 0.0 && self.torque_weight > 0.0) {
            return Err(Error::Config("cost weights must be positive".into()));
        }
        for (name, (lo, hi)) in [
            ("angle bounds", self.angle_bounds),
            ("velocity bounds", self.velocity_bounds),
            ("torque bounds", self.torque_bounds),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("{name} must be ordered, got [{lo}, {hi}]")));
            }
        }
        if self.grad_iters == 0 || self.al_rounds == 0 {
            return Err(Error::Config("iteration budgets must be positive".into()));
        }
        if !(self.penalty > 0.0) || !(self.multiplier_rate > 0.0) {
            return Err(Error::Config("penalty and multiplier rate must be positive".into()));
        }
        Ok(())
    }

    /// Horizon node spacing in seconds.
    pub fn node_dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Everything the solver needs for one control step.
#[derive(Debug, Clone)]
pub struct MpcInputs<'a> {
    /// Measured joint state.
    pub state: JointState,
    /// Reference angles at the horizon nodes, length steps+1.
    pub reference: &'a [f64],
    /// Reference velocity at the current instant (recorded in diagnostics;
    /// the horizon cost tracks angles only).
    pub reference_velocity: f64,
    /// Human torque estimate, held constant across the horizon.
    pub human_torque: f64,
    /// Assistance mode scaling the tracking weight, in [0, 1].
    pub mode: f64,
    /// Model parameters of the coupled plant.
    pub params: PlantParams,
}

impl MpcInputs<'_> {
    fn validate(&self, config: &MpcConfig) -> Result<()> {
        if !self.state.is_finite() {
            return Err(Error::NonFinite("controller state input"));
        }
        if self.reference.len() != config.steps + 1 {
            return Err(Error::LengthMismatch {
                context: "reference window vs horizon nodes",
                left: self.reference.len(),
                right: config.steps + 1,
            });
        }
        if self.reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reference window"));
        }
        if !self.human_torque.is_finite() {
            return Err(Error::NonFinite("human torque estimate"));
        }
        if !(0.0..=1.0).contains(&self.mode) {
            return Err(Error::Config(format!("mode must lie in [0, 1], got {}", self.mode)));
        }
        self.params.validate()
    }
}

/// Optimized plan over one horizon.
#[derive(Debug, Clone)]
pub struct HorizonSolution {
    /// Torque sequence, length steps; feasible w.r.t. the torque bounds.
    pub torques: Vec<f64>,
    /// Predicted states at the nodes, length steps+1.
    pub states: Vec<JointState>,
    /// Augmented cost at the returned iterate.
    pub cost: f64,
    /// Tracking + control objective without constraint terms.
    pub objective: f64,
    /// Worst state-bound violation across the horizon (0 when feasible).
    pub violation: f64,
    /// Inner gradient iterations spent.
    pub iterations: usize,
    /// Set when the line search stalled before the iteration budget.
    pub degraded: bool,
}

/// Per-step solver telemetry.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    /// Instantaneous cost m*w_theta*e0^2 + w_tau*u0^2.
    pub stage_cost: f64,
    /// Horizon tracking + control objective.
    pub horizon_cost: f64,
    /// Objective plus augmented-Lagrangian constraint terms.
    pub augmented_cost: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub degraded: bool,
    /// Inner iterations whose accepted step increased the augmented cost
    /// beyond line-search tolerance (expected 0).
    pub descent_violations: usize,
    /// Reference velocity echoed from the inputs.
    pub reference_velocity: f64,
}

/// One RK4 step of the controller-internal prediction model, sharing the
/// plant's sign conventions.
pub fn discretize_dynamics(
    state: &JointState,
    params: &PlantParams,
    u: f64,
    tau_h_hat: f64,
    dt: f64,
) -> JointState {
    let (next, _, _) = rk4_with_jacobians(state, params, u, tau_h_hat, dt, false);
    next
}

type Mat2 = [[f64; 2]; 2];
type Vec2 = [f64; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

#[inline]
fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

#[inline]
fn mat_vec(a: &Mat2, v: &Vec2) -> Vec2 {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

#[inline]
fn axpy(i: &Mat2, scale: f64, d: &Mat2) -> Mat2 {
    [
        [i[0][0] + scale * d[0][0], i[0][1] + scale * d[0][1]],
        [i[1][0] + scale * d[1][0], i[1][1] + scale * d[1][1]],
    ]
}

/// RK4 step of the prediction model with optional exact Jacobians of the
/// step map with respect to state and input.
fn rk4_with_jacobians(
    state: &JointState,
    params: &PlantParams,
    u: f64,
    tau_h: f64,
    dt: f64,
    with_jac: bool,
) -> (JointState, Mat2, Vec2) {
    let j_inv = 1.0 / params.inertia;
    let f = |th: f64, v: f64| -> Vec2 {
        [
            v,
            (u + tau_h - params.damping * v - params.gravity_torque * th.sin()) * j_inv,
        ]
    };
    let fx = |th: f64| -> Mat2 {
        [
            [0.0, 1.0],
            [
                -params.gravity_torque * th.cos() * j_inv,
                -params.damping * j_inv,
            ],
        ]
    };

    let x = [state.angle, state.velocity];
    let k1 = f(x[0], x[1]);
    let x2 = [x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]];
    let k2 = f(x2[0], x2[1]);
    let x3 = [x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]];
    let k3 = f(x3[0], x3[1]);
    let x4 = [x[0] + dt * k3[0], x[1] + dt * k3[1]];
    let k4 = f(x4[0], x4[1]);

    let next = JointState::new(
        x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    );

    if !with_jac {
        return (next, IDENTITY, [0.0, 0.0]);
    }

    let fu: Vec2 = [0.0, j_inv];
    let d1 = fx(x[0]);
    let d2 = mat_mul(&fx(x2[0]), &axpy(&IDENTITY, 0.5 * dt, &d1));
    let d3 = mat_mul(&fx(x3[0]), &axpy(&IDENTITY, 0.5 * dt, &d2));
    let d4 = mat_mul(&fx(x4[0]), &axpy(&IDENTITY, dt, &d3));
    let a_mat = [
        [
            1.0 + dt / 6.0 * (d1[0][0] + 2.0 * d2[0][0] + 2.0 * d3[0][0] + d4[0][0]),
            dt / 6.0 * (d1[0][1] + 2.0 * d2[0][1] + 2.0 * d3[0][1] + d4[0][1]),
        ],
        [
            dt / 6.0 * (d1[1][0] + 2.0 * d2[1][0] + 2.0 * d3[1][0] + d4[1][0]),
            1.0 + dt / 6.0 * (d1[1][1] + 2.0 * d2[1][1] + 2.0 * d3[1][1] + d4[1][1]),
        ],
    ];

    let fx2 = fx(x2[0]);
    let fx3 = fx(x3[0]);
    let fx4 = fx(x4[0]);
    let du1 = fu;
    let du2 = [
        fu[0] + 0.5 * dt * (fx2[0][0] * du1[0] + fx2[0][1] * du1[1]),
        fu[1] + 0.5 * dt * (fx2[1][0] * du1[0] + fx2[1][1] * du1[1]),
    ];
    let du3 = [
        fu[0] + 0.5 * dt * (fx3[0][0] * du2[0] + fx3[0][1] * du2[1]),
        fu[1] + 0.5 * dt * (fx3[1][0] * du2[0] + fx3[1][1] * du2[1]),
    ];
    let du4 = [
        fu[0] + dt * (fx4[0][0] * du3[0] + fx4[0][1] * du3[1]),
        fu[1] + dt * (fx4[1][0] * du3[0] + fx4[1][1] * du3[1]),
    ];
    let b_vec = [
        dt / 6.0 * (du1[0] + 2.0 * du2[0] + 2.0 * du3[0] + du4[0]),
        dt / 6.0 * (du1[1] + 2.0 * du2[1] + 2.0 * du3[1] + du4[1]),
    ];

    (next, a_mat, b_vec)
}

/// Soft-constraint values g <= 0 at one node, ordered
/// [angle-max, angle-min, velocity-max, velocity-min].
#[inline]
fn constraint_values(state: &JointState, config: &MpcConfig) -> [f64; STATE_CONSTRAINTS] {
    [
        state.angle - config.angle_bounds.1,
        config.angle_bounds.0 - state.angle,
        state.velocity - config.velocity_bounds.1,
        config.velocity_bounds.0 - state.velocity,
    ]
}

/// Powell-Hestenes-Rockafellar penalty for one inequality constraint.
#[inline]
fn al_term(g: f64, lambda: f64, rho: f64) -> f64 {
    let t = (lambda + rho * g).max(0.0);
    (t * t - lambda * lambda) / (2.0 * rho)
}

#[inline]
fn al_slope(g: f64, lambda: f64, rho: f64) -> f64 {
    (lambda + rho * g).max(0.0)
}

/// Persistent solver memory carried across control steps.
#[derive(Debug, Clone)]
struct SolverMemory {
    torques: Vec<f64>,
    multipliers: Vec<[f64; STATE_CONSTRAINTS]>,
    rho: f64,
    alpha: f64,
    prev_violation: f64,
}

impl SolverMemory {
    fn fresh(config: &MpcConfig) -> Self {
        Self {
            torques: vec![0.0; config.steps],
            multipliers: vec![[0.0; STATE_CONSTRAINTS]; config.steps],
            rho: config.penalty,
            alpha: 1e-3,
            prev_violation: f64::INFINITY,
        }
    }

    /// Receding-horizon shift: drop the applied node, duplicate the tail.
    fn shift(&mut self) {
        if self.torques.len() > 1 {
            self.torques.rotate_left(1);
            let last = self.torques.len() - 1;
            self.torques[last] = self.torques[last - 1];
            self.multipliers.rotate_left(1);
            let last = self.multipliers.len() - 1;
            self.multipliers[last] = self.multipliers[last - 1];
        }
    }
}

/// Augmented-Lagrangian context for an evaluation: node multipliers plus the
/// penalty. `None` evaluates the bare tracking + control objective.
type ConstraintCtx<'a> = Option<(&'a [[f64; STATE_CONSTRAINTS]], f64)>;

/// Forward rollout and augmented cost of a candidate torque sequence.
struct Evaluation {
    states: Vec<JointState>,
    objective: f64,
    augmented: f64,
    violation: f64,
}

fn evaluate(
    torques: &[f64],
    inputs: &MpcInputs<'_>,
    config: &MpcConfig,
    constraints: ConstraintCtx<'_>,
) -> Result<Evaluation> {
    let dt = config.node_dt();
    let n = config.steps;
    let mut states = Vec::with_capacity(n + 1);
    states.push(inputs.state);
    let mut objective = 0.0;
    let mut augmented = 0.0;
    let mut violation = 0.0f64;

    for k in 0..n {
        let (next, _, _) = rk4_with_jacobians(
            &states[k],
            &inputs.params,
            torques[k],
            inputs.human_torque,
            dt,
            false,
        );
        objective += config.torque_weight * torques[k] * torques[k];
        let err = inputs.reference[k + 1] - next.angle;
        objective += inputs.mode * config.tracking_weight * err * err;
        if let Some((multipliers, rho)) = constraints {
            let g = constraint_values(&next, config);
            for (j, gj) in g.iter().enumerate() {
                augmented += al_term(*gj, multipliers[k][j], rho);
                violation = violation.max(*gj);
            }
        }
        states.push(next);
    }
    augmented += objective;
    if !augmented.is_finite() {
        return Err(Error::Numeric("horizon cost is not finite".into()));
    }
    Ok(Evaluation {
        states,
        objective,
        augmented,
        violation: violation.max(0.0),
    })
}

/// Exact gradient of the (augmented) cost via the discrete adjoint.
fn gradient(
    torques: &[f64],
    states: &[JointState],
    inputs: &MpcInputs<'_>,
    config: &MpcConfig,
    constraints: ConstraintCtx<'_>,
) -> Vec<f64> {
    let dt = config.node_dt();
    let n = config.steps;
    let mut a_mats = Vec::with_capacity(n);
    let mut b_vecs = Vec::with_capacity(n);
    for k in 0..n {
        let (_, a, b) = rk4_with_jacobians(
            &states[k],
            &inputs.params,
            torques[k],
            inputs.human_torque,
            dt,
            true,
        );
        a_mats.push(a);
        b_vecs.push(b);
    }

    // Stage-cost gradient w.r.t. the state at node k (k >= 1).
    let node_grad = |k: usize| -> Vec2 {
        let state = &states[k];
        let err = inputs.reference[k] - state.angle;
        let mut grad = [-2.0 * inputs.mode * config.tracking_weight * err, 0.0];
        if let Some((multipliers, rho)) = constraints {
            let g = constraint_values(state, config);
            let lambda = &multipliers[k - 1];
            // d/d(theta): +slope for the max bound, -slope for the min bound.
            grad[0] += al_slope(g[0], lambda[0], rho) - al_slope(g[1], lambda[1], rho);
            grad[1] += al_slope(g[2], lambda[2], rho) - al_slope(g[3], lambda[3], rho);
        }
        grad
    };

    let mut grads = vec![0.0f64; n];
    let mut adjoint: Vec2 = node_grad(n);
    for k in (0..n).rev() {
        grads[k] = 2.0 * config.torque_weight * torques[k]
            + b_vecs[k][0] * adjoint[0]
            + b_vecs[k][1] * adjoint[1];
        if k > 0 {
            // Transpose product plus the stage gradient at node k.
            let at = [
                [a_mats[k][0][0], a_mats[k][1][0]],
                [a_mats[k][0][1], a_mats[k][1][1]],
            ];
            let carried = mat_vec(&at, &adjoint);
            let local = node_grad(k);
            adjoint = [carried[0] + local[0], carried[1] + local[1]];
        }
    }
    grads
}

struct InnerOutcome {
    evaluation: Evaluation,
    iterations: usize,
    degraded: bool,
    descent_violations: usize,
}

/// Projected-gradient descent on the augmented cost for fixed multipliers.
fn inner_descent(
    torques: &mut Vec<f64>,
    inputs: &MpcInputs<'_>,
    config: &MpcConfig,
    memory: &mut SolverMemory,
    budget: usize,
) -> Result<InnerOutcome> {
    let (lo, hi) = config.torque_bounds;
    for u in torques.iter_mut() {
        *u = u.clamp(lo, hi);
    }
    let mut current = evaluate(
        torques,
        inputs,
        config,
        Some((&memory.multipliers, memory.rho)),
    )?;
    let mut iterations = 0;
    let mut degraded = false;
    let mut descent_violations = 0;

    for _ in 0..budget {
        let grads = gradient(
            torques,
            &current.states,
            inputs,
            config,
            Some((&memory.multipliers, memory.rho)),
        );
        // Natural residual of the projected gradient step.
        let residual = torques
            .iter()
            .zip(&grads)
            .map(|(u, g)| (u - (u - g).clamp(lo, hi)).abs())
            .fold(0.0f64, f64::max);
        if residual < 1e-12 {
            break;
        }

        let mut alpha = memory.alpha;
        let mut accepted = false;
        while alpha >= ALPHA_MIN {
            let candidate: Vec<f64> = torques
                .iter()
                .zip(&grads)
                .map(|(u, g)| (u - alpha * g).clamp(lo, hi))
                .collect();
            let step_sq: f64 = candidate
                .iter()
                .zip(torques.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if step_sq == 0.0 {
                break;
            }
            let trial = evaluate(
                &candidate,
                inputs,
                config,
                Some((&memory.multipliers, memory.rho)),
            )?;
            if trial.augmented <= current.augmented - 1e-4 * step_sq / alpha {
                if trial.augmented > current.augmented + 1e-12 * current.augmented.abs().max(1.0) {
                    descent_violations += 1;
                }
                *torques = candidate;
                current = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if accepted {
            memory.alpha = (alpha * 2.0).min(ALPHA_MAX);
        } else {
            degraded = residual > 1e-9;
            break;
        }
    }

    Ok(InnerOutcome {
        evaluation: current,
        iterations,
        degraded,
        descent_violations,
    })
}

/// Full solve on the given memory: alternating inner descent and multiplier
/// updates, with the iteration budget split across the rounds.
fn solve_with_memory(
    inputs: &MpcInputs<'_>,
    config: &MpcConfig,
    memory: &mut SolverMemory,
) -> Result<(HorizonSolution, usize)> {
    inputs.validate(config)?;
    let rounds = config.al_rounds.max(1);
    let per_round = (config.grad_iters / rounds).max(1);

    let mut torques = memory.torques.clone();
    let mut iterations = 0;
    let mut degraded = false;
    let mut descent_violations = 0;
    let mut last = None;

    for round in 0..rounds {
        let outcome = inner_descent(&mut torques, inputs, config, memory, per_round)?;
        iterations += outcome.iterations;
        degraded |= outcome.degraded;
        descent_violations += outcome.descent_violations;

        // Multiplier update on the states of the accepted iterate.
        let violation = outcome.evaluation.violation;
        for k in 0..config.steps {
            let g = constraint_values(&outcome.evaluation.states[k + 1], config);
            for j in 0..STATE_CONSTRAINTS {
                memory.multipliers[k][j] = (memory.multipliers[k][j]
                    + config.multiplier_rate * memory.rho * g[j])
                    .max(0.0);
            }
        }
        if round + 1 < rounds && violation > 1e-6 && violation > 0.5 * memory.prev_violation {
            memory.rho = (memory.rho * PENALTY_GROWTH).min(PENALTY_MAX);
        }
        memory.prev_violation = violation;
        last = Some(outcome.evaluation);
    }

    let evaluation = last.expect("at least one round runs");
    memory.torques = torques.clone();
    Ok((
        HorizonSolution {
            torques,
            states: evaluation.states,
            cost: evaluation.augmented,
            objective: evaluation.objective,
            violation: evaluation.violation,
            iterations,
            degraded,
        },
        descent_violations,
    ))
}

/// Tracking + control objective of a candidate torque sequence over the
/// horizon, without constraint terms.
pub fn horizon_cost(
    inputs: &MpcInputs<'_>,
    config: &MpcConfig,
    torques: &[f64],
) -> Result<f64> {
    config.validate()?;
    inputs.validate(config)?;
    if torques.len() != config.steps {
        return Err(Error::LengthMismatch {
            context: "torque sequence vs horizon steps",
            left: torques.len(),
            right: config.steps,
        });
    }
    evaluate(torques, inputs, config, None).map(|e| e.objective)
}

/// Exact gradient of [`horizon_cost`] with respect to the torque sequence.
pub fn horizon_gradient(
    inputs: &MpcInputs<'_>,
    config: &MpcConfig,
    torques: &[f64],
) -> Result<Vec<f64>> {
    config.validate()?;
    inputs.validate(config)?;
    if torques.len() != config.steps {
        return Err(Error::LengthMismatch {
            context: "torque sequence vs horizon steps",
            left: torques.len(),
            right: config.steps,
        });
    }
    let evaluation = evaluate(torques, inputs, config, None)?;
    Ok(gradient(torques, &evaluation.states, inputs, config, None))
}

/// One-shot solve with fresh multipliers. A warm start, when given, is
/// shifted by one node before use.
pub fn solve(
    inputs: &MpcInputs<'_>,
    config: &MpcConfig,
    warm_start: Option<&HorizonSolution>,
) -> Result<HorizonSolution> {
    config.validate()?;
    let mut memory = SolverMemory::fresh(config);
    if let Some(warm) = warm_start {
        if warm.torques.len() == config.steps {
            memory.torques.copy_from_slice(&warm.torques);
            memory.shift();
        }
    }
    solve_with_memory(inputs, config, &mut memory).map(|(solution, _)| solution)
}

/// Receding-horizon controller with persistent solver memory.
#[derive(Debug, Clone)]
pub struct Controller {
    config: MpcConfig,
    memory: SolverMemory,
    primed: bool,
}

impl Controller {
    pub fn new(config: MpcConfig) -> Result<Self> {
        config.validate()?;
        let memory = SolverMemory::fresh(&config);
        Ok(Self {
            config,
            memory,
            primed: false,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Run one bounded real-time iteration: shift the previous plan, descend
    /// within the iteration budget, update multipliers, apply the first
    /// torque.
    pub fn control_step(&mut self, inputs: &MpcInputs<'_>) -> Result<(f64, StepDiagnostics)> {
        if self.primed {
            self.memory.shift();
        }
        let (solution, descent_violations) =
            solve_with_memory(inputs, &self.config, &mut self.memory)?;
        self.primed = true;

        let applied = solution.torques[0];
        let err0 = inputs.reference[0] - inputs.state.angle;
        let stage_cost = inputs.mode * self.config.tracking_weight * err0 * err0
            + self.config.torque_weight * applied * applied;
        let diagnostics = StepDiagnostics {
            stage_cost,
            horizon_cost: solution.objective,
            augmented_cost: solution.cost,
            constraint_violation: solution.violation,
            iterations: solution.iterations,
            degraded: solution.degraded,
            descent_violations,
            reference_velocity: inputs.reference_velocity,
        };
        Ok((applied, diagnostics))
    }

    /// Last accepted plan (first torque repeated after shifting).
    pub fn planned_torques(&self) -> &[f64] {
        &self.memory.torques
    }
}
