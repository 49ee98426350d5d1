//! Human-exoskeleton joint dynamics and the scripted synthetic subject.
//!
//! The plant is the seated 1-DOF knee model
//!
//! ```text
//! J·th'' + B·th' + tau_g·sin(th) - tau_h = tau_e
//! ```
//!
//! integrated with fixed-step RK4 at the controller rate. The module also
//! scripts the five human involvement conditions (relaxed, extension/flexion
//! assist and resist) and generates the two-channel EMG envelopes that the
//! torque estimator consumes, by inverting the estimation model so the
//! envelopes lead the mechanical torque by the electromechanical interval.

use crate::emg::HteModel;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

/// Lumped rigid-body parameters of one system (exoskeleton, human limb, or
/// the coupled pair).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Inertia J in kg·m².
    pub inertia: f64,
    /// Viscous damping B in N·m·s/rad.
    pub damping: f64,
    /// Gravitational torque amplitude tau_g in N·m.
    pub gravity_torque: f64,
}

impl PlantParams {
    pub const fn new(inertia: f64, damping: f64, gravity_torque: f64) -> Self {
        Self {
            inertia,
            damping,
            gravity_torque,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inertia.is_finite() && self.damping.is_finite() && self.gravity_torque.is_finite())
        {
            return Err(Error::NonFinite("plant parameters"));
        }
        if self.inertia <= 0.0 {
            return Err(Error::Config(format!(
                "inertia must be positive, got {}",
                self.inertia
            )));
        }
        if self.damping < 0.0 || self.gravity_torque < 0.0 {
            return Err(Error::Config(
                "damping and gravity torque must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Componentwise sum, used to couple a human limb onto the exoskeleton.
    pub fn combined(&self, other: &PlantParams) -> PlantParams {
        PlantParams::new(
            self.inertia + other.inertia,
            self.damping + other.damping,
            self.gravity_torque + other.gravity_torque,
        )
    }
}

/// Joint angle and angular velocity at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    /// Knee angle in rad (0 = shank hanging vertically).
    pub angle: f64,
    /// Angular velocity in rad/s.
    pub velocity: f64,
}

impl JointState {
    pub const fn new(angle: f64, velocity: f64) -> Self {
        Self { angle, velocity }
    }

    pub fn is_finite(&self) -> bool {
        self.angle.is_finite() && self.velocity.is_finite()
    }

    /// Mechanical energy ½Jθ̇² − τ_g·cosθ for the unforced plant.
    pub fn energy(&self, params: &PlantParams) -> f64 {
        0.5 * params.inertia * self.velocity * self.velocity
            - params.gravity_torque * self.angle.cos()
    }
}

/// Joint acceleration under the rigid-coupled model.
#[inline]
fn acceleration(state: &JointState, params: &PlantParams, tau_e: f64, tau_h: f64) -> f64 {
    (tau_e + tau_h
        - params.damping * state.velocity
        - params.gravity_torque * state.angle.sin())
        / params.inertia
}

/// Advance the joint by one RK4 step with both torques held over the step.
///
/// `dt` must be positive and at most 0.01 s; all inputs must be finite.
pub fn step_dynamics(
    state: &JointState,
    params: &PlantParams,
    tau_e: f64,
    tau_h: f64,
    dt: f64,
) -> Result<JointState> {
    params.validate()?;
    if !state.is_finite() {
        return Err(Error::NonFinite("joint state"));
    }
    if !tau_e.is_finite() {
        return Err(Error::NonFinite("exoskeleton torque"));
    }
    if !tau_h.is_finite() {
        return Err(Error::NonFinite("human torque"));
    }
    if !dt.is_finite() || dt <= 0.0 || dt > 0.01 {
        return Err(Error::Config(format!(
            "integrator step must be in (0, 0.01] s, got {dt}"
        )));
    }

    let deriv = |s: &JointState| (s.velocity, acceleration(s, params, tau_e, tau_h));

    let (k1_p, k1_v) = deriv(state);
    let s2 = JointState::new(
        state.angle + 0.5 * dt * k1_p,
        state.velocity + 0.5 * dt * k1_v,
    );
    let (k2_p, k2_v) = deriv(&s2);
    let s3 = JointState::new(
        state.angle + 0.5 * dt * k2_p,
        state.velocity + 0.5 * dt * k2_v,
    );
    let (k3_p, k3_v) = deriv(&s3);
    let s4 = JointState::new(state.angle + dt * k3_p, state.velocity + dt * k3_v);
    let (k4_p, k4_v) = deriv(&s4);

    let next = JointState::new(
        state.angle + dt / 6.0 * (k1_p + 2.0 * k2_p + 2.0 * k3_p + k4_p),
        state.velocity + dt / 6.0 * (k1_v + 2.0 * k2_v + 2.0 * k3_v + k4_v),
    );
    if !next.is_finite() {
        return Err(Error::Numeric("plant state diverged".into()));
    }
    Ok(next)
}

/// The five scripted involvement conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    Relaxed,
    ExtensionAssist,
    ExtensionResist,
    FlexionAssist,
    FlexionResist,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 5] = [
        ConditionKind::Relaxed,
        ConditionKind::ExtensionAssist,
        ConditionKind::ExtensionResist,
        ConditionKind::FlexionAssist,
        ConditionKind::FlexionResist,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ConditionKind::Relaxed => "R",
            ConditionKind::ExtensionAssist => "EA",
            ConditionKind::ExtensionResist => "ER",
            ConditionKind::FlexionAssist => "FA",
            ConditionKind::FlexionResist => "FR",
        }
    }

    pub fn from_label(label: &str) -> Option<ConditionKind> {
        match label.to_ascii_uppercase().as_str() {
            "R" => Some(ConditionKind::Relaxed),
            "EA" => Some(ConditionKind::ExtensionAssist),
            "ER" => Some(ConditionKind::ExtensionResist),
            "FA" => Some(ConditionKind::FlexionAssist),
            "FR" => Some(ConditionKind::FlexionResist),
            _ => None,
        }
    }

    /// Sign of the scripted torque: assist matches the reference velocity of
    /// its phase, resist opposes it. Extension runs at positive reference
    /// velocity, flexion at negative.
    fn torque_sign(&self) -> f64 {
        match self {
            ConditionKind::Relaxed => 0.0,
            ConditionKind::ExtensionAssist => 1.0,
            ConditionKind::ExtensionResist => -1.0,
            ConditionKind::FlexionAssist => -1.0,
            ConditionKind::FlexionResist => 1.0,
        }
    }

    fn is_extension_phase(&self) -> bool {
        matches!(
            self,
            ConditionKind::ExtensionAssist | ConditionKind::ExtensionResist
        )
    }
}

/// One scripted human behaviour: a ramped torque plateau inside a phase
/// window of every exercise cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvolvementCondition {
    pub kind: ConditionKind,
    /// Plateau magnitude A_h in N·m.
    pub magnitude: f64,
    /// Active window in seconds from the start of each cycle.
    pub window: (f64, f64),
    /// Raised-cosine ramp duration in seconds at both window edges.
    pub ramp: f64,
    /// Exercise cycle period in seconds.
    pub cycle: f64,
}

impl InvolvementCondition {
    /// Default window placement inside a cycle of the given period. The
    /// effort starts once the reference is visibly moving and releases before
    /// the velocity reversal, which is how subjects track a displayed
    /// trajectory; it also keeps the torque-onset transient away from the
    /// zero-velocity boundary where phase classification is undefined.
    pub fn new(kind: ConditionKind, magnitude: f64, cycle: f64) -> Self {
        let half = cycle / 2.0;
        let window = if kind == ConditionKind::Relaxed {
            (0.0, 0.0)
        } else if kind.is_extension_phase() {
            (0.15 * half, 0.95 * half)
        } else {
            (half + 0.15 * half, half + 0.95 * half)
        };
        Self {
            kind,
            magnitude,
            window,
            ramp: 0.2,
            cycle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.magnitude < 0.0 {
            return Err(Error::Config("involvement magnitude must be >= 0".into()));
        }
        if self.cycle <= 0.0 {
            return Err(Error::Config("cycle period must be positive".into()));
        }
        if self.window.0 < 0.0 || self.window.1 > self.cycle || self.window.0 > self.window.1 {
            return Err(Error::Config(format!(
                "phase window {:?} must lie inside one cycle of {} s",
                self.window, self.cycle
            )));
        }
        Ok(())
    }

    /// Scripted human torque at time `t` (seconds from trial start).
    pub fn torque(&self, t: f64) -> f64 {
        if self.kind == ConditionKind::Relaxed || self.magnitude == 0.0 {
            return 0.0;
        }
        let phase = t.rem_euclid(self.cycle);
        let (start, end) = self.window;
        if phase < start || phase > end {
            return 0.0;
        }
        self.kind.torque_sign() * self.magnitude * ramp_envelope(phase - start, end - start, self.ramp)
    }
}

/// Raised-cosine plateau envelope: rises over `ramp`, holds one, falls over
/// `ramp` at the far end. `s` is the offset into a window of length `len`.
fn ramp_envelope(s: f64, len: f64, ramp: f64) -> f64 {
    if s < 0.0 || s > len {
        return 0.0;
    }
    let ramp = ramp.min(0.5 * len);
    if ramp <= 0.0 {
        return 1.0;
    }
    if s < ramp {
        0.5 * (1.0 - (PI * s / ramp).cos())
    } else if s > len - ramp {
        0.5 * (1.0 - (PI * (len - s) / ramp).cos())
    } else {
        1.0
    }
}

/// Synthesize one two-channel EMG envelope sample for the torque the human
/// will produce `k1` seconds from now.
///
/// Positive torque activates the extensor channel, negative the flexor, by
/// inverting the linear estimation model; zero-mean Gaussian noise of the
/// given level is added per channel and the envelopes are clipped at zero.
/// At zero noise `estimate_torque` recovers the input torque exactly.
pub fn synth_emg(
    tau_h_future: f64,
    model: &HteModel,
    noise_level: f64,
    rng: &mut impl Rng,
) -> (f64, f64) {
    let excess = tau_h_future - model.offset;
    let mut ch1 = if excess > 0.0 {
        excess / model.extensor_gain
    } else {
        0.0
    };
    let mut ch2 = if excess < 0.0 {
        excess / model.flexor_gain
    } else {
        0.0
    };
    if noise_level > 0.0 {
        let normal = Normal::new(0.0, noise_level).expect("noise level must be finite");
        ch1 += normal.sample(rng);
        ch2 += normal.sample(rng);
    }
    (ch1.max(0.0), ch2.max(0.0))
}

/// One simulated subject: limb parameters, calibrated torque model and EMG
/// signal properties.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub name: String,
    /// Human limb contribution to the coupled plant.
    pub human: PlantParams,
    /// Calibrated agonist-antagonist torque model.
    pub hte: HteModel,
    /// Electromechanical lead k1 of the EMG envelopes in seconds.
    pub emg_lead: f64,
    /// Additive envelope noise level (envelope units, one standard deviation).
    pub emg_noise: f64,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<()> {
        self.human.validate()?;
        self.hte.validate()?;
        if !(self.emg_lead.is_finite() && self.emg_lead >= 0.0) {
            return Err(Error::Config("emg lead must be >= 0".into()));
        }
        if !(self.emg_noise.is_finite() && self.emg_noise >= 0.0) {
            return Err(Error::Config("emg noise level must be >= 0".into()));
        }
        Ok(())
    }

    /// Coupled plant parameters: exoskeleton plus this subject's limb.
    pub fn coupled(&self) -> PlantParams {
        EXO_PARAMS.combined(&self.human)
    }
}

/// Identified exoskeleton-only parameters.
pub const EXO_PARAMS: PlantParams = PlantParams::new(0.0377, 0.0207, 1.7536);

/// Identified per-subject limb parameters and calibrated torque models.
pub fn builtin_subjects() -> Vec<SubjectProfile> {
    vec![
        SubjectProfile {
            name: "S1".into(),
            human: PlantParams::new(0.4315, 0.1676, 14.256),
            hte: HteModel::new(0.181, 206.2, -90.5),
            emg_lead: 0.2,
            emg_noise: 0.001,
        },
        SubjectProfile {
            name: "S2".into(),
            human: PlantParams::new(0.1927, 0.1534, 7.5008),
            hte: HteModel::new(0.127, 163.8, -110.1),
            emg_lead: 0.2,
            emg_noise: 0.001,
        },
        SubjectProfile {
            name: "S3".into(),
            human: PlantParams::new(0.3060, 0.1575, 10.595),
            hte: HteModel::new(0.204, 181.7, -132.8),
            emg_lead: 0.2,
            emg_noise: 0.001,
        },
    ]
}

/// Look up a built-in subject by name (case-insensitive).
pub fn builtin_subject(name: &str) -> Option<SubjectProfile> {
    builtin_subjects()
        .into_iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emg::estimate_torque;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const S1_COUPLED: PlantParams = PlantParams::new(0.4692, 0.1883, 16.0096);

    /// Explicit Euler at a much finer step, used as the integration oracle.
    fn euler_oracle(
        mut state: JointState,
        params: &PlantParams,
        tau_e: f64,
        tau_h: f64,
        total: f64,
        h: f64,
    ) -> JointState {
        let steps = (total / h).round() as usize;
        for _ in 0..steps {
            let acc = acceleration(&state, params, tau_e, tau_h);
            state = JointState::new(state.angle + h * state.velocity, state.velocity + h * acc);
        }
        state
    }

    #[test]
    fn static_equilibrium_is_a_fixed_point() {
        let params = S1_COUPLED;
        let state = JointState::new(0.7, 0.0);
        let tau_e = params.gravity_torque * 0.7f64.sin();
        let next = step_dynamics(&state, &params, tau_e, 0.0, 0.002).unwrap();
        assert_relative_eq!(next.angle, 0.7, epsilon = 1e-14);
        assert_relative_eq!(next.velocity, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn one_step_matches_fine_euler_oracle() {
        let params = S1_COUPLED;
        let state = JointState::new(0.7, 0.0);
        // Initial acceleration is -tau_g*sin(0.7)/J.
        let acc0 = acceleration(&state, &params, 0.0, 0.0);
        assert_relative_eq!(acc0, -21.981_388_502_984_95, epsilon = 1e-9);

        let rk4 = step_dynamics(&state, &params, 0.0, 0.0, 0.002).unwrap();
        let oracle = euler_oracle(state, &params, 0.0, 0.0, 0.002, 1e-6);
        assert!((rk4.angle - oracle.angle).abs() < 1e-6);
        assert!((rk4.velocity - oracle.velocity).abs() < 1e-6);
    }

    #[test]
    fn constant_torque_settles_at_static_balance() {
        let params = EXO_PARAMS;
        let tau_e = 1.0;
        let expected = (tau_e / params.gravity_torque).asin();
        let mut state = JointState::new(0.0, 0.0);
        for _ in 0..30_000 {
            state = step_dynamics(&state, &params, tau_e, 0.0, 0.002).unwrap();
        }
        assert!(
            (state.angle - expected).abs() < 1e-3,
            "settled at {} vs {}",
            state.angle,
            expected
        );
        assert!(state.velocity.abs() < 1e-3);
    }

    #[test]
    fn damped_energy_is_non_increasing() {
        let params = S1_COUPLED;
        let mut state = JointState::new(1.1, 0.0);
        let mut energy = state.energy(&params);
        for _ in 0..5_000 {
            state = step_dynamics(&state, &params, 0.0, 0.0, 0.002).unwrap();
            let next_energy = state.energy(&params);
            assert!(
                next_energy <= energy + 1e-9,
                "energy rose from {energy} to {next_energy}"
            );
            energy = next_energy;
        }
    }

    #[test]
    fn halving_dt_cuts_error_fourth_order() {
        let params = S1_COUPLED;
        let start = JointState::new(0.9, 0.0);
        let horizon = 1.0;

        let run = |dt: f64| {
            let mut s = start;
            let steps = (horizon / dt).round() as usize;
            for _ in 0..steps {
                s = step_dynamics(&s, &params, 0.0, 0.0, dt).unwrap();
            }
            s
        };
        // Reference: RK4 at a far finer step.
        let reference = run(1e-5);
        let coarse = run(0.01);
        let fine = run(0.005);
        let err_coarse = (coarse.angle - reference.angle).abs();
        let err_fine = (fine.angle - reference.angle).abs();
        assert!(
            err_coarse >= 8.0 * err_fine,
            "order-4 convergence not observed: {err_coarse} vs {err_fine}"
        );
    }

    #[test]
    fn rejects_non_finite_and_bad_step() {
        let params = S1_COUPLED;
        let state = JointState::new(0.7, 0.0);
        assert!(step_dynamics(&state, &params, f64::NAN, 0.0, 0.002).is_err());
        assert!(step_dynamics(&state, &params, 0.0, f64::INFINITY, 0.002).is_err());
        assert!(step_dynamics(&JointState::new(f64::NAN, 0.0), &params, 0.0, 0.0, 0.002).is_err());
        assert!(step_dynamics(&state, &params, 0.0, 0.0, 0.0).is_err());
        assert!(step_dynamics(&state, &params, 0.0, 0.0, 0.02).is_err());
        let bad = PlantParams::new(-1.0, 0.0, 0.0);
        assert!(step_dynamics(&state, &bad, 0.0, 0.0, 0.002).is_err());
    }

    #[test]
    fn relaxed_condition_is_zero_torque() {
        let condition = InvolvementCondition::new(ConditionKind::Relaxed, 8.0, 4.0);
        for i in 0..100 {
            assert_eq!(condition.torque(i as f64 * 0.24), 0.0);
        }
    }

    #[test]
    fn extension_assist_reaches_plateau_matching_reference_velocity() {
        let condition = InvolvementCondition::new(ConditionKind::ExtensionAssist, 8.0, 4.0);
        // Mid-extension: reference velocity is positive.
        let t = 1.0;
        let theta_r_dot = 0.5 * 2.0 * PI * 0.25 * (2.0 * PI * 0.25 * t).sin();
        assert!(theta_r_dot > 0.0);
        assert_relative_eq!(condition.torque(t), 8.0);
        // Same point in later cycles.
        assert_relative_eq!(condition.torque(t + 8.0), 8.0);
        // Outside the extension window.
        assert_eq!(condition.torque(3.0), 0.0);
    }

    #[test]
    fn flexion_resist_opposes_negative_reference_velocity() {
        let condition = InvolvementCondition::new(ConditionKind::FlexionResist, 8.0, 4.0);
        let t = 3.0; // mid-flexion
        let theta_r_dot = 0.5 * 2.0 * PI * 0.25 * (2.0 * PI * 0.25 * t).sin();
        assert!(theta_r_dot < 0.0);
        let tau = condition.torque(t);
        assert_relative_eq!(tau, 8.0);
        assert!(tau * theta_r_dot < 0.0, "resist must oppose the reference");
    }

    #[test]
    fn scripted_torque_is_continuous_and_bounded() {
        for kind in ConditionKind::ALL {
            let condition = InvolvementCondition::new(kind, 8.0, 4.0);
            let dt = 1e-3;
            // Max slope of the raised-cosine ramp is A_h*pi/(2*ramp).
            let max_step = 8.0 * PI / (2.0 * condition.ramp) * dt * 1.01;
            let mut prev = condition.torque(0.0);
            for i in 1..8_000 {
                let tau = condition.torque(i as f64 * dt);
                assert!(tau.abs() <= 8.0 + 1e-12);
                assert!(
                    (tau - prev).abs() <= max_step,
                    "jump of {} at t={}",
                    (tau - prev).abs(),
                    i as f64 * dt
                );
                prev = tau;
            }
        }
    }

    #[test]
    fn synth_emg_cancels_offset_at_model_torque() {
        let model = HteModel::new(0.181, 206.2, -90.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (ch1, ch2) = synth_emg(0.181, &model, 0.0, &mut rng);
        assert_eq!((ch1, ch2), (0.0, 0.0));
    }

    #[test]
    fn synth_emg_matches_algebraic_inversion() {
        let model = HteModel::new(0.181, 206.2, -90.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (ch1, ch2) = synth_emg(3.400, &model, 0.0, &mut rng);
        assert_relative_eq!(ch1, 0.015_611_057_225_994, epsilon = 1e-12);
        assert_eq!(ch2, 0.0);
    }

    proptest! {
        #[test]
        fn synth_then_estimate_round_trips(tau in -20.0f64..20.0) {
            let model = HteModel::new(0.181, 206.2, -90.5);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let (ch1, ch2) = synth_emg(tau, &model, 0.0, &mut rng);
            let frame = crate::emg::EmgFrame::new(ch1, ch2, 0.0);
            let est = estimate_torque(&frame, &model);
            prop_assert!((est - tau).abs() < 1e-9);
        }

        #[test]
        fn free_swing_energy_never_rises(angle in -1.2f64..1.2, velocity in -1.5f64..1.5) {
            let params = S1_COUPLED;
            let mut state = JointState::new(angle, velocity);
            let mut energy = state.energy(&params);
            for _ in 0..200 {
                state = step_dynamics(&state, &params, 0.0, 0.0, 0.002).unwrap();
                let next = state.energy(&params);
                prop_assert!(next <= energy + 1e-9);
                energy = next;
            }
        }
    }
}
