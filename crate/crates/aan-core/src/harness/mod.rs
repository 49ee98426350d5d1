//! Closed-loop trial orchestration.
//!
//! One trial runs the full loop at the control rate: scripted human torque,
//! synthetic EMG, torque estimation, mode inference, the receding-horizon
//! controller, and the plant step, recording every sample. The reference is
//! the standard sinusoidal exercise; an optional adaptation rule freezes it
//! (by halting a virtual clock) while the safety likelihood exceeds a
//! threshold, so the subject can relax and resume where they left off.

mod metrics;
mod record;

pub use metrics::{compute_metrics, PhaseMetrics, TrialMetrics};
pub use record::{
    export, import_rows, ExportPaths, TrialMeta, TrialRecord, TrialRow, CSV_COLUMNS,
};

use crate::config::{fmt_f64, serialize, KvMap, KvReader};
use crate::emg::{estimate_torque, EmgFrame};
use crate::fuzzy::{infer, FuzzyConfig, MembershipParams};
use crate::mpc::{Controller, MpcConfig, MpcInputs};
use crate::plant::{
    builtin_subject, step_dynamics, synth_emg, ConditionKind, InvolvementCondition, JointState,
    PlantParams, SubjectProfile, EXO_PARAMS,
};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Sinusoidal exercise reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTrajectory {
    /// Amplitude in rad.
    pub amplitude: f64,
    /// Offset in rad.
    pub offset: f64,
    /// Repetition frequency in Hz.
    pub frequency: f64,
    /// Phase inside the cosine, in rad.
    pub phase: f64,
}

impl Default for ReferenceTrajectory {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            offset: 0.7,
            frequency: 0.25,
            phase: -PI,
        }
    }
}

impl ReferenceTrajectory {
    pub fn angle(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * t + self.phase).cos() + self.offset
    }

    /// Analytic derivative of [`Self::angle`].
    pub fn velocity(&self, t: f64) -> f64 {
        -self.amplitude
            * 2.0
            * PI
            * self.frequency
            * (2.0 * PI * self.frequency * t + self.phase).sin()
    }

    /// Cycle period in seconds.
    pub fn cycle(&self) -> f64 {
        1.0 / self.frequency
    }

    /// The swept range must stay inside the controller's angle bounds.
    pub fn validate(&self, angle_bounds: (f64, f64)) -> Result<()> {
        if !(self.amplitude > 0.0 && self.frequency > 0.0) {
            return Err(Error::Config(
                "reference amplitude and frequency must be positive".into(),
            ));
        }
        let (lo, hi) = (self.offset - self.amplitude, self.offset + self.amplitude);
        if lo < angle_bounds.0 - 1e-12 || hi > angle_bounds.1 + 1e-12 {
            return Err(Error::Config(format!(
                "reference range [{lo}, {hi}] exceeds the angle bounds {angle_bounds:?}"
            )));
        }
        Ok(())
    }
}

/// Reference-freezing rule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationConfig {
    pub enabled: bool,
    /// Safety-likelihood threshold above which the reference halts.
    pub resistance_threshold: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            resistance_threshold: 0.8,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resistance_threshold > 0.0 && self.resistance_threshold < 1.0) {
            return Err(Error::Config(format!(
                "resistance threshold must lie in (0, 1), got {}",
                self.resistance_threshold
            )));
        }
        Ok(())
    }
}

/// One adaptation step: advance the virtual time by `dt`, or hold it (and
/// therefore the reference angle) while the safety likelihood is above the
/// threshold. Returns the commanded reference angle and the updated virtual
/// time; resumption is continuous because the clock restarts where it
/// stopped.
pub fn adapt_reference(
    reference: &ReferenceTrajectory,
    t_virtual: f64,
    dt: f64,
    mu_safety: f64,
    config: &AdaptationConfig,
) -> (f64, f64) {
    if config.enabled && mu_safety > config.resistance_threshold {
        (reference.angle(t_virtual), t_virtual)
    } else {
        let advanced = t_virtual + dt;
        (reference.angle(advanced), advanced)
    }
}

/// Scripted human behaviour for one trial.
#[derive(Debug, Clone, PartialEq)]
pub enum HumanScript {
    /// No voluntary torque.
    Zero,
    /// Phase-locked assist/resist effort of one involvement condition.
    Condition(InvolvementCondition),
    /// A single wall-clock torque pulse with raised-cosine ramps.
    Pulse {
        start: f64,
        duration: f64,
        magnitude: f64,
        ramp: f64,
    },
    /// Velocity-proportional resistance (the subject fights being moved),
    /// capped in magnitude.
    VelocityResist { damping: f64, max: f64 },
    /// The subject holds their leg at a posture, gravity included.
    Hold {
        target: f64,
        stiffness: f64,
        damping: f64,
    },
}

impl HumanScript {
    pub fn condition(kind: ConditionKind, magnitude: f64, cycle: f64) -> Self {
        HumanScript::Condition(InvolvementCondition::new(kind, magnitude, cycle))
    }

    pub fn label(&self) -> String {
        match self {
            HumanScript::Zero => "zero".into(),
            HumanScript::Condition(c) => c.kind.label().into(),
            HumanScript::Pulse { .. } => "pulse".into(),
            HumanScript::VelocityResist { .. } => "velocity-resist".into(),
            HumanScript::Hold { .. } => "hold".into(),
        }
    }

    /// Torque exerted now. Phase-locked scripts follow the virtual (displayed)
    /// clock; wall-clock events use real time; reactive scripts use the state.
    fn torque(
        &self,
        wall_t: f64,
        virtual_t: f64,
        state: &JointState,
        plant: &PlantParams,
    ) -> f64 {
        match self {
            HumanScript::Zero => 0.0,
            HumanScript::Condition(c) => c.torque(virtual_t),
            HumanScript::Pulse {
                start,
                duration,
                magnitude,
                ramp,
            } => magnitude * pulse_envelope(wall_t - start, *duration, *ramp),
            HumanScript::VelocityResist { damping, max } => {
                (-damping * state.velocity).clamp(-max.abs(), max.abs())
            }
            HumanScript::Hold {
                target,
                stiffness,
                damping,
            } => {
                plant.gravity_torque * state.angle.sin() + stiffness * (target - state.angle)
                    - damping * state.velocity
            }
        }
    }

    /// Torque the script will exert at a future instant, when it is a
    /// deterministic function of time. Reactive scripts return `None` and the
    /// EMG synthesis falls back to the present torque.
    fn future_torque(&self, wall_t: f64, virtual_t: f64) -> Option<f64> {
        match self {
            HumanScript::Zero => Some(0.0),
            HumanScript::Condition(c) => Some(c.torque(virtual_t)),
            HumanScript::Pulse {
                start,
                duration,
                magnitude,
                ramp,
            } => Some(magnitude * pulse_envelope(wall_t - start, *duration, *ramp)),
            HumanScript::VelocityResist { .. } | HumanScript::Hold { .. } => None,
        }
    }
}

fn pulse_envelope(s: f64, duration: f64, ramp: f64) -> f64 {
    if s < 0.0 || s > duration {
        return 0.0;
    }
    let ramp = ramp.min(0.5 * duration);
    if ramp <= 0.0 {
        return 1.0;
    }
    if s < ramp {
        0.5 * (1.0 - (PI * s / ramp).cos())
    } else if s > duration - ramp {
        0.5 * (1.0 - (PI * (duration - s) / ramp).cos())
    } else {
        1.0
    }
}

/// Complete configuration of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub exo: PlantParams,
    pub subject: SubjectProfile,
    pub reference: ReferenceTrajectory,
    pub mpc: MpcConfig,
    pub fuzzy: FuzzyConfig,
    pub adaptation: AdaptationConfig,
    /// Trial duration in virtual (exercise) seconds.
    pub duration: f64,
    /// Control rate in Hz.
    pub control_rate: f64,
    /// Scripted effort magnitude A_h for involvement conditions, N·m.
    pub condition_magnitude: f64,
    /// Pin the assistance mode instead of using the inference output
    /// (calibration-style trials run with the mode fixed at one).
    pub forced_mode: Option<f64>,
}

impl TrialSetup {
    pub fn for_subject(subject: SubjectProfile) -> Self {
        Self {
            exo: EXO_PARAMS,
            subject,
            reference: ReferenceTrajectory::default(),
            mpc: MpcConfig::default(),
            fuzzy: FuzzyConfig::default(),
            adaptation: AdaptationConfig::default(),
            duration: 24.0,
            control_rate: 500.0,
            condition_magnitude: 20.0,
            forced_mode: None,
        }
    }

    /// Built-in subject by name.
    pub fn named(subject: &str) -> Result<Self> {
        let subject = builtin_subject(subject)
            .ok_or_else(|| Error::Config(format!("unknown subject `{subject}`")))?;
        Ok(Self::for_subject(subject))
    }

    pub fn coupled_params(&self) -> PlantParams {
        self.exo.combined(&self.subject.human)
    }

    pub fn validate(&self) -> Result<()> {
        self.exo.validate()?;
        self.subject.validate()?;
        self.mpc.validate()?;
        self.fuzzy.validate()?;
        self.adaptation.validate()?;
        self.reference.validate(self.mpc.angle_bounds)?;
        if !(self.duration > 0.0) {
            return Err(Error::Config("trial duration must be positive".into()));
        }
        if !(self.control_rate > 0.0) || 1.0 / self.control_rate > 0.01 {
            return Err(Error::Config(
                "control rate must give a plant step of at most 0.01 s".into(),
            ));
        }
        if let Some(mode) = self.forced_mode {
            if !(0.0..=1.0).contains(&mode) {
                return Err(Error::Config("forced mode must lie in [0, 1]".into()));
            }
        }
        if self.condition_magnitude < 0.0 {
            return Err(Error::Config("condition magnitude must be >= 0".into()));
        }
        Ok(())
    }

    /// Canonical key-value form; the config hash is derived from this.
    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        let mut put = |key: &str, value: String| {
            map.insert(key.to_string(), value);
        };
        put("exo.j", fmt_f64(self.exo.inertia));
        put("exo.b", fmt_f64(self.exo.damping));
        put("exo.tau_g", fmt_f64(self.exo.gravity_torque));
        put("subject.name", self.subject.name.clone());
        put("subject.j", fmt_f64(self.subject.human.inertia));
        put("subject.b", fmt_f64(self.subject.human.damping));
        put("subject.tau_g", fmt_f64(self.subject.human.gravity_torque));
        put("subject.b0", fmt_f64(self.subject.hte.offset));
        put("subject.a1", fmt_f64(self.subject.hte.extensor_gain));
        put("subject.a2", fmt_f64(self.subject.hte.flexor_gain));
        put("subject.k1", fmt_f64(self.subject.emg_lead));
        put("subject.emg_noise", fmt_f64(self.subject.emg_noise));
        put("reference.amplitude", fmt_f64(self.reference.amplitude));
        put("reference.offset", fmt_f64(self.reference.offset));
        put("reference.frequency", fmt_f64(self.reference.frequency));
        put("reference.phase", fmt_f64(self.reference.phase));
        put("mpc.horizon", fmt_f64(self.mpc.horizon));
        put("mpc.steps", self.mpc.steps.to_string());
        put("mpc.w_theta", fmt_f64(self.mpc.tracking_weight));
        put("mpc.w_tau", fmt_f64(self.mpc.torque_weight));
        put("mpc.theta_min", fmt_f64(self.mpc.angle_bounds.0));
        put("mpc.theta_max", fmt_f64(self.mpc.angle_bounds.1));
        put("mpc.theta_dot_min", fmt_f64(self.mpc.velocity_bounds.0));
        put("mpc.theta_dot_max", fmt_f64(self.mpc.velocity_bounds.1));
        put("mpc.tau_min", fmt_f64(self.mpc.torque_bounds.0));
        put("mpc.tau_max", fmt_f64(self.mpc.torque_bounds.1));
        put("mpc.grad_iters", self.mpc.grad_iters.to_string());
        put("mpc.al_rounds", self.mpc.al_rounds.to_string());
        put("mpc.penalty", fmt_f64(self.mpc.penalty));
        put("mpc.multiplier_rate", fmt_f64(self.mpc.multiplier_rate));
        put_membership(&mut map, "fuzzy.torque_negative", &self.fuzzy.torque_negative);
        put_membership(&mut map, "fuzzy.torque_positive", &self.fuzzy.torque_positive);
        put_membership(&mut map, "fuzzy.velocity_negative", &self.fuzzy.velocity_negative);
        put_membership(&mut map, "fuzzy.velocity_zero", &self.fuzzy.velocity_zero);
        put_membership(&mut map, "fuzzy.velocity_positive", &self.fuzzy.velocity_positive);
        map.insert("fuzzy.p_a".into(), fmt_f64(self.fuzzy.assist_penalty));
        map.insert("fuzzy.p_s".into(), fmt_f64(self.fuzzy.safety_penalty));
        map.insert(
            "fuzzy.dead_zone".into(),
            fmt_f64(self.fuzzy.torque_dead_zone),
        );
        map.insert("adapt.enabled".into(), self.adaptation.enabled.to_string());
        map.insert(
            "adapt.rth".into(),
            fmt_f64(self.adaptation.resistance_threshold),
        );
        map.insert("trial.duration".into(), fmt_f64(self.duration));
        map.insert("trial.rate".into(), fmt_f64(self.control_rate));
        map.insert(
            "trial.condition_magnitude".into(),
            fmt_f64(self.condition_magnitude),
        );
        map.insert(
            "trial.forced_mode".into(),
            self.forced_mode.map_or("none".into(), fmt_f64),
        );
        map
    }

    /// Apply overrides from a parsed config file on top of this setup.
    pub fn apply_kv(&mut self, map: &KvMap, label: &str) -> Result<()> {
        let reader = KvReader::new(map, label);
        if let Some(name) = reader.string("subject.name") {
            if !self.subject.name.eq_ignore_ascii_case(name) {
                self.subject = builtin_subject(name)
                    .ok_or_else(|| Error::Config(format!("unknown subject `{name}`")))?;
            }
        }
        for (key, target) in [
            ("exo.j", &mut self.exo.inertia),
            ("exo.b", &mut self.exo.damping),
            ("exo.tau_g", &mut self.exo.gravity_torque),
            ("subject.j", &mut self.subject.human.inertia),
            ("subject.b", &mut self.subject.human.damping),
            ("subject.tau_g", &mut self.subject.human.gravity_torque),
            ("subject.b0", &mut self.subject.hte.offset),
            ("subject.a1", &mut self.subject.hte.extensor_gain),
            ("subject.a2", &mut self.subject.hte.flexor_gain),
            ("subject.k1", &mut self.subject.emg_lead),
            ("subject.emg_noise", &mut self.subject.emg_noise),
            ("reference.amplitude", &mut self.reference.amplitude),
            ("reference.offset", &mut self.reference.offset),
            ("reference.frequency", &mut self.reference.frequency),
            ("reference.phase", &mut self.reference.phase),
            ("mpc.horizon", &mut self.mpc.horizon),
            ("mpc.w_theta", &mut self.mpc.tracking_weight),
            ("mpc.w_tau", &mut self.mpc.torque_weight),
            ("mpc.theta_min", &mut self.mpc.angle_bounds.0),
            ("mpc.theta_max", &mut self.mpc.angle_bounds.1),
            ("mpc.theta_dot_min", &mut self.mpc.velocity_bounds.0),
            ("mpc.theta_dot_max", &mut self.mpc.velocity_bounds.1),
            ("mpc.tau_min", &mut self.mpc.torque_bounds.0),
            ("mpc.tau_max", &mut self.mpc.torque_bounds.1),
            ("mpc.penalty", &mut self.mpc.penalty),
            ("mpc.multiplier_rate", &mut self.mpc.multiplier_rate),
            ("fuzzy.p_a", &mut self.fuzzy.assist_penalty),
            ("fuzzy.p_s", &mut self.fuzzy.safety_penalty),
            ("fuzzy.dead_zone", &mut self.fuzzy.torque_dead_zone),
            ("adapt.rth", &mut self.adaptation.resistance_threshold),
            ("trial.duration", &mut self.duration),
            ("trial.rate", &mut self.control_rate),
            ("trial.condition_magnitude", &mut self.condition_magnitude),
        ] {
            if let Some(value) = reader.f64(key)? {
                *target = value;
            }
        }
        if let Some(steps) = reader.usize("mpc.steps")? {
            self.mpc.steps = steps;
        }
        if let Some(iters) = reader.usize("mpc.grad_iters")? {
            self.mpc.grad_iters = iters;
        }
        if let Some(rounds) = reader.usize("mpc.al_rounds")? {
            self.mpc.al_rounds = rounds;
        }
        if let Some(enabled) = reader.bool("adapt.enabled")? {
            self.adaptation.enabled = enabled;
        }
        self.validate()
    }

    /// Hash of the canonical configuration plus the script label; changes
    /// whenever any field of the run changes.
    pub fn config_hash(&self, script_label: &str) -> String {
        let mut map = self.to_kv();
        map.insert("trial.script".into(), script_label.to_string());
        let mut hasher = Sha256::new();
        hasher.update(serialize(&map).as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn put_membership(map: &mut KvMap, prefix: &str, params: &MembershipParams) {
    match *params {
        MembershipParams::Sigmoidal { steepness, center } => {
            map.insert(format!("{prefix}.kind"), "sigmoidal".into());
            map.insert(format!("{prefix}.a"), fmt_f64(steepness));
            map.insert(format!("{prefix}.c"), fmt_f64(center));
        }
        MembershipParams::Gaussian { center, width } => {
            map.insert(format!("{prefix}.kind"), "gaussian".into());
            map.insert(format!("{prefix}.c"), fmt_f64(center));
            map.insert(format!("{prefix}.sigma"), fmt_f64(width));
        }
    }
}

/// A trial that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct TrialFailure {
    pub partial: TrialRecord,
    pub cause: Error,
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "trial aborted after {} samples: {}",
            self.partial.rows.len(),
            self.cause
        )
    }
}

/// Run one closed-loop trial. Identical (setup, script, seed) triples produce
/// bit-identical records.
pub fn run_trial(
    setup: &TrialSetup,
    script: &HumanScript,
    seed: u64,
) -> std::result::Result<TrialRecord, Box<TrialFailure>> {
    let abort = |rows: Vec<TrialRow>, meta: TrialMeta, cause: Error| {
        Box::new(TrialFailure {
            partial: TrialRecord { rows, meta },
            cause,
        })
    };

    let mut meta = TrialMeta {
        subject: setup.subject.name.clone(),
        script: script.label(),
        seed,
        config_hash: setup.config_hash(&script.label()),
        sample_rate: setup.control_rate,
        cycle: setup.reference.cycle(),
        duration: setup.duration,
        frozen_steps: 0,
        degraded_steps: 0,
        descent_violations: 0,
        max_constraint_violation: 0.0,
    };
    if let Err(cause) = setup.validate() {
        return Err(abort(Vec::new(), meta, cause));
    }

    let dt = 1.0 / setup.control_rate;
    let total_steps = (setup.duration * setup.control_rate).round() as usize;
    let max_wall_steps = total_steps * 10;
    let coupled = setup.coupled_params();
    let node_dt = setup.mpc.node_dt();
    let steps = setup.mpc.steps;

    let mut controller = match Controller::new(setup.mpc) {
        Ok(c) => c,
        Err(cause) => return Err(abort(Vec::new(), meta, cause)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = JointState::new(
        setup.reference.angle(0.0),
        setup.reference.velocity(0.0),
    );
    let mut rows: Vec<TrialRow> = Vec::with_capacity(total_steps);
    let mut window = vec![0.0f64; steps + 1];

    let mut virtual_t = 0.0f64;
    let mut advanced_steps = 0usize;
    let mut wall_step = 0usize;
    let mut frozen_prev = false;

    while advanced_steps < total_steps {
        if wall_step >= max_wall_steps {
            return Err(abort(
                rows,
                meta,
                Error::Numeric("adaptation never released the reference".into()),
            ));
        }
        let wall_t = wall_step as f64 * dt;

        let tau_h_true = script.torque(wall_t, virtual_t, &state, &coupled);
        let tau_h_future = script
            .future_torque(wall_t + setup.subject.emg_lead, virtual_t + setup.subject.emg_lead)
            .unwrap_or(tau_h_true);
        let (ch1, ch2) = synth_emg(
            tau_h_future,
            &setup.subject.hte,
            setup.subject.emg_noise,
            &mut rng,
        );
        let frame = EmgFrame::new(ch1, ch2, wall_t);
        let tau_h_hat = estimate_torque(&frame, &setup.subject.hte);

        let reference_velocity = if frozen_prev {
            0.0
        } else {
            setup.reference.velocity(virtual_t)
        };
        let likelihoods = infer(tau_h_hat, reference_velocity, &setup.fuzzy);
        let mode = setup.forced_mode.unwrap_or(likelihoods.mode);

        let frozen = setup.adaptation.enabled
            && likelihoods.safety > setup.adaptation.resistance_threshold;
        if frozen {
            window.iter_mut().for_each(|w| *w = setup.reference.angle(virtual_t));
        } else {
            for (j, w) in window.iter_mut().enumerate() {
                *w = setup.reference.angle(virtual_t + j as f64 * node_dt);
            }
        }

        let inputs = MpcInputs {
            state,
            reference: &window,
            reference_velocity,
            human_torque: tau_h_hat,
            mode,
            params: coupled,
        };
        let (tau_e, diag) = match controller.control_step(&inputs) {
            Ok(out) => out,
            Err(cause) => return Err(abort(rows, meta, cause)),
        };

        rows.push(TrialRow {
            t: wall_t,
            theta_r: window[0],
            theta: state.angle,
            theta_dot: state.velocity,
            tau_e,
            tau_h_true,
            tau_h_hat,
            ch1,
            ch2,
            mu_assist: likelihoods.assist,
            mu_safety: likelihoods.safety,
            mode,
            stage_cost: diag.stage_cost,
            augmented_cost: diag.augmented_cost,
        });
        meta.frozen_steps += frozen as usize;
        meta.degraded_steps += diag.degraded as usize;
        meta.descent_violations += diag.descent_violations;
        meta.max_constraint_violation = meta.max_constraint_violation.max(diag.constraint_violation);

        state = match step_dynamics(&state, &coupled, tau_e, tau_h_true, dt) {
            Ok(next) => next,
            Err(cause) => return Err(abort(rows, meta, cause)),
        };
        if !frozen {
            virtual_t += dt;
            advanced_steps += 1;
        }
        frozen_prev = frozen;
        wall_step += 1;
    }

    Ok(TrialRecord { rows, meta })
}

/// Run every (subject, condition, seed) combination into `out_dir`, exporting
/// each trial. Returns the written file stems in deterministic order.
pub fn run_batch(
    setup_template: &TrialSetup,
    subjects: &[String],
    conditions: &[ConditionKind],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for subject_name in subjects {
        let mut setup = setup_template.clone();
        if !setup.subject.name.eq_ignore_ascii_case(subject_name) {
            setup.subject = builtin_subject(subject_name)
                .ok_or_else(|| Error::Config(format!("unknown subject `{subject_name}`")))?;
        }
        for &condition in conditions {
            for &seed in seeds {
                let script = HumanScript::condition(
                    condition,
                    setup.condition_magnitude,
                    setup.reference.cycle(),
                );
                let record = run_trial(&setup, &script, seed)
                    .map_err(|failure| failure.cause)?;
                let metrics = compute_metrics(&record)?;
                let stem = format!(
                    "{}_{}_seed{}",
                    setup.subject.name.to_lowercase(),
                    condition.label().to_lowercase(),
                    seed
                );
                let paths = export(&record, &metrics, out_dir, &stem)?;
                written.push(paths.csv);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_matches_the_analytic_shape() {
        let reference = ReferenceTrajectory::default();
        assert_relative_eq!(reference.angle(0.0), 0.2, epsilon = 1e-12);
        assert_relative_eq!(reference.velocity(0.0), 0.0, epsilon = 1e-12);
        // Extension peak at half period.
        assert_relative_eq!(reference.angle(2.0), 1.2, epsilon = 1e-12);
        // Peak velocity a quarter period in.
        assert_relative_eq!(reference.angle(1.0), 0.7, epsilon = 1e-12);
        assert_relative_eq!(reference.velocity(1.0), 0.5 * PI * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reference_velocity_matches_finite_differences() {
        let reference = ReferenceTrajectory::default();
        let h = 1e-7;
        for i in 0..100 {
            let t = i as f64 * 0.13;
            let fd = (reference.angle(t + h) - reference.angle(t - h)) / (2.0 * h);
            assert_relative_eq!(reference.velocity(t), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn adaptation_freezes_and_advances() {
        let reference = ReferenceTrajectory::default();
        let config = AdaptationConfig {
            enabled: true,
            resistance_threshold: 0.8,
        };
        let (held, t1) = adapt_reference(&reference, 1.0, 0.002, 0.9, &config);
        assert_eq!(t1, 1.0);
        assert_relative_eq!(held, reference.angle(1.0));
        let (moved, t2) = adapt_reference(&reference, 1.0, 0.002, 0.0, &config);
        assert_eq!(t2, 1.002);
        assert_relative_eq!(moved, reference.angle(1.002));
        // Disabled: never triggers.
        let off = AdaptationConfig::default();
        let (_, t3) = adapt_reference(&reference, 1.0, 0.002, 0.99, &off);
        assert_eq!(t3, 1.002);
    }

    #[test]
    fn config_hash_tracks_every_field() {
        let base = TrialSetup::named("S1").unwrap();
        let hash = base.config_hash("R");
        assert_eq!(hash.len(), 64);
        let mut changed = base.clone();
        changed.mpc.tracking_weight += 1.0;
        assert_ne!(changed.config_hash("R"), hash);
        let mut changed = base.clone();
        changed.fuzzy.assist_penalty = 0.4;
        assert_ne!(changed.config_hash("R"), hash);
        assert_ne!(base.config_hash("EA"), hash);
        assert_eq!(base.config_hash("R"), hash);
    }

    #[test]
    fn kv_round_trip_preserves_the_setup() {
        let setup = TrialSetup::named("S2").unwrap();
        let text = serialize(&setup.to_kv());
        let map = crate::config::parse_str(&text, "round-trip").unwrap();
        let mut rebuilt = TrialSetup::named("S1").unwrap();
        rebuilt.apply_kv(&map, "round-trip").unwrap();
        assert_eq!(rebuilt.subject.name, "S2");
        assert_eq!(rebuilt.config_hash("R"), setup.config_hash("R"));
    }

    #[test]
    fn invalid_overrides_are_rejected() {
        let mut setup = TrialSetup::named("S1").unwrap();
        let map = crate::config::parse_str("mpc.w_theta = -5\n", "bad").unwrap();
        assert!(setup.apply_kv(&map, "bad").is_err());
    }
}
