//! Parametric identification of the joint model from excitation trials.
//!
//! A proportional controller drives the (simulated) system through sinusoidal
//! references at several frequencies while angle and torque are recorded.
//! Velocity and acceleration come from central differencing; every column of
//! the regression
//!
//! ```text
//! J*thdd + B*thd + tau_g*sin(th) = tau_e
//! ```
//!
//! is then passed through the same causal low-pass, which preserves the
//! identity exactly while suppressing measurement noise, and (J, B, tau_g)
//! are solved by linear least squares. Human limb parameters follow by
//! superposition of the coupled and exoskeleton-only fits.

use crate::emg::lowpass_filter;
use crate::linalg::{invert3, solve3};
use crate::plant::PlantParams;
use crate::{Error, Result};
use rand::Rng;
use std::f64::consts::PI;

/// Excitation and processing parameters for one identification run.
#[derive(Debug, Clone, PartialEq)]
pub struct SysIdConfig {
    /// Proportional tracking gain K in N·m/rad.
    pub gain: f64,
    /// Excitation frequencies in Hz.
    pub frequencies: Vec<f64>,
    /// Recorded duration per frequency in seconds.
    pub duration: f64,
    /// Unrecorded settling time per frequency before capture starts.
    pub warmup: f64,
    /// Cutoff of the low-pass applied to the regression columns, Hz.
    pub derivative_cutoff: f64,
    /// Capture rate in Hz.
    pub sample_rate: f64,
    /// Reference amplitude in rad.
    pub amplitude: f64,
    /// Reference offset in rad.
    pub offset: f64,
}

impl Default for SysIdConfig {
    fn default() -> Self {
        Self {
            gain: 80.0,
            frequencies: vec![0.1, 0.2, 0.25, 0.5, 1.0],
            duration: 20.0,
            warmup: 30.0,
            derivative_cutoff: 5.0,
            sample_rate: 500.0,
            amplitude: 0.5,
            offset: 0.7,
        }
    }
}

impl SysIdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::Config("proportional gain must be positive".into()));
        }
        if self.frequencies.is_empty() {
            return Err(Error::Config("need at least one excitation frequency".into()));
        }
        for (i, f) in self.frequencies.iter().enumerate() {
            if !(f.is_finite() && *f > 0.0) {
                return Err(Error::Config(format!("frequency {i} must be positive")));
            }
            if self.frequencies[..i].iter().any(|g| g == f) {
                return Err(Error::Config(format!("duplicate excitation frequency {f}")));
            }
        }
        if !(self.duration > 0.0 && self.warmup >= 0.0) {
            return Err(Error::Config("durations must be non-negative".into()));
        }
        if !(self.sample_rate > 0.0 && self.derivative_cutoff > 0.0)
            || self.derivative_cutoff >= self.sample_rate / 2.0
        {
            return Err(Error::Config("derivative cutoff violates Nyquist".into()));
        }
        if !(self.amplitude > 0.0 && self.offset.is_finite()) {
            return Err(Error::Config("reference shape must be finite".into()));
        }
        Ok(())
    }
}

/// One recorded excitation trial.
#[derive(Debug, Clone)]
pub struct IdSegment {
    pub frequency: f64,
    pub time: Vec<f64>,
    pub angle: Vec<f64>,
    /// Low-passed central-difference velocity.
    pub velocity: Vec<f64>,
    /// Low-passed central-difference acceleration.
    pub acceleration: Vec<f64>,
    pub torque: Vec<f64>,
}

/// All excitation trials of one run plus the processing metadata needed to
/// reproduce the filtering on the remaining regression columns.
#[derive(Debug, Clone)]
pub struct IdDataset {
    pub segments: Vec<IdSegment>,
    pub sample_rate: f64,
    pub derivative_cutoff: f64,
    /// Samples dropped from the start of each segment when fitting, covering
    /// the causal filter warm-up.
    pub edge_trim: usize,
}

impl IdDataset {
    pub fn total_samples(&self) -> usize {
        self.segments.iter().map(|s| s.angle.len()).sum()
    }

    /// Corrupt the recorded torque with additive Gaussian noise whose
    /// standard deviation is `level` times the torque RMS.
    pub fn add_torque_noise(&mut self, level: f64, rng: &mut impl Rng) {
        use rand_distr::{Distribution, Normal};
        if level <= 0.0 {
            return;
        }
        let mut sq = 0.0;
        let mut n = 0usize;
        for segment in &self.segments {
            sq += segment.torque.iter().map(|t| t * t).sum::<f64>();
            n += segment.torque.len();
        }
        let sigma = level * (sq / n.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, sigma).expect("finite noise level");
        for segment in &mut self.segments {
            for tau in &mut segment.torque {
                *tau += normal.sample(rng);
            }
        }
    }
}

/// Simulate the proportionally controlled excitation trials.
///
/// The closed loop `tau_e = K*(theta_r - theta)` is integrated as one smooth
/// ODE (torque evaluated continuously inside the integrator stages), so the
/// recorded samples satisfy the joint model identity to integration accuracy.
pub fn run_excitation(
    params: &PlantParams,
    config: &SysIdConfig,
    tau_h: Option<&dyn Fn(f64) -> f64>,
) -> Result<IdDataset> {
    params.validate()?;
    config.validate()?;
    let dt = 1.0 / config.sample_rate;
    let torque_limit = 25.0;

    let mut segments = Vec::with_capacity(config.frequencies.len());
    for &frequency in &config.frequencies {
        let reference = |t: f64| config.offset + config.amplitude * (2.0 * PI * frequency * t - PI).cos();
        let closed_loop_torque = |t: f64, angle: f64| -> f64 {
            (config.gain * (reference(t) - angle)).clamp(-torque_limit, torque_limit)
        };
        let human = |t: f64| tau_h.map_or(0.0, |f| f(t));
        let deriv = |t: f64, angle: f64, velocity: f64| -> (f64, f64) {
            let acc = (closed_loop_torque(t, angle) + human(t)
                - params.damping * velocity
                - params.gravity_torque * angle.sin())
                / params.inertia;
            (velocity, acc)
        };

        let mut angle = reference(0.0);
        let mut velocity = 0.0;
        let warmup_steps = (config.warmup * config.sample_rate).round() as usize;
        let record_steps = (config.duration * config.sample_rate).round() as usize;

        let mut time = Vec::with_capacity(record_steps);
        let mut angles = Vec::with_capacity(record_steps);
        let mut torques = Vec::with_capacity(record_steps);

        // Sub-stepped RK4 so the discretization defect of the recorded
        // samples stays far below the fit's residual budget.
        const SUBSTEPS: usize = 5;
        let h = dt / SUBSTEPS as f64;

        for step in 0..(warmup_steps + record_steps) {
            let t_sample = step as f64 * dt;
            if step >= warmup_steps {
                time.push(t_sample);
                angles.push(angle);
                torques.push(closed_loop_torque(t_sample, angle));
            }
            for sub in 0..SUBSTEPS {
                let t = t_sample + sub as f64 * h;
                let (k1p, k1v) = deriv(t, angle, velocity);
                let (k2p, k2v) =
                    deriv(t + 0.5 * h, angle + 0.5 * h * k1p, velocity + 0.5 * h * k1v);
                let (k3p, k3v) =
                    deriv(t + 0.5 * h, angle + 0.5 * h * k2p, velocity + 0.5 * h * k2v);
                let (k4p, k4v) = deriv(t + h, angle + h * k3p, velocity + h * k3v);
                angle += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
                velocity += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
            if !angle.is_finite() || angle.abs() > 10.0 {
                return Err(Error::Numeric(format!(
                    "excitation diverged at {frequency} Hz (gain {} unstable)",
                    config.gain
                )));
            }
        }

        segments.push(build_segment(
            frequency, time, angles, torques, dt, config,
        ));
    }

    Ok(IdDataset {
        segments,
        sample_rate: config.sample_rate,
        derivative_cutoff: config.derivative_cutoff,
        edge_trim: (1.5 * config.sample_rate).ceil() as usize,
    })
}

/// Differentiate (fourth-order central stencils), drop the stencil edges, and
/// low-pass the derivative columns.
fn build_segment(
    frequency: f64,
    time: Vec<f64>,
    angles: Vec<f64>,
    torques: Vec<f64>,
    dt: f64,
    config: &SysIdConfig,
) -> IdSegment {
    let n = angles.len();
    assert!(n > 8, "excitation segment too short");
    let mut velocity_raw = Vec::with_capacity(n - 4);
    let mut accel_raw = Vec::with_capacity(n - 4);
    for i in 2..n - 2 {
        velocity_raw.push(
            (-angles[i + 2] + 8.0 * angles[i + 1] - 8.0 * angles[i - 1] + angles[i - 2])
                / (12.0 * dt),
        );
        accel_raw.push(
            (-angles[i + 2] + 16.0 * angles[i + 1] - 30.0 * angles[i] + 16.0 * angles[i - 1]
                - angles[i - 2])
                / (12.0 * dt * dt),
        );
    }
    let fs = config.sample_rate;
    let cutoff = config.derivative_cutoff;
    IdSegment {
        frequency,
        time: time[2..n - 2].to_vec(),
        angle: angles[2..n - 2].to_vec(),
        velocity: lowpass_filter(&velocity_raw, 2, cutoff, fs),
        acceleration: lowpass_filter(&accel_raw, 2, cutoff, fs),
        torque: torques[2..n - 2].to_vec(),
    }
}

/// Identified parameters with fit diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ParamFit {
    pub params: PlantParams,
    /// RMS of the model-equation residual over the regression rows, N·m.
    pub residual_rmse: f64,
    /// Estimated standard deviation of each parameter (J, B, tau_g).
    pub param_std: [f64; 3],
    pub samples: usize,
}

/// Least-squares fit of (J, B, tau_g) to a relaxed-human dataset.
pub fn fit_params(dataset: &IdDataset) -> Result<ParamFit> {
    if dataset.segments.is_empty() {
        return Err(Error::Config("identification dataset is empty".into()));
    }
    let fs = dataset.sample_rate;
    let cutoff = dataset.derivative_cutoff;

    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let mut rows: Vec<([f64; 3], f64)> = Vec::new();
    for segment in &dataset.segments {
        // The gravity column and the target pass through the identical
        // operator already applied to the derivative columns.
        let sin_theta: Vec<f64> = segment.angle.iter().map(|a| a.sin()).collect();
        let sin_filtered = lowpass_filter(&sin_theta, 2, cutoff, fs);
        let torque_filtered = lowpass_filter(&segment.torque, 2, cutoff, fs);
        let start = dataset.edge_trim.min(segment.angle.len());
        for i in start..segment.angle.len() {
            let row = [segment.acceleration[i], segment.velocity[i], sin_filtered[i]];
            rows.push((row, torque_filtered[i]));
        }
    }
    if rows.len() < 3 {
        return Err(Error::Config(
            "identification dataset has too few usable samples".into(),
        ));
    }
    for (row, target) in &rows {
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            atb[r] += row[r] * target;
        }
    }

    let names = ["inertia", "damping", "gravity torque"];
    let solution = solve3(ata, atb).map_err(|col| Error::RankDeficient {
        column: names[col],
    })?;
    let params = PlantParams::new(solution[0], solution[1], solution[2]);

    let mut sq = 0.0;
    for (row, target) in &rows {
        let predicted = row[0] * solution[0] + row[1] * solution[1] + row[2] * solution[2];
        sq += (predicted - target) * (predicted - target);
    }
    let n = rows.len();
    let residual_rmse = (sq / n as f64).sqrt();

    let dof = (n - 3).max(1) as f64;
    let sigma_sq = sq / dof;
    let covariance = invert3(ata).map_err(|col| Error::RankDeficient {
        column: names[col],
    })?;
    let param_std = [
        (sigma_sq * covariance[0][0]).max(0.0).sqrt(),
        (sigma_sq * covariance[1][1]).max(0.0).sqrt(),
        (sigma_sq * covariance[2][2]).max(0.0).sqrt(),
    ];

    Ok(ParamFit {
        params,
        residual_rmse,
        param_std,
        samples: n,
    })
}

/// Human limb parameters inferred by superposition of two fits.
#[derive(Debug, Clone)]
pub struct SuperpositionResult {
    pub params: PlantParams,
    /// Components that came out negative, flagging a non-physical fit.
    pub non_physical: Vec<&'static str>,
}

/// Componentwise difference (coupled minus exoskeleton-only).
pub fn infer_human_params(combined: &PlantParams, exo: &PlantParams) -> SuperpositionResult {
    let params = PlantParams::new(
        combined.inertia - exo.inertia,
        combined.damping - exo.damping,
        combined.gravity_torque - exo.gravity_torque,
    );
    let mut non_physical = Vec::new();
    if params.inertia < 0.0 {
        non_physical.push("inertia");
    }
    if params.damping < 0.0 {
        non_physical.push("damping");
    }
    if params.gravity_torque < 0.0 {
        non_physical.push("gravity torque");
    }
    SuperpositionResult {
        params,
        non_physical,
    }
}
