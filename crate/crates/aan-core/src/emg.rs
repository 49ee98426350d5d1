//! EMG envelope extraction and the linear human torque estimation model.
//!
//! Raw surface EMG is band-pass filtered, full-wave rectified and low-pass
//! filtered to its envelope. Two envelopes (vastus medialis extensor, biceps
//! femoris flexor) feed an affine torque model whose coefficients come from
//! least-squares calibration against superposition reference torques.

use crate::linalg::solve3;
use crate::{Error, Result};
use std::f64::consts::PI;

/// Band-pass skirt order (poles per skirt) of the envelope front-end.
pub const BAND_PASS_ORDER: usize = 4;
/// Envelope smoothing filter order.
pub const ENVELOPE_ORDER: usize = 2;

/// Processing chain parameters for one EMG channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    /// Lower band-pass corner in Hz.
    pub band_low_hz: f64,
    /// Upper band-pass corner in Hz.
    pub band_high_hz: f64,
    /// Envelope low-pass cutoff in Hz.
    pub envelope_hz: f64,
    /// Sample rate of the raw signal in Hz.
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            band_low_hz: 10.0,
            band_high_hz: 500.0,
            envelope_hz: 2.0,
            sample_rate_hz: 2048.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.band_low_hz,
            self.band_high_hz,
            self.envelope_hz,
            self.sample_rate_hz,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("filter frequencies must be positive".into()));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if self.band_low_hz >= self.band_high_hz {
            return Err(Error::Config(format!(
                "band corners must be ordered: {} >= {}",
                self.band_low_hz, self.band_high_hz
            )));
        }
        if self.band_high_hz >= nyquist {
            return Err(Error::Config(format!(
                "upper band corner {} Hz violates the Nyquist limit at {} Hz sampling",
                self.band_high_hz, self.sample_rate_hz
            )));
        }
        if self.envelope_hz >= nyquist {
            return Err(Error::Config("envelope cutoff violates Nyquist".into()));
        }
        Ok(())
    }
}

/// One second-order section, direct form II transposed.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    s1: f64,
    s2: f64,
}

impl Biquad {
    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.s1;
        self.s1 = self.b1 * x - self.a1 * y + self.s2;
        self.s2 = self.b2 * x - self.a2 * y;
        y
    }

    /// Preload the state as if the input had been held at `x` forever, which
    /// suppresses the start-up transient on signals with a non-zero mean.
    fn settle(&mut self, x: f64) {
        let y = x * (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        self.s2 = self.b2 * x - self.a2 * y;
        self.s1 = self.b1 * x - self.a1 * y + self.s2;
    }
}

/// Butterworth quality factors for an even-order cascade.
fn butterworth_q(order: usize) -> Vec<f64> {
    assert!(order >= 2 && order % 2 == 0, "even filter order required");
    (0..order / 2)
        .map(|k| 1.0 / (2.0 * (PI * (2.0 * k as f64 + 1.0) / (2.0 * order as f64)).cos()))
        .collect()
}

fn lowpass_sections(order: usize, fc: f64, fs: f64) -> Vec<Biquad> {
    butterworth_q(order)
        .into_iter()
        .map(|q| {
            let w0 = 2.0 * PI * fc / fs;
            let alpha = w0.sin() / (2.0 * q);
            let cosw = w0.cos();
            let a0 = 1.0 + alpha;
            Biquad {
                b0: (1.0 - cosw) / 2.0 / a0,
                b1: (1.0 - cosw) / a0,
                b2: (1.0 - cosw) / 2.0 / a0,
                a1: -2.0 * cosw / a0,
                a2: (1.0 - alpha) / a0,
                s1: 0.0,
                s2: 0.0,
            }
        })
        .collect()
}

fn highpass_sections(order: usize, fc: f64, fs: f64) -> Vec<Biquad> {
    butterworth_q(order)
        .into_iter()
        .map(|q| {
            let w0 = 2.0 * PI * fc / fs;
            let alpha = w0.sin() / (2.0 * q);
            let cosw = w0.cos();
            let a0 = 1.0 + alpha;
            Biquad {
                b0: (1.0 + cosw) / 2.0 / a0,
                b1: -(1.0 + cosw) / a0,
                b2: (1.0 + cosw) / 2.0 / a0,
                a1: -2.0 * cosw / a0,
                a2: (1.0 - alpha) / a0,
                s1: 0.0,
                s2: 0.0,
            }
        })
        .collect()
}

/// Causal per-channel envelope extractor: band-pass, rectify, low-pass.
///
/// Holds filter state, so use one instance per signal stream.
#[derive(Debug, Clone)]
pub struct EmgProcessor {
    band: Vec<Biquad>,
    envelope: Vec<Biquad>,
    spec: FilterSpec,
}

impl EmgProcessor {
    pub fn new(spec: FilterSpec) -> Result<Self> {
        spec.validate()?;
        let mut band = highpass_sections(BAND_PASS_ORDER, spec.band_low_hz, spec.sample_rate_hz);
        band.extend(lowpass_sections(
            BAND_PASS_ORDER,
            spec.band_high_hz,
            spec.sample_rate_hz,
        ));
        let envelope = lowpass_sections(ENVELOPE_ORDER, spec.envelope_hz, spec.sample_rate_hz);
        Ok(Self {
            band,
            envelope,
            spec,
        })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    /// Samples needed before the envelope output is trustworthy, dominated by
    /// the envelope low-pass settling (about one second at the 2 Hz default).
    pub fn settling_samples(&self) -> usize {
        (2.0 * self.spec.sample_rate_hz / self.spec.envelope_hz).ceil() as usize
    }

    /// Process one raw sample into an envelope sample.
    pub fn process_sample(&mut self, raw: f64) -> f64 {
        let mut x = raw;
        for section in &mut self.band {
            x = section.process(x);
        }
        x = x.abs();
        for section in &mut self.envelope {
            x = section.process(x);
        }
        x
    }

    /// Process a whole signal. The band-pass start-up transient is reduced by
    /// settling the sections on the first sample.
    pub fn process(&mut self, raw: &[f64]) -> Vec<f64> {
        if let Some(&first) = raw.first() {
            for section in &mut self.band {
                section.settle(first);
            }
        }
        raw.iter().map(|&x| self.process_sample(x)).collect()
    }
}

/// Extract the envelope of one raw EMG signal.
pub fn process_emg(raw: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    let mut processor = EmgProcessor::new(*spec)?;
    Ok(processor.process(raw))
}

/// Causal Butterworth low-pass over a whole signal, DC-settled on the first
/// sample. Shared with the identification pipeline, which must run the exact
/// same operator over every regression column.
pub(crate) fn lowpass_filter(signal: &[f64], order: usize, cutoff: f64, fs: f64) -> Vec<f64> {
    let mut sections = lowpass_sections(order, cutoff, fs);
    if let Some(&first) = signal.first() {
        for section in &mut sections {
            section.settle(first);
        }
    }
    signal
        .iter()
        .map(|&x| {
            let mut y = x;
            for section in &mut sections {
                y = section.process(y);
            }
            y
        })
        .collect()
}

/// One processed two-channel EMG sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmgFrame {
    /// Vastus medialis (extensor) envelope.
    pub ch1: f64,
    /// Biceps femoris (flexor) envelope.
    pub ch2: f64,
    /// Sample time in seconds.
    pub timestamp: f64,
}

impl EmgFrame {
    pub const fn new(ch1: f64, ch2: f64, timestamp: f64) -> Self {
        Self {
            ch1,
            ch2,
            timestamp,
        }
    }
}

/// Affine agonist-antagonist torque model. The estimate is interpreted as the
/// joint torque one electromechanical lead ahead of the envelope sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HteModel {
    /// Offset b0 in N·m.
    pub offset: f64,
    /// Extensor gain a1 in N·m per envelope unit (positive).
    pub extensor_gain: f64,
    /// Flexor gain a2 in N·m per envelope unit (negative).
    pub flexor_gain: f64,
}

impl HteModel {
    pub const fn new(offset: f64, extensor_gain: f64, flexor_gain: f64) -> Self {
        Self {
            offset,
            extensor_gain,
            flexor_gain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.offset, self.extensor_gain, self.flexor_gain]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("torque model coefficients"));
        }
        if self.extensor_gain <= 0.0 {
            return Err(Error::Config(
                "extensor gain must be positive (extension produces positive knee torque)".into(),
            ));
        }
        if self.flexor_gain >= 0.0 {
            return Err(Error::Config(
                "flexor gain must be negative (flexion produces negative knee torque)".into(),
            ));
        }
        Ok(())
    }
}

/// Estimated human joint torque for one envelope frame.
pub fn estimate_torque(frame: &EmgFrame, model: &HteModel) -> f64 {
    model.offset + model.extensor_gain * frame.ch1 + model.flexor_gain * frame.ch2
}

/// Cycle-averaged superposition reference torque.
///
/// Both torque records must cover the same realized trajectory; each is
/// folded into a mean profile over cycles of `cycle_len` samples (trailing
/// partial cycles are dropped) and the condition profile is subtracted from
/// the relaxed baseline. Returns one cycle of reference human torque.
pub fn reference_torque(
    tau_e_relaxed: &[f64],
    tau_e_condition: &[f64],
    cycle_len: usize,
) -> Result<Vec<f64>> {
    if tau_e_relaxed.len() != tau_e_condition.len() {
        return Err(Error::LengthMismatch {
            context: "superposition torque records",
            left: tau_e_relaxed.len(),
            right: tau_e_condition.len(),
        });
    }
    if cycle_len == 0 || tau_e_relaxed.len() < cycle_len {
        return Err(Error::Config(format!(
            "need at least one full cycle of {cycle_len} samples, got {}",
            tau_e_relaxed.len()
        )));
    }
    let cycles = tau_e_relaxed.len() / cycle_len;
    let fold = |signal: &[f64]| -> Vec<f64> {
        let mut mean = vec![0.0f64; cycle_len];
        for c in 0..cycles {
            for i in 0..cycle_len {
                mean[i] += signal[c * cycle_len + i];
            }
        }
        mean.iter_mut().for_each(|v| *v /= cycles as f64);
        mean
    };
    let relaxed = fold(tau_e_relaxed);
    let condition = fold(tau_e_condition);
    Ok(relaxed
        .iter()
        .zip(&condition)
        .map(|(r, c)| r - c)
        .collect())
}

/// Calibration output: the fitted model and its error statistics.
#[derive(Debug, Clone, Copy)]
pub struct HteFit {
    pub model: HteModel,
    /// Root-mean-square estimation error in N·m over the calibration data.
    pub rmse: f64,
    /// RMSE normalized by the range of the reference torque.
    pub nrmse: f64,
    /// Number of (frame, target) pairs used.
    pub samples: usize,
}

/// Least-squares calibration of the torque model.
///
/// Envelope frames lead the torque they predict, so frame `i` is paired with
/// the reference torque `round(k1 * sample_rate)` samples later.
pub fn calibrate_hte(
    frames: &[EmgFrame],
    tau_reference: &[f64],
    k1: f64,
    sample_rate: f64,
) -> Result<HteFit> {
    if frames.len() != tau_reference.len() {
        return Err(Error::LengthMismatch {
            context: "calibration frames vs reference torque",
            left: frames.len(),
            right: tau_reference.len(),
        });
    }
    if !(k1.is_finite() && k1 >= 0.0) || !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::Config("k1 and sample rate must be non-negative".into()));
    }
    let shift = (k1 * sample_rate).round() as usize;
    if frames.len() <= shift + 3 {
        return Err(Error::Config(format!(
            "calibration needs more than {} samples for a lead of {} samples",
            shift + 3,
            shift
        )));
    }

    // Normal equations for rows [1, ch1, ch2] -> tau(t + k1).
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let n = frames.len() - shift;
    for i in 0..n {
        let row = [1.0, frames[i].ch1, frames[i].ch2];
        let target = tau_reference[i + shift];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            atb[r] += row[r] * target;
        }
    }

    let names = ["offset", "ch1", "ch2"];
    let coeffs = solve3(ata, atb).map_err(|col| Error::RankDeficient {
        column: names[col],
    })?;
    let model = HteModel::new(coeffs[0], coeffs[1], coeffs[2]);

    let mut sq_sum = 0.0;
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for i in 0..n {
        let est = model.offset
            + model.extensor_gain * frames[i].ch1
            + model.flexor_gain * frames[i].ch2;
        let target = tau_reference[i + shift];
        sq_sum += (est - target) * (est - target);
        t_min = t_min.min(target);
        t_max = t_max.max(target);
    }
    let rmse = (sq_sum / n as f64).sqrt();
    let range = t_max - t_min;
    let nrmse = if range > 0.0 { rmse / range } else { f64::NAN };

    Ok(HteFit {
        model,
        rmse,
        nrmse,
        samples: n,
    })
}
