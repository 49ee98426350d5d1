//! Assistance-mode inference from estimated human torque and reference
//! velocity.
//!
//! Two sigmoidal memberships classify the torque axis (Negative, Positive)
//! and a sigmoid/Gaussian/sigmoid triple classifies the reference velocity
//! (Negative, Zero, Positive). Larsen product implication combines them into
//! the active-assist and safety likelihoods:
//!
//! ```text
//! mu_A = fN(tau)*fN(vel) + fP(tau)*fP(vel)
//! mu_S = fN(tau)*(fZ(vel) + fP(vel)) + fP(tau)*(fZ(vel) + fN(vel))
//! m    = 1 - (p_A*mu_A + p_S*mu_S)
//! ```
//!
//! `m` scales the tracking weight of the controller: 1 is robot-dominant,
//! 0.5 active-assist, 0 fully compliant.

use crate::{Error, Result};

/// One membership function on a scalar input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipParams {
    /// `1 / (1 + exp(-a(x - c)))`
    Sigmoidal { steepness: f64, center: f64 },
    /// `exp(-(x - c)^2 / (2 sigma^2))`
    Gaussian { center: f64, width: f64 },
}

impl MembershipParams {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MembershipParams::Sigmoidal { steepness, center } => {
                if !steepness.is_finite() || !center.is_finite() {
                    return Err(Error::NonFinite("sigmoidal membership parameters"));
                }
                if steepness == 0.0 {
                    return Err(Error::Config("sigmoid steepness must be non-zero".into()));
                }
            }
            MembershipParams::Gaussian { center, width } => {
                if !width.is_finite() || !center.is_finite() {
                    return Err(Error::NonFinite("gaussian membership parameters"));
                }
                if width <= 0.0 {
                    return Err(Error::Config("gaussian width must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Membership degree in [0, 1], smooth in the input.
    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            MembershipParams::Sigmoidal { steepness, center } => {
                1.0 / (1.0 + (-steepness * (x - center)).exp())
            }
            MembershipParams::Gaussian { center, width } => {
                let z = (x - center) / width;
                (-0.5 * z * z).exp()
            }
        }
    }
}

/// Evaluate one membership function.
pub fn membership(x: f64, params: &MembershipParams) -> f64 {
    params.evaluate(x)
}

/// Complete inference configuration: five memberships plus the two mode
/// penalties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyConfig {
    pub torque_negative: MembershipParams,
    pub torque_positive: MembershipParams,
    pub velocity_negative: MembershipParams,
    pub velocity_zero: MembershipParams,
    pub velocity_positive: MembershipParams,
    /// Active-assist penalty p_A.
    pub assist_penalty: f64,
    /// Safety penalty p_S.
    pub safety_penalty: f64,
    /// Optional hard dead zone: torques below this magnitude force both
    /// likelihoods to zero. Disabled (0.0) by default; the tabulated sigmoids
    /// already leave only a small tail at rest.
    pub torque_dead_zone: f64,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        Self {
            torque_negative: MembershipParams::Sigmoidal {
                steepness: -4.0,
                center: -1.0,
            },
            torque_positive: MembershipParams::Sigmoidal {
                steepness: 4.0,
                center: 1.0,
            },
            velocity_negative: MembershipParams::Sigmoidal {
                steepness: -20.0,
                center: -0.1,
            },
            velocity_zero: MembershipParams::Gaussian {
                center: 0.0,
                width: 0.1,
            },
            velocity_positive: MembershipParams::Sigmoidal {
                steepness: 20.0,
                center: 0.1,
            },
            assist_penalty: 0.5,
            safety_penalty: 1.0,
            torque_dead_zone: 0.0,
        }
    }
}

impl FuzzyConfig {
    pub fn validate(&self) -> Result<()> {
        for params in [
            &self.torque_negative,
            &self.torque_positive,
            &self.velocity_negative,
            &self.velocity_zero,
            &self.velocity_positive,
        ] {
            params.validate()?;
        }
        for (name, p) in [
            ("assist penalty", self.assist_penalty),
            ("safety penalty", self.safety_penalty),
        ] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !self.torque_dead_zone.is_finite() || self.torque_dead_zone < 0.0 {
            return Err(Error::Config("torque dead zone must be >= 0".into()));
        }
        Ok(())
    }
}

/// Inference output: the two mode likelihoods and the tracking-weight scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeLikelihoods {
    /// Active-assist likelihood mu_A in [0, 1].
    pub assist: f64,
    /// Safety likelihood mu_S in [0, 1].
    pub safety: f64,
    /// Assistance mode m = 1 - (p_A*mu_A + p_S*mu_S), clamped to [0, 1].
    pub mode: f64,
}

/// Infer the assistance mode for one (torque estimate, reference velocity)
/// pair.
pub fn infer(tau_h_hat: f64, theta_r_dot: f64, config: &FuzzyConfig) -> ModeLikelihoods {
    if config.torque_dead_zone > 0.0 && tau_h_hat.abs() < config.torque_dead_zone {
        return ModeLikelihoods {
            assist: 0.0,
            safety: 0.0,
            mode: 1.0,
        };
    }
    let t_neg = config.torque_negative.evaluate(tau_h_hat);
    let t_pos = config.torque_positive.evaluate(tau_h_hat);
    let v_neg = config.velocity_negative.evaluate(theta_r_dot);
    let v_zero = config.velocity_zero.evaluate(theta_r_dot);
    let v_pos = config.velocity_positive.evaluate(theta_r_dot);

    let assist = (t_neg * v_neg + t_pos * v_pos).clamp(0.0, 1.0);
    let safety = (t_neg * (v_zero + v_pos) + t_pos * (v_zero + v_neg)).clamp(0.0, 1.0);
    let mode =
        (1.0 - (config.assist_penalty * assist + config.safety_penalty * safety)).clamp(0.0, 1.0);
    ModeLikelihoods {
        assist,
        safety,
        mode,
    }
}

/// Result of the membership-budget scan.
#[derive(Debug, Clone, Copy)]
pub struct BudgetReport {
    pub pass: bool,
    /// Worst (input, fN+fP) on the torque axis.
    pub torque_worst: (f64, f64),
    /// Worst (input, fN+fP) on the velocity axis.
    pub velocity_worst: (f64, f64),
    /// Worst (input, fN+fZ+fP) on the velocity axis, reported for reference;
    /// the Zero set deliberately overlaps the sigmoid tails around rest, so
    /// this sum exceeds one near zero velocity by design.
    pub velocity_triple_worst: (f64, f64),
}

/// Grid tolerance on the velocity-axis sigmoid pair, which crosses at the
/// Gaussian center.
pub const VELOCITY_BUDGET_SLACK: f64 = 0.02;

/// Scan the complementary membership pairs over the operational input ranges
/// and check that neither axis lets opposite classes sum above one.
///
/// Torque axis: fN + fP <= 1. Velocity axis: fN + fP <= 1 + slack. The
/// three-way velocity sum including the Zero set is reported but not gated,
/// since Zero intentionally overlaps both sigmoid tails near rest.
pub fn check_membership_budget(config: &FuzzyConfig) -> BudgetReport {
    let scan = |lo: f64, hi: f64, step: f64, f: &dyn Fn(f64) -> f64| -> (f64, f64) {
        let n = ((hi - lo) / step).round() as usize;
        let mut worst = (lo, f(lo));
        for i in 1..=n {
            let x = lo + i as f64 * step;
            let v = f(x);
            if v > worst.1 {
                worst = (x, v);
            }
        }
        worst
    };

    let torque_worst = scan(-25.0, 25.0, 1e-3, &|x| {
        config.torque_negative.evaluate(x) + config.torque_positive.evaluate(x)
    });
    let velocity_worst = scan(-2.0, 2.0, 1e-3, &|x| {
        config.velocity_negative.evaluate(x) + config.velocity_positive.evaluate(x)
    });
    let velocity_triple_worst = scan(-2.0, 2.0, 1e-3, &|x| {
        config.velocity_negative.evaluate(x)
            + config.velocity_zero.evaluate(x)
            + config.velocity_positive.evaluate(x)
    });

    let pass = torque_worst.1 <= 1.0 + 1e-9 && velocity_worst.1 <= 1.0 + VELOCITY_BUDGET_SLACK;
    BudgetReport {
        pass,
        torque_worst,
        velocity_worst,
        velocity_triple_worst,
    }
}
