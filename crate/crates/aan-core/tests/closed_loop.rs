//! Closed-loop behaviour of the full control stack: scripted subject,
//! synthetic EMG, mode inference, receding-horizon control and plant.

use aan_core::emg::reference_torque;
use aan_core::harness::{
    compute_metrics, export, import_rows, run_trial, HumanScript, TrialMeta, TrialRecord,
    TrialSetup,
};
use aan_core::plant::{ConditionKind, InvolvementCondition};
use aan_core::Error;

fn condition_script(setup: &TrialSetup, kind: ConditionKind) -> HumanScript {
    HumanScript::condition(kind, setup.condition_magnitude, setup.reference.cycle())
}

fn run(setup: &TrialSetup, script: &HumanScript, seed: u64) -> TrialRecord {
    run_trial(setup, script, seed).unwrap_or_else(|f| panic!("trial failed: {f}"))
}

#[test]
fn relaxed_trial_keeps_phase_medians_near_zero() {
    let setup = TrialSetup::named("S1").unwrap();
    let record = run(&setup, &condition_script(&setup, ConditionKind::Relaxed), 1);
    let metrics = compute_metrics(&record).unwrap();
    assert!(
        metrics.extension.error_median.abs() < 0.05,
        "extension median {}",
        metrics.extension.error_median
    );
    assert!(
        metrics.flexion.error_median.abs() < 0.05,
        "flexion median {}",
        metrics.flexion.error_median
    );
    // Relaxed also means negligible human contribution.
    assert!(metrics.extension.torque_ratio < 0.1);
    assert!(metrics.flexion.torque_ratio < 0.1);
}

#[test]
fn extension_assist_is_detected_in_its_phase_only() {
    let setup = TrialSetup::named("S1").unwrap();
    let record = run(
        &setup,
        &condition_script(&setup, ConditionKind::ExtensionAssist),
        1,
    );
    let metrics = compute_metrics(&record).unwrap();
    assert!(metrics.extension.rms_assist > 0.4, "{}", metrics.extension.rms_assist);
    assert!(metrics.flexion.rms_assist < 0.1, "{}", metrics.flexion.rms_assist);
}

#[test]
fn flexion_resist_triggers_safety_mode_and_compliance() {
    let setup = TrialSetup::named("S1").unwrap();
    let record = run(
        &setup,
        &condition_script(&setup, ConditionKind::FlexionResist),
        1,
    );
    let metrics = compute_metrics(&record).unwrap();
    assert!(metrics.flexion.rms_safety > 0.4, "{}", metrics.flexion.rms_safety);
    assert!(
        metrics.flexion.error_median.abs() > 0.08,
        "expected visible compliance, median {}",
        metrics.flexion.error_median
    );
}

#[test]
fn condition_compliance_is_ordered_per_phase() {
    // Median absolute error per active phase: relaxed < assist < resist.
    let setup = TrialSetup::named("S1").unwrap();
    let phase = |kind: ConditionKind| {
        let record = run(&setup, &condition_script(&setup, kind), 3);
        compute_metrics(&record).unwrap()
    };
    let relaxed = phase(ConditionKind::Relaxed);
    let ea = phase(ConditionKind::ExtensionAssist);
    let er = phase(ConditionKind::ExtensionResist);
    let fa = phase(ConditionKind::FlexionAssist);
    let fr = phase(ConditionKind::FlexionResist);
    assert!(
        relaxed.extension.abs_error_median < ea.extension.abs_error_median
            && ea.extension.abs_error_median < er.extension.abs_error_median,
        "extension ordering: {} vs {} vs {}",
        relaxed.extension.abs_error_median,
        ea.extension.abs_error_median,
        er.extension.abs_error_median
    );
    assert!(
        relaxed.flexion.abs_error_median < fa.flexion.abs_error_median
            && fa.flexion.abs_error_median < fr.flexion.abs_error_median,
        "flexion ordering: {} vs {} vs {}",
        relaxed.flexion.abs_error_median,
        fa.flexion.abs_error_median,
        fr.flexion.abs_error_median
    );
}

#[test]
fn mode_detection_matches_the_scripted_condition() {
    let setup = TrialSetup::named("S2").unwrap();
    for kind in ConditionKind::ALL {
        let record = run(&setup, &condition_script(&setup, kind), 2);
        let metrics = compute_metrics(&record).unwrap();
        match kind {
            ConditionKind::Relaxed => {
                for phase in [&metrics.extension, &metrics.flexion] {
                    assert!(phase.rms_assist < 0.1 && phase.rms_safety < 0.1);
                }
            }
            ConditionKind::ExtensionAssist => {
                assert!(metrics.extension.rms_assist > metrics.extension.rms_safety)
            }
            ConditionKind::ExtensionResist => {
                assert!(metrics.extension.rms_safety > metrics.extension.rms_assist)
            }
            ConditionKind::FlexionAssist => {
                assert!(metrics.flexion.rms_assist > metrics.flexion.rms_safety)
            }
            ConditionKind::FlexionResist => {
                assert!(metrics.flexion.rms_safety > metrics.flexion.rms_assist)
            }
        }
    }
}

#[test]
fn superposition_recovers_the_scripted_torque() {
    // Calibration-style trials: mode pinned to one, stiff tracking, so the
    // realized trajectories of the relaxed and assisted runs coincide.
    let mut setup = TrialSetup::named("S1").unwrap();
    setup.forced_mode = Some(1.0);
    setup.mpc.tracking_weight = 2000.0;
    setup.subject.emg_noise = 0.0;

    let relaxed = run(&setup, &condition_script(&setup, ConditionKind::Relaxed), 5);
    let condition = InvolvementCondition::new(
        ConditionKind::ExtensionAssist,
        setup.condition_magnitude,
        setup.reference.cycle(),
    );
    let assisted = run(&setup, &HumanScript::Condition(condition), 5);

    let rms = |record: &TrialRecord| {
        let sum: f64 = record.rows.iter().map(|r| r.error() * r.error()).sum();
        (sum / record.rows.len() as f64).sqrt()
    };
    assert!(rms(&relaxed) < 0.0835, "relaxed tracking too loose");
    assert!(rms(&assisted) < 0.0835, "assisted tracking too loose");

    let tau_r: Vec<f64> = relaxed.rows.iter().map(|r| r.tau_e).collect();
    let tau_c: Vec<f64> = assisted.rows.iter().map(|r| r.tau_e).collect();
    let cycle_samples = (setup.reference.cycle() * setup.control_rate) as usize;
    let recovered = reference_torque(&tau_r, &tau_c, cycle_samples).unwrap();

    let dt = 1.0 / setup.control_rate;
    let mut sq = 0.0;
    for (i, tau) in recovered.iter().enumerate() {
        let scripted = condition.torque(i as f64 * dt);
        sq += (tau - scripted) * (tau - scripted);
    }
    let rmse = (sq / recovered.len() as f64).sqrt();
    assert!(rmse < 0.5, "recovered torque RMSE {rmse} N·m");
}

#[test]
fn adaptation_freezes_during_a_resist_pulse_and_resumes_continuously() {
    let mut setup = TrialSetup::named("S1").unwrap();
    setup.adaptation.enabled = true;
    setup.adaptation.resistance_threshold = 0.5;
    let script = HumanScript::Pulse {
        start: 5.0,
        duration: 3.0,
        magnitude: -20.0,
        ramp: 0.2,
    };
    let record = run(&setup, &script, 4);

    // The trial completes the full exercise: wall time extends by exactly the
    // frozen span.
    let expected_steps =
        (setup.duration * setup.control_rate) as usize + record.meta.frozen_steps;
    assert_eq!(record.rows.len(), expected_steps);
    assert!(
        record.meta.frozen_steps as f64 / setup.control_rate > 2.0,
        "freeze shorter than the resist pulse: {} steps",
        record.meta.frozen_steps
    );

    // The reference holds whenever the safety likelihood is above threshold,
    // and never jumps.
    let max_step = setup.reference.amplitude
        * 2.0
        * std::f64::consts::PI
        * setup.reference.frequency
        / setup.control_rate;
    for pair in record.rows.windows(2) {
        let jump = (pair[1].theta_r - pair[0].theta_r).abs();
        assert!(jump <= max_step * 1.001, "reference jumped by {jump}");
        if pair[0].mu_safety > setup.adaptation.resistance_threshold {
            assert_eq!(pair[0].theta_r, pair[1].theta_r, "reference moved while frozen");
        }
    }

    // Without adaptation the same script must not extend the trial.
    setup.adaptation.enabled = false;
    let unadapted = run(&setup, &script, 4);
    assert_eq!(unadapted.meta.frozen_steps, 0);
    assert_eq!(
        unadapted.rows.len(),
        (setup.duration * setup.control_rate) as usize
    );
}

#[test]
fn adaptation_reduces_sustained_resistance_exposure() {
    // A subject who fights imposed motion: resistance proportional to the
    // joint velocity. Freezing the reference lets the leg stop, so the
    // resistance (and the safety likelihood) falls away.
    let script = HumanScript::VelocityResist {
        damping: 30.0,
        max: 22.0,
    };
    let exposure = |adapt: bool| {
        let mut setup = TrialSetup::named("S1").unwrap();
        setup.adaptation.enabled = adapt;
        setup.adaptation.resistance_threshold = 0.5;
        let record = run(&setup, &script, 6);
        let dt = 1.0 / setup.control_rate;
        record
            .rows
            .iter()
            .map(|r| (r.mu_safety - setup.adaptation.resistance_threshold).max(0.0) * dt)
            .sum::<f64>()
    };
    let with = exposure(true);
    let without = exposure(false);
    assert!(
        with < without,
        "exposure with adaptation {with} vs without {without}"
    );
    assert!(without > 0.1, "scenario too tame to matter: {without}");
}

#[test]
fn identical_seeds_reproduce_byte_identical_records() {
    let setup = TrialSetup::named("S3").unwrap();
    let script = condition_script(&setup, ConditionKind::ExtensionAssist);
    let a = run(&setup, &script, 9);
    let b = run(&setup, &script, 9);
    assert_eq!(a.csv(), b.csv());
    assert_eq!(a.manifest(), b.manifest());
    // A different seed shifts the synthetic EMG noise.
    let c = run(&setup, &script, 10);
    assert_ne!(a.csv(), c.csv());
}

#[test]
fn exported_records_reimport_with_identical_metrics() {
    let setup = TrialSetup::named("S2").unwrap();
    let record = run(&setup, &condition_script(&setup, ConditionKind::FlexionAssist), 7);
    let metrics = compute_metrics(&record).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let paths = export(&record, &metrics, dir.path(), "fa_trial").unwrap();
    let rows = import_rows(&paths.csv).unwrap();
    assert_eq!(rows, record.rows);

    let reimported = TrialRecord {
        rows,
        meta: TrialMeta::imported(setup.control_rate, setup.reference.cycle()),
    };
    let recomputed = compute_metrics(&reimported).unwrap();
    assert_eq!(recomputed, metrics);
}

#[test]
fn numeric_failures_abort_with_a_partial_record() {
    let setup = TrialSetup::named("S1").unwrap();
    let script = HumanScript::Pulse {
        start: 2.0,
        duration: 1.0,
        magnitude: f64::NAN,
        ramp: 0.2,
    };
    match run_trial(&setup, &script, 1) {
        Err(failure) => {
            assert!(matches!(failure.cause, Error::NonFinite(_)));
            let recorded = failure.partial.rows.len();
            assert!(
                (900..=1001).contains(&recorded),
                "expected an abort near the pulse onset, got {recorded} rows"
            );
        }
        Ok(_) => panic!("trial should abort on a non-finite human torque"),
    }
}
