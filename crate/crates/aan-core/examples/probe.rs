use aan_core::harness::{compute_metrics, run_trial, HumanScript, TrialSetup};
use aan_core::plant::ConditionKind;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let w_theta: f64 = args.get(1).map_or(1000.0, |s| s.parse().unwrap());
    let w_tau: f64 = args.get(2).map_or(0.01, |s| s.parse().unwrap());

    for subject in ["S1", "S2", "S3"] {
        for kind in ConditionKind::ALL {
            let mut setup = TrialSetup::named(subject).unwrap();
            setup.mpc.tracking_weight = w_theta;
            setup.mpc.torque_weight = w_tau;
            let magnitude: f64 = args.get(3).map_or(setup.condition_magnitude, |s| s.parse().unwrap());
            let script = HumanScript::condition(kind, magnitude, setup.reference.cycle());
            let start = Instant::now();
            let seed: u64 = args.get(4).map_or(1, |s| s.parse().unwrap());
            let record = match run_trial(&setup, &script, seed) {
                Ok(r) => r,
                Err(f) => { println!("{subject} {:>2}: ABORT {}", kind.label(), f); continue; }
            };
            let elapsed = start.elapsed().as_secs_f64();
            let m = compute_metrics(&record).unwrap();
            let med_abs = |phase: bool| {
                let cycle = record.meta.cycle;
                let mut v: Vec<f64> = record.rows.iter()
                    .filter(|r| (r.t.rem_euclid(cycle) < cycle / 2.0) == phase)
                    .map(|r| (r.theta_r - r.theta).abs()).collect();
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            };
            let (mae_e, mae_f) = (med_abs(true), med_abs(false));
            println!(
                "{subject} {:>2}: E[med {:+.4} mae {:.4} rms {:.4} Rh {:.3} muA {:.3} muS {:.3}] F[med {:+.4} mae {:.4} rms {:.4} Rh {:.3} muA {:.3} muS {:.3}] viol {:.4} degr {} desc {} {:.2}s",
                kind.label(),
                m.extension.error_median, mae_e, m.extension.rms_error, m.extension.torque_ratio,
                m.extension.rms_assist, m.extension.rms_safety,
                m.flexion.error_median, mae_f, m.flexion.rms_error, m.flexion.torque_ratio,
                m.flexion.rms_assist, m.flexion.rms_safety,
                record.meta.max_constraint_violation, record.meta.degraded_steps,
                record.meta.descent_violations, elapsed
            );
        }
    }
}
