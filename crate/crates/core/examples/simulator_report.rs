//! Prints the simulator experiments over seeds 0..4.
//!
//!     cargo run --release -p stmia-core --example simulator_report -- '{"anchor_noise_member": 0.1}'
//!
//! The optional argument is a JSON object of `SimConfig` overrides. Set
//! `SIM_REPORT_FAST=1` to skip the supervised runs.

use stmia_core::attacks::AttackMode;
use stmia_core::eval::sweep::{self, DEFAULT_SEEDS};
use stmia_core::pipeline::{self, AttackConfig};
use stmia_core::signals::{self, SignalConfig, SignalFeature};
use stmia_core::simulator::{self, SimConfig};
use stmia_core::stats;
use stmia_core::store::Label;

fn config(overrides: &str) -> SimConfig {
    let mut base = serde_json::to_value(SimConfig::default()).unwrap();
    let patch: serde_json::Value = serde_json::from_str(overrides).expect("overrides must be JSON");
    for (k, v) in patch.as_object().expect("overrides must be an object") {
        base[k] = v.clone();
    }
    serde_json::from_value(base).expect("valid SimConfig")
}

fn line(name: &str, xs: &[f64]) {
    let (m, s) = stats::mean_std(xs);
    let cells: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    println!("{name:<28} mean {m:.4} std {s:.4}  [{}]", cells.join(" "));
}

fn main() -> stmia_core::Result<()> {
    let overrides = std::env::args().nth(1).unwrap_or_else(|| "{}".into());
    let base = config(&overrides);
    let attack = AttackConfig::default();
    let sig = SignalConfig::default();
    // SIM_REPORT_FAST=1 skips the supervised runs
    let fast = std::env::var_os("SIM_REPORT_FAST").is_some();
    let modes: Vec<AttackMode> = if fast {
        vec![AttackMode::Reference, AttackMode::QueryOnly]
    } else {
        vec![AttackMode::Supervised, AttackMode::Reference, AttackMode::QueryOnly]
    };
    let baseline = |n: &str| AttackMode::baseline(n);

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push = |name: &str, v: f64| match rows.iter_mut().find(|(n, _)| n == name) {
        Some((_, xs)) => xs.push(v),
        None => rows.push((name.to_string(), vec![v])),
    };

    for &seed in &DEFAULT_SEEDS {
        let cfg = SimConfig { seed, ..base.clone() };
        let records = signals::extract_bundle(&simulator::generate(&cfg)?, &sig)?;
        for mode in &modes {
            let run = sweep::run_mode(&records, mode, &attack)?;
            push(&format!("default {mode}"), pipeline::track_auc(&run.scores, mode)?);
            push(&format!("default {mode} srf"), pipeline::track_auc(&run.scores, &baseline("srf"))?);
            push(&format!("default {mode} tgs"), pipeline::track_auc(&run.scores, &baseline("tgs"))?);
            if *mode == AttackMode::QueryOnly {
                push("default mean-then-std", pipeline::track_auc(&run.scores, &baseline("tgs_mean_then_std"))?);
                push("default framewise", pipeline::track_auc(&run.scores, &baseline("framewise"))?);
                push("default videolevel", pipeline::track_auc(&run.scores, &baseline("videolevel"))?);
            }
        }

        let null = signals::extract_bundle(&simulator::generate(&cfg.null_world())?, &sig)?;
        for mode in &modes {
            let run = sweep::run_mode(&null, mode, &attack)?;
            push(&format!("null {mode}"), pipeline::track_auc(&run.scores, mode)?);
        }

        let sparse = simulator::generate_sparse_anchor_world(&cfg)?;
        for row in sweep::sweep_topk(&sparse, &[1, 3, 5], &[AttackMode::QueryOnly], &sig, &attack)? {
            push(&format!("sparse srf {}", row.config), row.srf_auc);
        }

        let bundle = simulator::generate(&cfg)?;
        for row in sweep::sweep_multi_q(&bundle, &[2, 3, 4, 5], &[AttackMode::QueryOnly], &sig, &attack)? {
            push(&format!("tgs q={}", row.q_used), row.tgs_auc);
        }

        let pool_cfg = SimConfig {
            n_members: 1,
            n_nonmembers: 300,
            seed: seed + 1000,
            ..cfg.clone()
        };
        let pool: Vec<SignalFeature> = signals::extract_bundle(&simulator::generate(&pool_cfg)?, &sig)?
            .into_iter()
            .filter(|r| r.label() == Some(Label::NonMember))
            .map(|r| r.feature)
            .collect();
        let eval: Vec<SignalFeature> = records.iter().map(|r| r.feature.clone()).collect();
        for row in sweep::sweep_reference_size(&pool, &eval, &[2, 5, 20, 100, 200], &[seed], &attack.weights)? {
            push(&format!("refsize {}", row.size), row.mean_auc);
        }
    }
    for (name, xs) in &rows {
        line(name, xs);
    }
    Ok(())
}
