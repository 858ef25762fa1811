mod common;

use blockguard::consensus::EngineKind;
use blockguard::events::EventLog;
use blockguard::metrics::{avg_waiting_time, defeated_ratio, throughput};
use blockguard::rng::{stream, Stream};
use blockguard::scheduler::Layout;
use blockguard::workload::{Workload, WorkloadConfig};
use blockguard::{run_simulation, SimConfig};
use common::{check_run, fold_metrics, small};
use proptest::prelude::*;

fn assert_clean(cfg: &SimConfig) -> common::Coverage {
    match check_run(cfg) {
        Ok((_, cov)) => cov,
        Err(e) => panic!("{cfg:?}\n{e}"),
    }
}

#[test]
fn composite_adaptive_all_engines() {
    for engine in EngineKind::ALL {
        let cov = assert_clean(&small(Layout::Composite, engine, 11));
        assert!(cov.committees > 100);
        assert!(cov.max_concurrent > 1, "{engine}: never ran committees in parallel");
        assert!(cov.swaps > 0);
    }
}

#[test]
fn dynamic_adaptive_all_engines() {
    for engine in EngineKind::ALL {
        let cov = assert_clean(&small(Layout::Dynamic, engine, 12));
        assert!(cov.stages > 20, "{engine}: only {} stages", cov.stages);
        assert!(cov.max_concurrent > 1);
    }
}

#[test]
fn fixed_committees_both_layouts() {
    for layout in [Layout::Composite, Layout::Dynamic] {
        for engine in EngineKind::ALL {
            for size in [16, 64, 256] {
                let cfg = SimConfig { fixed_size: Some(size), ..small(layout, engine, 13) };
                assert_clean(&cfg);
            }
        }
    }
}

#[test]
fn slow_network_and_heavy_adversary() {
    for layout in [Layout::Composite, Layout::Dynamic] {
        for engine in EngineKind::ALL {
            let cfg = SimConfig { max_delay: 4, byz_fraction: 0.4, ..small(layout, engine, 14) };
            assert_clean(&cfg);
        }
    }
}

#[test]
fn small_window_with_longer_recording() {
    let mut cfg = small(Layout::Dynamic, EngineKind::Pbft, 15);
    cfg.win_size = 192;
    cfg.sizing.levels = 3;
    cfg.workload.levels = 3;
    cfg.recording_rounds = 3;
    let cov = assert_clean(&cfg);
    assert!(cov.stages > 10);
}

#[test]
fn full_scale_default_runs() {
    for layout in [Layout::Composite, Layout::Dynamic] {
        let cfg = SimConfig {
            layout,
            rounds: 300,
            seed: 3,
            event_level: blockguard::events::EventLevel::Protocol,
            ..SimConfig::default()
        };
        assert_clean(&cfg);
    }
}

#[test]
fn metrics_equal_log_fold() {
    for layout in [Layout::Composite, Layout::Dynamic] {
        for engine in EngineKind::ALL {
            for fraction in [0.1, 0.35] {
                let cfg = SimConfig { byz_fraction: fraction, ..small(layout, engine, 21) };
                let out = run_simulation(cfg).unwrap();
                // fold over the serialized log, not the in-memory one
                let text = out.events.to_ndjson().unwrap();
                let events = EventLog::parse_ndjson(std::str::from_utf8(&text).unwrap()).unwrap();
                let (tp, wait, ratio) = fold_metrics(&events, out.metrics.rounds);
                assert_eq!(tp, throughput(&out.metrics, out.metrics.rounds).unwrap());
                assert_eq!(wait, avg_waiting_time(&out.metrics).ok());
                assert_eq!(ratio, defeated_ratio(&out.metrics).ok());
            }
        }
    }
}

#[test]
fn workload_level_frequencies() {
    let expected = [0.5, 0.25, 0.125, 0.0625, 0.0625];
    let mut w = Workload::new(WorkloadConfig::default(), stream(99, Stream::Workload)).unwrap();
    let draws = 1_000_000;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        counts[w.sample_level().get() as usize - 1] += 1;
    }
    for (c, e) in counts.iter().zip(expected) {
        let f = *c as f64 / draws as f64;
        assert!((f - e).abs() <= 0.005, "frequency {f} vs {e}");
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    for layout in [Layout::Composite, Layout::Dynamic] {
        let mut cfg = small(layout, EngineKind::Pbft, 5);
        cfg.event_level = blockguard::events::EventLevel::Detailed;
        cfg.rounds = 150;
        let a = run_simulation(cfg.clone()).unwrap().events.to_ndjson().unwrap();
        let b = run_simulation(cfg.clone()).unwrap().events.to_ndjson().unwrap();
        assert_eq!(a, b);
        cfg.seed = 6;
        let c = run_simulation(cfg).unwrap().events.to_ndjson().unwrap();
        assert_ne!(a, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn invariants_hold_for_random_configs(
        seed in any::<u64>(),
        dynamic in any::<bool>(),
        engine in 0usize..3,
        delay in 1u32..4,
        fraction in 0.0f64..0.45,
        fixed in prop::option::of(prop::sample::select(vec![16usize, 32, 64, 128])),
        shuffle in 1u32..20,
    ) {
        let layout = if dynamic { Layout::Dynamic } else { Layout::Composite };
        let mut cfg = small(layout, EngineKind::ALL[engine], seed);
        cfg.rounds = 200;
        cfg.max_delay = delay;
        cfg.byz_fraction = fraction;
        cfg.fixed_size = fixed;
        cfg.shuffle_period = shuffle;
        if let Err(e) = check_run(&cfg) {
            prop_assert!(false, "{:?}\n{}", cfg, e);
        }
    }
}
