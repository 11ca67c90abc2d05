use gaterace::batch::{batched_step, BatchEnv, Execution};
use gaterace::flightplan::flight_plan_vector;
use gaterace::randomize::{Mode, RandomizationConfig};
use gaterace::replay::{decode_replay, encode_replay, read_replay, write_replay, RecordKind};
use gaterace::{Action, DynamicsParams, Env, EnvConfig};
use proptest::prelude::*;

fn logged(config: EnvConfig) -> EnvConfig {
    EnvConfig {
        logging: true,
        ..config
    }
}

fn arb_action() -> impl Strategy<Value = Action> {
    prop::array::uniform4(0.0..1.0f64).prop_map(Action)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn terminal_steps_pay_nothing_and_attitude_stays_unit(
        seed in any::<u64>(),
        actions in prop::collection::vec(arb_action(), 1..120),
    ) {
        let mut env = Env::new(EnvConfig { render: false, ..EnvConfig::default() }).unwrap();
        env.reset(seed);
        for a in actions {
            let r = env.step(a).unwrap();
            let q = env.state().unwrap().attitude;
            prop_assert!((q.norm() - 1.0).abs() < 1e-12);
            if r.termination.is_terminal() {
                prop_assert_eq!(r.reward.total, 0.0);
            }
            if r.done() {
                break;
            }
        }
    }

    #[test]
    fn flight_plan_is_track_geometry_only(seed in any::<u64>(), steps in 0usize..200) {
        let mut env = Env::new(EnvConfig { render: false, ..EnvConfig::default() }).unwrap();
        let (obs, _) = env.reset(seed);
        let start = env.draw().unwrap().start_gate;
        let cfg = env.config().flight_plan_indexing;
        prop_assert_eq!(obs.flight_plan, flight_plan_vector(env.track(), start, cfg));
        for _ in 0..steps {
            let r = env.step(Action::uniform(0.5)).unwrap();
            prop_assert_eq!(r.obs.flight_plan, flight_plan_vector(env.track(), r.info.plan_index, cfg));
            if r.done() {
                break;
            }
        }
    }
}

#[test]
fn uninformed_observations_ignore_unsensed_ground_truth() {
    // drag does not act on a vehicle at rest, so the first observation
    // cannot depend on it; privileged data must
    let base = EnvConfig {
        informed: false,
        mode: Mode::Eval,
        randomization: RandomizationConfig::nominal(),
        ..EnvConfig::default()
    };
    let heavy_drag = EnvConfig {
        dynamics: DynamicsParams {
            k_x: 3.0 * DynamicsParams::nominal().k_x,
            k_y2: 5.0 * DynamicsParams::nominal().k_y2,
            ..DynamicsParams::nominal()
        },
        ..base.clone()
    };
    let mut a = Env::new(logged(base.clone())).unwrap();
    let mut b = Env::new(logged(heavy_drag.clone())).unwrap();
    let (oa, pa) = a.reset(21);
    let (ob, pb) = b.reset(21);
    assert_eq!(oa, ob);
    assert!(pa.is_none() && pb.is_none());
    let ha = a.replay_header(21);
    assert_eq!(
        encode_replay(ha, &a.take_log()).unwrap(),
        encode_replay(b.replay_header(21), &b.take_log()).unwrap()
    );

    let mut ia = Env::new(EnvConfig { informed: true, ..base }).unwrap();
    let mut ib = Env::new(EnvConfig {
        informed: true,
        ..heavy_drag
    })
    .unwrap();
    assert_ne!(ia.reset(21).1, ib.reset(21).1);
}

#[test]
fn batch_of_64_matches_sequential_runs() {
    let cfg = EnvConfig::default();
    let mut batch = BatchEnv::new(cfg.clone(), 64)
        .unwrap()
        .with_execution(Execution::Parallel);
    let resets = batch.reset(500);
    let mut singles: Vec<Env> = (0..64).map(|_| Env::new(cfg.clone()).unwrap()).collect();
    for (i, env) in singles.iter_mut().enumerate() {
        assert_eq!(env.reset(500 + i as u64), resets[i]);
    }
    let mut live = vec![true; 64];
    for k in 0..60 {
        let actions: Vec<Action> = (0..64)
            .map(|i| Action::uniform(0.35 + 0.004 * ((i * 7 + k) % 50) as f64))
            .collect();
        let out = batch.step(&actions).unwrap();
        for i in 0..64 {
            if !live[i] {
                continue;
            }
            let expected = singles[i].step(actions[i]).unwrap();
            let got = out[i].as_ref().unwrap();
            assert_eq!(got, &expected, "env {i} step {k}");
            live[i] = !expected.done();
        }
    }
}

#[test]
fn batch_of_one_is_a_single_step() {
    let mut envs = vec![Env::new(EnvConfig::default()).unwrap()];
    let mut single = Env::new(EnvConfig::default()).unwrap();
    envs[0].reset(8);
    single.reset(8);
    for _ in 0..10 {
        let a = Action([0.5, 0.45, 0.55, 0.5]);
        let got = batched_step(&mut envs, &[a], Execution::Sequential).unwrap();
        assert_eq!(got[0].as_ref().unwrap(), &single.step(a).unwrap());
    }
}

#[test]
fn thousand_step_replay_round_trips() {
    let mut env = Env::new(logged(EnvConfig::default())).unwrap();
    let mut seed = 40;
    env.reset(seed);
    for k in 0..1000 {
        let a = Action::uniform(0.4 + 0.1 * ((k % 13) as f64 / 13.0));
        if env.step(a).unwrap().done() {
            seed += 1;
            env.reset(seed);
        }
    }
    let records = env.take_log();
    assert_eq!(records.iter().filter(|r| r.kind == RecordKind::Step).count(), 1000);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.bin");
    let header = env.replay_header(40);
    write_replay(&path, header, &records).unwrap();
    let (h, back) = read_replay(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(back, records);

    let logged_return: f64 = records.iter().map(|r| r.reward.total).sum();
    let reread_return: f64 = back.iter().map(|r| r.reward.total).sum();
    assert_eq!(logged_return, reread_return);
}

#[test]
fn empty_replay_is_valid() {
    let env = Env::new(EnvConfig::default()).unwrap();
    let bytes = encode_replay(env.replay_header(0), &[]).unwrap();
    let (h, records) = decode_replay(&bytes[..]).unwrap();
    assert_eq!(h, env.replay_header(0));
    assert!(records.is_empty());
}

#[test]
fn logging_is_off_by_default() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    env.reset(0);
    env.step(Action::uniform(0.5)).unwrap();
    assert!(env.take_log().is_empty());
}
