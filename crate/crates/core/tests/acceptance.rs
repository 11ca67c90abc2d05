//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use gaterace::camera::{erode_mask, render_mask, rolling_shutter_warp, CameraExtrinsics, CameraIntrinsics, MaskImage};
use gaterace::dynamics::{command_for_speed, hover_motor_speeds, rk4_step, specific_force, DisturbanceSample, GRAVITY};
use gaterace::flightplan::{tunnel_progress, FlightPlanState, IndexRule, PlanIndexing, DEPLOY_THRESHOLD};
use gaterace::randomize::{
    sample_episode, update_disturbances, DisturbanceState, Mode, OmegaMaxDecay, RandomizationConfig,
};
use gaterace::replay::encode_replay;
use gaterace::reward::{gate_reward, rate_penalty, step_reward, GateProgress};
use gaterace::rng::{stream, Stream};
use gaterace::track::{CrossingKind, GateCrossing, GateSpec};
use gaterace::{Action, DroneState, DynamicsParams, Env, EnvConfig, Track};
use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quiet(mode: Mode) -> EnvConfig {
    EnvConfig {
        mode,
        randomization: RandomizationConfig::nominal(),
        ..EnvConfig::default()
    }
}

fn thrust_ceiling() -> Outcome {
    let p = DynamicsParams::nominal();
    let f = specific_force(&Vector3::zeros(), &[p.omega_max; 4], &p);
    let analytic = 4.0 * p.k_w * p.omega_max * p.omega_max;
    let rel = (f.norm() - analytic).abs() / analytic;
    let frozen = (f.norm() - 59.582).abs() / 59.582;
    check(
        rel < 1e-3 && frozen < 1e-3 && f.z < 0.0,
        format!(
            "|F| = {:.4} m/s^2 = {:.4} g, analytic {analytic:.4}",
            f.norm(),
            f.norm() / GRAVITY
        ),
    )
}

fn hover_fixed_point() -> Outcome {
    let mut env = Env::new(quiet(Mode::Eval)).map_err(|e| e.to_string())?;
    env.reset_hover(0);
    let params = *env.params().unwrap();
    let trim = hover_motor_speeds(&params).ok_or("no trim solution")?;
    let rms = (trim.iter().map(|w| w * w).sum::<f64>() / 4.0).sqrt();
    let omega_hover = (GRAVITY / (4.0 * params.k_w)).sqrt();
    let action = Action::new(trim.map(|w| command_for_speed(w, &params)));
    let start = env.state().unwrap().position;
    for _ in 0..90 {
        env.step(action).map_err(|e| e.to_string())?;
    }
    let drift = (env.state().unwrap().position - start).norm();
    check(
        drift < 1e-3 && (rms - omega_hover).abs() < 1e-6 * omega_hover,
        format!("drift {drift:.3e} m over 1 s, rms trim {rms:.4} vs sqrt(g/4k_w) {omega_hover:.4} rad/s"),
    )
}

fn rk4_order() -> Outcome {
    let params = DynamicsParams::nominal();
    let base_dt = 1.0 / 450.0;
    let substeps = 5;
    let control_steps = 27;
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let mut rng = stream(seed, Stream::Episode);
        let mut initial = DroneState::at_rest(Vector3::new(0.0, 0.0, -5.0), [0.0; 4]);
        let att = UnitQuaternion::from_euler_angles(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-PI..PI),
        );
        initial.attitude = *att.quaternion();
        initial.velocity = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        initial.body_rates = Vector3::from_fn(|_, _| rng.random_range(-4.0..4.0));
        initial.motor_speeds = std::array::from_fn(|_| rng.random_range(800.0..2500.0));
        let actions: Vec<Action> = (0..control_steps)
            .map(|_| Action(std::array::from_fn(|_| rng.random_range(0.0..1.0))))
            .collect();
        let dist = DisturbanceSample::default();

        let run = |refine: usize| {
            let dt = base_dt / refine as f64;
            let mut s = initial;
            for a in &actions {
                for _ in 0..substeps * refine {
                    s = rk4_step(&s, a, &dist, &params, dt);
                }
            }
            s
        };
        let err = |a: &DroneState, b: &DroneState| {
            let dq = (a.attitude.coords - b.attitude.coords).norm();
            let dw: f64 = a
                .motor_speeds
                .iter()
                .zip(&b.motor_speeds)
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            ((a.position - b.position).norm_squared()
                + (a.velocity - b.velocity).norm_squared()
                + dq * dq
                + (a.body_rates - b.body_rates).norm_squared()
                + dw / (params.omega_max * params.omega_max))
                .sqrt()
        };
        let reference = run(100);
        let coarse = err(&run(1), &reference);
        let fine = err(&run(2), &reference);
        ratios.push(coarse / fine);
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), r| (l.min(*r), h.max(*r)));
    check(
        ratios.iter().all(|r| (8.0..=32.0).contains(r)),
        format!("error ratios over 10 seeds in [{lo:.2}, {hi:.2}]"),
    )
}

fn reward_spot_checks() -> Outcome {
    let zero = rate_penalty(&Vector3::zeros(), 90.0);
    let at17 = rate_penalty(&Vector3::new(9.0, -5.0, 3.0), 90.0);
    let centre = GateCrossing {
        gate_index: 0,
        kind: CrossingKind::Main,
        y: 0.0,
        z: 0.0,
    };
    let g = gate_reward(&centre, 1.0);
    let safe = DroneState::at_rest(Vector3::new(0.0, 0.0, -2.0), [1000.0; 4]);
    let (r, term) = step_reward(0.0, &Vector3::zeros(), 90.0, &[centre], 1.0, &safe);
    check(
        zero == 0.0 && (at17 - 1.34194).abs() < 1e-4 && g == 1.0 && r.total == 30.0 && !term.is_terminal(),
        format!(
            "r_rate(0) = {zero}, r_rate(|W|1=17) = {at17:.6}, r_gate(0,0) = {g}, centre step total = {}",
            r.total
        ),
    )
}

fn progress_telescoping() -> Outcome {
    let gate = GateSpec::new(Vector3::new(3.0, -2.0, -1.5), 0.7, 1.0);
    let other = GateSpec::new(Vector3::new(-8.0, 6.0, -1.5), 2.0, 1.0);
    let track = Track::new(vec![gate, other], 0.8).map_err(|e| e.to_string())?;
    let (pre, _) = track.virtual_gates(0);
    let mut rng = stream(42, Stream::Episode);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pts: Vec<Vector3<f64>> = (0..3)
            .map(|_| {
                gate.gate_to_world(&Vector3::new(
                    rng.random_range(-12.0..-1.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-3.0..3.0),
                ))
            })
            .collect();
        let mut tracker = GateProgress::new(0);
        let sum: f64 = pts
            .windows(2)
            .map(|w| tracker.advance(&track, &w[0], &w[1]).progress)
            .sum();
        let expected = (pts[0] - pre.position).norm() - (pts[2] - pre.position).norm();
        worst = worst.max((sum - expected).abs());
    }
    check(
        worst < 1e-9,
        format!("max |sum r_prog - (d0 - d2)| = {worst:.2e} over 100 paths"),
    )
}

fn camera_checks() -> Outcome {
    let gate = GateSpec::new(Vector3::new(2.0, 1.0, -1.5), 0.3, 1.0);
    let mut hidden = GateSpec::new(Vector3::new(40.0, 40.0, -1.5), 0.0, 1.0);
    hidden.visible = false;
    let track = Track::new(vec![gate, hidden], 0.8).map_err(|e| e.to_string())?;
    let k = CameraIntrinsics::nominal(64, 64);
    let ext = CameraExtrinsics::new(0.0, 0.0, 0.0);
    let pos = gate.gate_to_world(&Vector3::new(-4.0, 0.0, 0.0));
    let att = UnitQuaternion::from_euler_angles(0.0, 0.0, gate.yaw);
    let mask = render_mask(&pos, &att, &ext, &k, &track);
    let (cx, cy) = mask.centroid().ok_or("empty mask")?;
    let centred = (cx - 32.0).hypot(cy - 32.0) < 1.0;

    let same = rolling_shutter_warp(&mask, 0.0, 3.0, -2.0) == mask;

    let mut block = MaskImage::zeros(9, 9);
    for y in 2..7 {
        for x in 2..7 {
            block.set(x, y, true);
        }
    }
    let eroded = erode_mask(&block);
    let three = eroded.count() == 9 && (3..6).all(|y| (3..6).all(|x| eroded.get(x, y)));

    check(
        centred && same && three && mask.count() > 0,
        format!(
            "centroid ({cx:.3}, {cy:.3}), s=0 warp identical: {same}, 5x5 erodes to {} px",
            eroded.count()
        ),
    )
}

/// Triangle circuit with one gate on each edge midpoint.
fn triangle() -> Track {
    let a = Vector3::new(0.0, 0.0, -1.5);
    let b = Vector3::new(20.0, 0.0, -1.5);
    let c = Vector3::new(10.0, 10.0 * 3f64.sqrt(), -1.5);
    let gate = |p: Vector3<f64>, q: Vector3<f64>| {
        let d = q - p;
        GateSpec::new(0.5 * (p + q), d.y.atan2(d.x), 1.0)
    };
    Track::new(vec![gate(a, b), gate(b, c), gate(c, a)], 0.8).unwrap()
}

fn traversal() -> Vec<Vector3<f64>> {
    let corners = [
        Vector3::new(2.0, 0.0, -1.5),
        Vector3::new(20.0, 0.0, -1.5),
        Vector3::new(10.0, 10.0 * 3f64.sqrt(), -1.5),
        Vector3::new(0.0, 0.0, -1.5),
    ];
    let mut path = Vec::new();
    for w in corners.windows(2) {
        let n = ((w[1] - w[0]).norm() / 0.05).ceil() as usize;
        path.extend((0..n).map(|i| w[0] + (w[1] - w[0]) * (i as f64 / n as f64)));
    }
    path.push(corners[3]);
    path
}

fn flight_plan() -> Outcome {
    let track = triangle();
    let path = traversal();
    let mut counts = Vec::new();
    for rule in [IndexRule::Deploy, IndexRule::Train] {
        let mut rng = stream(5, Stream::FlightPlan);
        let mut plan = FlightPlanState::new(&track, 0, PlanIndexing::Formula);
        let mut progress = GateProgress::new(0);
        let mut per_gate = [0u32; 3];
        for w in path.windows(2) {
            let outcome = progress.advance(&track, &w[0], &w[1]);
            let i = plan.index();
            let x_g = track.gate(i).world_to_gate(&w[1]).x;
            let tunnel = tunnel_progress(&track, i, &progress, &outcome.crossings, &w[1]);
            if plan.update(&track, x_g, tunnel, rule, &mut rng) {
                per_gate[(i % 3) as usize] += 1;
            }
        }
        counts.push((per_gate, plan.index(), progress.target()));
    }
    let once = counts
        .iter()
        .all(|(c, idx, target)| *c == [1, 1, 1] && *idx == 3 && *target == 3);

    let eps = 1e-3;
    let t = &track;
    let mut rng = stream(0, Stream::FlightPlan);
    let mut above = FlightPlanState::new(t, 0, PlanIndexing::Formula);
    let mut below = FlightPlanState::new(t, 0, PlanIndexing::Formula);
    let fires = above.update(t, DEPLOY_THRESHOLD + eps, None, IndexRule::Deploy, &mut rng);
    let holds = !below.update(t, DEPLOY_THRESHOLD - eps, None, IndexRule::Deploy, &mut rng);

    check(
        once && fires && holds,
        format!(
            "increments per gate deploy {:?} train {:?}; threshold -0.15+1e-3 fires: {fires}, -0.15-1e-3 holds: {holds}",
            counts[0].0, counts[1].0
        ),
    )
}

struct Stat {
    name: String,
    lo: f64,
    hi: f64,
    n: usize,
    sum: f64,
    out_of_bounds: usize,
}

impl Stat {
    fn new(name: impl Into<String>, a: f64, b: f64) -> Self {
        Self {
            name: name.into(),
            lo: a.min(b),
            hi: a.max(b),
            n: 0,
            sum: 0.0,
            out_of_bounds: 0,
        }
    }

    fn push(&mut self, x: f64) {
        let slack = 1e-12 * (self.hi - self.lo).abs().max(1e-300);
        if x < self.lo - slack || x > self.hi + slack {
            self.out_of_bounds += 1;
        }
        self.n += 1;
        self.sum += x;
    }

    /// Mean offset from the midpoint as a fraction of the range width.
    fn mean_offset(&self) -> f64 {
        let width = self.hi - self.lo;
        if width == 0.0 {
            return 0.0;
        }
        (self.sum / self.n as f64 - 0.5 * (self.lo + self.hi)).abs() / width
    }
}

fn randomization() -> Outcome {
    let cfg = RandomizationConfig::default();
    let ranges = cfg.eval;
    let nominal = DynamicsParams::nominal();
    let track = Track::from_toml_str(gaterace::track::DEFAULT_TRACK, 1.0, 0.8).map_err(|e| e.to_string())?;
    let nom = nominal.to_vec();

    let mut stats: Vec<Stat> = nom
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let band = if i == 11 || i == 12 {
                ranges.motor_bound_band
            } else {
                ranges.param_band
            };
            Stat::new(format!("param[{i}]"), v * (1.0 - band), v * (1.0 + band))
        })
        .collect();
    let r2 = |r: [f64; 2]| (r[0], r[1]);
    let add = |name: &str, r: [f64; 2], stats: &mut Vec<Stat>| stats.push(Stat::new(name, r2(r).0, r2(r).1));
    let base = stats.len();
    for (name, r) in [
        ("camera_roll", ranges.camera_roll_deg),
        ("camera_pitch", ranges.camera_pitch_deg),
        ("camera_yaw", ranges.camera_yaw_deg),
        ("x_g", ranges.init_x_g),
        ("y_g", ranges.init_y_g),
        ("z_g", ranges.init_z_g),
        ("roll", ranges.init_angles),
        ("pitch", ranges.init_angles),
        ("yaw_g", ranges.init_angles),
        ("rate", ranges.init_rates),
        ("motor_fraction", ranges.init_motor_fraction),
        ("accel_slow", ranges.accel_slow),
        ("moment_slow", ranges.moment_slow),
        ("moment_fast", ranges.moment_fast),
        ("action_fast", ranges.action_fast),
    ] {
        add(name, r, &mut stats);
    }

    let gate = *track.gate(0);
    let mut rng = stream(2024, Stream::Episode);
    for _ in 0..100_000 {
        let d = sample_episode(&cfg, Mode::Eval, &nominal, &track, &mut rng);
        for (i, v) in d.params.to_vec().iter().enumerate() {
            stats[i].push(*v);
        }
        let e = d.extrinsics.to_array();
        let s = &d.initial;
        let off = gate.world_to_gate(&s.position);
        let (roll, pitch, yaw) = s.euler();
        let yaw_g = gaterace::track::wrap_angle(yaw - gate.yaw);
        let values: [&[f64]; 15] = [
            &[e[0].to_degrees()],
            &[e[1].to_degrees()],
            &[e[2].to_degrees()],
            &[off.x],
            &[off.y],
            &[off.z],
            &[roll],
            &[pitch],
            &[yaw_g],
            s.body_rates.as_slice(),
            &s.motor_speeds.map(|w| w / d.params.omega_max),
            d.disturbance.accel_slow.as_slice(),
            d.disturbance.moment_slow.as_slice(),
            d.disturbance.moment_fast.as_slice(),
            &d.disturbance.action_fast,
        ];
        for (k, vs) in values.iter().enumerate() {
            for v in *vs {
                stats[base + k].push(*v);
            }
        }
    }
    // parameters with a clamped band (the curve shape k is capped at 1)
    let clamped: Vec<usize> = nom
        .iter()
        .enumerate()
        .filter(|(i, v)| *i == 13 && **v * (1.0 + ranges.param_band) > 1.0)
        .map(|(i, _)| i)
        .collect();
    let oob: usize = stats.iter().map(|s| s.out_of_bounds).sum();
    let worst = stats
        .iter()
        .enumerate()
        .filter(|(i, _)| !clamped.contains(i))
        .map(|(_, s)| (s.mean_offset(), s.name.clone()))
        .fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a });

    // slow processes: 0.01 per step, 90 000 steps
    let steps = 90_000u64;
    let p = cfg.slow_change_probability;
    let mut drng = stream(7, Stream::Disturbance);
    let mut state = DisturbanceState::draw(&ranges, &mut drng);
    let mut changes = 0u64;
    for _ in 0..steps {
        let (next, r) = update_disturbances(&state, &ranges, p, &mut drng);
        changes += r.accel_slow as u64;
        state = next;
    }
    let mean = steps as f64 * p;
    let sd = (steps as f64 * p * (1.0 - p)).sqrt();
    let (lo, hi) = (mean - 2.576 * sd, mean + 2.576 * sd);
    let in_interval = (lo..=hi).contains(&(changes as f64));

    check(
        oob == 0 && worst.0 < 0.02 && in_interval,
        format!(
            "{oob} out-of-bounds values, worst mean offset {:.4} of range width ({}), \
             {changes} slow resamples in {steps} steps (99% interval [{lo:.0}, {hi:.0}])",
            worst.0, worst.1
        ),
    )
}

fn argmax_lag(x: &[f64], y: &[f64], max_lag: usize) -> (usize, Vec<f64>) {
    let corr: Vec<f64> = (0..=max_lag)
        .map(|lag| {
            let n = x.len() - lag;
            let a = &x[..n];
            let b = &y[lag..lag + n];
            let ma = a.iter().sum::<f64>() / n as f64;
            let mb = b.iter().sum::<f64>() / n as f64;
            let cov: f64 = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum();
            let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
            cov / (va * vb).sqrt().max(1e-300)
        })
        .collect();
    let best = corr
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |a, (i, c)| if *c > a.1 { (i, *c) } else { a })
        .0;
    (best, corr)
}

fn delays() -> Outcome {
    let mut env = Env::new(quiet(Mode::Eval)).map_err(|e| e.to_string())?;
    let trim = hover_motor_speeds(&DynamicsParams::nominal()).ok_or("no trim")?;
    // level at gate height, 3 m in front of the first gate
    let gate = *env.track().gate(0);
    let start = gate.gate_to_world(&Vector3::new(-3.0, 0.0, 0.0));
    env.reset_with(9, |_| {
        let mut s = DroneState::at_rest(start, trim);
        s.attitude = *UnitQuaternion::from_euler_angles(0.0, 0.0, gate.yaw).quaternion();
        Some(s)
    });
    let params = *env.params().unwrap();
    let hold = trim.map(|w| command_for_speed(w, &params));
    let k = *env.intrinsics();
    let ext = *env.extrinsics().unwrap();
    let track = env.track().clone();

    let mut rng = stream(9, Stream::Sensor);
    let (mut commands, mut motor_rise) = (Vec::new(), Vec::new());
    let (mut observed, mut truth) = (Vec::new(), Vec::new());
    let moment = |m: &MaskImage| {
        let mut s = 0.0;
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.get(x, y) {
                    s += (x as f64 + 1.0) * 131.0 + y as f64 + 1.0;
                }
            }
        }
        s
    };
    let mut prev_motor = env.state().unwrap().motor_speeds[0];
    for _ in 0..120 {
        // random collective steps around the trim command
        let du = if rng.random_bool(0.5) { 0.02 } else { -0.02 };
        let u = hold[0] + du;
        let a = Action(hold.map(|h| h + du));
        let r = env.step(a).map_err(|e| e.to_string())?;
        if r.done() {
            return Err("episode ended during delay probe".into());
        }
        commands.push(u);
        motor_rise.push(r.obs.motor_speeds[0] - prev_motor);
        prev_motor = r.obs.motor_speeds[0];
        let s = env.state().unwrap();
        truth.push(moment(&render_mask(&s.position, &s.unit_attitude(), &ext, &k, &track)));
        observed.push(moment(&r.obs.mask));
    }
    let (action_lag, _) = argmax_lag(&commands, &motor_rise, 5);
    let (image_lag, corr) = argmax_lag(&truth, &observed, 6);
    let visible = truth.iter().any(|m| *m > 0.0);
    check(
        action_lag == 1 && image_lag == 3 && visible,
        format!(
            "action lag {action_lag} step, image lag {image_lag} steps (correlation at lag 3: {:.4})",
            corr[3]
        ),
    )
}

fn rollout_bytes(seed: u64, actions: &[Action]) -> Vec<u8> {
    let mut env = Env::new(EnvConfig {
        logging: true,
        ..EnvConfig::default()
    })
    .unwrap();
    env.reset(seed);
    let mut episode = seed;
    for a in actions {
        if env.step(*a).unwrap().done() {
            episode = episode.wrapping_add(1);
            env.reset(episode);
        }
    }
    encode_replay(env.replay_header(seed), &env.take_log()).unwrap()
}

fn determinism() -> Outcome {
    let mut rng = stream(77, Stream::Episode);
    let actions: Vec<Action> = (0..400)
        .map(|_| Action(std::array::from_fn(|_| rng.random_range(0.2..0.7))))
        .collect();
    let mut identical = 0;
    let mut size = 0;
    for seed in [3, 1234, u64::MAX - 1] {
        let a = rollout_bytes(seed, &actions);
        let b = rollout_bytes(seed, &actions);
        size = a.len();
        identical += (a == b) as usize;
    }
    check(
        identical == 3,
        format!("{identical}/3 seeds byte-identical ({size} bytes per replay)"),
    )
}

fn battery() -> Outcome {
    let decay = OmegaMaxDecay {
        from: 3200.0,
        to: 2200.0,
        start_step: 60,
        end_step: 160,
    };
    let cfg = EnvConfig {
        dynamics: DynamicsParams {
            omega_max: 3200.0,
            ..DynamicsParams::nominal()
        },
        omega_max_decay: Some(decay),
        ..quiet(Mode::Eval)
    };
    let track = Arc::new(cfg.load_track().map_err(|e| e.to_string())?);
    let mut env = Env::with_track(cfg, track.clone()).map_err(|e| e.to_string())?;
    // high above and far behind the first gate so nothing interrupts the climb
    let start = track.gate(0).gate_to_world(&Vector3::new(-5000.0, 0.0, -2000.0));
    env.reset_with(1, |d| Some(DroneState::at_rest(start, [d.params.omega_max; 4])));
    let mut thrust = Vec::new();
    for _ in 0..240 {
        let r = env.step(Action::uniform(1.0)).map_err(|e| e.to_string())?;
        if r.done() {
            return Err(format!("episode ended at step {}", r.info.step));
        }
        thrust.push(r.info.specific_thrust);
    }
    let before = thrust[55];
    let after = thrust[239];
    let ratio = after / before;
    let predicted = (2200.0f64 / 3200.0).powi(2);
    check(
        (ratio - predicted).abs() / predicted < 0.01,
        format!(
            "thrust {before:.3} -> {after:.3} m/s^2, ratio {ratio:.5} vs (2200/3200)^2 = {predicted:.5} (drop {:.1}%)",
            100.0 * (1.0 - ratio)
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("thrust ceiling", thrust_ceiling),
        ("hover fixed point", hover_fixed_point),
        ("rk4 order", rk4_order),
        ("reward spot checks", reward_spot_checks),
        ("progress telescoping", progress_telescoping),
        ("camera", camera_checks),
        ("flight plan", flight_plan),
        ("randomization", randomization),
        ("delays", delays),
        ("determinism", determinism),
        ("battery depletion", battery),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let ms = t.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(detail) => println!("PASS  {name:<22} {detail} [{ms:.0} ms]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<22} {detail} [{ms:.0} ms]");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
