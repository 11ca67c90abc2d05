use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use gaterace::batch::{BatchEnv, Execution};
use gaterace::dynamics::{command_for_speed, hover_motor_speeds};
use gaterace::replay::{read_replay, write_replay, write_schema, RecordKind, ReplayError, ReplayRecord};
use gaterace::track::CrossingKind;
use gaterace::{Action, Env, EnvConfig, EnvError};
use serde_json::json;

/// Rollouts, mask dumps and throughput benchmarks for the gaterace simulator.
#[derive(Parser)]
#[command(name = "gaterace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a scripted policy and write a replay.
    Run {
        /// Track file (overrides the config's `track`).
        #[arg(long)]
        track: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Control steps to run; finished episodes restart with the next seed.
        #[arg(long)]
        steps: Option<u64>,
        /// `hover`, `max-thrust` or `file:<path>` (one action of four numbers per line).
        #[arg(long)]
        policy: Option<String>,
        /// Replay output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump masks from a replay as PGM files.
    Render {
        #[arg(long)]
        replay: PathBuf,
        /// Record range `a..b` (end exclusive); all records when omitted.
        #[arg(long)]
        frames: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure batched control steps per second with and without rendering.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        track: Option<PathBuf>,
        #[arg(long)]
        batch: Option<usize>,
        /// Seconds per mode.
        #[arg(long)]
        duration: Option<f64>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Track(String),
    Io(String),
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Track(_) => 4,
            CliError::Io(_) => 5,
            CliError::Input(_) => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Track(m) => write!(f, "track error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Input(m) => write!(f, "invalid input: {m}"),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Track(t) => CliError::Track(t.to_string()),
            EnvError::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Settings from the optional `[cli]` table of a config file. Flags win.
#[derive(Default)]
struct FileSettings {
    steps: Option<u64>,
    policy: Option<String>,
    out: Option<PathBuf>,
    batch: Option<usize>,
    duration: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<(EnvConfig, FileSettings), CliError> {
    let Some(path) = path else {
        return Ok((EnvConfig::default(), FileSettings::default()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    let Some(cli) = table.remove("cli") else {
        return Ok((EnvConfig::from_toml_str(&text)?, FileSettings::default()));
    };
    let config: EnvConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    config.validate()?;

    let bad = |key: &str| CliError::Config(format!("{}: invalid cli.{key}", path.display()));
    let cli = cli.as_table().ok_or_else(|| bad("table"))?;
    let mut s = FileSettings::default();
    for (key, value) in cli {
        match key.as_str() {
            "steps" => s.steps = Some(value.as_integer().filter(|v| *v >= 0).ok_or_else(|| bad(key))? as u64),
            "policy" => s.policy = Some(value.as_str().ok_or_else(|| bad(key))?.to_string()),
            "out" => s.out = Some(value.as_str().ok_or_else(|| bad(key))?.into()),
            "batch" => s.batch = Some(value.as_integer().filter(|v| *v >= 1).ok_or_else(|| bad(key))? as usize),
            "duration" => {
                s.duration = Some(
                    value
                        .as_float()
                        .or_else(|| value.as_integer().map(|v| v as f64))
                        .ok_or_else(|| bad(key))?,
                )
            }
            _ => return Err(CliError::Config(format!("{}: unknown key cli.{key}", path.display()))),
        }
    }
    Ok((config, s))
}

enum Policy {
    Hover,
    MaxThrust,
    Playback(Vec<Action>),
}

fn parse_policy(arg: &str, steps: u64) -> Result<Policy, CliError> {
    match arg {
        "hover" => Ok(Policy::Hover),
        "max-thrust" => Ok(Policy::MaxThrust),
        _ => {
            let Some(path) = arg.strip_prefix("file:") else {
                return Err(CliError::Input(format!(
                    "unknown policy `{arg}` (expected hover, max-thrust or file:<path>)"
                )));
            };
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            let actions = parse_actions(&text).map_err(|m| CliError::Input(format!("{path}: {m}")))?;
            if (actions.len() as u64) < steps {
                return Err(CliError::Input(format!(
                    "{path}: action file has {} actions but {steps} steps were requested",
                    actions.len()
                )));
            }
            Ok(Policy::Playback(actions))
        }
    }
}

/// One action per line, four numbers separated by whitespace or commas.
/// Blank lines and `#` comments are skipped.
fn parse_actions(text: &str) -> Result<Vec<Action>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", n + 1))?;
        let u: [f64; 4] = values
            .try_into()
            .map_err(|v: Vec<f64>| format!("line {}: expected 4 values, found {}", n + 1, v.len()))?;
        if u.iter().any(|x| !x.is_finite()) {
            return Err(format!("line {}: non-finite value", n + 1));
        }
        out.push(Action(u));
    }
    Ok(out)
}

/// Statistics recomputable from a replay.
#[derive(Debug, Default, PartialEq)]
struct Summary {
    episodes: u64,
    steps: u64,
    episode_return: f64,
    laps: u64,
    crossings: u64,
    max_speed: f64,
    max_specific_force: f64,
}

impl Summary {
    fn from_records(records: &[ReplayRecord]) -> Self {
        let mut s = Summary::default();
        let mut episode_laps = 0;
        for r in records {
            match r.kind {
                RecordKind::Reset => {
                    s.laps += episode_laps;
                    episode_laps = 0;
                    s.episodes += 1;
                }
                RecordKind::Step => {
                    s.steps += 1;
                    s.episode_return += r.reward.total;
                    episode_laps = r.info.laps;
                    s.crossings += r.info.crossings.iter().filter(|c| c.kind == CrossingKind::Main).count() as u64;
                    s.max_speed = s.max_speed.max(r.info.speed);
                    s.max_specific_force = s.max_specific_force.max(r.info.specific_thrust);
                }
            }
        }
        s.laps += episode_laps;
        s
    }

    fn print(&self) {
        println!("episodes            {}", self.episodes);
        println!("steps               {}", self.steps);
        println!("return              {:.6}", self.episode_return);
        println!("laps                {}", self.laps);
        println!("gate crossings      {}", self.crossings);
        println!("max speed           {:.6} m/s", self.max_speed);
        println!("max specific force  {:.6} m/s^2", self.max_specific_force);
        println!(
            "{}",
            json!({
                "episodes": self.episodes,
                "steps": self.steps,
                "return": self.episode_return,
                "laps": self.laps,
                "crossings": self.crossings,
                "max_speed": self.max_speed,
                "max_specific_force": self.max_specific_force,
            })
        );
    }
}

fn reset(env: &mut Env, policy: &Policy, seed: u64) {
    match policy {
        Policy::Hover => env.reset_hover(seed),
        _ => env.reset(seed),
    };
}

fn cmd_run(
    track: Option<PathBuf>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    steps: Option<u64>,
    policy: Option<String>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (mut cfg, file) = load_config(config.as_deref())?;
    if track.is_some() {
        cfg.track = track;
    }
    cfg.logging = true;
    let seed = seed.unwrap_or(cfg.seed);
    let steps = steps.or(file.steps).unwrap_or(cfg.max_steps);
    let policy = parse_policy(policy.or(file.policy).as_deref().unwrap_or("hover"), steps)?;
    let out = out.or(file.out);

    let mut env = Env::new(cfg)?;
    let mut episode_seed = seed;
    reset(&mut env, &policy, episode_seed);
    let mut hold = None;
    for k in 0..steps {
        let action = match &policy {
            Policy::Hover => *hold.get_or_insert_with(|| {
                let params = env.params().expect("episode running");
                let trim = hover_motor_speeds(params).unwrap_or(env.state().expect("episode running").motor_speeds);
                Action::new(trim.map(|w| command_for_speed(w, params)))
            }),
            Policy::MaxThrust => Action::uniform(1.0),
            Policy::Playback(actions) => actions[k as usize],
        };
        let result = env.step(action)?;
        if result.done() && k + 1 < steps {
            episode_seed = episode_seed.wrapping_add(1);
            hold = None;
            reset(&mut env, &policy, episode_seed);
        }
    }

    let records = env.take_log();
    if let Some(out) = &out {
        write_replay(out, env.replay_header(seed), &records)
            .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
        write_schema(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    }
    Summary::from_records(&records).print();
    Ok(())
}

fn parse_range(arg: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Input(format!("invalid frame range `{arg}` (expected a..b)"));
    let (a, b) = arg.split_once("..").ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

fn cmd_render(replay: &Path, frames: Option<&str>, out: &Path) -> Result<(), CliError> {
    let (_, records) = read_replay(replay)?;
    let (a, b) = match frames {
        Some(arg) => parse_range(arg)?,
        None => (0, records.len()),
    };
    if b > records.len() {
        return Err(CliError::Input(format!(
            "frame range {a}..{b} out of bounds for {} records",
            records.len()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    for (i, r) in records.iter().enumerate().take(b).skip(a) {
        let path = out.join(format!("frame_{i:06}.pgm"));
        std::fs::write(&path, r.obs.mask.to_pgm()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    println!("wrote {} frames to {}", b - a, out.display());
    Ok(())
}

fn measure(batch: &mut BatchEnv, seed: u64, duration: Duration) -> Result<f64, CliError> {
    batch.reset(seed);
    let mut next_seed = seed.wrapping_add(batch.len() as u64);
    let params = *batch.envs()[0].params().expect("reset");
    let trim = hover_motor_speeds(&params).unwrap_or([params.omega_max * 0.4; 4]);
    let actions = vec![Action::new(trim.map(|w| command_for_speed(w, &params))); batch.len()];
    let start = Instant::now();
    let mut steps = 0u64;
    while start.elapsed() < duration {
        let results = batch.step(&actions)?;
        for (i, r) in results.into_iter().enumerate() {
            if r?.done() {
                batch.reset_one(i, next_seed);
                next_seed = next_seed.wrapping_add(1);
            }
        }
        steps += batch.len() as u64;
    }
    Ok(steps as f64 / start.elapsed().as_secs_f64())
}

fn cmd_bench(
    config: Option<PathBuf>,
    track: Option<PathBuf>,
    batch: Option<usize>,
    duration: Option<f64>,
) -> Result<(), CliError> {
    let (mut cfg, file) = load_config(config.as_deref())?;
    if track.is_some() {
        cfg.track = track;
    }
    let size = batch.or(file.batch).unwrap_or(1);
    if size == 0 {
        return Err(CliError::Input("batch must be at least 1".into()));
    }
    let seconds = duration.or(file.duration).unwrap_or(2.0);
    if !(seconds > 0.0) || !seconds.is_finite() {
        return Err(CliError::Input(format!("duration must be positive, got {seconds}")));
    }
    let duration = Duration::from_secs_f64(seconds);
    let track = Arc::new(cfg.load_track()?);
    let execution = Execution::default();

    let mut rates = Vec::new();
    for render in [true, false] {
        let mode_cfg = EnvConfig { render, ..cfg.clone() };
        let mut b = BatchEnv::with_track(mode_cfg, track.clone(), size)?.with_execution(execution);
        rates.push(measure(&mut b, cfg.seed, duration)?);
    }
    println!("batch               {size}");
    println!("execution           {execution:?}");
    println!("physics+render      {:.0} steps/s", rates[0]);
    println!("physics only        {:.0} steps/s", rates[1]);
    println!(
        "{}",
        json!({
            "batch": size,
            "execution": format!("{execution:?}").to_lowercase(),
            "duration_s": seconds,
            "steps_per_s_render": rates[0],
            "steps_per_s_physics": rates[1],
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            track,
            config,
            seed,
            steps,
            policy,
            out,
        } => cmd_run(track, config, seed, steps, policy, out),
        Command::Render { replay, frames, out } => cmd_render(&replay, frames.as_deref(), &out),
        Command::Bench {
            config,
            track,
            batch,
            duration,
        } => cmd_bench(config, track, batch, duration),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaterace: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
