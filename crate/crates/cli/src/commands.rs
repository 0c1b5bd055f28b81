//! Subcommand bodies. Each returns after its files are written.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use erfi_core::actuation::{run_step_response, InjectionMode};
use erfi_core::harness::{
    curves_from_trials, line_plot_svg, read_curves_csv, read_trials_csv, run_sweep,
    success_curves_svg, summarize_comparison, write_curves_csv, write_trials_csv, NamedPolicy,
    Series, SweepParam,
};
use erfi_core::policy::{
    load_checkpoint, read_training_curve, save_checkpoint, train as run_training,
    write_training_curve, TrainingRecord,
};
use erfi_core::rbd::STANDARD_GRAVITY;

use crate::config::RunConfig;
use crate::output::RunFiles;
use crate::{validate as suite, Failure};

fn run_dir(config: &RunConfig) -> PathBuf {
    PathBuf::from(config.get("run.output_dir"))
}

fn note(path: &Path) {
    println!("wrote {}", path.display());
}

fn training_svg(records: &[TrainingRecord], title: &str) -> String {
    let series = vec![
        Series {
            name: "mean reward".into(),
            points: records.iter().map(|r| (r.iteration as f64, r.mean_reward)).collect(),
            band: vec![],
        },
        Series {
            name: "mean speed [m/s]".into(),
            points: records.iter().map(|r| (r.iteration as f64, r.mean_speed)).collect(),
            band: vec![],
        },
    ];
    line_plot_svg(title, "iteration", "value", &series, None)
}

pub fn train(config: &RunConfig) -> Result<(), Failure> {
    let cfg = config.train()?;
    let model = config.model()?;
    if let Some(w) = cfg.episode.injection.pronking_warning(model.total_mass()) {
        log::warn!("{w}");
    }
    let files = RunFiles::create(&run_dir(config), "train", cfg.strategy.name(), &config.to_ini())?;
    let start = Instant::now();
    let every = (cfg.ppo.iterations / 20).max(1);
    let out = run_training(&model, &cfg, |r| {
        if r.iteration % every == 0 {
            eprintln!(
                "iter {:5}  reward {:7.3}  episode {:5.0}  speed {:6.3}  {:6.1}s",
                r.iteration,
                r.mean_reward,
                r.mean_episode_len,
                r.mean_speed,
                start.elapsed().as_secs_f64()
            );
        }
    })
    .map_err(anyhow::Error::from)?;
    let ckpt = files.path(".bin");
    save_checkpoint(&out.policy, &ckpt).map_err(anyhow::Error::from)?;
    note(&ckpt);
    let (path, w) = files.writer(".csv")?;
    write_training_curve(&out.curve, w).context("writing training curve")?;
    note(&path);
    let title = format!("training, {}", cfg.strategy);
    note(&files.write(".svg", training_svg(&out.curve, &title).as_bytes())?);
    Ok(())
}

fn nominal_value(param: SweepParam) -> f64 {
    match param {
        SweepParam::BaseMassScale => 1.0,
        SweepParam::FrictionMu => 0.5,
        SweepParam::GravityMs2 => STANDARD_GRAVITY,
        _ => 0.0,
    }
}

fn load_policy(spec: &str) -> Result<NamedPolicy> {
    let (id, path) = match spec.split_once('=') {
        Some((id, path)) => (id.to_string(), PathBuf::from(path)),
        None => {
            let p = PathBuf::from(spec);
            let id = p
                .file_stem()
                .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
            (id, p)
        }
    };
    let params = load_checkpoint(&path).with_context(|| format!("loading policy `{id}`"))?;
    Ok(NamedPolicy { id, params })
}

pub fn evaluate(config: &RunConfig, policy: &Path, value: Option<f64>) -> Result<(), Failure> {
    let model = config.model()?;
    let mut spec = config.sweep(&model)?;
    let value = value.unwrap_or_else(|| nominal_value(spec.param));
    spec.grid = vec![value];
    let policy = load_policy(&policy.display().to_string())?;
    let files = RunFiles::create(&run_dir(config), "evaluate", spec.param.tag(), &config.to_ini())?;
    let out = run_sweep(std::slice::from_ref(&policy), &model, &spec).map_err(anyhow::Error::from)?;
    let n = out.trials.len() as f64;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &out.trials {
        *counts.entry(t.outcome.name()).or_default() += 1;
    }
    let p = &out.curves[0].points[0];
    println!("policy    {}", policy.id);
    println!("condition {} = {value}", spec.param);
    println!(
        "success   {}/{} = {:.3} ± {:.3}",
        p.successes, p.trials, p.rate, p.ci_halfwidth
    );
    println!("outcomes  {counts:?}");
    println!(
        "distance  {:.3} m mean, speed {:.3} m/s mean",
        out.trials.iter().map(|t| t.distance_m).sum::<f64>() / n,
        out.trials.iter().map(|t| t.mean_speed_mps).sum::<f64>() / n
    );
    let (path, w) = files.writer(".csv")?;
    write_trials_csv(&out.trials, w).map_err(anyhow::Error::from)?;
    note(&path);
    Ok(())
}

pub fn sweep(config: &RunConfig, policies: &[String]) -> Result<(), Failure> {
    let model = config.model()?;
    let spec = config.sweep(&model)?;
    // Every checkpoint must load before any trial runs.
    let loaded = policies
        .iter()
        .map(|p| load_policy(p))
        .collect::<Result<Vec<_>>>()?;
    let mut ids: Vec<&str> = loaded.iter().map(|p| p.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(anyhow::anyhow!("policy ids must be distinct; use ID=PATH").into());
    }
    let files = RunFiles::create(&run_dir(config), "sweep", spec.param.tag(), &config.to_ini())?;
    let start = Instant::now();
    let out = run_sweep(&loaded, &model, &spec).map_err(anyhow::Error::from)?;
    log::info!("{} trials in {:.1}s", out.trials.len(), start.elapsed().as_secs_f64());
    for c in &out.curves {
        let rates: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.3}:{:.2}", p.value, p.rate))
            .collect();
        println!("{:<16} {}", c.policy_id, rates.join(" "));
    }
    if out.curves.len() > 1 {
        let cmp = summarize_comparison(&out.curves).map_err(anyhow::Error::from)?;
        print!("{}", cmp.to_table());
    }
    let (path, w) = files.writer(".csv")?;
    write_trials_csv(&out.trials, w).map_err(anyhow::Error::from)?;
    note(&path);
    let (path, w) = files.writer(".curves.csv")?;
    write_curves_csv(&out.curves, w).map_err(anyhow::Error::from)?;
    note(&path);
    let title = match spec.payload {
        Some(_) => format!("{} with payload", spec.param),
        None => spec.param.to_string(),
    };
    note(&files.write(".svg", success_curves_svg(&out.curves, &title).as_bytes())?);
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow {
    seed: u64,
    rise_time_s: Option<f64>,
    settling_time_s: Option<f64>,
    steady_state_offset_rad: f64,
}

const PLOTTED_SEEDS: usize = 10;

fn response_svg(trajectories: &[Vec<(u64, f64, f64, f64)>], title: &str) -> String {
    let mut series: Vec<Series> = trajectories
        .iter()
        .take(PLOTTED_SEEDS)
        .map(|tr| Series {
            name: format!("seed {}", tr.first().map_or(0, |s| s.0)),
            points: tr.iter().map(|s| (s.1, s.2)).collect(),
            band: vec![],
        })
        .collect();
    if let Some(first) = trajectories.first() {
        series.push(Series {
            name: "desired".into(),
            points: first.iter().map(|s| (s.1, s.3)).collect(),
            band: vec![],
        });
    }
    line_plot_svg(title, "time [s]", "joint angle [rad]", &series, None)
}

pub fn step_response(config: &RunConfig) -> Result<(), Failure> {
    let (cfg, seeds) = config.step_response();
    let mode = match cfg.mode {
        InjectionMode::None => "none",
        InjectionMode::Rfi => "rfi",
        InjectionMode::Rao => "rao",
        InjectionMode::ErfiC => "erfi-c",
    };
    let files = RunFiles::create(&run_dir(config), "step-response", mode, &config.to_ini())?;
    let base = config.seed();
    let seed_list: Vec<u64> = (0..seeds as u64).map(|s| base + s).collect();
    let report = run_step_response(&cfg, &seed_list);
    let (path, w) = files.writer(".csv")?;
    let mut wr = csv::Writer::from_writer(w);
    for tr in &report.trajectories {
        for s in tr {
            wr.serialize(s).context("writing samples")?;
        }
    }
    wr.flush().context("writing samples")?;
    note(&path);
    let (path, w) = files.writer(".metrics.csv")?;
    let mut wr = csv::Writer::from_writer(w);
    for m in &report.metrics {
        wr.serialize(MetricsRow {
            seed: m.seed,
            rise_time_s: m.rise_time_s,
            settling_time_s: m.settling_time_s,
            steady_state_offset_rad: m.steady_state_offset_rad,
        })
        .context("writing metrics")?;
    }
    wr.flush().context("writing metrics")?;
    note(&path);
    let traj: Vec<Vec<(u64, f64, f64, f64)>> = report
        .trajectories
        .iter()
        .map(|tr| tr.iter().map(|s| (s.seed, s.t, s.q, s.q_desired)).collect())
        .collect();
    let title = format!("step response, {mode}, Kp {} Kd {}", cfg.kp, cfg.kd);
    note(&files.write(".svg", response_svg(&traj, &title).as_bytes())?);
    let s = &report.summary;
    println!(
        "rise time      {:.4} ± {:.4} s ({} seeds)",
        s.rise_time.mean, s.rise_time.std, s.rise_time.count
    );
    println!(
        "settling time  {:.4} ± {:.4} s ({} seeds)",
        s.settling_time.mean, s.settling_time.std, s.settling_time.count
    );
    println!(
        "steady offset  {:.5} ± {:.5} rad",
        s.steady_state_offset.mean, s.steady_state_offset.std
    );
    Ok(())
}

fn header(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut line = String::new();
    BufReader::new(f)
        .read_line(&mut line)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(line.trim_end().split(',').map(str::to_string).collect())
}

fn plot_one(input: &Path, out_dir: Option<&Path>) -> Result<PathBuf> {
    let cols = header(input)?;
    let has = |c: &str| cols.iter().any(|h| h == c);
    let stem = input
        .file_stem()
        .map_or_else(|| "plot".into(), |s| s.to_string_lossy().into_owned());
    let title = stem.clone();
    let open = || File::open(input).with_context(|| format!("opening {}", input.display()));
    let svg = if has("outcome") {
        let trials = read_trials_csv(open()?).map_err(anyhow::Error::from)?;
        success_curves_svg(&curves_from_trials(&trials), &title)
    } else if has("ci_halfwidth") {
        let curves = read_curves_csv(open()?).map_err(anyhow::Error::from)?;
        success_curves_svg(&curves, &title)
    } else if has("mean_reward") {
        let records = read_training_curve(open()?).context("reading training curve")?;
        training_svg(&records, &title)
    } else if has("q_desired") {
        let mut by_seed: BTreeMap<u64, Vec<(u64, f64, f64, f64)>> = BTreeMap::new();
        for row in csv::Reader::from_reader(open()?).deserialize() {
            let s: erfi_core::actuation::ResponseSample = row.context("reading samples")?;
            by_seed.entry(s.seed).or_default().push((s.seed, s.t, s.q, s.q_desired));
        }
        response_svg(&by_seed.into_values().collect::<Vec<_>>(), &title)
    } else {
        bail!("{}: unrecognized CSV columns {cols:?}", input.display());
    };
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| input.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{stem}.svg"));
    let mut f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(svg.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn plot(inputs: &[PathBuf], out_dir: Option<&Path>) -> Result<(), Failure> {
    for input in inputs {
        note(&plot_one(input, out_dir)?);
    }
    Ok(())
}

pub fn validate() -> Result<(), Failure> {
    let checks = suite::run();
    for c in &checks {
        println!(
            "{}  {:<44} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: 3,
            error: anyhow::anyhow!("{failed} of {} checks failed", checks.len()),
        });
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

