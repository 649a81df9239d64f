//! Command-line front end: profile learning, causal discovery, evaluation and
//! synthetic scene generation.

mod run_config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use causaldrive::causal::{CausalError, Discovery, SceneAnalysis};
use causaldrive::data::{
    extract_convoy_scenes, load_recording, read_scene, synth_scene, write_scene, ScenarioSpec, SceneModel, Template,
};
use causaldrive::eval::{best_f1, roc_csv, roc_sweep};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use run_config::RunConfig;

#[derive(Parser)]
#[command(name = "causaldrive", version, about = "Causal explanations of vehicle interactions")]
struct Cli {
    /// TOML run configuration; its values override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the reward profile behind one observed action.
    LearnProfile(LearnProfileArgs),
    /// Test every ordered pair of actions in a scene for causal necessity.
    Discover(DiscoverArgs),
    /// Sweep thresholds over labelled scenes and write a ROC table.
    Evaluate(EvaluateArgs),
    /// Generate labelled synthetic scenes.
    Synth(SynthArgs),
}

#[derive(Args)]
struct LearnProfileArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    agent: String,
    /// Action time (s).
    #[arg(long = "time", alias = "t-a")]
    time: f64,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Causal threshold on the planned-action distance.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of labelled scene files.
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Directory of highD-layout recordings to extract convoy scenes from.
    #[arg(long)]
    highd: Option<PathBuf>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    count: Option<usize>,
}

/// Failures with a dedicated exit status.
#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("input not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error(transparent)]
    Precondition(CausalError),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::MissingInput(_) => 2,
            Failure::Precondition(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.downcast_ref::<Failure>().map_or(1, Failure::code))
        }
    }
}

fn flag_table(cli: &Cli) -> Result<toml::Table> {
    let mut t = toml::Table::new();
    let path = |p: &Path| toml::Value::String(p.to_string_lossy().into_owned());
    if let Some(s) = cli.seed {
        t.insert(
            "seed".into(),
            toml::Value::Integer(i64::try_from(s).context("seed too large")?),
        );
    }
    if let Some(o) = &cli.out {
        t.insert("out".into(), path(o));
    }
    match &cli.command {
        Command::LearnProfile(a) => {
            if let Some(s) = &a.scene {
                t.insert("scene".into(), path(s));
            }
        }
        Command::Discover(a) => {
            if let Some(s) = &a.scene {
                t.insert("scene".into(), path(s));
            }
            if let Some(th) = a.threshold {
                let mut ad = toml::Table::new();
                ad.insert("threshold".into(), toml::Value::Float(th));
                t.insert("action_distance".into(), toml::Value::Table(ad));
            }
        }
        Command::Evaluate(a) => {
            if let Some(s) = &a.scenes {
                t.insert("scenes_dir".into(), path(s));
            }
            if let Some(h) = &a.highd {
                t.insert("highd_dir".into(), path(h));
            }
            if let Some(ths) = &a.thresholds {
                t.insert(
                    "thresholds".into(),
                    toml::Value::Array(ths.iter().map(|&x| toml::Value::Float(x)).collect()),
                );
            }
        }
        Command::Synth(a) => {
            if let Some(n) = &a.template {
                t.insert("template".into(), toml::Value::String(n.clone()));
            }
            if let Some(c) = a.count {
                t.insert("count".into(), toml::Value::Integer(c as i64));
            }
        }
    }
    Ok(t)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(c) = &cli.config {
        if !c.exists() {
            return Err(Failure::MissingInput(c.clone()).into());
        }
    }
    let cfg = RunConfig::resolve(flag_table(&cli)?, cli.config.as_deref())?;
    match &cli.command {
        Command::LearnProfile(a) => learn_profile(&cfg, &a.agent, a.time),
        Command::Discover(_) => discover(&cfg),
        Command::Evaluate(_) => evaluate(&cfg),
        Command::Synth(_) => synth(&cfg),
    }
}

fn load_scene(cfg: &RunConfig) -> Result<SceneModel> {
    let Some(path) = &cfg.scene else {
        bail!("no scene given (use --scene or set `scene` in the config)");
    };
    if !path.is_file() {
        return Err(Failure::MissingInput(path.clone()).into());
    }
    read_scene(path).with_context(|| format!("reading scene {}", path.display()))
}

fn write_out(cfg: &RunConfig, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn learn_profile(cfg: &RunConfig, agent: &str, t: f64) -> Result<()> {
    let scene = load_scene(cfg)?;
    let analysis_cfg = cfg.analysis();
    let analysis = SceneAnalysis::new(&scene, &analysis_cfg);
    let effect = match analysis.action_of(agent, t) {
        Ok(a) => a.clone(),
        Err(e @ (CausalError::NoActionAt { .. } | CausalError::UnknownAgent(_))) => {
            return Err(Failure::Precondition(e).into())
        }
        Err(e) => return Err(e.into()),
    };
    let profile = analysis.learn_effect_profile(&effect)?;
    let path = write_out(cfg, "profile.json", &to_json(&profile)?)?;
    let w = profile.fit.profile.weights();
    println!(
        "{agent} at t = {:.2}: weights [{}] (rank {}, residual {:.4}); written to {}",
        effect.t_a,
        w.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "),
        profile.fit.rank,
        profile.fit.residual,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DiscoverReport<'a> {
    threshold: f64,
    edges: Vec<EdgeRecord>,
    discovery: &'a Discovery,
}

#[derive(Serialize)]
struct EdgeRecord {
    cause: String,
    cause_time: f64,
    effect: String,
    effect_time: f64,
    distance: f64,
    explanation: String,
}

fn discover(cfg: &RunConfig) -> Result<()> {
    let scene = load_scene(cfg)?;
    let analysis_cfg = cfg.analysis();
    let discovery = causaldrive::causal::discover(&scene, &analysis_cfg);
    let threshold = analysis_cfg.action_distance.threshold;
    let graph = discovery.graph(threshold);
    let explanations = discovery.explanations(&graph);
    let edges: Vec<EdgeRecord> = graph
        .edges
        .iter()
        .zip(explanations)
        .map(|(l, explanation)| EdgeRecord {
            cause: l.cause.agent.clone(),
            cause_time: l.cause.t_a,
            effect: l.effect.agent.clone(),
            effect_time: l.effect.t_a,
            distance: l.distance,
            explanation,
        })
        .collect();

    let mut edge_list = String::new();
    for e in &edges {
        edge_list.push_str(&format!(
            "{}@{:.2} -> {}@{:.2} {:.6}\n",
            e.cause, e.cause_time, e.effect, e.effect_time, e.distance
        ));
        println!("{}", e.explanation);
    }
    write_out(cfg, "edges.txt", &edge_list)?;
    let report = DiscoverReport {
        threshold,
        edges,
        discovery: &discovery,
    };
    let path = write_out(cfg, "report.json", &to_json(&report)?)?;
    println!(
        "{} causal link(s); report written to {}",
        graph.edges.len(),
        path.display()
    );
    Ok(())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Failure::MissingInput(dir.to_path_buf()).into());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    Ok(entries)
}

fn scenes_from_dir(dir: &Path) -> Result<Vec<SceneModel>> {
    sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| read_scene(&p).with_context(|| format!("reading scene {}", p.display())))
        .collect()
}

/// Convoy scenes from every `<prefix>tracks.csv` with a matching
/// `<prefix>recordingMeta.csv`.
fn scenes_from_highd(dir: &Path, cfg: &RunConfig) -> Result<Vec<SceneModel>> {
    let mut scenes = Vec::new();
    for p in sorted_entries(dir)? {
        let Some(name) = p.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(prefix) = name.strip_suffix("tracks.csv") else {
            continue;
        };
        let meta = dir.join(format!("{prefix}recordingMeta.csv"));
        if !meta.is_file() {
            bail!("{} has no matching {}", p.display(), meta.display());
        }
        let recording = load_recording(&p, &meta, None).with_context(|| format!("loading {}", p.display()))?;
        scenes.extend(extract_convoy_scenes(&recording, &cfg.convoy));
    }
    Ok(scenes)
}

fn evaluate(cfg: &RunConfig) -> Result<()> {
    let scenes = match (&cfg.scenes_dir, &cfg.highd_dir) {
        (Some(d), None) => scenes_from_dir(d)?,
        (None, Some(d)) => scenes_from_highd(d, cfg)?,
        (Some(_), Some(_)) => bail!("give either a scenes directory or a highD directory, not both"),
        (None, None) => bail!("no input given (use --scenes or --highd)"),
    };
    if scenes.is_empty() {
        bail!("no scenes to evaluate");
    }
    if cfg.thresholds.is_empty() {
        bail!("no thresholds to sweep");
    }
    let reports = roc_sweep(&scenes, &cfg.thresholds, &cfg.analysis())?;
    let path = write_out(cfg, "roc.csv", &roc_csv(&reports))?;
    println!("{} scene(s); table written to {}", scenes.len(), path.display());
    match best_f1(&reports) {
        Some(r) => println!(
            "best F1 {:.4} at threshold {} (precision {}, recall {}, FPR {})",
            r.f1.unwrap_or(0.0),
            r.threshold,
            fmt_rate(r.precision),
            fmt_rate(r.recall),
            fmt_rate(r.fpr)
        ),
        None => println!("F1 undefined at every threshold"),
    }
    Ok(())
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let Some(name) = &cfg.template else {
        bail!("no template given (use --template)");
    };
    let template: Template = name.parse()?;
    let spec = ScenarioSpec::new(template);
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    for i in 0..cfg.count {
        let seed = cfg.seed.wrapping_add(i as u64);
        let scene = synth_scene(&spec, seed)?;
        let path = cfg.out.join(format!("{template}-{seed}.json"));
        write_scene(&path, &scene)?;
    }
    println!("{} {template} scene(s) written to {}", cfg.count, cfg.out.display());
    Ok(())
}
