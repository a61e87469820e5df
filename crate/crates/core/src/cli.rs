//! Command-line front end: `dataset`, `train`, `finetune`, `sample`, `eval`
//! and `sweep` over one sectioned JSON configuration.
//!
//! Precedence, lowest first: built-in defaults, `--config` file, dotted
//! overrides such as `--train.epochs 30`, then the short aliases
//! (`--n-per-class`, `--lora-rank`, `--steps`, `--seed`, …).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evalharness::{run_ratio_sweep, run_specs, to_table, write_reports, EvalConfig, EvalData};
use crate::flowmodel::{LoraConfig, ParamGroup};
use crate::lesiondata::{build_dataset, ensure_dir, DatasetConfig, Label, Manifest, Split, MANIFEST_FILE};
use crate::sampler::{generate, write_trajectory_csv, SampleSpec};
use crate::trainer::{finetune_lora, train_base, Checkpoint, TrainConfig};

pub const OUT_ENV: &str = "RECTIFLOW_OUT";
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
const DEFAULT_ROOT: &str = "rectiflow-out";

/// Inputs and outputs of a run; every path the command touched.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub base: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub scenario: Option<String>,
    pub trajectory: bool,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub lora: LoraConfig,
    pub sample: SampleSpec,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run: RunSection {
                threads: 1,
                ..RunSection::default()
            },
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            lora: LoraConfig::default(),
            sample: SampleSpec::default(),
            eval: EvalConfig::default(),
        }
    }
}

struct Alias {
    flag: &'static str,
    path: &'static str,
    help: &'static str,
    is_switch: bool,
}

const fn alias(flag: &'static str, path: &'static str, help: &'static str) -> Alias {
    Alias {
        flag,
        path,
        help,
        is_switch: false,
    }
}

fn subcommand_spec(name: &str) -> (&'static str, &'static [&'static str], Vec<Alias>) {
    match name {
        "dataset" => (
            "Render the procedural lesion dataset and its manifest",
            &["dataset"],
            vec![alias("n-per-class", "dataset.n_per_class", "Images per class and resolution")],
        ),
        "train" => (
            "Train a base velocity model on the train split",
            &["train"],
            vec![alias("manifest", "run.manifest", "Dataset manifest to train on")],
        ),
        "finetune" => (
            "Fine-tune LoRA adapters on a frozen base checkpoint",
            &["train", "lora"],
            vec![
                alias("base", "run.base", "Base checkpoint"),
                alias("manifest", "run.manifest", "Dataset manifest to fine-tune on"),
                alias("lora-rank", "lora.rank", "Adapter rank r"),
                alias("lora-alpha", "lora.alpha", "Adapter scale alpha"),
            ],
        ),
        "sample" => (
            "Generate images from a checkpoint",
            &["sample"],
            vec![
                alias("ckpt", "run.ckpt", "Checkpoint to sample from"),
                alias("prompt", "sample.prompt", "Caption or generation prompt"),
                alias("count", "sample.count", "Number of images"),
                alias("steps", "sample.steps", "Integration steps (default 20)"),
                alias("integrator", "sample.integrator", "euler, midpoint or rk4"),
                Alias {
                    flag: "trajectory",
                    path: "run.trajectory",
                    help: "Also write a step,t,z_norm CSV per sample",
                    is_switch: true,
                },
            ],
        ),
        "eval" => (
            "Train classifiers for the synthetic-only and mixed scenarios",
            &["eval"],
            vec![
                alias("real", "run.manifest", "Real dataset manifest"),
                alias("ckpt", "run.ckpt", "Generator checkpoint"),
                alias("scenario", "run.scenario", "i, ii or both (default both)"),
            ],
        ),
        "sweep" => (
            "Sweep real-to-synthetic training ratios",
            &["eval"],
            vec![
                alias("real", "run.manifest", "Real dataset manifest"),
                alias("ckpt", "run.ckpt", "Generator checkpoint"),
            ],
        ),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

pub const SUBCOMMANDS: [&str; 6] = ["dataset", "train", "finetune", "sample", "eval", "sweep"];

/// Leaf paths of a JSON tree with their default values.
fn leaves(value: &Value, prefix: &str, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                leaves(v, &format!("{prefix}.{k}"), out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn dotted_args(sections: &[&str]) -> Vec<(String, Value)> {
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let mut out = Vec::new();
    for s in sections {
        leaves(&defaults[*s], s, &mut out);
    }
    out
}

pub fn command() -> Command {
    let mut cmd = Command::new("rectiflow")
        .about("Desk-scale rectified-flow lesion generator with LoRA fine-tuning and an augmentation harness")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("config").long("config").global(true).value_name("FILE").help("Sectioned JSON configuration"))
        .arg(Arg::new("seed").long("seed").global(true).value_name("N").help("Seed of the command's own section"))
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_name("N")
                .help("Worker threads (default 1)"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .global(true)
                .value_name("DIR")
                .help(format!("Output directory (default ${OUT_ENV}/<command>)")),
        );
    for name in SUBCOMMANDS {
        let (about, sections, aliases) = subcommand_spec(name);
        let mut sub = Command::new(name).about(about);
        for a in aliases {
            let mut arg = Arg::new(a.flag).long(a.flag).help(a.help);
            arg = if a.is_switch {
                arg.action(ArgAction::SetTrue)
            } else {
                arg.value_name("VALUE")
            };
            sub = sub.arg(arg);
        }
        for (path, default) in dotted_args(sections) {
            sub = sub.arg(
                Arg::new(path.clone())
                    .long(path.clone())
                    .value_name("VALUE")
                    .help(format!("Override {path} (default {default})")),
            );
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn set_path(tree: &mut Value, path: &str, value: Value) {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        if !node.get(*p).is_some_and(Value::is_object) {
            node[*p] = Value::Object(Map::new());
        }
        node = node.get_mut(*p).expect("just inserted");
    }
    node[parts[parts.len() - 1]] = value;
}

fn get_path<'a>(tree: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(tree, |node, p| node.get(p))
}

/// A flag value as JSON: string defaults stay strings, anything else is
/// parsed as JSON and falls back to a string.
fn flag_value(raw: &str, default: Option<&Value>) -> Value {
    if matches!(default, Some(Value::String(_))) {
        return Value::String(raw.to_string());
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn from_command_line(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

/// Resolves the configuration of one invocation.
pub fn resolve(name: &str, sub: &ArgMatches) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(RunConfig::default()).expect("config serializes");
    if let Some(file) = sub.get_one::<String>("config") {
        let path = Path::new(file);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let overlay: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !overlay.is_object() {
            return Err(Error::Config(format!("{} must hold a JSON object", path.display())));
        }
        merge(&mut tree, overlay);
    }

    let (_, sections, aliases) = subcommand_spec(name);
    for (path, default) in dotted_args(sections) {
        if from_command_line(sub, &path) {
            let raw = sub.get_one::<String>(&path).expect("value present");
            set_path(&mut tree, &path, flag_value(raw, Some(&default)));
        }
    }
    for a in &aliases {
        if !from_command_line(sub, a.flag) {
            continue;
        }
        let value = if a.is_switch {
            Value::Bool(true)
        } else {
            let raw = sub.get_one::<String>(a.flag).expect("value present");
            flag_value(raw, get_path(&tree, a.path))
        };
        set_path(&mut tree, a.path, value);
    }
    if let Some(raw) = sub.get_one::<String>("seed") {
        let seed: u64 = raw
            .parse()
            .map_err(|_| Error::Config(format!("--seed expects an unsigned integer, got {raw:?}")))?;
        let path = match name {
            "dataset" => "dataset.seed",
            "train" | "finetune" => "train.seed",
            "sample" => "sample.seed",
            _ => "eval.pool_seed",
        };
        set_path(&mut tree, path, Value::from(seed));
    }
    if let Some(raw) = sub.get_one::<String>("threads") {
        set_path(&mut tree, "run.threads", flag_value(raw, None));
    }
    if let Some(raw) = sub.get_one::<String>("out") {
        set_path(&mut tree, "run.out", Value::String(raw.clone()));
    }

    let config: RunConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
    if config.run.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    Ok(config)
}

fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

fn default_dir(name: &str) -> PathBuf {
    output_root().join(if name == "dataset" { "data" } else { name })
}

/// Fills unset paths from the output root and creates the output directory.
/// An explicit `--out` needs an existing parent.
fn prepare_paths(name: &str, config: &mut RunConfig) -> Result<PathBuf> {
    let root = output_root();
    let out = match &config.run.out {
        Some(out) => out.clone(),
        None => {
            ensure_dir(&root)?;
            default_dir(name)
        }
    };
    config.run.out = Some(out.clone());
    if matches!(name, "train" | "finetune" | "eval" | "sweep") && config.run.manifest.is_none() {
        config.run.manifest = Some(default_dir("dataset").join(MANIFEST_FILE));
    }
    if name == "finetune" && config.run.base.is_none() {
        config.run.base = Some(default_dir("train").join(CHECKPOINT_FILE));
    }
    if matches!(name, "sample" | "eval" | "sweep") && config.run.ckpt.is_none() {
        let source = if root.join("finetune").join(CHECKPOINT_FILE).exists() { "finetune" } else { "train" };
        config.run.ckpt = Some(default_dir(source).join(CHECKPOINT_FILE));
    }
    if name == "eval" && config.run.scenario.is_none() {
        config.run.scenario = Some("both".into());
    }
    ensure_dir(&out)?;
    Ok(out)
}

fn echo_config(out: &Path, config: &RunConfig) -> Result<()> {
    let path = out.join(RUN_CONFIG_FILE);
    let text = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("missing {what} path")))
}

fn cmd_dataset(config: &RunConfig, out: &Path) -> Result<()> {
    let manifest = build_dataset(&config.dataset, out)?;
    println!("manifest: {}", out.join(MANIFEST_FILE).display());
    println!("{:>10} {:>6} {:>8} {:>10} {:>6}", "resolution", "split", "benign", "malignant", "total");
    for &res in &config.dataset.resolutions {
        for split in [Split::Train, Split::Test] {
            let b = manifest.count(split, res, Label::Benign);
            let m = manifest.count(split, res, Label::Malignant);
            let name = if split == Split::Train { "train" } else { "test" };
            println!("{res:>10} {name:>6} {b:>8} {m:>10} {:>6}", b + m);
        }
    }
    Ok(())
}

fn report_training(ck: &Checkpoint, curve_path: &Path, ck_path: &Path, final_loss: Option<f64>) {
    let group = ck.net.trainable_group();
    println!("checkpoint: {}", ck_path.display());
    println!("loss curve: {}", curve_path.display());
    match final_loss {
        Some(l) => println!("final loss: {l:.6}"),
        None => println!("final loss: n/a (no epochs)"),
    }
    println!("trainable parameters: {}", ck.net.parameter_count(group));
    if group == ParamGroup::Adapter {
        println!("frozen base parameters: {}", ck.net.parameter_count(ParamGroup::Base));
    }
}

fn cmd_train(config: &RunConfig, out: &Path) -> Result<()> {
    let manifest = Manifest::load(required(&config.run.manifest, "manifest")?)?;
    let (ck, curve) = train_base(&manifest, &config.train)?;
    let (ck_path, curve_path) = (out.join(CHECKPOINT_FILE), out.join(LOSS_FILE));
    ck.save(&ck_path)?;
    curve.write_csv(&curve_path)?;
    report_training(&ck, &curve_path, &ck_path, curve.last());
    Ok(())
}

fn cmd_finetune(config: &RunConfig, out: &Path) -> Result<()> {
    let base = Checkpoint::load(required(&config.run.base, "base checkpoint")?)?;
    let manifest = Manifest::load(required(&config.run.manifest, "manifest")?)?;
    let train = TrainConfig {
        freeze_base: true,
        lora: Some(config.lora.clone()),
        ..config.train.clone()
    };
    let (ck, curve) = finetune_lora(&base, &manifest, &train)?;
    let (ck_path, curve_path) = (out.join(CHECKPOINT_FILE), out.join(LOSS_FILE));
    ck.save(&ck_path)?;
    curve.write_csv(&curve_path)?;
    report_training(&ck, &curve_path, &ck_path, curve.last());
    Ok(())
}

fn cmd_sample(config: &RunConfig, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(required(&config.run.ckpt, "checkpoint")?)?;
    let spec = &config.sample;
    let samples = generate(&ck, spec, Some(out), config.run.trajectory)?;
    for s in &samples {
        if let Some(p) = &s.path {
            println!("{}", p.display());
        }
        if config.run.trajectory {
            let path = out.join(format!("trajectory_{}_{}.csv", spec.seed, s.index));
            write_trajectory_csv(&path, spec.steps, &s.z_norms)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn cmd_eval(config: &RunConfig, out: &Path) -> Result<()> {
    let manifest = Manifest::load(required(&config.run.manifest, "manifest")?)?;
    let ck = Checkpoint::load(required(&config.run.ckpt, "checkpoint")?)?;
    let scenario = config.run.scenario.as_deref().unwrap_or("both");
    if !matches!(scenario, "i" | "ii" | "both") {
        return Err(Error::Config(format!("--scenario must be i, ii or both, got {scenario:?}")));
    }
    let specs: Vec<_> = config
        .eval
        .scenario_specs()
        .into_iter()
        .filter(|(tag, _)| scenario == "both" || tag.trim_matches(['(', ')']) == scenario)
        .collect();
    let data = EvalData::prepare(&manifest, &ck, &config.eval)?;
    let reports = run_specs(&data, &specs, &config.eval)?;
    let title = "Classifier accuracy per training scenario";
    for p in write_reports(out, "scenarios", title, &reports)?.iter().take(3) {
        println!("{}", p.display());
    }
    print!("{}", to_table(title, &reports));
    Ok(())
}

fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<()> {
    let manifest = Manifest::load(required(&config.run.manifest, "manifest")?)?;
    let ck = Checkpoint::load(required(&config.run.ckpt, "checkpoint")?)?;
    let reports = run_ratio_sweep(&manifest, &ck, &config.eval)?;
    let title = "Accuracy and ROC-AUC across real-to-synthetic ratios";
    for p in write_reports(out, "sweep", title, &reports)?.iter().take(3) {
        println!("{}", p.display());
    }
    print!("{}", to_table(title, &reports));
    Ok(())
}

fn execute(name: &str, sub: &ArgMatches) -> Result<()> {
    let mut config = resolve(name, sub)?;
    let out = prepare_paths(name, &mut config)?;
    echo_config(&out, &config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match name {
        "dataset" => cmd_dataset(&config, &out),
        "train" => cmd_train(&config, &out),
        "finetune" => cmd_finetune(&config, &out),
        "sample" => cmd_sample(&config, &out),
        "eval" => cmd_eval(&config, &out),
        "sweep" => cmd_sweep(&config, &out),
        _ => unreachable!(),
    })
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 success, 2 configuration, 3 I/O or format, 4 divergence, 5 data.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match execute(name, sub) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
