//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rectiflow::evalharness::{roc_auc, roc_curve, run_specs, trapezoid_area, EvalConfig, EvalData, EvalReport};
use rectiflow::flowmodel::{interpolate, LoraAdapter, LoraConfig, ParamGroup};
use rectiflow::lesiondata::{
    build_dataset, caption, encode_caption, generation_prompt, ConditionVector, DatasetConfig, Label, LesionParams,
    Level, Manifest, Split,
};
use rectiflow::numerics::{Rng, Tensor};
use rectiflow::sampler::{
    convergence_probe, generate, transport, ConditionedNet, Integrator, LinearField, SampleSpec, VelocityField,
};
use rectiflow::trainer::{
    evaluate_loss, finetune_lora_on, lora_parameter_count, train_base_on, Checkpoint, TrainConfig, TrainingSet,
};
use rectiflow::Result;

type Outcome = (bool, String);

fn ac1() -> Outcome {
    let start = Instant::now();
    let ops = common::op_checks(common::INSTANCES, 11);
    let flow = [false, true].map(|a| common::flow_loss_check(common::INSTANCES, 3, a));
    let secs = start.elapsed().as_secs_f64();
    let worst_op = ops.iter().map(|c| c.worst).fold(0.0, f64::max);
    let worst_flow = flow[0].max(flow[1]);
    let ok = ops.iter().all(|c| c.instances >= 20 && c.worst < common::TOLERANCE)
        && worst_flow < common::TOLERANCE
        && secs < 30.0;
    (
        ok,
        format!(
            "{} ops x {} instances, worst op rel err {worst_op:.2e}, flow loss {worst_flow:.2e}, {secs:.2}s",
            ops.len(),
            common::INSTANCES
        ),
    )
}

struct Constant(Vec<f64>);

impl VelocityField for Constant {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn velocity(&self, z: &Tensor, _t: f64) -> Result<Tensor> {
        Tensor::new(z.shape().to_vec(), self.0.repeat(z.shape()[0]))
    }
}

fn ac2() -> Outcome {
    let mut rng = Rng::new(2);
    let mut endpoints = 0;
    for _ in 0..100 {
        let z0 = rng.gaussian(&[3, 7]);
        let z1 = common::uniform(&mut rng, &[3, 7]);
        let a = interpolate(&z0, &z1, 0.0).unwrap();
        let b = interpolate(&z0, &z1, 1.0).unwrap();
        let same = |x: &Tensor, y: &Tensor| x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits());
        if same(&a, &z0) && same(&b, &z1) {
            endpoints += 1;
        }
    }
    let z0 = rng.gaussian(&[4, 5]);
    let slope: Vec<f64> = (0..5).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
    let mut zero_exact = true;
    let mut constant_err: f64 = 0.0;
    for integ in Integrator::ALL {
        for steps in [1, 5, 20] {
            zero_exact &= transport(&Constant(vec![0.0; 5]), &z0, steps, integ).unwrap() == z0;
            let z = transport(&Constant(slope.clone()), &z0, steps, integ).unwrap();
            for (i, got) in z.data().iter().enumerate() {
                constant_err = constant_err.max((got - (z0.data()[i] + slope[i % 5])).abs());
            }
        }
    }
    let ok = endpoints == 100 && zero_exact && constant_err <= 1e-12;
    (
        ok,
        format!(
            "endpoints bit-exact {endpoints}/100, zero field exact {zero_exact}, constant field max err {constant_err:.1e} (fp rounding bound 1e-12)"
        ),
    )
}

fn ac3() -> Outcome {
    let field = LinearField { rate: 1.0, dim: 1 };
    let mut ok = true;
    let mut parts = Vec::new();
    for (integ, lo, hi) in [
        (Integrator::Euler, 1.7, 2.3),
        (Integrator::Midpoint, 3.4, 4.6),
        (Integrator::Rk4, 12.0, 20.0),
    ] {
        let rows = convergence_probe(field, integ, &[10, 20, 40, 80]).unwrap();
        let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
        ok &= ratios.iter().all(|r| (lo..=hi).contains(r));
        parts.push(format!("{integ} [{}]", ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ")));
    }
    let euler20 = convergence_probe(field, Integrator::Euler, &[20]).unwrap()[0].value;
    let compound = (1.0f64 + 1.0 / 20.0).powi(20);
    let diff = (euler20 - compound).abs();
    ok &= diff <= 1e-12;
    (ok, format!("ratios {}; euler N=20 vs (1+1/20)^20 diff {diff:.1e}", parts.join(", ")))
}

fn standard_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..TrainConfig::default()
    }
}

fn ac4(base: &Checkpoint, data: &TrainingSet) -> Outcome {
    let rank64 = LoraConfig {
        rank: 64,
        alpha: 64.0,
        ..LoraConfig::default()
    };
    let tune = |epochs| TrainConfig {
        epochs,
        freeze_base: true,
        lora: Some(rank64.clone()),
        ..standard_train_config(1)
    };

    let (fresh, _) = finetune_lora_on(base, data, &tune(0)).unwrap();
    let cond = encode_caption(&generation_prompt(Label::Malignant)).unwrap();
    let z0 = Rng::new(9).gaussian(&[6, base.net.data_dim()]);
    let direct_base = transport(&ConditionedNet::uniform(&base.net, &cond, 6), &z0, 20, Integrator::Euler).unwrap();
    let direct_fresh = transport(&ConditionedNet::uniform(&fresh.net, &cond, 6), &z0, 20, Integrator::Euler).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let spec = SampleSpec {
        count: 6,
        seed: 3,
        ..SampleSpec::default()
    };
    let images = |ck: &Checkpoint| -> Vec<Vec<u8>> {
        generate(ck, &spec, None, false).unwrap().iter().map(|s| s.image.to_ppm()).collect()
    };
    let zero_b = bits(&direct_base) == bits(&direct_fresh) && images(base) == images(&fresh);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.ckpt");
    base.save(&path).unwrap();
    let (tuned, _) = finetune_lora_on(base, data, &tune(1)).unwrap();
    let frozen = tuned.base_block() == Checkpoint::load(&path).unwrap().base_block();
    let adapted = !tuned.adapter_block().is_empty() && tuned.net.parameters(ParamGroup::Adapter) != fresh.net.parameters(ParamGroup::Adapter);

    let (d, h, k) = (base.net.data_dim(), base.net.config.hidden, base.net.data_dim() + 16 + 10);
    let expected = [(h, k), (h, h), (d, h)].iter().map(|(d, k)| 64 * (d + k)).sum::<usize>();
    let counted = tuned.net.parameter_count(ParamGroup::Adapter);
    let reported = lora_parameter_count(&base.net.config, &rank64);
    let scale = LoraAdapter::init(h, k, 64, 64.0, &mut Rng::new(1)).unwrap().scale();

    let ok = zero_b && frozen && adapted && counted == expected && reported == expected && scale == 1.0;
    (
        ok,
        format!(
            "B=0 generation bit-identical {zero_b}, base block byte-equal after finetune {frozen}, trainable {counted} (sum r(d+k) = {expected}), r=a=64 scale {scale}"
        ),
    )
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut doubled, mut pairs) = (0u64, 0u64);
    for (i, &sp) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sn) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            doubled += if sp > sn { 2 } else if sp == sn { 1 } else { 0 };
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

fn ac5() -> Outcome {
    let mut rng = Rng::new(5);
    let mut exact = 0;
    let mut trap_err: f64 = 0.0;
    for _ in 0..100 {
        let n = 2 + rng.below(60);
        let levels = 1 + rng.below(6);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 * 0.5 - 1.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        let auc = roc_auc(&scores, &labels).unwrap();
        if auc == brute_auc(&scores, &labels) {
            exact += 1;
        }
        trap_err = trap_err.max((trapezoid_area(&roc_curve(&scores, &labels).unwrap()) - auc).abs());
    }
    let labels = [false, false, true, true];
    let perfect = roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap();
    let inverted = roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap();
    let constant = roc_auc(&[0.4; 4], &labels).unwrap();
    let ok = exact == 100 && trap_err <= 1e-10 && perfect == 1.0 && inverted == 0.0 && constant == 0.5;
    (
        ok,
        format!(
            "rank AUC equals pair count {exact}/100, trapezoid max diff {trap_err:.1e}, perfect/inverted/constant {perfect}/{inverted}/{constant}"
        ),
    )
}

fn ac6(data: &TrainingSet) -> (Outcome, Checkpoint) {
    let mut passed = 0;
    let mut ratios = Vec::new();
    let mut total = 0.0;
    let mut seed1 = None;
    for seed in 1..=5 {
        let start = Instant::now();
        let (ck, curve) = train_base_on(data, &standard_train_config(seed)).unwrap();
        total += start.elapsed().as_secs_f64();
        let ratio = curve.last().unwrap() / curve.first().unwrap();
        if ratio < 0.5 {
            passed += 1;
        }
        ratios.push(format!("{ratio:.3}"));
        if seed == 1 {
            seed1 = Some(ck);
        }
    }
    let ok = passed >= 4 && total < 300.0;
    (
        (
            ok,
            format!("final/first loss {} ({passed}/5 below 0.5), training time {total:.0}s", ratios.join(", ")),
        ),
        seed1.unwrap(),
    )
}

fn ac7(manifest: &Manifest) -> Outcome {
    let benign = TrainingSet::load(manifest, Split::Train, 16, Some(Label::Benign)).unwrap();
    let malignant = TrainingSet::load(manifest, Split::Train, 16, Some(Label::Malignant)).unwrap();
    let held_out = TrainingSet::load(manifest, Split::Test, 16, Some(Label::Malignant)).unwrap();
    let mut passed = 0;
    let mut parts = Vec::new();
    for seed in 1..=5 {
        let base_config = TrainConfig {
            label: Some(Label::Benign),
            ..standard_train_config(seed)
        };
        let (base, _) = train_base_on(&benign, &base_config).unwrap();
        let tune_config = TrainConfig {
            label: Some(Label::Malignant),
            freeze_base: true,
            lora: Some(LoraConfig::default()),
            ..standard_train_config(seed)
        };
        let (tuned, _) = finetune_lora_on(&base, &malignant, &tune_config).unwrap();
        let before = evaluate_loss(&base.net, &held_out, 1000 + seed).unwrap();
        let after = evaluate_loss(&tuned.net, &held_out, 1000 + seed).unwrap();
        if after < before {
            passed += 1;
        }
        parts.push(format!("{before:.4}->{after:.4}"));
    }
    (passed >= 4, format!("held-out malignant loss {} ({passed}/5 decreased)", parts.join(", ")))
}

fn mean_of(reports: &[EvalReport], real_count: usize, name: &str) -> f64 {
    reports
        .iter()
        .find(|r| r.scenario == name && r.ratio.real_count == real_count)
        .map(|r| r.accuracy_mean)
        .unwrap()
}

fn ac8(manifest: &Manifest, base: &Checkpoint) -> Outcome {
    let start = Instant::now();
    let config = EvalConfig::default();
    let data = EvalData::prepare(manifest, base, &config).unwrap();
    let sweep = run_specs(&data, &config.sweep_specs(), &config).unwrap();
    let scenarios = run_specs(&data, &config.scenario_specs(), &config).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let mut ok = secs < 600.0;
    let mut parts = Vec::new();
    for r in [250, 500] {
        let (one_one, one_zero) = (mean_of(&sweep, r, "1:1"), mean_of(&sweep, r, "1:0"));
        ok &= one_one >= one_zero - 0.02;
        parts.push(format!("R{r} 1:1 {one_one:.3} vs 1:0 {one_zero:.3}"));
    }
    let synthetic_only = scenarios[0].accuracy_mean;
    ok &= synthetic_only > 0.55;

    let test_ids: HashSet<&str> = data.test.ids.iter().map(String::as_str).collect();
    let runs: Vec<_> = sweep.iter().chain(&scenarios).flat_map(|r| &r.runs).collect();
    let leaked: usize = runs
        .iter()
        .map(|run| run.train_id_list.iter().filter(|id| test_ids.contains(id.as_str())).count())
        .sum();
    ok &= leaked == 0 && runs.len() == (sweep.len() + 2) * 5;
    (
        ok,
        format!(
            "{}; scenario (i) {synthetic_only:.3} (chance band [0.45, 0.55]), (ii) {:.3}; leaked ids {leaked} over {} runs; {secs:.0}s",
            parts.join(", "),
            scenarios[1].accuracy_mean,
            runs.len()
        ),
    )
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn pipeline(dir: &Path, threads: &str) -> bool {
    let steps: [&[&str]; 4] = [
        &["dataset", "--n-per-class", "60"],
        &["train", "--train.epochs", "3", "--train.hidden", "64"],
        &["sample", "--count", "4", "--seed", "5"],
        &[
            "sweep", "--eval.real_counts", "[40, 80]", "--eval.seeds", "[1, 2]", "--eval.pool_per_class", "70",
        ],
    ];
    steps.iter().all(|args| {
        Command::new(env!("CARGO_BIN_EXE_rectiflow"))
            .args(*args)
            .args(["--threads", threads])
            .current_dir(dir)
            .env_remove("RECTIFLOW_OUT")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    })
}

/// The echoed config minus the worker count, which is the one thing the two
/// runs vary.
fn without_threads(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v["run"].as_object_mut().unwrap().remove("threads");
    v
}

fn ac9() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    if !(pipeline(a.path(), "1") && pipeline(b.path(), "2")) {
        return (false, "pipeline command failed".into());
    }
    let (first, second) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<&String> = first
        .keys()
        .filter(|k| match (first.get(*k), second.get(*k)) {
            (Some(x), Some(y)) if k.ends_with("run_config.json") => without_threads(x) != without_threads(y),
            (x, y) => x != y,
        })
        .collect();
    let has = |suffix: &str| first.keys().filter(|k| k.ends_with(suffix)).count();
    let ok = differing.is_empty() && first.len() == second.len() && has(".ckpt") == 1 && has(".csv") > 0;
    (
        ok,
        format!(
            "{} files ({} images, {} checkpoints, {} csv) byte-identical across runs with 1 and 2 threads; differing {differing:?}",
            first.len(),
            has(".ppm"),
            has(".ckpt"),
            has(".csv")
        ),
    )
}

fn ac10() -> Outcome {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut matched = 0;
    let mut total = 0;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                for label in Label::ALL {
                    let params = LesionParams {
                        asymmetry: a,
                        border_irregularity: b,
                        color_variation: c,
                        label,
                        seed: 0,
                    };
                    let bucket = |v: f64| {
                        if v * 3.0 < 1.0 {
                            0
                        } else if v * 3.0 < 2.0 {
                            1
                        } else {
                            2
                        }
                    };
                    let mut direct = [0.0; 10];
                    direct[bucket(a)] = 1.0;
                    direct[3 + bucket(b)] = 1.0;
                    direct[6 + bucket(c)] = 1.0;
                    direct[9] = (label == Label::Malignant) as u8 as f64;
                    total += 1;
                    if encode_caption(&caption(&params).text).map(|v| *v.values() == direct).unwrap_or(false) {
                        matched += 1;
                    }
                }
            }
        }
    }
    let prompt_ok = Label::ALL.iter().all(|&l| {
        encode_caption(&generation_prompt(l)).ok() == Some(ConditionVector::new([Level::Medium; 3], l))
    }) && encode_caption(&SampleSpec::default().prompt).ok()
        == Some(ConditionVector::new([Level::Medium; 3], Label::Malignant));
    (
        matched == total && total == 2662 && prompt_ok,
        format!("{matched}/{total} grid captions round-trip, label-only prompt -> medium levels {prompt_ok}"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name, outcome: Outcome| {
        println!("{name} {} {}", if outcome.0 { "PASS" } else { "FAIL" }, outcome.1);
        results.push((name, outcome));
    };
    report("AC1", ac1());
    report("AC2", ac2());
    report("AC3", ac3());
    report("AC5", ac5());
    report("AC10", ac10());

    let dir = tempfile::tempdir().unwrap();
    let manifest = build_dataset(&DatasetConfig::default(), dir.path()).unwrap();
    let train = TrainingSet::load(&manifest, Split::Train, 16, None).unwrap();
    let (outcome, base) = ac6(&train);
    report("AC6", outcome);
    report("AC4", ac4(&base, &train));
    report("AC7", ac7(&manifest));
    report("AC8", ac8(&manifest, &base));
    report("AC9", ac9());

    let failed: Vec<&str> = results.iter().filter(|r| !r.1 .0).map(|r| r.0).collect();
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
