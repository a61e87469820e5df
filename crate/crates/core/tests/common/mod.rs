//! Shared oracles for the integration tests.
#![allow(dead_code)]

use rectiflow::flowmodel::{flow_matching_objective, FlowBatch, LoraConfig, NetConfig, ParamGroup, VelocityFieldNet};
use rectiflow::numerics::{Rng, Tape, Tensor, Var};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
pub const INSTANCES: usize = 20;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or the absolute error when both are tiny.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

pub fn uniform(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).unwrap()
}

type Build = fn(&Tape, &[Var]) -> Var;
type Make = fn(&mut Rng) -> Vec<Tensor>;

pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub worst: f64,
}

fn random_dims(rng: &mut Rng) -> (usize, usize, usize) {
    (1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4))
}

/// Scalar loss `Σ op(inputs) ⊙ R` for a fixed random projection `R`.
fn projected(tape: &Tape, build: Build, inputs: &[Tensor], projection: &Tensor) -> (Var, Vec<Var>) {
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(tape, &vars);
    let r = tape.constant(projection.reshape(&tape.shape(out)).unwrap());
    let prod = tape.mul(out, r).unwrap();
    (tape.sum(prod).unwrap(), vars)
}

fn loss_value(build: Build, inputs: &[Tensor], projection: &Tensor) -> f64 {
    let tape = Tape::new();
    let (loss, _) = projected(&tape, build, inputs, projection);
    tape.value(loss).item().unwrap()
}

/// Worst relative error over all inputs of one instance.
fn check_instance(build: Build, inputs: Vec<Tensor>, rng: &mut Rng) -> f64 {
    let out_len = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        tape.value(build(&tape, &vars)).numel()
    };
    let projection = uniform(rng, &[out_len]);
    let tape = Tape::new();
    let (loss, vars) = projected(&tape, build, &inputs, &projection);
    let grads = tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).into_vec();
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= STEP;
            numeric.push((loss_value(build, &plus, &projection) - loss_value(build, &minus, &projection)) / (2.0 * STEP));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Every differentiable op, `instances` random instances each.
pub fn op_checks(instances: usize, seed: u64) -> Vec<OpCheck> {
    let mut rng = Rng::new(seed);
    let cases: Vec<(&'static str, Build, Make)> = vec![
        ("add", |t, v| t.add(v[0], v[1]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n]), uniform(r, &[m, n])]
        }),
        ("sub", |t, v| t.sub(v[0], v[1]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n]), uniform(r, &[m, n])]
        }),
        ("mul", |t, v| t.mul(v[0], v[1]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n]), uniform(r, &[m, n])]
        }),
        ("scale", |t, v| t.scale(v[0], -1.7).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n])]
        }),
        ("tanh", |t, v| t.tanh(v[0]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n])]
        }),
        ("softplus", |t, v| t.softplus(v[0]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n])]
        }),
        ("matmul", |t, v| t.matmul(v[0], v[1]).unwrap(), |r| {
            let (m, k, n) = random_dims(r);
            vec![uniform(r, &[m, k]), uniform(r, &[k, n])]
        }),
        ("matmul_nt", |t, v| t.matmul_nt(v[0], v[1]).unwrap(), |r| {
            let (m, k, n) = random_dims(r);
            vec![uniform(r, &[m, k]), uniform(r, &[n, k])]
        }),
        ("add_row", |t, v| t.add_row(v[0], v[1]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n]), uniform(r, &[n])]
        }),
        ("concat_cols", |t, v| t.concat_cols(&[v[0], v[1], v[2]]).unwrap(), |r| {
            let (m, a, b) = random_dims(r);
            vec![uniform(r, &[m, a]), uniform(r, &[m, b]), uniform(r, &[m, 2])]
        }),
        ("sum", |t, v| t.sum(v[0]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n])]
        }),
        ("sum_squares", |t, v| t.sum_squares(v[0]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n])]
        }),
        ("mean", |t, v| t.mean(v[0]).unwrap(), |r| {
            let (m, n, _) = random_dims(r);
            vec![uniform(r, &[m, n])]
        }),
    ];
    cases
        .into_iter()
        .map(|(op, build, make)| {
            let mut worst: f64 = 0.0;
            for _ in 0..instances {
                let inputs = make(&mut rng);
                worst = worst.max(check_instance(build, inputs, &mut rng));
            }
            OpCheck { op, instances, worst }
        })
        .collect()
}

/// Flow-matching loss on a 4-sample batch at `D = 48` (4×4 RGB), checked on
/// a random slice of 24 parameters per instance.
pub fn flow_loss_check(instances: usize, seed: u64, adapters: bool) -> f64 {
    let mut rng = Rng::new(seed);
    let config = NetConfig {
        data_dim: 48,
        hidden: 12,
        resolution: Some(4),
    };
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let mut net = VelocityFieldNet::init(config.clone(), &mut rng);
        if adapters {
            net.attach_lora(&LoraConfig { rank: 3, alpha: 6.0, ..LoraConfig::default() }, &mut rng).unwrap();
            for p in net.parameters_mut(ParamGroup::Adapter) {
                *p = rng.gaussian(p.shape()).scale(0.3);
            }
        }
        let group = net.trainable_group();
        let mut conds = vec![0.0; 4 * 10];
        for (i, row) in conds.chunks_mut(10).enumerate() {
            row[rng.below(3)] = 1.0;
            row[3 + rng.below(3)] = 1.0;
            row[6 + rng.below(3)] = 1.0;
            row[9] = (i % 2) as f64;
        }
        let batch = FlowBatch::new(
            rng.gaussian(&[4, 48]),
            uniform(&mut rng, &[4, 48]).scale(0.5),
            Tensor::new(vec![4, 10], conds).unwrap(),
        )
        .unwrap();
        let ts: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();

        let tape = Tape::new();
        let bound = net.bind_for_training(&tape, group);
        let loss = flow_matching_objective(&tape, &net, &bound, &batch, &ts).unwrap();
        let grads = tape.backward(loss).unwrap();
        let grads: Vec<Tensor> = bound.vars(group).into_iter().map(|v| grads.get(v)).collect();

        let value_at = |net: &VelocityFieldNet| {
            let tape = Tape::new();
            let bound = net.bind_for_training(&tape, group);
            let loss = flow_matching_objective(&tape, net, &bound, &batch, &ts).unwrap();
            tape.value(loss).item().unwrap()
        };
        let sizes: Vec<usize> = grads.iter().map(|g| g.numel()).collect();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for _ in 0..24 {
            let p = rng.below(sizes.len());
            let j = rng.below(sizes[p]);
            analytic.push(grads[p].data()[j]);
            let mut plus = net.clone();
            plus.parameters_mut(group)[p].data_mut()[j] += STEP;
            let mut minus = net.clone();
            minus.parameters_mut(group)[p].data_mut()[j] -= STEP;
            numeric.push((value_at(&plus) - value_at(&minus)) / (2.0 * STEP));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}
