//! Finite-difference checks of every layer and loss on small random
//! networks. Each check returns the worst relative error it saw.

use rand::Rng;
use rand_distr::StandardNormal;
use xdsv::losses::{
    adaptation_objective, cross_entropy_grad, discrepancy_loss, head_objective, mmd_pair_grad, DomainBatch, Kernel,
    LabeledBatch,
};
use xdsv::model::{
    classifier_backward, classifier_forward, extractor_backward, extractor_forward, head_backward, head_forward,
    lde_backward, lde_forward, subnet_backward, subnet_forward, ExtractorConfig, LdeConfig, Model, ModelConfig,
    SubnetConfig, SubnetStage, Trainable,
};
use xdsv::numkit::{grad_check, GradCheck, ParamMap, Tensor};
use xdsv::rng::{SeedTree, StreamRng};

const EPS: f64 = 1e-6;
const SPEAKERS: usize = 3;
const DOMAINS: usize = 3;

fn randn(rng: &mut StreamRng, dims: &[usize], scale: f64) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn micro_config(rng: &mut StreamRng) -> ModelConfig {
    let mut d = [0usize; 8];
    d.iter_mut().for_each(|v| *v = rng.gen_range(2..5));
    let group_dims = [d[0], d[1], d[2], d[3]];
    let (phi1, phi2) = ([d[4], d[5]], [d[6], d[7]]);
    ModelConfig {
        extractor: ExtractorConfig {
            input_dim: rng.gen_range(2..4),
            group_dims,
            context: [rng.gen_range(0..3), rng.gen_range(0..2), rng.gen_range(0..2), 0],
        },
        lde: LdeConfig {
            num_components: rng.gen_range(2..4),
        },
        subnet: SubnetConfig {
            phi1_dims: phi1,
            phi2_dims: phi2,
        },
    }
}

/// A fully populated random model: extractor, LDE with a random
/// dictionary, head, and a `DOMAINS`-domain adaptation block.
fn micro_model(seed: u64) -> (Model, StreamRng) {
    let seeds = SeedTree::new(seed);
    let mut rng = seeds.get("micro", 0);
    let cfg = micro_config(&mut rng);
    let mut model = Model::new(cfg.clone(), SPEAKERS, &seeds).unwrap();
    model.add_adaptation_block(DOMAINS, SPEAKERS, &seeds).unwrap();
    let k = cfg.lde.num_components;
    let d = cfg.extractor.output_dim();
    model.params.insert("lde.dict".into(), randn(&mut rng, &[k, d], 0.5));
    model.params.insert("lde.log_scale".into(), randn(&mut rng, &[k], 0.3));
    // nonzero biases keep every ReLU input away from exact zeros
    let biases: Vec<String> = model.params.keys().filter(|k| k.ends_with(".b")).cloned().collect();
    for b in biases {
        let n = model.params[&b].len();
        model.params.insert(b, randn(&mut rng, &[n], 0.2));
    }
    (model, rng)
}

fn frames(rng: &mut StreamRng, cfg: &ModelConfig) -> Tensor {
    let t = rng.gen_range(3..7);
    randn(rng, &[t, cfg.extractor.input_dim], 1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn subset(params: &ParamMap, pred: impl Fn(&str) -> bool) -> ParamMap {
    params.iter().filter(|(k, _)| pred(k)).map(|(k, v)| (k.clone(), v.clone())).collect()
}

fn merged(base: &ParamMap, over: &ParamMap) -> ParamMap {
    let mut p = base.clone();
    for (k, v) in over {
        p.insert(k.clone(), v.clone());
    }
    p
}

fn checked(r: GradCheck) -> f64 {
    assert!(r.coordinates > 0, "nothing checked");
    r.max_rel_err
}

pub fn extractor_groups(seed: u64) -> f64 {
    let (model, mut rng) = micro_model(seed);
    let cfg = model.config.clone();
    let x = frames(&mut rng, &cfg);
    let probe = randn(&mut rng, &[x.rows(), cfg.extractor.output_dim()], 1.0);
    let mut point = subset(&model.params, |k| k.starts_with("group"));
    point.insert("input".into(), x);
    let r = grad_check(
        |p| {
            let c = extractor_forward(&p["input"], p, &cfg.extractor)?;
            let mut g = ParamMap::new();
            let dx = extractor_backward(&c, &probe, p, &cfg.extractor, 0, &mut g).unwrap();
            g.insert("input".into(), dx);
            Ok((dot(c.output().data(), probe.data()), g))
        },
        &point,
        EPS,
    )
    .unwrap();
    checked(r)
}

pub fn lde_pooling(seed: u64) -> f64 {
    let (model, mut rng) = micro_model(seed);
    let cfg = model.config.clone();
    let t = rng.gen_range(3..7);
    let mut point = subset(&model.params, |k| k.starts_with("lde"));
    point.insert("frames".into(), randn(&mut rng, &[t, cfg.extractor.output_dim()], 1.0));
    let probe: Vec<f64> = (0..cfg.lde_output_dim()).map(|_| rng.sample(StandardNormal)).collect();
    let r = grad_check(
        |p| {
            let (out, cache) = lde_forward(&p["frames"], p)?;
            let mut g = ParamMap::new();
            let df = lde_backward(&p["frames"], &cache, &probe, p, true, &mut g);
            g.insert("frames".into(), df);
            Ok((dot(&out, &probe), g))
        },
        &point,
        EPS,
    )
    .unwrap();
    checked(r)
}

pub fn subnets_with_both_taps(seed: u64) -> f64 {
    let (model, mut rng) = micro_model(seed);
    let cfg = model.config.clone();
    let h = 1 + (seed as usize % DOMAINS);
    let n = rng.gen_range(2..5);
    let rest = model.params.clone();
    let prefix = format!("subnet{h}.");
    let mut point = subset(&model.params, |k| k.starts_with(&prefix));
    assert!(!point.is_empty(), "no parameters named {prefix}*");
    point.insert("input".into(), randn(&mut rng, &[n, cfg.lde_output_dim()], 1.0));
    let p1 = randn(&mut rng, &[n, cfg.subnet.phi1_dims[1]], 1.0);
    let p2 = randn(&mut rng, &[n, cfg.subnet.embedding_dim()], 1.0);
    let r = grad_check(
        |p| {
            let p = &merged(&rest, p);
            let c = subnet_forward(&p["input"], p, h, SubnetStage::Full)?;
            let value = dot(c.phi1().data(), p1.data()) + dot(c.output().data(), p2.data());
            let mut g = ParamMap::new();
            let dx = subnet_backward(&c, Some(&p1), Some(&p2), p, &mut g);
            g.insert("input".into(), dx);
            Ok((value, g))
        },
        &point,
        EPS,
    )
    .unwrap();
    checked(r)
}

pub fn classifiers_and_head(seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let (model, mut rng) = micro_model(seed);
    let cfg = model.config.clone();
    let h = 1 + (seed as usize % DOMAINS);
    let n = rng.gen_range(2..5);
    let rest = model.params.clone();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..SPEAKERS)).collect();

    let cw = format!("classifier{h}.");
    let mut point = subset(&model.params, |k| k.starts_with(&cw));
    assert!(!point.is_empty(), "no parameters named {cw}*");
    point.insert("input".into(), randn(&mut rng, &[n, cfg.subnet.embedding_dim()], 1.0));
    let r = grad_check(
        |p| {
            let p = &merged(&rest, p);
            let logits = classifier_forward(&p["input"], p, h)?;
            let (v, dl) = cross_entropy_grad(&logits, &labels)?;
            let mut g = ParamMap::new();
            let dx = classifier_backward(&p["input"], &dl, p, h, &mut g);
            g.insert("input".into(), dx);
            Ok((v, g))
        },
        &point,
        EPS,
    )
    .unwrap();
    worst = worst.max(checked(r));

    let mut point = subset(&model.params, |k| k.starts_with("head"));
    point.insert("input".into(), randn(&mut rng, &[n, cfg.lde_output_dim()], 1.0));
    let r = grad_check(
        |p| {
            let logits = head_forward(&p["input"], p)?;
            let (v, dl) = cross_entropy_grad(&logits, &labels)?;
            let mut g = ParamMap::new();
            let dx = head_backward(&p["input"], &dl, p, true, &mut g);
            g.insert("input".into(), dx);
            Ok((v, g))
        },
        &point,
        EPS,
    )
    .unwrap();
    worst = worst.max(checked(r));
    worst
}

fn stacked(p: &ParamMap, prefix: &str, n: usize) -> Vec<Tensor> {
    (0..n).map(|i| p[&format!("{prefix}{i}")].clone()).collect()
}

pub fn discrepancy_loss_gradient(seed: u64) -> f64 {
    let mut rng = SeedTree::new(seed).get("dis", 0);
    let n = 2 + seed as usize % 3;
    let (rows, cols) = (rng.gen_range(1..4), rng.gen_range(1..5));
    let point: ParamMap = (0..n).map(|i| (format!("o{i}"), randn(&mut rng, &[rows, cols], 1.0))).collect();
    let r = grad_check(
        |p| {
            let (v, g) = discrepancy_loss(&stacked(p, "o", n))?;
            Ok((v, g.into_iter().enumerate().map(|(i, t)| (format!("o{i}"), t)).collect()))
        },
        &point,
        EPS,
    )
    .unwrap();
    checked(r)
}

pub fn mmd_gradients_linear_and_rbf(seed: u64) -> f64 {
    let mut rng = SeedTree::new(seed).get("mmd", 0);
    let d = rng.gen_range(1..4);
    let (n, m) = (rng.gen_range(2..6), rng.gen_range(2..6));
    let mut point = ParamMap::new();
    point.insert("s".into(), randn(&mut rng, &[n, d], 1.0));
    point.insert("t".into(), randn(&mut rng, &[m, d], 1.0));
    let bw: f64 = rng.gen_range(0.5..2.0);
    let mut worst = 0.0f64;
    for kernel in [Kernel::Linear, Kernel::Rbf { bandwidth: Some(bw) }] {
        let r = grad_check(
            |p| {
                let (v, ds, dt) = mmd_pair_grad(&p["s"], &p["t"], kernel)?;
                Ok((v, [("s".to_string(), ds), ("t".to_string(), dt)].into_iter().collect()))
            },
            &point,
            EPS,
        )
        .unwrap();
        worst = worst.max(checked(r));
    }
    worst
}

fn labeled(rng: &mut StreamRng, cfg: &ModelConfig, n: usize) -> LabeledBatch {
    LabeledBatch {
        features: (0..n).map(|_| frames(rng, cfg)).collect(),
        labels: (0..n).map(|_| rng.gen_range(0..SPEAKERS)).collect(),
    }
}

pub fn classification_objective_through_phi0(seed: u64) -> f64 {
    let (model, mut rng) = micro_model(seed);
    let cfg = model.config.clone();
    let batch = labeled(&mut rng, &cfg, 3);
    let point = subset(&model.params, |k| !k.starts_with("subnet") && !k.starts_with("classifier"));
    let rest = model.params.clone();
    let r = grad_check(
        |p| head_objective(&batch, &merged(&rest, p), &cfg, Trainable::all()),
        &point,
        EPS,
    )
    .unwrap();
    checked(r)
}

pub fn composite_adaptation_objective(seed: u64) -> f64 {
    let (model, mut rng) = micro_model(seed);
    let cfg = model.config.clone();
    let batch = DomainBatch {
        source: labeled(&mut rng, &cfg, 3),
        targets: (0..DOMAINS).map(|_| labeled(&mut rng, &cfg, 2 + seed as usize % 2)).collect(),
    };
    let mu: f64 = rng.gen_range(0.1..1.0);
    let kernel = if seed.is_multiple_of(2) {
        Kernel::Linear
    } else {
        Kernel::Rbf { bandwidth: Some(rng.gen_range(0.5..3.0)) }
    };
    // the pretraining head takes no part in adaptation
    let point = subset(&model.params, |k| !k.starts_with("head"));
    let rest = model.params.clone();
    let r = grad_check(
        |p| {
            adaptation_objective(&batch, &merged(&rest, p), &cfg, mu, kernel, Trainable::all())
                .map(|(l, g)| (l.total, g))
        },
        &point,
        EPS,
    )
    .unwrap();
    checked(r)
}

pub type Check = (&'static str, fn(u64) -> f64);

/// Every layer and loss check, by name.
pub const CHECKS: [Check; 8] = [
    ("extractor groups", extractor_groups),
    ("LDE pooling", lde_pooling),
    ("subnets", subnets_with_both_taps),
    ("classifiers and head", classifiers_and_head),
    ("discrepancy loss", discrepancy_loss_gradient),
    ("MMD linear and RBF", mmd_gradients_linear_and_rbf),
    ("classification through the backbone", classification_objective_through_phi0),
    ("composite adaptation objective", composite_adaptation_objective),
];
