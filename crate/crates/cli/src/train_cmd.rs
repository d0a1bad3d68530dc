use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Subcommand;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use circuitlearn::baseline::{run_baseline, BaselineConfig};
use circuitlearn::dist::{certify_properties, read_dataset, DiscreteDistribution, Labeled};
use circuitlearn::train::{
    derive_hyperparams, train_layerwise, verify_recovery, AlignmentTarget, GradientSource, TrainConfig, Variant,
};

use crate::dist_cmd::{load_labeled, SourceArgs};
use crate::manifest::{resolve, Run};
use crate::{CmdResult, Ctx};

#[derive(Subcommand, Debug)]
pub enum TrainCmd {
    /// Train blocks bottom-up on a labeled distribution and check recovery.
    Layerwise(Box<LayerwiseArgs>),
    /// Depth-two ReLU network trained with Adam on a sparse parity.
    Baseline(Box<BaselineArgs>),
}

#[derive(clap::Args, Debug)]
pub struct LayerwiseArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// `population` (exact gradients) or `sample`.
    #[arg(long)]
    pub gradient: Option<String>,
    /// Training set for sample mode; drawn from the spec when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of samples drawn in sample mode without `--data`.
    #[arg(long)]
    pub samples: Option<usize>,
    /// `product` or `structured`; defaults from the spec kind.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub delta_confidence: Option<f64>,
    /// Correlation margin; defaults to the certified value.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Pattern probability bound; defaults to the certified value.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Run the alignment diagnostic every this many steps.
    #[arg(long)]
    pub alignment_every: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Step cap per layer.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub allow_large_init: bool,
    #[arg(long)]
    pub per_layer_eta: bool,
    #[arg(long)]
    pub log_every: Option<u64>,
}

#[derive(clap::Args, Debug)]
pub struct BaselineArgs {
    /// `P[x_j = +1]`.
    #[arg(long)]
    pub p: Option<f64>,
    /// Run several seeds; overrides `--seed`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// `hinge` or `logistic`.
    #[arg(long)]
    pub loss: Option<String>,
    /// `fan_in` or `glorot`.
    #[arg(long)]
    pub init: Option<String>,
    /// Adam step size.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Train on a fixed sample of this size.
    #[arg(long)]
    pub fixed_dataset: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LayerwiseParams {
    gradient: GradientSource,
    samples: usize,
    variant: Option<Variant>,
    delta_confidence: f64,
    delta: Option<f64>,
    epsilon: Option<f64>,
    alignment_every: Option<u64>,
}

/// Largest margin handed to the hyperparameter derivation, which needs
/// `Delta < 1/2`.
const DELTA_CEILING: f64 = 0.49;

fn loss_curves_csv(outcome: &circuitlearn::train::TrainOutcome) -> String {
    let mut s = String::from("layer,step,loss\n");
    for t in &outcome.layers {
        for (step, loss) in &t.loss_curve {
            s.push_str(&format!("{},{step},{loss}\n", t.layer));
        }
    }
    s
}

fn layerwise(ctx: &Ctx, a: LayerwiseArgs) -> CmdResult {
    let seed = ctx.seed();
    let defaults = LayerwiseParams {
        gradient: GradientSource::Population,
        samples: 50_000,
        variant: None,
        delta_confidence: 0.1,
        delta: None,
        epsilon: None,
        alignment_every: None,
    };
    let flags = json!({"gradient": a.gradient, "samples": a.samples, "variant": a.variant,
                       "delta_confidence": a.delta_confidence, "delta": a.delta, "epsilon": a.epsilon,
                       "alignment_every": a.alignment_every});
    let p: LayerwiseParams = resolve(&defaults, ctx.config.section("layerwise"), flags)?;
    let mut run = Run::new("train layerwise", &ctx.global.out, seed, ctx.global.threads)?;
    let labeled = load_labeled(&a.source, &mut run)?;
    let c = labeled.circuit().clone();
    let exact = labeled.enumerate().ok();

    let data: DiscreteDistribution = match p.gradient {
        GradientSource::Population => exact
            .clone()
            .ok_or_else(|| anyhow!("population mode needs an exactly enumerable distribution"))?,
        GradientSource::Sample => {
            let samples = match &a.data {
                Some(path) => {
                    run.input(path)?;
                    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                    read_dataset(f)?
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(1);
                    labeled.sample_n(p.samples, &mut rng)
                }
            };
            DiscreteDistribution::from_samples(&samples)?
        }
    };

    let certificate = match &exact {
        Some(e) => certify_properties(&e.chain(&c)?, &c)?.properties,
        None => None,
    };
    let nondegeneracy = match &labeled {
        Labeled::Product(lp) => lp.inputs.non_degeneracy(),
        Labeled::Generative(_) => 1.0,
    };
    let delta = match p.delta {
        Some(d) => d,
        None => certificate
            .as_ref()
            .and_then(|c| c.delta_certified)
            .ok_or_else(|| anyhow!("no certified Delta; pass --delta"))?
            .min(nondegeneracy)
            .min(DELTA_CEILING),
    };
    let epsilon = p.epsilon.or(certificate.as_ref().and_then(|c| c.epsilon_certified));
    let variant = p.variant.unwrap_or(match labeled {
        Labeled::Product(_) => Variant::Product,
        Labeled::Generative(_) => Variant::Structured,
    });
    let mut cfg = derive_hyperparams(c.n_inputs(), c.depth(), p.delta_confidence, delta, epsilon, data.mean_label(), variant)?;
    cfg.seed = seed;
    cfg.source = p.gradient;
    let flags = json!({"k": a.k, "eta": a.eta, "lambda": a.lambda, "steps": a.steps, "init_scale": a.init_scale,
                       "allow_large_init": a.allow_large_init.then_some(true),
                       "per_layer_eta": a.per_layer_eta.then_some(true), "log_every": a.log_every,
                       "seed": ctx.global.seed});
    let cfg: TrainConfig = resolve(&cfg, ctx.config.section("train"), flags)?;
    run.config("layerwise", &p)?;
    run.config("train", &cfg)?;

    let alignment = match (p.alignment_every, p.gradient) {
        (Some(every), GradientSource::Population) => Some(AlignmentTarget {
            circuit: &c,
            epsilon: epsilon.ok_or_else(|| anyhow!("the alignment diagnostic needs epsilon"))?,
            delta,
            every,
        }),
        _ => None,
    };
    let outcome = train_layerwise(&data, &cfg, alignment)?;
    let reference = exact.as_ref().unwrap_or(&data);
    let recovery = verify_recovery(&outcome.net, &c, reference)?;

    run.write("checkpoint.json", (outcome.net.to_json() + "\n").as_bytes())?;
    run.write("loss_curves.csv", loss_curves_csv(&outcome).as_bytes())?;
    let layers: Vec<_> = outcome
        .layers
        .iter()
        .map(|t| json!({"layer": t.layer, "seed": t.seed, "eta": t.eta, "steps_run": t.steps_run,
                        "stop": t.stop, "distinct_points": t.distinct_points, "init_warning": t.init_warning}))
        .collect();
    run.write_json(
        "train.json",
        &json!({"config": outcome.config, "layers": layers, "alignment": outcome.alignment}),
    )?;
    run.write("recovery.json", (recovery.to_json() + "\n").as_bytes())?;
    println!(
        "recovered: {}  error: {}  steps per layer: {:?}",
        recovery.recovered(),
        recovery.error.map_or("n/a".to_string(), |e| e.to_string()),
        outcome.layers.iter().map(|t| t.steps_run).collect::<Vec<_>>()
    );
    run.finish("ok")?;
    Ok(())
}

fn baseline(ctx: &Ctx, a: BaselineArgs) -> CmdResult {
    let defaults = BaselineConfig::new(0.5, ctx.seed());
    let flags = json!({"p": a.p, "n": a.n, "k": a.k, "hidden": a.hidden, "iters": a.iters, "batch": a.batch,
                       "eval_every": a.eval_every, "test_size": a.test_size, "loss": a.loss, "init": a.init,
                       "fixed_dataset": a.fixed_dataset, "seed": ctx.global.seed, "adam": {"alpha": a.alpha}});
    let base: BaselineConfig = resolve(&defaults, ctx.config.section("baseline"), flags)?;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![base.seed]);
    let configs: Vec<BaselineConfig> = seeds
        .iter()
        .map(|&seed| BaselineConfig { seed, ..base.clone() })
        .collect();
    let mut run = Run::new("train baseline", &ctx.global.out, base.seed, ctx.global.threads)?;
    run.config("baseline", &base)?;
    if a.seeds.is_some() {
        run.config("baseline_seeds", &seeds)?;
    }
    let results = configs.par_iter().map(run_baseline).collect::<Result<Vec<_>, _>>()?;
    for r in &results {
        let suffix = if a.seeds.is_some() {
            format!("_seed{}", r.config.seed)
        } else {
            String::new()
        };
        run.write(&format!("curve{suffix}.csv"), r.to_csv().as_bytes())?;
        run.write_json(&format!("baseline{suffix}.json"), r)?;
        let last = r.curve.last().map_or(f64::NAN, |c| c.1);
        println!("seed {}: final accuracy {last}", r.config.seed);
    }
    run.finish("ok")?;
    Ok(())
}

pub fn run(ctx: &Ctx, cmd: TrainCmd) -> CmdResult {
    match cmd {
        TrainCmd::Layerwise(a) => layerwise(ctx, *a),
        TrainCmd::Baseline(a) => baseline(ctx, *a),
    }
}
