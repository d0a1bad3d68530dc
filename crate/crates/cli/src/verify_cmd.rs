use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Subcommand;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use circuitlearn::analysis::{
    rank_bound_check, run_lemma_suite, LemmaScope, LemmaSuiteConfig, QuantizedShallowNet, RankReport,
};
use circuitlearn::net::LayeredNet;
use circuitlearn::train::verify_recovery;

use crate::dist_cmd::{load_labeled, SourceArgs};
use crate::manifest::{resolve, Run};
use crate::{CmdResult, Ctx, Failure};

#[derive(Subcommand, Debug)]
pub enum VerifyCmd {
    /// Run the suite of exact structural checks.
    Lemmas {
        /// `all` or one check name.
        #[arg(long)]
        scope: Option<String>,
        /// Largest circuit depth used (at most 4).
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        parity_circuits: Option<usize>,
        #[arg(long)]
        parity_products: Option<usize>,
        #[arg(long)]
        generative_circuits: Option<usize>,
    },
    /// Check a trained checkpoint against a circuit and distribution.
    Recovery {
        #[arg(long)]
        net: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Rank of quantized shallow nets against `4 B k n'`.
    Rankbound {
        /// Check one net from a JSON file instead of random ones.
        #[arg(long)]
        net: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        max_half_dim: Option<usize>,
        #[arg(long)]
        max_width: Option<usize>,
        #[arg(long)]
        max_b: Option<i64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RankParams {
    count: usize,
    max_half_dim: usize,
    max_width: usize,
    max_b: i64,
    seed: u64,
}

#[derive(Serialize)]
struct RankEntry<'a> {
    net: &'a QuantizedShallowNet,
    report: RankReport,
}

fn random_rank_nets(p: &RankParams) -> Vec<QuantizedShallowNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    (0..p.count)
        .map(|_| {
            let n = rng.gen_range(1..=p.max_half_dim);
            let k = rng.gen_range(1..=p.max_width);
            let b = rng.gen_range(1..=p.max_b);
            QuantizedShallowNet::random(n, k, b, &mut rng)
        })
        .collect()
}

pub fn run(ctx: &Ctx, cmd: VerifyCmd) -> CmdResult {
    match cmd {
        VerifyCmd::Lemmas {
            scope,
            depth,
            parity_circuits,
            parity_products,
            generative_circuits,
        } => {
            let defaults = LemmaSuiteConfig {
                seed: ctx.seed(),
                ..LemmaSuiteConfig::default()
            };
            let scope = scope.map(|s| s.parse::<LemmaScope>()).transpose()?;
            let flags = json!({"scope": scope, "max_depth": depth, "parity_circuits": parity_circuits,
                               "parity_products": parity_products, "generative_circuits": generative_circuits,
                               "seed": ctx.global.seed});
            let cfg: LemmaSuiteConfig = resolve(&defaults, ctx.config.section("lemmas"), flags)?;
            let mut run = Run::new("verify lemmas", &ctx.global.out, cfg.seed, ctx.global.threads)?;
            run.config("lemmas", &cfg)?;
            let report = run_lemma_suite(&cfg)?;
            run.write_json("verdicts.json", &report.verdicts)?;
            run.write_json("summary.json", &report.summaries)?;
            for s in &report.summaries {
                println!("{:<24} {:>4}/{:<4} min margin {:e}", s.lemma, s.passed, s.instances, s.min_margin);
            }
            run.finish(if report.pass { "ok" } else { "verification_failed" })?;
            if !report.pass {
                let failed = report.verdicts.iter().filter(|v| !v.pass).count();
                return Err(Failure::Verification(format!("{failed} verdicts failed")));
            }
            Ok(())
        }
        VerifyCmd::Recovery { net, source } => {
            let mut run = Run::new("verify recovery", &ctx.global.out, ctx.seed(), ctx.global.threads)?;
            run.input(&net)?;
            let text = std::fs::read_to_string(&net).with_context(|| format!("reading {}", net.display()))?;
            let model = LayeredNet::from_json(&text).with_context(|| format!("parsing checkpoint {}", net.display()))?;
            let labeled = load_labeled(&source, &mut run)?;
            let data = labeled.enumerate()?;
            let report = verify_recovery(&model, labeled.circuit(), &data)?;
            run.write("recovery.json", (report.to_json() + "\n").as_bytes())?;
            println!("recovered: {}", report.recovered());
            let ok = report.recovered();
            run.finish(if ok { "ok" } else { "verification_failed" })?;
            if !ok {
                return Err(Failure::Verification(format!("net not recovered (error {:?})", report.error)));
            }
            Ok(())
        }
        VerifyCmd::Rankbound {
            net,
            count,
            max_half_dim,
            max_width,
            max_b,
        } => {
            let defaults = RankParams {
                count: 200,
                max_half_dim: 5,
                max_width: 16,
                max_b: 3,
                seed: ctx.seed(),
            };
            let flags = json!({"count": count, "max_half_dim": max_half_dim, "max_width": max_width,
                               "max_b": max_b, "seed": ctx.global.seed});
            let p: RankParams = resolve(&defaults, ctx.config.section("rankbound"), flags)?;
            let mut run = Run::new("verify rankbound", &ctx.global.out, p.seed, ctx.global.threads)?;
            let nets = match &net {
                Some(path) => {
                    run.input(path)?;
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let raw: QuantizedShallowNet = serde_json::from_str(&text)?;
                    vec![QuantizedShallowNet::new(raw.half_dim, raw.bound, raw.w, raw.v, raw.b, raw.u)?]
                }
                None => {
                    if p.max_half_dim == 0 || p.max_width == 0 || p.max_b < 1 {
                        return Err(Failure::Usage(anyhow!("max half dimension, width and B must be positive")));
                    }
                    run.config("rankbound", &p)?;
                    random_rank_nets(&p)
                }
            };
            let reports = nets.par_iter().map(rank_bound_check).collect::<Result<Vec<_>, _>>()?;
            let ok = reports.iter().all(|r| r.pass && r.ranks_agree && r.structure_pass);
            let passed = reports.iter().filter(|r| r.pass).count();
            let agree = reports.iter().filter(|r| r.ranks_agree).count();
            let entries: Vec<RankEntry> = nets
                .iter()
                .zip(reports)
                .map(|(net, report)| RankEntry { net, report })
                .collect();
            run.write_json("rankbound.json", &entries)?;
            println!("{passed}/{} within bound, {agree} exact/numeric agreements", entries.len());
            run.finish(if ok { "ok" } else { "verification_failed" })?;
            if !ok {
                return Err(Failure::Verification("rank bound check failed".into()));
            }
            Ok(())
        }
    }
}
