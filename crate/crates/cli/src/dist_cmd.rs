use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Subcommand};
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use circuitlearn::dist::{certify_lca, certify_properties, write_dataset, DiscreteDistribution, DistributionSpec, Labeled};

use crate::circuit_cmd::load_circuit;
use crate::manifest::{resolve, Run};
use crate::{CmdResult, Ctx, Failure};

#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Distribution spec file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Labeling circuit for product specs.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum DistCmd {
    /// Draw a labeled dataset.
    Sample {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Write the exact distribution, one atom per row.
    Enumerate {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Correlations, influences and the structural certificates.
    Certify {
        #[command(flatten)]
        source: SourceArgs,
        /// Also check the local correlation condition at this margin; a
        /// failure exits with status 1.
        #[arg(long)]
        delta: Option<f64>,
    },
}

/// Loads the spec (and circuit) and records both as run inputs.
pub fn load_labeled(source: &SourceArgs, run: &mut Run) -> anyhow::Result<Labeled> {
    let text = std::fs::read_to_string(&source.spec).with_context(|| format!("reading {}", source.spec.display()))?;
    let spec: DistributionSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing spec file {}", source.spec.display()))?;
    run.input(&source.spec)?;
    let circuit = match &source.circuit {
        Some(p) => {
            run.input(p)?;
            Some(load_circuit(p)?)
        }
        None => None,
    };
    Ok(spec.resolve(circuit.as_ref())?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SampleParams {
    count: usize,
    seed: u64,
}

pub fn distribution_csv(d: &DiscreteDistribution) -> String {
    let mut s = String::new();
    for j in 0..d.dim() {
        s.push_str(&format!("x{j},"));
    }
    s.push_str("y,probability,probability_exact\n");
    for (i, a) in d.atoms().iter().enumerate() {
        for b in &a.x {
            s.push_str(&format!("{},", b.value()));
        }
        let p = d.probability(i);
        s.push_str(&format!("{},{},{}\n", a.y.value(), p.to_f64().unwrap_or(f64::NAN), p));
    }
    s
}


fn with_path(p: &Path) -> String {
    p.display().to_string()
}
pub fn run(ctx: &Ctx, cmd: DistCmd) -> CmdResult {
    match cmd {
        DistCmd::Sample { source, count } => {
            let defaults = SampleParams {
                count: 1000,
                seed: ctx.seed(),
            };
            let p: SampleParams = resolve(
                &defaults,
                ctx.config.section("dist_sample"),
                json!({"count": count, "seed": ctx.global.seed}),
            )?;
            let mut run = Run::new("dist sample", &ctx.global.out, p.seed, ctx.global.threads)?;
            let labeled = load_labeled(&source, &mut run)?;
            let samples = labeled.sample_n(p.count, &mut ChaCha8Rng::seed_from_u64(p.seed));
            let mut buf = Vec::new();
            write_dataset(&mut buf, &samples)?;
            run.config("dist_sample", &p)?;
            let path = run.write("samples.csv", &buf)?;
            println!("{}", with_path(&path));
            run.finish("ok")?;
            Ok(())
        }
        DistCmd::Enumerate { source } => {
            let mut run = Run::new("dist enumerate", &ctx.global.out, ctx.seed(), ctx.global.threads)?;
            let d = load_labeled(&source, &mut run)?.enumerate()?;
            let path = run.write("distribution.csv", distribution_csv(&d).as_bytes())?;
            println!("{}", with_path(&path));
            run.finish("ok")?;
            Ok(())
        }
        DistCmd::Certify { source, delta } => {
            let mut run = Run::new("dist certify", &ctx.global.out, ctx.seed(), ctx.global.threads)?;
            let labeled = load_labeled(&source, &mut run)?;
            let c = labeled.circuit().clone();
            let chain = labeled.enumerate()?.chain(&c)?;
            let mut report = certify_properties(&chain, &c)?;
            if let Some(delta) = delta {
                let lca = certify_lca(&chain, &c, delta)?;
                report.nodes = lca.nodes;
                report.lca = lca.lca;
            }
            run.config("dist_certify", &json!({"delta": delta}))?;
            let path = run.write_json("certificate.json", &report)?;
            println!("{}", with_path(&path));
            let lca_failed = report.lca.as_ref().is_some_and(|l| !l.pass);
            run.finish(if lca_failed { "verification_failed" } else { "ok" })?;
            if lca_failed {
                return Err(Failure::Verification(format!(
                    "local correlation fails at {:?}",
                    report.lca.map(|l| l.failures).unwrap_or_default()
                )));
            }
            Ok(())
        }
    }
}
