use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use circuitlearn::circuit::{parse_bits, Circuit, GateFn, InfluenceMode, InfluenceReading};

use crate::manifest::{resolve, Run};
use crate::{CmdResult, Ctx, Failure};

#[derive(Subcommand, Debug)]
pub enum CircuitCmd {
    /// Write a circuit file.
    Gen {
        #[arg(long, value_enum)]
        kind: Option<CircuitKind>,
        #[arg(long)]
        depth: Option<usize>,
        /// Parity coordinates (0-based), comma separated.
        #[arg(long, value_delimiter = ',')]
        relevant: Option<Vec<usize>>,
        /// Gate for `uniform`: a name (AND, OR, NAND, NOR, XOR, ...) or a
        /// 4-character table.
        #[arg(long)]
        gate: Option<String>,
        /// Gate choices for `random`.
        #[arg(long, value_delimiter = ',')]
        gates: Option<Vec<String>>,
        /// Size parameter of the depth-separation formula.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Evaluate a circuit on one input.
    Eval {
        #[arg(long)]
        circuit: PathBuf,
        /// Input bits, e.g. `1,-1,1,1`.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Node influences at one level or all levels.
    Influence {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, value_enum, default_value = "analytic")]
        mode: InfluenceModeArg,
        /// Samples per node in Monte Carlo mode.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Measure against the parent gate only instead of the root.
        #[arg(long)]
        single_level: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitKind {
    Parity,
    Uniform,
    Random,
    Fm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InfluenceModeArg {
    Analytic,
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GenParams {
    kind: CircuitKind,
    depth: usize,
    relevant: Vec<usize>,
    gate: String,
    gates: Vec<String>,
    m: usize,
    seed: u64,
}

/// A gate by name (case-insensitive) or by its `+`/`-` table.
pub fn parse_gate(s: &str) -> anyhow::Result<GateFn> {
    let upper = s.to_ascii_uppercase();
    if let Some(g) = GateFn::all().find(|g| g.name() == Some(upper.as_str())) {
        return Ok(g);
    }
    s.parse::<GateFn>().map_err(|e| anyhow!("unknown gate {s:?}: {e}"))
}

pub fn load_circuit(path: &Path) -> anyhow::Result<Circuit> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Circuit::from_json(&text).with_context(|| format!("parsing circuit file {}", path.display()))
}

pub fn run(ctx: &Ctx, cmd: CircuitCmd) -> CmdResult {
    match cmd {
        CircuitCmd::Gen {
            kind,
            depth,
            relevant,
            gate,
            gates,
            m,
        } => {
            let defaults = GenParams {
                kind: CircuitKind::Random,
                depth: 3,
                relevant: vec![0],
                gate: "AND".into(),
                gates: ["AND", "OR", "NAND", "NOR"].map(String::from).to_vec(),
                m: 1,
                seed: ctx.seed(),
            };
            let flags = json!({"kind": kind, "depth": depth, "relevant": relevant, "gate": gate,
                               "gates": gates, "m": m, "seed": ctx.global.seed});
            let p: GenParams = resolve(&defaults, ctx.config.section("circuit_gen"), flags)?;
            let c = match p.kind {
                CircuitKind::Parity => Circuit::parity(p.depth, &p.relevant)?,
                CircuitKind::Uniform => Circuit::uniform(p.depth, parse_gate(&p.gate)?)?,
                CircuitKind::Random => {
                    let choices = p.gates.iter().map(|g| parse_gate(g)).collect::<anyhow::Result<Vec<_>>>()?;
                    if choices.is_empty() {
                        return Err(Failure::Usage(anyhow!("--gates needs at least one gate")));
                    }
                    Circuit::random(p.depth, &choices, &mut ChaCha8Rng::seed_from_u64(p.seed))?
                }
                CircuitKind::Fm => Circuit::fm(p.m)?,
            };
            let mut run = Run::new("circuit gen", &ctx.global.out, p.seed, ctx.global.threads)?;
            run.config("circuit_gen", &p)?;
            let path = run.write("circuit.json", (c.to_json() + "\n").as_bytes())?;
            println!("{}", path.display());
            run.finish("ok")?;
            Ok(())
        }
        CircuitCmd::Eval { circuit, x } => {
            let c = load_circuit(&circuit)?;
            let bits = parse_bits(&x)?;
            if bits.len() != c.n_inputs() {
                return Err(Failure::Usage(anyhow!(
                    "x has {} bits but the circuit reads {}",
                    bits.len(),
                    c.n_inputs()
                )));
            }
            let y = c.eval(&bits)?;
            let mut run = Run::new("circuit eval", &ctx.global.out, ctx.seed(), ctx.global.threads)?;
            run.input(&circuit)?;
            run.config("circuit_eval", &json!({"x": x}))?;
            run.write_json("eval.json", &json!({"x": bits.iter().map(|b| b.value()).collect::<Vec<_>>(), "output": y.value()}))?;
            println!("{}", y.value());
            run.finish("ok")?;
            Ok(())
        }
        CircuitCmd::Influence {
            circuit,
            level,
            mode,
            samples,
            single_level,
        } => {
            let c = load_circuit(&circuit)?;
            let seed = ctx.seed();
            let m = match mode {
                InfluenceModeArg::Analytic => InfluenceMode::Analytic,
                InfluenceModeArg::Exact => InfluenceMode::exact(),
                InfluenceModeArg::MonteCarlo => InfluenceMode::MonteCarlo { samples, seed },
            };
            let reading = if single_level {
                InfluenceReading::SingleLevel
            } else {
                InfluenceReading::RemainingCircuit
            };
            let levels: Vec<usize> = match level {
                Some(l) => vec![l],
                None => (0..=c.depth()).collect(),
            };
            let mut rows = Vec::new();
            for l in levels {
                for (position, est) in c.level_influences(l, m, reading)?.into_iter().enumerate() {
                    rows.push(json!({"level": l, "position": position, "influence": est.value,
                                     "std_error": est.std_error, "exact": est.exact}));
                }
            }
            let mut run = Run::new("circuit influence", &ctx.global.out, seed, ctx.global.threads)?;
            run.input(&circuit)?;
            run.config("circuit_influence", &json!({"mode": m, "reading": reading, "level": level}))?;
            let path = run.write_json("influence.json", &rows)?;
            println!("{}", path.display());
            run.finish("ok")?;
            Ok(())
        }
    }
}
