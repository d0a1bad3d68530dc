use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::Subcommand;
use serde_json::Value;

use circuitlearn::baseline::BaselineResult;

use crate::manifest::Run;
use crate::{CmdResult, Ctx};

#[derive(Subcommand, Debug)]
pub enum ReportCmd {
    /// Convert JSON artifacts into one CSV table. Several baseline results
    /// are merged into one wide table keyed by iteration.
    Render {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Output file name inside `--out`.
        #[arg(long)]
        name: Option<String>,
    },
}

fn field(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn csv_of(header: &[&str], rows: Vec<Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn baseline_table(results: &[BaselineResult]) -> anyhow::Result<String> {
    let grid: Vec<u64> = results[0].curve.iter().map(|c| c.0).collect();
    if results.iter().any(|r| r.curve.iter().map(|c| c.0).ne(grid.iter().copied())) {
        bail!("baseline curves use different checkpoint grids");
    }
    let mut header = vec!["iteration".to_string()];
    header.extend(results.iter().map(|r| format!("p{}_seed{}", r.config.p, r.config.seed)));
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let mut row = vec![it.to_string()];
            row.extend(results.iter().map(|r| r.curve[i].1.to_string()));
            row
        })
        .collect();
    csv_of(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows)
}

fn render_one(v: &Value) -> anyhow::Result<(String, &'static str)> {
    if let Some(arr) = v.as_array() {
        if arr.iter().all(|e| e.get("lemma").is_some()) {
            let rows = arr
                .iter()
                .map(|e| ["lemma", "margin", "pass", "params"].iter().map(|k| field(&e[*k])).collect())
                .collect();
            return Ok((csv_of(&["lemma", "margin", "pass", "params"], rows)?, "verdicts.csv"));
        }
        if arr.iter().all(|e| e.get("report").is_some()) {
            let keys = ["half_dim", "width", "bound_b", "rank_exact", "rank_numeric", "bound", "sum_unit_ranks", "pass"];
            let rows = arr.iter().map(|e| keys.iter().map(|k| field(&e["report"][*k])).collect()).collect();
            return Ok((csv_of(&keys, rows)?, "rankbound.csv"));
        }
    }
    if v.get("layers").is_some() && v.get("config").is_some() {
        let keys = ["layer", "seed", "eta", "steps_run", "stop", "distinct_points"];
        let rows = v["layers"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|e| keys.iter().map(|k| field(&e[*k])).collect())
            .collect();
        return Ok((csv_of(&keys, rows)?, "layers.csv"));
    }
    if v.get("levels").is_some() && v.get("gates").is_some() {
        let mut rows = Vec::new();
        for e in v["levels"].as_array().into_iter().flatten() {
            rows.push(vec!["level".to_string(), field(&e["level"]), String::new(), field(&e["matches"])]);
        }
        for e in v["gates"].as_array().into_iter().flatten() {
            let mut r = vec!["gate".to_string()];
            r.extend(["layer", "position", "matches"].iter().map(|k| field(&e[*k])));
            rows.push(r);
        }
        return Ok((csv_of(&["kind", "level_or_layer", "position", "matches"], rows)?, "recovery.csv"));
    }
    bail!("unrecognized artifact; expected verdicts, rank bound, baseline, training or recovery JSON")
}

pub fn run(ctx: &Ctx, cmd: ReportCmd) -> CmdResult {
    let ReportCmd::Render { input, name } = cmd;
    let mut run = Run::new("report render", &ctx.global.out, ctx.seed(), ctx.global.threads)?;
    let mut values = Vec::new();
    for path in &input {
        run.input(path)?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        values.push(serde_json::from_str::<Value>(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    let baselines: Option<Vec<BaselineResult>> = values
        .iter()
        .map(|v| serde_json::from_value::<BaselineResult>(v.clone()).ok())
        .collect();
    let (csv, default_name) = match baselines {
        Some(b) => (baseline_table(&b)?, "curves.csv"),
        None if values.len() == 1 => render_one(&values[0])?,
        None => return Err(anyhow!("several inputs can only be merged when all are baseline results").into()),
    };
    let path = run.write(name.as_deref().unwrap_or(default_name), csv.as_bytes())?;
    println!("{}", path.display());
    run.finish("ok")?;
    Ok(())
}
