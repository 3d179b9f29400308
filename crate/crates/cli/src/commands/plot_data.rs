//! `plot-data`: split training-trace CSVs into per-metric panel files with
//! one column per group, the layout plotting tools want. Values are copied
//! as written, so panels round-trip byte-exactly against their source.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::Config;
use crate::manifest::RunContext;

use super::Outcome;

/// Metric columns exported per trace, in trace-column order.
const PANELS: [&str; 3] = ["reward_mean", "reward_std_mean", "grad_norm_mean"];

pub fn run(config: &Config, ctx: &mut RunContext) -> Result<Outcome> {
    if config.plot_data.traces.is_empty() {
        anyhow::bail!("plot-data needs at least one trace file in [plot_data] traces");
    }
    for trace_path in &config.plot_data.traces {
        let stem = trace_path
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("trace path {} has no usable stem", trace_path.display()))?
            .to_string();
        let panels = split_trace(trace_path)?;
        for (metric, contents) in panels {
            ctx.write_file(&format!("{stem}_{metric}.csv"), &contents)?;
        }
    }
    Ok(Outcome::Clean)
}

/// Parse one trace CSV into per-metric panels `step,<group>,...`.
fn split_trace(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening trace {}", path.display()))?;
    let headers = reader.headers().context("reading trace header")?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("trace {} lacks column {name}", path.display()))
    };
    let step_col = find("step")?;
    let group_col = find("group")?;
    let metric_cols: Vec<usize> = PANELS.iter().map(|&m| find(m)).collect::<Result<_>>()?;

    // step -> group -> metric values; BTreeMaps keep output order stable.
    let mut steps: BTreeMap<u64, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    let mut groups: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("reading trace {}", path.display()))?;
        let step: u64 = record
            .get(step_col)
            .unwrap_or_default()
            .parse()
            .with_context(|| format!("bad step in {}", path.display()))?;
        let group = record.get(group_col).unwrap_or_default().to_string();
        if !groups.contains(&group) {
            groups.push(group.clone());
        }
        let values: Vec<String> = metric_cols
            .iter()
            .map(|&c| record.get(c).unwrap_or_default().to_string())
            .collect();
        steps.entry(step).or_default().insert(group, values);
    }

    let panels = PANELS
        .iter()
        .enumerate()
        .map(|(mi, &metric)| {
            let mut out = String::from("step");
            for group in &groups {
                out.push(',');
                out.push_str(group);
            }
            out.push('\n');
            for (step, row) in &steps {
                out.push_str(&step.to_string());
                for group in &groups {
                    out.push(',');
                    if let Some(values) = row.get(group) {
                        out.push_str(&values[mi]);
                    }
                }
                out.push('\n');
            }
            (metric.to_string(), out)
        })
        .collect();
    Ok(panels)
}
