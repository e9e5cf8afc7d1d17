use std::path::PathBuf;

use anet::metrics::{render_json, render_table_for, ReportRow};
use anyhow::{Context, Result};
use clap::Args;

use super::write_text;
use crate::config::{set, Override, RunConfig};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` files written by `eval`; rows keep the given order.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    contexts: Option<anet::metrics::Contexts>,
}

impl ReportArgs {
    pub fn overrides(&self) -> Vec<Override> {
        self.contexts.iter().map(|c| set("eval.contexts", c.to_string())).collect()
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<()> {
        let mut rows: Vec<ReportRow> = Vec::new();
        for path in &self.inputs {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let part: Vec<ReportRow> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            rows.extend(part);
        }
        let table = render_table_for(&rows, cfg.eval.contexts);
        if let Some(out) = cfg.prepare_out()? {
            write_text(&out.join("report.tsv"), &table)?;
            write_text(&out.join("report.json"), &(render_json(&rows)? + "\n"))?;
        }
        out!("{table}");
        Ok(())
    }
}
