//! Table and JSON rendering of per-method scores.

use serde::{Deserialize, Serialize};

use super::segmentation::{MetricsReport, SampleScores};

pub const REPORT_COLUMNS: [&str; 7] = ["Method", "MAE", "F_adaptive", "IOU_adaptive", "F_fixed", "IOU_fixed", "Accuracy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub n: usize,
    pub scores: SampleScores,
    pub accuracy: Option<f64>,
}

impl ReportRow {
    pub fn from_report(method: impl Into<String>, report: &MetricsReport) -> Self {
        Self { method: method.into(), n: report.n, scores: report.means, accuracy: report.accuracy }
    }
}

/// Which threshold contexts a table shows. MAE is threshold-free and always
/// shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Contexts {
    Adaptive,
    Fixed,
    #[default]
    Both,
}

impl Contexts {
    /// Indices into [`SampleScores::values`].
    pub fn score_columns(self) -> &'static [usize] {
        match self {
            Contexts::Adaptive => &[0, 1, 2],
            Contexts::Fixed => &[0, 3, 4],
            Contexts::Both => &[0, 1, 2, 3, 4],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Contexts::Adaptive => "adaptive",
            Contexts::Fixed => "fixed",
            Contexts::Both => "both",
        }
    }
}

impl std::fmt::Display for Contexts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Contexts {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adaptive" => Ok(Contexts::Adaptive),
            "fixed" => Ok(Contexts::Fixed),
            "both" => Ok(Contexts::Both),
            _ => Err(format!("unknown threshold context '{s}' (expected adaptive, fixed or both)")),
        }
    }
}

/// Tab-separated table with a header line; scores to 3 decimals, a missing
/// accuracy as `-`.
pub fn render_table(rows: &[ReportRow]) -> String {
    render_table_for(rows, Contexts::Both)
}

/// [`render_table`] restricted to the columns of `contexts`.
pub fn render_table_for(rows: &[ReportRow], contexts: Contexts) -> String {
    let cols = contexts.score_columns();
    let mut header = vec![REPORT_COLUMNS[0]];
    header.extend(cols.iter().map(|&c| REPORT_COLUMNS[c + 1]));
    header.push(REPORT_COLUMNS[6]);
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.method);
        let values = row.scores.values();
        for &c in cols {
            out.push_str(&format!("\t{:.3}", values[c]));
        }
        match row.accuracy {
            Some(a) => out.push_str(&format!("\t{a:.3}")),
            None => out.push_str("\t-"),
        }
        out.push('\n');
    }
    out
}

pub fn render_json(rows: &[ReportRow]) -> serde_json::Result<String> {
    serde_json::to_string_pretty(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let rows = vec![
            ReportRow {
                method: "anet".into(),
                n: 2,
                scores: SampleScores { mae: 0.0, f_adaptive: 1.0, iou_adaptive: 0.33333, f_fixed: 1.0, iou_fixed: 1.0 },
                accuracy: Some(0.95),
            },
            ReportRow { method: "seg-only".into(), n: 2, scores: SampleScores::default(), accuracy: None },
        ];
        let text = render_table(&rows);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "Method\tMAE\tF_adaptive\tIOU_adaptive\tF_fixed\tIOU_fixed\tAccuracy");
        assert_eq!(lines[1], "anet\t0.000\t1.000\t0.333\t1.000\t1.000\t0.950");
        let fixed = render_table_for(&rows, Contexts::Fixed);
        assert_eq!(fixed.lines().next().unwrap(), "Method\tMAE\tF_fixed\tIOU_fixed\tAccuracy");
        assert_eq!(fixed.lines().nth(1).unwrap(), "anet\t0.000\t1.000\t1.000\t0.950");
        assert_eq!(lines[2], "seg-only\t0.000\t0.000\t0.000\t0.000\t0.000\t-");
        let json: Vec<ReportRow> = serde_json::from_str(&render_json(&rows).unwrap()).unwrap();
        assert_eq!(json, rows);
    }
}
