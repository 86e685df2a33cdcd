//! Results table rendering (plain text and JSON).

use petm_core::metrics::{MetricReport, BLEU_SIGNATURE, TER_SIGNATURE};
use serde::{Deserialize, Serialize};

pub const BASELINE_LABEL: &str = "Original Hyps";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub bleu_signature: String,
    pub ter_signature: String,
    pub rows: Vec<MetricReport>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "N.A.".to_string(), |v| format!("{v:.2}"))
}

impl Report {
    pub fn new(rows: Vec<MetricReport>) -> Self {
        Report { bleu_signature: BLEU_SIGNATURE.into(), ter_signature: TER_SIGNATURE.into(), rows }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn row(&self, label: &str) -> Option<&MetricReport> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn render_text(&self) -> String {
        let header = ["Condition", "BLEU", "TER", "ME", "UE", "% Correct ME"];
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    format!("{:.2}", r.bleu),
                    format!("{:.2}", r.ter),
                    cell(r.me),
                    cell(r.ue),
                    cell(r.percent_correct),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut out = String::new();
            for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
                if i == 0 {
                    out.push_str(&format!("{c:<w$}"));
                } else {
                    out.push_str(&format!("  {c:>w$}"));
                }
            }
            out.trim_end().to_string()
        };
        let mut out = String::new();
        out.push_str(&line(&header.map(String::from)));
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &body {
            out.push_str(&line(row));
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&format!("BLEU: {}\n", self.bleu_signature));
        out.push_str(&format!("TER:  {}\n", self.ter_signature));
        out.push_str("ME/UE: micro-averaged over tokens; per-sentence means in parentheses below.\n");
        for r in self.rows.iter().filter(|r| r.me_macro.is_some() || r.ue_macro.is_some()) {
            out.push_str(&format!("  {}: (ME {}, UE {})\n", r.label, cell(r.me_macro), cell(r.ue_macro)));
        }
        let failed: Vec<&MetricReport> = self.rows.iter().filter(|r| r.failed > 0).collect();
        for r in failed {
            out.push_str(&format!("  {}: {} item(s) failed and were not scored\n", r.label, r.failed));
        }
        out
    }
}
