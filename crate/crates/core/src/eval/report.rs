use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub stoi: f64,
    pub estoi: f64,
    pub ncm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub condition: String,
    pub snr_db: Option<f64>,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub condition: String,
    pub error: String,
}

/// Per-utterance scores in insertion order plus failures that were skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub failures: Vec<Failure>,
}

fn fmt_snr(s: Option<f64>) -> String {
    s.map(|v| format!("{v}")).unwrap_or_default()
}

impl MetricReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: MetricReport) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    /// Conditions in order of first appearance.
    pub fn conditions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.condition) {
                out.push(r.condition.clone());
            }
        }
        out
    }

    /// Arithmetic means over rows matching `filter`.
    pub fn mean_where(&self, filter: impl Fn(&MetricRow) -> bool) -> Option<Scores> {
        let rows: Vec<&MetricRow> = self.rows.iter().filter(|r| filter(r)).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some(Scores {
            stoi: rows.iter().map(|r| r.scores.stoi).sum::<f64>() / n,
            estoi: rows.iter().map(|r| r.scores.estoi).sum::<f64>() / n,
            ncm: rows.iter().map(|r| r.scores.ncm).sum::<f64>() / n,
        })
    }

    pub fn mean(&self, condition: &str) -> Option<Scores> {
        self.mean_where(|r| r.condition == condition)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,condition,snr_db,stoi,estoi,ncm\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.id,
                r.condition,
                fmt_snr(r.snr_db),
                r.scores.stoi,
                r.scores.estoi,
                r.scores.ncm
            );
        }
        s
    }

    /// Markdown table of condition means, one row per condition.
    pub fn to_markdown(&self, title: &str) -> String {
        let mut s = format!("### {title}\n\n| Condition | STOI | ESTOI | NCM | N |\n|---|---|---|---|---|\n");
        for c in self.conditions() {
            let m = self.mean(&c).expect("condition has rows");
            let n = self.rows.iter().filter(|r| r.condition == c).count();
            let _ = writeln!(s, "| {c} | {:.4} | {:.4} | {:.4} | {n} |", m.stoi, m.estoi, m.ncm);
        }
        if !self.failures.is_empty() {
            let _ = writeln!(s, "\n{} utterance(s) failed and were excluded.", self.failures.len());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, c: &str, v: f64) -> MetricRow {
        MetricRow {
            id: id.into(),
            condition: c.into(),
            snr_db: Some(-4.0),
            scores: Scores {
                stoi: v,
                estoi: v / 2.0,
                ncm: v / 4.0,
            },
        }
    }

    #[test]
    fn means_and_csv() {
        let mut r = MetricReport::default();
        r.push(row("a", "clean", 0.8));
        r.push(row("b", "clean", 0.6));
        r.push(row("a", "noisy", 0.4));
        let m = r.mean("clean").unwrap();
        assert!((m.stoi - 0.7).abs() < 1e-12 && (m.estoi - 0.35).abs() < 1e-12);
        assert_eq!(r.conditions(), vec!["clean", "noisy"]);
        let csv = r.to_csv();
        assert!(csv.starts_with("id,condition,snr_db,stoi,estoi,ncm\na,clean,-4,0.800000,0.400000,0.200000\n"));
        assert!(r.to_markdown("T").contains("| noisy | 0.4000 | 0.2000 | 0.1000 | 1 |"));
    }
}
