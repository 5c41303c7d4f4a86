use std::fmt::Write;

use super::audit::{BiasAuditReport, PathScope};
use super::paths::{AnalysisMode, PathClass};

fn class_name(c: PathClass) -> &'static str {
    match c {
        PathClass::Confounding => "confounding",
        PathClass::Selection => "selection",
        PathClass::Measurement => "measurement",
        PathClass::Causal => "causal",
    }
}

impl BiasAuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Aligned plain-text table, one row per open biasing path.
    pub fn to_text(&self) -> String {
        let mode = match self.mode {
            AnalysisMode::TrueExposure => "true exposure",
            AnalysisMode::ProxyExposure => "proxy exposure",
        };
        let mut out = String::new();
        writeln!(out, "bias audit: {} -> {} ({mode})", self.exposure, self.outcome).unwrap();
        if !self.conditioned.is_empty() {
            let c: Vec<&str> = self.conditioned.iter().map(String::as_str).collect();
            writeln!(out, "conditioned on: {}", c.join(", ")).unwrap();
        }
        if self.groups.is_empty() {
            out.push_str("no open biasing paths\n");
            return out;
        }
        let mut rows = vec![["CLASS".to_string(), "SCOPE".into(), "OPENERS".into(), "PATH".into()]];
        for g in &self.groups {
            let scope = match g.scope {
                PathScope::Within => "within",
                PathScope::Across => "across",
            };
            for p in &g.paths {
                let openers = if p.openers.is_empty() {
                    "-".to_string()
                } else {
                    p.openers.iter().cloned().collect::<Vec<_>>().join(",")
                };
                rows.push([class_name(g.classification).into(), scope.into(), openers, p.notation.clone()]);
            }
        }
        let widths: Vec<usize> =
            (0..3).map(|k| rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0)).collect();
        for r in &rows {
            for k in 0..3 {
                write!(out, "{:<w$}  ", r[k], w = widths[k]).unwrap();
            }
            writeln!(out, "{}", r[3]).unwrap();
        }
        if let Some(adj) = &self.adjustment {
            if adj.minimal_sets.is_empty() {
                writeln!(out, "minimal observed adjustment sets (size <= {}): none", adj.max_size).unwrap();
            } else {
                let sets: Vec<String> =
                    adj.minimal_sets.iter().map(|s| format!("{{{}}}", s.join(", "))).collect();
                writeln!(out, "minimal observed adjustment sets (size <= {}): {}", adj.max_size, sets.join(" ")).unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::dag::{bias_audit_report, fixtures};

    #[test]
    fn text_table_is_aligned() {
        let text = bias_audit_report(&fixtures::dag_1b()).unwrap().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bias audit: X -> Y (true exposure)");
        let path_col = lines[1].find("PATH").unwrap();
        for l in &lines[2..5] {
            assert_eq!(l.char_indices().nth(path_col).map(|(_, c)| c), Some('X'));
        }
        assert!(text.ends_with("minimal observed adjustment sets (size <= 6): none\n"));
    }
}
