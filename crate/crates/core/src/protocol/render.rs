use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gap::{BiasRiskEntry, EntryScope, ProtocolComponent};
use super::harmonize::HarmonizationAudit;
use super::validate::ProtocolValidation;
use super::{
    emulation_gap_report, harmonization_audit, validate_protocol, ComponentNote, EffectMeasure, EmulationPlan,
    ProtocolError, TargetTrialProtocol,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(ProtocolError::UnknownFormat(s.to_string())),
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serialises");
    s.push('\n');
    s
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', "<br>")
}

fn md_row(out: &mut String, cells: &[String]) {
    out.push('|');
    for c in cells {
        write!(out, " {} |", cell(c)).unwrap();
    }
    out.push('\n');
}

fn md_rule(out: &mut String, n: usize) {
    out.push('|');
    for _ in 0..n {
        out.push_str("---|");
    }
    out.push('\n');
}

pub fn render_entries(entries: &[BiasRiskEntry], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Json => return json(&entries),
        Format::Text => {
            out.push_str("bias risk entries\n");
            if entries.is_empty() {
                out.push_str("no findings\n");
            }
            for e in entries {
                writeln!(out, "{} | {} | {} | {}", e.protocol_component, e.bias_kind, e.scope, e.description).unwrap();
            }
        }
        Format::Markdown => {
            out.push_str("# Bias risk entries\n\n");
            if entries.is_empty() {
                out.push_str("no findings\n");
                return out;
            }
            md_row(&mut out, &["Component".into(), "Bias".into(), "Scope".into(), "Description".into()]);
            md_rule(&mut out, 4);
            for e in entries {
                md_row(&mut out, &[
                    e.protocol_component.label().into(),
                    e.bias_kind.to_string(),
                    e.scope.to_string(),
                    e.description.clone(),
                ]);
            }
        }
    }
    out
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn render_audit(audit: &HarmonizationAudit, format: Format) -> String {
    let mut out = String::new();
    let coding = |c: &Option<Vec<String>>| match c {
        None => "(absent)".to_string(),
        Some(v) if v.is_empty() => "(continuous)".to_string(),
        Some(v) => format!("{{{}}}", v.join(", ")),
    };
    match format {
        Format::Json => return json(audit),
        Format::Text => {
            out.push_str("harmonisation audit\n");
            if audit.variables.is_empty() {
                out.push_str("no findings\n");
            }
            for v in &audit.variables {
                writeln!(out, "{}", v.name).unwrap();
                for c in &v.codings {
                    writeln!(out, "  {}: {}", c.cohort, coding(&c.categories)).unwrap();
                }
                writeln!(out, "  common: {}", coding(&Some(v.common_coding.clone()))).unwrap();
                if v.has_loss() {
                    writeln!(out, "  information lost in: {}", v.lossy_cohorts.join(", ")).unwrap();
                }
                if !v.unmapped_cohorts.is_empty() {
                    writeln!(out, "  no mapping from: {}", v.unmapped_cohorts.join(", ")).unwrap();
                }
                if v.subset_only {
                    out.push_str("  available in a subset of cohorts only\n");
                }
            }
        }
        Format::Markdown => {
            out.push_str("# Harmonisation audit\n\n");
            if audit.variables.is_empty() {
                out.push_str("no findings\n");
                return out;
            }
            let mut head = vec!["Variable".to_string()];
            head.extend(audit.cohorts.iter().cloned());
            head.extend(["Common coding".into(), "Loss".into(), "Subset only".into()]);
            md_row(&mut out, &head);
            md_rule(&mut out, head.len());
            for v in &audit.variables {
                let mut row = vec![v.name.clone()];
                row.extend(v.codings.iter().map(|c| coding(&c.categories)));
                row.push(coding(&Some(v.common_coding.clone())));
                row.push(if v.has_loss() { v.lossy_cohorts.join(", ") } else { "none".into() });
                row.push(yes(v.subset_only).into());
                md_row(&mut out, &row);
            }
        }
    }
    out
}

/// Protocol, plans and every derived audit in one renderable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationReport {
    pub protocol: TargetTrialProtocol,
    pub plans: Vec<EmulationPlan>,
    pub validation: ProtocolValidation,
    pub entries: Vec<BiasRiskEntry>,
    pub harmonization: Option<HarmonizationAudit>,
}

impl EmulationReport {
    pub fn build(protocol: TargetTrialProtocol, plans: Vec<EmulationPlan>) -> Result<Self, ProtocolError> {
        let validation = validate_protocol(&protocol);
        let entries = emulation_gap_report(&protocol, &plans)?;
        let harmonization = if plans.len() >= 2 { Some(harmonization_audit(&plans)?) } else { None };
        Ok(EmulationReport { protocol, plans, validation, entries, harmonization })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => json(self),
            Format::Text => self.text(),
            Format::Markdown => self.markdown(),
        }
    }

    fn text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "emulation report: {}", self.protocol.title).unwrap();
        let cohorts: Vec<&str> = self.plans.iter().map(|p| p.cohort.as_str()).collect();
        writeln!(out, "cohorts: {}", cohorts.join(", ")).unwrap();
        for v in &self.validation.violations {
            writeln!(out, "violation: {v}").unwrap();
        }
        for w in &self.validation.warnings {
            writeln!(out, "warning: {w}").unwrap();
        }
        out.push('\n');
        out.push_str(&render_entries(&self.entries, Format::Text));
        for (who, n) in self.notes() {
            writeln!(out, "note ({who}, {}): {}", n.component, n.text).unwrap();
        }
        if let Some(a) = &self.harmonization {
            out.push('\n');
            out.push_str(&render_audit(a, Format::Text));
        }
        out
    }

    fn notes(&self) -> Vec<(&str, &ComponentNote)> {
        let mut v: Vec<(&str, &ComponentNote)> = self.protocol.notes.iter().map(|n| ("target trial", n)).collect();
        for p in &self.plans {
            v.extend(p.notes.iter().map(|n| (p.cohort.as_str(), n)));
        }
        v
    }

    fn risks(&self, component: ProtocolComponent) -> String {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.protocol_component == component)
            .map(|e| {
                let scope = match &e.scope {
                    EntryScope::Within(c) => c.as_str(),
                    EntryScope::Across => "across",
                };
                format!("[{scope}] {}: {}", e.bias_kind, e.description)
            })
            .collect();
        for (who, n) in self.notes() {
            if n.component == component {
                lines.push(format!("Note ({who}): {}", n.text));
            }
        }
        if lines.is_empty() {
            "none identified".into()
        } else {
            lines.join("\n")
        }
    }

    fn markdown(&self) -> String {
        let p = &self.protocol;
        let mut out = String::new();
        writeln!(out, "# Emulation report: {}\n", p.title).unwrap();

        let mut head = vec!["Protocol component".to_string(), "Target trial".into()];
        head.extend(self.plans.iter().map(|x| x.cohort.clone()));
        head.push("Remaining risks".into());
        md_row(&mut out, &head);
        md_rule(&mut out, head.len());

        let row = |out: &mut String, label: &str, target: String, per: &dyn Fn(&EmulationPlan) -> String, risks: String| {
            let mut cells = vec![label.to_string(), target];
            cells.extend(self.plans.iter().map(per));
            cells.push(risks);
            md_row(out, &cells);
        };

        let pop = &p.eligibility.population;
        let mut target = p.eligibility.text.clone();
        if let Some(e) = &pop.epoch {
            write!(target, "\nepoch: {e}").unwrap();
        }
        row(&mut out, "A. Eligibility criteria", target, &|x| {
            let s = &x.sample_selection;
            let mut t = s.text.clone();
            for (k, v) in [("epoch", &s.recruitment_epoch), ("screening", &s.screening_window), ("route", &s.recruitment_route)] {
                if let Some(v) = v {
                    write!(t, "\n{k}: {v}").unwrap();
                }
            }
            write!(t, "\nmissing data: {}", missing(x)).unwrap();
            t
        }, self.risks(ProtocolComponent::Eligibility));

        let arms: Vec<String> = p
            .arms
            .iter()
            .map(|a| format!("{}{}: {}", a.id, if a.comparator { " (comparator)" } else { "" }, a.description))
            .collect();
        row(&mut out, "B. Treatment strategies", arms.join("\n"), &|x| {
            x.exposure_measures
                .iter()
                .map(|m| {
                    let mut t = format!("{}: {}", m.arm, if m.description.is_empty() { "-" } else { &m.description });
                    if !m.waves.is_empty() {
                        write!(t, " [waves {}]", m.waves.join(", ")).unwrap();
                    }
                    if !m.threshold_rules.is_empty() {
                        write!(t, " [{}]", m.threshold_rules.join("; ")).unwrap();
                    }
                    t
                })
                .collect::<Vec<_>>()
                .join("\n")
        }, self.risks(ProtocolComponent::Treatment));

        row(&mut out, "C. Assignment procedures", p.assignment.clone(), &|x| {
            let mut lines: Vec<String> = x
                .confounders
                .iter()
                .map(|c| {
                    let coding = if c.coding.is_empty() { "continuous".to_string() } else { c.coding.join(" / ") };
                    format!("{} ({}; {}){}", c.name, c.measure, coding, if c.proxy { " [proxy]" } else { "" })
                })
                .collect();
            lines.push(format!("adjustment: {:?}", x.adjustment_approach));
            lines.join("\n")
        }, self.risks(ProtocolComponent::Assignment));

        let fu = &p.follow_up;
        row(&mut out, "D. Follow-up period",
            format!("start: {}\nend: {}", fu.start.event, fu.end.event),
            &|x| format!("start: {}\nend: {}", x.timing.start, x.timing.end),
            self.risks(ProtocolComponent::FollowUp));

        let mut target = p.outcome.construct.clone();
        if let Some(t) = &p.outcome.threshold {
            write!(target, " ({t})").unwrap();
        }
        row(&mut out, "E. Outcome", target, &|x| {
            let o = &x.outcome_measure;
            let mut t = format!("{} via {} report", o.instrument, o.reporter);
            if let Some(th) = &o.threshold {
                write!(t, ", {th}").unwrap();
            }
            t
        }, self.risks(ProtocolComponent::Outcome));

        let em = &p.effect_measure;
        let target = if em.text.is_empty() {
            format!("{} ({})", measure_name(em.measure), em.scope)
        } else {
            format!("{}\n{} ({})", em.text, measure_name(em.measure), em.scope)
        };
        row(&mut out, "F. Causal effect of interest", target, &|_| "-".into(), "-".into());

        if !self.validation.violations.is_empty() || !self.validation.warnings.is_empty() {
            out.push_str("\n## Protocol checks\n\n");
            for v in &self.validation.violations {
                writeln!(out, "- violation: {v}").unwrap();
            }
            for w in &self.validation.warnings {
                writeln!(out, "- warning: {w}").unwrap();
            }
        }
        out.push('\n');
        let entries = render_entries(&self.entries, Format::Markdown);
        out.push_str(&entries.replacen("# ", "## ", 1));
        if let Some(a) = &self.harmonization {
            out.push('\n');
            out.push_str(&render_audit(a, Format::Markdown).replacen("# ", "## ", 1));
        }
        out
    }
}

fn missing(x: &EmulationPlan) -> String {
    match x.missing_data_strategy {
        super::MissingDataStrategy::CompleteCase => "complete case".into(),
        super::MissingDataStrategy::MultipleImputation { scope, m } => format!("multiple imputation ({scope:?}, m = {m})"),
    }
}

fn measure_name(m: EffectMeasure) -> &'static str {
    match m {
        EffectMeasure::OddsRatio => "odds ratio",
        EffectMeasure::RiskRatio => "risk ratio",
        EffectMeasure::RiskDifference => "risk difference",
        EffectMeasure::PercentMeanDifference => "percentage difference in means",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::fixtures;

    #[test]
    fn empty_entries() {
        for f in [Format::Text, Format::Markdown] {
            let doc = render_entries(&[], f);
            assert!(doc.lines().next().unwrap().to_lowercase().contains("bias risk entries"));
            assert!(doc.contains("no findings"));
        }
        assert_eq!(render_entries(&[], Format::Json), "[]\n");
    }

    #[test]
    fn unknown_format() {
        assert_eq!("pdf".parse::<Format>(), Err(ProtocolError::UnknownFormat("pdf".into())));
        assert_eq!("Markdown".parse::<Format>(), Ok(Format::Markdown));
    }

    #[test]
    fn spry_markdown_rows() {
        let (p, plans) = fixtures::spry();
        let md = EmulationReport::build(p, plans).unwrap().render(Format::Markdown);
        let first_cells: Vec<&str> = md
            .lines()
            .filter(|l| l.starts_with("| ") && l.chars().nth(3) == Some('.'))
            .map(|l| l[2..].split(" |").next().unwrap())
            .collect();
        assert_eq!(first_cells, vec![
            "A. Eligibility criteria",
            "B. Treatment strategies",
            "C. Assignment procedures",
            "D. Follow-up period",
            "E. Outcome",
            "F. Causal effect of interest",
        ]);
        assert!(md.contains("| Protocol component | Target trial | VIHCS | ATPG3 | Remaining risks |"));
    }

    #[test]
    fn deterministic_bytes() {
        for (p, plans) in [fixtures::spry(), fixtures::oconnor()] {
            let a = EmulationReport::build(p.clone(), plans.clone()).unwrap();
            let b = EmulationReport::build(p, plans).unwrap();
            for f in [Format::Text, Format::Json, Format::Markdown] {
                assert_eq!(a.render(f), b.render(f));
            }
        }
    }

    #[test]
    fn follow_up_note_is_carried() {
        let (p, plans) = fixtures::oconnor();
        let md = EmulationReport::build(p, plans).unwrap().render(Format::Markdown);
        assert!(md.contains("not a bias per se but the source of difference to be assessed"));
    }
}
