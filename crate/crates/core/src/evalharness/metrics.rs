use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::EpisodeResult;
use crate::grounder::AmbiguityLabel;
use crate::langgen::InstructionClass;

/// One evaluated instruction: the manipulation (or naming) episode plus, in
/// the w/ naming condition, the naming episode that preceded it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(flatten)]
    pub episode: EpisodeResult,
    pub ambiguity_label: AmbiguityLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_dst: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naming: Option<EpisodeResult>,
}

impl EpisodeRecord {
    /// Process success, counting a failed preceding naming episode as failure.
    pub fn process_ok(&self) -> bool {
        self.episode.sr_ok && self.naming.as_ref().is_none_or(|n| n.sr_ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    WithoutNaming,
    WithNaming,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::WithoutNaming => "w/o naming",
            Condition::WithNaming => "w/ naming",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub numerator: usize,
    pub denominator: usize,
    pub percent: f64,
}

impl Rate {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        let percent = if denominator == 0 {
            0.0
        } else {
            100.0 * numerator as f64 / denominator as f64
        };
        Self {
            numerator,
            denominator,
            percent,
        }
    }

    fn count(items: &[&EpisodeRecord], f: impl Fn(&EpisodeRecord) -> bool) -> Self {
        Self::new(items.iter().filter(|r| f(r)).count(), items.len())
    }

    /// Percent rounded to one decimal, as printed.
    pub fn rounded(&self) -> f64 {
        (self.percent * 10.0).round() / 10.0
    }

    pub fn cell(&self) -> String {
        format!("{:.1} ({}/{})", self.percent, self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naming_sr: Option<Rate>,
    pub icr: Rate,
    pub pr: Rate,
    pub br: Rate,
    pub sr: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub condition: Condition,
    pub all: SliceMetrics,
    pub unambiguous: SliceMetrics,
    pub ambiguous: SliceMetrics,
}

impl MetricsReport {
    pub fn slices(&self) -> [(&'static str, &SliceMetrics); 3] {
        [
            ("all", &self.all),
            ("unambiguous", &self.unambiguous),
            ("ambiguous", &self.ambiguous),
        ]
    }
}

fn slice(items: &[&EpisodeRecord], condition: Condition) -> SliceMetrics {
    let named: Vec<&EpisodeRecord> = items.iter().copied().filter(|r| r.naming.is_some()).collect();
    SliceMetrics {
        naming_sr: (condition == Condition::WithNaming)
            .then(|| Rate::count(&named, |r| r.naming.as_ref().is_some_and(|n| n.sr_ok))),
        icr: Rate::count(items, |r| r.episode.icr_ok),
        pr: Rate::count(items, |r| r.episode.pr_ok),
        br: Rate::count(items, |r| r.episode.br_ok),
        sr: Rate::count(items, EpisodeRecord::process_ok),
    }
}

/// Aggregates episodes into the all / unambiguous / ambiguous slices.
pub fn compute_metrics(condition: Condition, records: &[EpisodeRecord]) -> Result<MetricsReport> {
    for r in records {
        if r.episode.gold_class == InstructionClass::PickAndPlace && r.gold_src.is_none() {
            return Err(Error::Validation(format!(
                "episode {} has no gold src",
                r.episode.instruction_id
            )));
        }
    }
    let all: Vec<&EpisodeRecord> = records.iter().collect();
    let (amb, unamb): (Vec<&EpisodeRecord>, Vec<&EpisodeRecord>) =
        all.iter().partition(|r| r.ambiguity_label.is_ambiguous());
    Ok(MetricsReport {
        condition,
        all: slice(&all, condition),
        unambiguous: slice(&unamb, condition),
        ambiguous: slice(&amb, condition),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub slice: String,
    pub icr: f64,
    pub pr: f64,
    pub br: f64,
    pub sr: f64,
}

/// Percentage-point change from `a` to `b` per slice and metric, computed on
/// the one-decimal percentages that the reports print.
pub fn compare_reports(a: &MetricsReport, b: &MetricsReport) -> Result<Vec<DeltaRow>> {
    a.slices()
        .iter()
        .zip(b.slices())
        .map(|((name, x), (_, y))| {
            if x.sr.denominator != y.sr.denominator {
                return Err(Error::Validation(format!(
                    "slice {name} has {} episodes in one report and {} in the other",
                    x.sr.denominator, y.sr.denominator
                )));
            }
            let d = |p: &Rate, q: &Rate| ((q.rounded() - p.rounded()) * 10.0).round() / 10.0;
            Ok(DeltaRow {
                slice: name.to_string(),
                icr: d(&x.icr, &y.icr),
                pr: d(&x.pr, &y.pr),
                br: d(&x.br, &y.br),
                sr: d(&x.sr, &y.sr),
            })
        })
        .collect()
}

/// Aligned text table: one block per condition, rows all / unambiguous /
/// ambiguous, columns naming SR, ICR, PR, BR, SR.
pub fn render_table(reports: &[&MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<12} {:>18} {:>18} {:>18} {:>18} {:>18}",
        "condition", "instructions", "naming SR", "ICR", "PR", "BR", "SR"
    );
    for r in reports {
        for (name, s) in r.slices() {
            let naming = s.naming_sr.map_or_else(|| "-".to_string(), |n| n.cell());
            let _ = writeln!(
                out,
                "{:<12} {:<12} {:>18} {:>18} {:>18} {:>18} {:>18}",
                r.condition.label(),
                name,
                naming,
                s.icr.cell(),
                s.pr.cell(),
                s.br.cell(),
                s.sr.cell()
            );
        }
    }
    out
}

pub fn render_deltas(rows: &[DeltaRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>8} {:>8} {:>8} {:>8}", "delta (pp)", "ICR", "PR", "BR", "SR");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>+8.1} {:>+8.1} {:>+8.1} {:>+8.1}",
            r.slice, r.icr, r.pr, r.br, r.sr
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_percent() {
        let r = Rate::new(286, 300);
        assert_eq!(r.cell(), "95.3 (286/300)");
        assert_eq!(Rate::new(0, 0).percent, 0.0);
    }

    #[test]
    fn deltas_use_printed_percentages() {
        let d = |a: Rate, b: Rate| ((b.rounded() - a.rounded()) * 10.0).round() / 10.0;
        assert_eq!(d(Rate::new(16, 51), Rate::new(32, 51)), 31.3);
        assert_eq!(d(Rate::new(171, 300), Rate::new(209, 300)), 12.7);
    }
}
