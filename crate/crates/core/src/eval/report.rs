use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::eer::relative_decrease;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainResult {
    pub domain: String,
    pub eer: f64,
    pub trials: usize,
    pub targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Content hash of the evaluated checkpoint.
    pub checkpoint: String,
    pub stage: String,
    pub domains: Vec<DomainResult>,
}

fn malformed(detail: String) -> Error {
    Error::Malformed { what: "report", detail }
}

fn fields(line: &str) -> Result<Vec<(&str, &str)>> {
    line.split_whitespace()
        .map(|kv| kv.split_once('=').ok_or_else(|| malformed(format!("bad field {kv:?}"))))
        .collect()
}

fn field<'a>(fs: &[(&str, &'a str)], key: &str) -> Result<&'a str> {
    fs.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| malformed(format!("missing key {key}")))
}

fn number<T: std::str::FromStr>(fs: &[(&str, &str)], key: &str) -> Result<T> {
    let v = field(fs, key)?;
    v.parse().map_err(|_| malformed(format!("{key}={v} is not a number")))
}

impl EvalReport {
    pub fn get(&self, domain: &str) -> Option<&DomainResult> {
        self.domains.iter().find(|d| d.domain == domain)
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!("checkpoint={} stage={}\n", self.checkpoint, self.stage);
        for d in &self.domains {
            let _ = writeln!(
                s,
                "domain={} eer={} trials={} targets={}",
                d.domain, d.eer, d.trials, d.targets
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = fields(lines.next().ok_or_else(|| malformed("empty report".into()))?)?;
        let mut report = EvalReport {
            checkpoint: field(&head, "checkpoint")?.to_string(),
            stage: field(&head, "stage")?.to_string(),
            domains: Vec::new(),
        };
        for line in lines {
            let fs = fields(line)?;
            let eer: f64 = number(&fs, "eer")?;
            if !(0.0..=1.0).contains(&eer) {
                return Err(malformed(format!("eer {eer} outside [0, 1]")));
            }
            report.domains.push(DomainResult {
                domain: field(&fs, "domain")?.to_string(),
                eer,
                trials: number(&fs, "trials")?,
                targets: number(&fs, "targets")?,
            });
        }
        Ok(report)
    }
}

/// Baseline and adapted EER of one domain with the relative decrease
/// between them (absent when the baseline EER is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub domain: String,
    pub baseline_eer: f64,
    pub adapted_eer: f64,
    pub rd_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: String,
    pub adapted: String,
    pub rows: Vec<ComparisonRow>,
}

/// Pairs two reports domain by domain. Both must cover the same domains.
pub fn compare_reports(baseline: &EvalReport, adapted: &EvalReport) -> Result<Comparison> {
    fn names(r: &EvalReport) -> Vec<&str> {
        let mut v: Vec<&str> = r.domains.iter().map(|d| d.domain.as_str()).collect();
        v.sort_unstable();
        v
    }
    if names(baseline) != names(adapted) {
        return Err(Error::contract(format!(
            "reports cover different domains: [{}] vs [{}]",
            names(baseline).join(", "),
            names(adapted).join(", ")
        )));
    }
    let rows = baseline
        .domains
        .iter()
        .map(|b| {
            let a = adapted.get(&b.domain).expect("domain sets match");
            ComparisonRow {
                domain: b.domain.clone(),
                baseline_eer: b.eer,
                adapted_eer: a.eer,
                rd_percent: relative_decrease(b.eer, a.eer).ok(),
            }
        })
        .collect();
    Ok(Comparison {
        baseline: format!("{} ({})", baseline.stage, baseline.checkpoint),
        adapted: format!("{} ({})", adapted.stage, adapted.checkpoint),
        rows,
    })
}

impl Comparison {
    /// Text table: one column per domain, EER rows in percent and an RD row.
    pub fn to_table(&self) -> String {
        let label_w = ["EER% baseline", "EER% adapted", "RD%"]
            .iter()
            .map(|s| s.len())
            .max()
            .unwrap_or(0);
        let col_w = self.rows.iter().map(|r| r.domain.len().max(9)).collect::<Vec<_>>();
        let mut s = String::new();
        let _ = writeln!(s, "baseline: {}", self.baseline);
        let _ = writeln!(s, "adapted:  {}", self.adapted);
        let _ = write!(s, "{:label_w$}", "");
        for (r, w) in self.rows.iter().zip(&col_w) {
            let _ = write!(s, "  {:>w$}", r.domain);
        }
        s.push('\n');
        let mut line = |label: &str, cell: &dyn Fn(&ComparisonRow) -> String| {
            let _ = write!(s, "{label:label_w$}");
            for (r, w) in self.rows.iter().zip(&col_w) {
                let _ = write!(s, "  {:>w$}", cell(r));
            }
            s.push('\n');
        };
        line("EER% baseline", &|r| format!("{:.3}", 100.0 * r.baseline_eer));
        line("EER% adapted", &|r| format!("{:.3}", 100.0 * r.adapted_eer));
        line("RD%", &|r| r.rd_percent.map_or("n/a".into(), |v| format!("{v:.2}")));
        s
    }

    pub fn to_kv(&self) -> String {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "domain={} baseline_eer={} adapted_eer={} rd_percent={}\n",
                    r.domain,
                    r.baseline_eer,
                    r.adapted_eer,
                    r.rd_percent.map_or("nan".into(), |v| v.to_string())
                )
            })
            .collect()
    }
}
