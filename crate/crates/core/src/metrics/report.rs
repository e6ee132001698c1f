//! Metric tables and key/value files.

use std::fmt::Write;

use super::ConfusionCounts;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub dice: f64,
    /// `None` when either mask is empty.
    pub asd: Option<f64>,
    pub counts: ConfusionCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.9}"))
}

impl MetricsReport {
    /// Arithmetic mean of the foreground class DSCs.
    pub fn avg_dice(&self) -> f64 {
        self.classes.iter().map(|c| c.dice).sum::<f64>() / self.classes.len() as f64
    }

    /// Mean ASD over classes, undefined if any class is.
    pub fn avg_asd(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.classes.iter().map(|c| c.asd).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8}", "metric");
        for c in &self.classes {
            let _ = write!(s, " {:>10}", c.name);
        }
        let _ = writeln!(s, " {:>10}", "AVG");
        let _ = write!(s, "{:<8}", "DSC");
        for c in &self.classes {
            let _ = write!(s, " {:>10.4}", c.dice);
        }
        let _ = writeln!(s, " {:>10.4}", self.avg_dice());
        let _ = write!(s, "{:<8}", "ASD");
        for c in &self.classes {
            let _ = write!(s, " {:>10}", c.asd.map_or("undefined".into(), |x| format!("{x:.4}")));
        }
        let _ = writeln!(s, " {:>10}", self.avg_asd().map_or("undefined".into(), |x| format!("{x:.4}")));
        s
    }

    /// One `fold subject class metric value` record per line.
    pub fn to_key_values(&self, fold: &str, subject: &str) -> String {
        let mut s = String::new();
        for c in &self.classes {
            let _ = writeln!(s, "{fold} {subject} {} dsc {:.9}", c.name, c.dice);
            let _ = writeln!(s, "{fold} {subject} {} asd {}", c.name, fmt_opt(c.asd));
        }
        let _ = writeln!(s, "{fold} {subject} AVG dsc {:.9}", self.avg_dice());
        let _ = writeln!(s, "{fold} {subject} AVG asd {}", fmt_opt(self.avg_asd()));
        s
    }
}

/// One evaluated fold, labelled for the aggregated table.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldSummary {
    pub fold: String,
    pub subject: String,
    pub report: MetricsReport,
}

/// Per-fold rows plus a mean row: `Model / <classes> / AVG` for DSC and
/// then for ASD. Undefined ASDs are left out of the mean.
pub fn aggregate(model: &str, folds: &[FoldSummary]) -> (String, String) {
    let mut table = String::new();
    let mut kv = String::new();
    let Some(first) = folds.first() else {
        return (table, kv);
    };
    let names: Vec<&str> = first.report.classes.iter().map(|c| c.name.as_str()).collect();
    let row_label = |f: &FoldSummary| format!("{model}[{}]", f.fold);
    let width = folds.iter().map(|f| row_label(f).len()).max().unwrap().max(model.len() + 6).max(12);
    for (metric, pick) in [("DSC", 0usize), ("ASD", 1)] {
        let value = |c: &ClassMetrics| if pick == 0 { Some(c.dice) } else { c.asd };
        let _ = write!(table, "{metric:<width$}");
        for n in &names {
            let _ = write!(table, " {n:>10}");
        }
        let _ = writeln!(table, " {:>10}", "AVG");
        let mut sums = vec![(0.0, 0usize); names.len() + 1];
        for f in folds {
            let _ = write!(table, "{:<width$}", row_label(f));
            let mut cells: Vec<Option<f64>> = f.report.classes.iter().map(value).collect();
            cells.push(if pick == 0 { Some(f.report.avg_dice()) } else { f.report.avg_asd() });
            for (i, c) in cells.iter().enumerate() {
                let _ = write!(table, " {:>10}", c.map_or("undefined".into(), |x| format!("{x:.4}")));
                if let Some(x) = c {
                    sums[i].0 += x;
                    sums[i].1 += 1;
                }
            }
            let _ = writeln!(table);
        }
        let _ = write!(table, "{:<width$}", format!("{model}[mean]"));
        let labels: Vec<&str> = names.iter().copied().chain(["AVG"]).collect();
        for (i, &(sum, n)) in sums.iter().enumerate() {
            let mean = (n > 0).then(|| sum / n as f64);
            let _ = write!(table, " {:>10}", mean.map_or("undefined".into(), |x| format!("{x:.4}")));
            let _ = writeln!(kv, "mean all {} {} {}", labels[i], metric.to_lowercase(), fmt_opt(mean));
        }
        let _ = writeln!(table);
    }
    for f in folds {
        kv.push_str(&f.report.to_key_values(&f.fold, &f.subject));
    }
    (table, kv)
}

/// Reads per-subject lines written by [`MetricsReport::to_key_values`] back
/// into fold summaries, in order of first appearance. Mean lines are skipped
/// and voxel counts are not recorded in the text, so they come back zero.
pub fn parse_key_values(text: &str) -> Result<Vec<FoldSummary>> {
    let mut out: Vec<FoldSummary> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |d: &str| Error::Invalid(format!("metrics line {}: {d}: `{line}`", n + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        let [fold, subject, class, metric, value] = f[..] else {
            return Err(bad("expected 5 fields"));
        };
        if fold == "mean" {
            continue;
        }
        let value = match value {
            "undefined" => None,
            v => Some(v.parse::<f64>().map_err(|_| bad("bad value"))?),
        };
        let idx = match out.iter().position(|s| s.fold == fold && s.subject == subject) {
            Some(i) => i,
            None => {
                out.push(FoldSummary {
                    fold: fold.to_string(),
                    subject: subject.to_string(),
                    report: MetricsReport { classes: Vec::new() },
                });
                out.len() - 1
            }
        };
        let classes = &mut out[idx].report.classes;
        let ci = match classes.iter().position(|c| c.name == class) {
            Some(i) => i,
            None => {
                classes.push(ClassMetrics {
                    name: class.to_string(),
                    dice: f64::NAN,
                    asd: None,
                    counts: ConfusionCounts::default(),
                });
                classes.len() - 1
            }
        };
        match metric {
            "dsc" => classes[ci].dice = value.ok_or_else(|| bad("dsc cannot be undefined"))?,
            "asd" => classes[ci].asd = value,
            _ => return Err(bad("unknown metric")),
        }
    }
    if let Some(c) = out.iter().flat_map(|s| &s.report.classes).find(|c| c.dice.is_nan()) {
        return Err(Error::Invalid(format!("metrics for class `{}` lack a dsc line", c.name)));
    }
    Ok(out)
}
