use std::fmt::Write as _;

use crate::corpus::Language;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub scores: Vec<f64>,
    /// Arithmetic mean of `scores`.
    pub avg: f64,
}

/// Scores per language for one model and task, laid out like the
/// benchmark tables: one column per language, then AVG.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub task: String,
    pub languages: Vec<Language>,
    pub rows: Vec<ReportRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl EvalReport {
    pub fn new(model: &str, task: &str, languages: Vec<Language>, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if languages.is_empty() {
            return Err(Error::CorpusMismatch("report has no language columns".into()));
        }
        let rows = rows
            .into_iter()
            .map(|(metric, scores)| {
                if scores.len() != languages.len() {
                    return Err(Error::CorpusMismatch(format!(
                        "{metric}: {} scores for {} languages",
                        scores.len(),
                        languages.len()
                    )));
                }
                Ok(ReportRow {
                    avg: mean(&scores),
                    metric,
                    scores,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EvalReport {
            model: model.to_string(),
            task: task.to_string(),
            languages,
            rows,
        })
    }

    /// Largest gap between a row's AVG and the mean of its scores.
    pub fn avg_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.avg - mean(&r.scores)).abs())
            .fold(0.0, f64::max)
    }

    pub fn score(&self, metric: &str, lang: Language) -> Option<f64> {
        let col = self.languages.iter().position(|&l| l == lang)?;
        self.rows.iter().find(|r| r.metric == metric).map(|r| r.scores[col])
    }

    /// Aligned text table, scores to two decimals.
    pub fn render_table(&self) -> String {
        let mut header = vec!["Model".to_string(), "Metric".to_string()];
        header.extend(self.languages.iter().map(|l| l.code().to_string()));
        header.push("AVG".into());
        let mut body: Vec<Vec<String>> = Vec::new();
        for r in &self.rows {
            let mut line = vec![self.model.clone(), r.metric.clone()];
            line.extend(r.scores.iter().map(|s| format!("{s:.2}")));
            line.push(format!("{:.2}", r.avg));
            body.push(line);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                std::iter::once(&header)
                    .chain(&body)
                    .map(|row| row[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let fmt_row = |row: &[String]| {
            row.iter()
                .enumerate()
                .map(|(c, cell)| {
                    if c < 2 {
                        format!("{cell:<w$}", w = widths[c])
                    } else {
                        format!("{cell:>w$}", w = widths[c])
                    }
                })
                .collect::<Vec<_>>()
                .join(" | ")
        };
        let mut s = String::new();
        writeln!(s, "{}", self.task).unwrap();
        let head = fmt_row(&header);
        writeln!(s, "{head}").unwrap();
        writeln!(s, "{}", "-".repeat(head.chars().count())).unwrap();
        for row in &body {
            writeln!(s, "{}", fmt_row(row)).unwrap();
        }
        s
    }

    /// `model,task,metric,<language codes...>,AVG` with full-precision values.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["model".to_string(), "task".into(), "metric".into()];
        header.extend(self.languages.iter().map(|l| l.code().to_string()));
        header.push("AVG".into());
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![self.model.clone(), self.task.clone(), r.metric.clone()];
            rec.extend(r.scores.iter().map(|s| s.to_string()));
            rec.push(r.avg.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}
