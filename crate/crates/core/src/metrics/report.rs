use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::{EvalConfig, EvalReport};
use crate::error::{Error, Result};

/// One object's metrics as printed: Chamfer already multiplied by
/// `report_scale`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub category: String,
    pub chamfer_sym: f64,
    pub fscore_tau: f64,
    pub fscore_2tau: f64,
    pub cosine_similarity: f64,
}

impl ReportRow {
    pub fn new(id: impl Into<String>, category: impl Into<String>, report: &EvalReport, cfg: &EvalConfig) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
            chamfer_sym: report.chamfer_sym * cfg.report_scale,
            fscore_tau: report.fscore_tau,
            fscore_2tau: report.fscore_2tau,
            cosine_similarity: report.cosine_similarity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub chamfer_sym: f64,
    pub fscore_tau: f64,
    pub fscore_2tau: f64,
    pub cosine_similarity: f64,
}

/// Instance mean over all rows, and the mean of per-category means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportSummary {
    pub rows: Vec<ReportRow>,
    pub instance_mean: SummaryRow,
    pub category_mean: SummaryRow,
    pub categories: BTreeMap<String, SummaryRow>,
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a SummaryRow> + Clone) -> SummaryRow {
    let n = rows.clone().count() as f64;
    let avg = |f: fn(&SummaryRow) -> f64| rows.clone().map(f).sum::<f64>() / n;
    SummaryRow {
        chamfer_sym: avg(|r| r.chamfer_sym),
        fscore_tau: avg(|r| r.fscore_tau),
        fscore_2tau: avg(|r| r.fscore_2tau),
        cosine_similarity: avg(|r| r.cosine_similarity),
    }
}

fn as_summary(r: &ReportRow) -> SummaryRow {
    SummaryRow {
        chamfer_sym: r.chamfer_sym,
        fscore_tau: r.fscore_tau,
        fscore_2tau: r.fscore_2tau,
        cosine_similarity: r.cosine_similarity,
    }
}

impl ReportSummary {
    pub fn new(rows: Vec<ReportRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("report has no rows"));
        }
        let flat: Vec<SummaryRow> = rows.iter().map(as_summary).collect();
        let mut by_cat: BTreeMap<String, Vec<SummaryRow>> = BTreeMap::new();
        for (r, s) in rows.iter().zip(&flat) {
            by_cat.entry(r.category.clone()).or_default().push(s.clone());
        }
        let categories: BTreeMap<String, SummaryRow> = by_cat.into_iter().map(|(k, v)| (k, mean_of(v.iter()))).collect();
        Ok(Self {
            instance_mean: mean_of(flat.iter()),
            category_mean: mean_of(categories.values()),
            categories,
            rows,
        })
    }
}

/// CSV with one line per object, then `mean_instance` and `mean_category`.
pub fn write_csv(summary: &ReportSummary, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Unsupported(format!("csv output failed: {e}"));
    w.write_record(["id", "category", "chamfer_sym_x1000", "fscore_tau", "fscore_2tau", "cosine_similarity"])
        .map_err(csv_err)?;
    let fmt = |id: &str, cat: &str, s: &SummaryRow| {
        [
            id.to_string(),
            cat.to_string(),
            format!("{:.6}", s.chamfer_sym),
            format!("{:.4}", s.fscore_tau),
            format!("{:.4}", s.fscore_2tau),
            format!("{:.6}", s.cosine_similarity),
        ]
    };
    for r in &summary.rows {
        w.write_record(fmt(&r.id, &r.category, &as_summary(r))).map_err(csv_err)?;
    }
    w.write_record(fmt("mean_instance", "", &summary.instance_mean)).map_err(csv_err)?;
    w.write_record(fmt("mean_category", "", &summary.category_mean)).map_err(csv_err)?;
    w.flush().map_err(|e| Error::Unsupported(format!("csv output failed: {e}")))
}

pub fn write_json(summary: &ReportSummary, mut out: impl Write) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Unsupported(format!("json output failed: {e}")))?;
    writeln!(out, "{text}").map_err(|e| Error::Unsupported(format!("json output failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(c: f64) -> EvalReport {
        EvalReport {
            chamfer_sym: c,
            chamfer_pred_to_gt: c,
            chamfer_gt_to_pred: c,
            fscore_tau: 50.0,
            fscore_2tau: 60.0,
            cosine_similarity: 0.5,
        }
    }

    #[test]
    fn instance_and_category_means_differ() {
        let cfg = EvalConfig::default();
        let rows = vec![
            ReportRow::new("a1", "a", &report(1e-3), &cfg),
            ReportRow::new("a2", "a", &report(3e-3), &cfg),
            ReportRow::new("b1", "b", &report(8e-3), &cfg),
        ];
        let s = ReportSummary::new(rows).unwrap();
        assert!((s.instance_mean.chamfer_sym - 4.0).abs() < 1e-12);
        assert!((s.category_mean.chamfer_sym - 5.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,category,chamfer_sym_x1000"));
        assert_eq!(text.lines().count(), 6);
        let mut buf = Vec::new();
        write_json(&s, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["rows"][2]["chamfer_sym"], 8.0);
    }
}
