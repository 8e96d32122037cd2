//! Rendering of evaluation and comparison results as Markdown and CSV.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use tcf_core::compare::ComparisonRow;
use tcf_core::evaluate::{Estimate, TrustReport};

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "–".to_string()
    }
}

fn table(out: &mut String, title: &str, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

/// The four report tables: overall performance, per-corpus F1, trust
/// metrics and cross-dataset stability.
pub fn markdown(report: &TrustReport) -> String {
    let mut out = String::from("# Trustworthiness report\n\n");

    let rows: Vec<Vec<String>> = report
        .models
        .iter()
        .map(|m| {
            vec![
                m.model.clone(),
                cell(m.accuracy),
                cell(m.precision),
                cell(m.recall),
                cell(m.f1),
            ]
        })
        .collect();
    table(
        &mut out,
        "Performance",
        &["Model", "Accuracy", "Precision", "Recall", "F1-score"],
        &rows,
    );

    let datasets: BTreeSet<&str> = report.groups.iter().map(|g| g.dataset.as_str()).collect();
    let models: Vec<&str> = report.models.iter().map(|m| m.model.as_str()).collect();
    let mut header = vec!["Dataset"];
    header.extend(&models);
    let rows: Vec<Vec<String>> = datasets
        .iter()
        .map(|d| {
            let mut row = vec![d.to_string()];
            for m in &models {
                let f1 = report
                    .groups
                    .iter()
                    .find(|g| g.model == *m && g.dataset == *d)
                    .map_or(f64::NAN, |g| g.f1.value);
                row.push(cell(f1));
            }
            row
        })
        .collect();
    table(&mut out, "F1-score per corpus", &header, &rows);

    let rows: Vec<Vec<String>> = report
        .models
        .iter()
        .map(|m| {
            vec![
                m.model.clone(),
                cell(m.ece),
                cell(m.var_norm),
                cell(m.robustness.unwrap_or(f64::NAN)),
                cell(m.mean_tci.value),
                cell(m.cds.value),
            ]
        })
        .collect();
    table(
        &mut out,
        "Trust calibration",
        &["Model", "ECE ↓", "Var_norm(F1) ↓", "R ↑", "TCI ↑", "CDS ↑"],
        &rows,
    );

    let rows: Vec<Vec<String>> = report
        .models
        .iter()
        .map(|m| vec![m.model.clone(), cell(m.mean_tci.value), cell(m.cds.value)])
        .collect();
    table(
        &mut out,
        "Cross-dataset stability",
        &["Model", "Mean TCI", "CDS"],
        &rows,
    );

    if !report.warnings.is_empty() {
        out.push_str("## Warnings\n\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
        out.push('\n');
    }
    out
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn ci_bounds(e: &Estimate) -> [String; 2] {
    match e.ci {
        Some(c) => [c.lo.to_string(), c.hi.to_string()],
        None => [String::new(), String::new()],
    }
}

pub fn reliability_csv(report: &TrustReport) -> Vec<u8> {
    let rows = report.groups.iter().flat_map(|g| {
        g.reliability.bins.iter().map(move |b| {
            vec![
                g.model.clone(),
                g.dataset.clone(),
                b.index.to_string(),
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                b.accuracy.map(|v| v.to_string()).unwrap_or_default(),
                b.mean_confidence.map(|v| v.to_string()).unwrap_or_default(),
            ]
        })
    });
    csv_bytes(
        &["model", "dataset", "bin", "bin_lo", "bin_hi", "count", "accuracy", "mean_confidence"],
        rows,
    )
}

pub fn robustness_csv(report: &TrustReport) -> Vec<u8> {
    let rows = report.groups.iter().flat_map(|g| {
        g.robustness_curve.iter().map(move |l| {
            vec![
                g.model.clone(),
                g.dataset.clone(),
                l.similarity.to_string(),
                l.pairs.to_string(),
                l.robustness.to_string(),
            ]
        })
    });
    csv_bytes(&["model", "dataset", "similarity", "pairs", "robustness"], rows)
}

pub fn tci_csv(report: &TrustReport) -> Vec<u8> {
    let rows = report.groups.iter().map(|g| {
        let [lo, hi] = ci_bounds(&g.tci);
        vec![
            g.model.clone(),
            g.dataset.clone(),
            g.temperature.to_string(),
            g.ece.value.to_string(),
            g.var_norm.value.to_string(),
            g.robustness.map(|r| r.value.to_string()).unwrap_or_default(),
            g.tci.value.to_string(),
            lo,
            hi,
            g.tci_raw.to_string(),
        ]
    });
    csv_bytes(
        &[
            "model", "dataset", "temperature", "ece", "var_norm", "robustness", "tci", "tci_lo", "tci_hi",
            "tci_raw",
        ],
        rows,
    )
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> Vec<u8> {
    let rows = rows.iter().map(|r| {
        vec![
            r.model_a.clone(),
            r.model_b.clone(),
            r.dataset.clone(),
            r.statistic.to_string(),
            r.diff.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.p_value.to_string(),
        ]
    });
    csv_bytes(
        &["model_a", "model_b", "dataset", "statistic", "diff", "ci_lo", "ci_hi", "p_value"],
        rows,
    )
}

pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.statistic.to_string(),
                cell(r.diff),
                format!("[{}, {}]", cell(r.ci_lo), cell(r.ci_hi)),
                cell(r.p_value),
            ]
        })
        .collect();
    let title = rows
        .first()
        .map_or_else(|| "Comparison".to_string(), |r| format!("{} vs {}", r.model_a, r.model_b));
    table(&mut out, &title, &["Dataset", "Statistic", "Diff", "CI", "p"], &body);
    out
}
