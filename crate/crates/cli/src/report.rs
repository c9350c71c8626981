use std::collections::BTreeMap;

use tconv_core::data::FOLDS;
use tconv_core::layers::InitKind;
use tconv_core::model::{Frontend, NetworkConfig};
use tconv_core::train::{cross_fold_summary, round2, EvalReport, FoldMetrics};

use crate::args::ReportArgs;
use crate::error::{CliError, Result};
use crate::manifest::Recorder;
use crate::train_cmds::FoldEval;

/// Table rows in presentation order; other configurations follow
/// alphabetically.
pub const ROW_ORDER: [&str; 6] = [
    "Baseline",
    "tConv Non-Learn",
    "tConv-FIR Init",
    "LP-tConv-FIR Init",
    "ZP-tConv-FIR Init",
    "LP-tConv-Rand Init",
];

pub fn row_label(cfg: &NetworkConfig) -> String {
    let known = match (cfg.frontend, cfg.init, cfg.trainable_frontend) {
        (Frontend::ExternalFir, _, _) => Some("Baseline"),
        (Frontend::TconvFree, InitKind::FirBank, false) => Some("tConv Non-Learn"),
        (Frontend::TconvFree, InitKind::FirBank, true) => Some("tConv-FIR Init"),
        (Frontend::TconvLp, InitKind::FirBank, true) => Some("LP-tConv-FIR Init"),
        (Frontend::TconvZp, InitKind::FirBank, true) => Some("ZP-tConv-FIR Init"),
        (Frontend::TconvLp, InitKind::Random, true) => Some("LP-tConv-Rand Init"),
        _ => None,
    };
    known.map(String::from).unwrap_or_else(|| {
        let variant = match cfg.frontend {
            Frontend::ExternalFir => "Baseline",
            Frontend::TconvFree => "tConv",
            Frontend::TconvLp => "LP-tConv",
            Frontend::TconvZp => "ZP-tConv",
        };
        let init = match cfg.init {
            InitKind::FirBank => "FIR",
            InitKind::Random => "Rand",
            InitKind::Zeros => "Zeros",
            InitKind::He => "He",
        };
        let frozen = if cfg.trainable_frontend { "" } else { " Frozen" };
        format!("{variant}-{init} Init{frozen}")
    })
}

fn row_rank(label: &str) -> (usize, String) {
    let rank = ROW_ORDER.iter().position(|r| *r == label).unwrap_or(ROW_ORDER.len());
    (rank, label.to_string())
}

/// One table row: per-fold metrics keyed by fold and their summary.
pub struct Row {
    pub label: String,
    pub folds: BTreeMap<i32, FoldMetrics>,
    pub summary: EvalReport,
}

pub fn collect_rows(evals: Vec<FoldEval>) -> Result<Vec<Row>> {
    let mut grouped: BTreeMap<(usize, String), BTreeMap<i32, FoldMetrics>> = BTreeMap::new();
    for e in evals {
        let folds = grouped.entry(row_rank(&e.label)).or_default();
        if folds.insert(e.fold, e.metrics).is_some() {
            return Err(CliError::Data(format!("two evaluations of {} fold {}", e.label, e.fold)));
        }
    }
    grouped
        .into_iter()
        .map(|((_, label), folds)| {
            let summary = cross_fold_summary(folds.values().cloned().collect())?;
            Ok(Row { label, folds, summary })
        })
        .collect()
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut out = String::from("config,folds");
    for k in 0..FOLDS {
        out.push_str(&format!(",sensitivity_{k},specificity_{k},macc_{k}"));
    }
    out.push_str(",sensitivity_mean,sensitivity_std,specificity_mean,specificity_std,macc_mean,macc_std\n");
    for r in rows {
        out.push_str(&format!("{},{}", r.label, r.folds.len()));
        for k in 0..FOLDS as i32 {
            match r.folds.get(&k) {
                Some(m) => out.push_str(&format!(
                    ",{:.2},{:.2},{:.2}",
                    round2(m.sensitivity),
                    round2(m.specificity),
                    round2(m.macc)
                )),
                None => out.push_str(",,,"),
            }
        }
        let s = &r.summary;
        for ms in [s.sensitivity, s.specificity, s.macc] {
            out.push_str(&format!(",{:.2},{:.2}", round2(ms.mean), round2(ms.std)));
        }
        out.push('\n');
    }
    out
}

pub fn report(a: ReportArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("report", argv, &a.out.out)?;
    if !a.runs.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", a.runs.display())));
    }
    let mut evals = Vec::new();
    for entry in walkdir::WalkDir::new(&a.runs).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        if entry.file_type().is_file() && entry.file_name() == "eval.json" {
            evals.push(serde_json::from_slice::<FoldEval>(&rec.read(entry.path())?)?);
        }
    }
    if evals.is_empty() {
        return Err(CliError::Data(format!("no eval.json under {}", a.runs.display())));
    }
    let rows = collect_rows(evals)?;
    rec.write("report.csv", rows_csv(&rows).as_bytes())?;
    let json: BTreeMap<&str, &EvalReport> = rows.iter().map(|r| (r.label.as_str(), &r.summary)).collect();
    rec.write("report.json", serde_json::to_string_pretty(&json)?.as_bytes())?;
    for r in &rows {
        println!(
            "{:<22} Macc {:.2} ± {:.2} over {} folds",
            r.label,
            round2(r.summary.macc.mean),
            round2(r.summary.macc.std),
            r.folds.len()
        );
    }
    rec.finish()?;
    Ok(())
}
