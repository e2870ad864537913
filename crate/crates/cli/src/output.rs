use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use eigsur::compare::CompareTable;
use eigsur::greedy::{GreedyConfig, GreedyReport, Grid, SurrogateEval};
use eigsur::reduction::VectorKind;
use eigsur::surrogate::{AuditReport, PencilSource};
use eigsur::AffinePencil;
use serde::Serialize;

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BuildReport<'a> {
    pencil: &'a PencilSource,
    n: usize,
    d: usize,
    config: &'a GreedyConfig,
    #[serde(flatten)]
    greedy: &'a GreedyReport,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, value).with_context(|| format!("writing {}", path.display()))
}

fn omega_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("w{i}")).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|g| format!("{g:e}")).unwrap_or_default()
}

fn eval_rows<W: Write>(w: W, d: usize, points: &[Vec<f64>], evals: &[SurrogateEval]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = omega_header(d);
    header.extend(["lambda", "bound", "gap_estimate"].map(String::from));
    out.write_record(&header)?;
    for (p, e) in points.iter().zip(evals) {
        let mut row: Vec<String> = p.iter().map(|x| format!("{x:e}")).collect();
        row.extend([format!("{:e}", e.lambda), format!("{:e}", e.bound), fmt_opt(e.gap)]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `report.json`, `max_bound.csv`, `grid.csv` and `samples.csv` next to the
/// surrogate files.
pub fn write_build(
    dir: &Path,
    source: &PencilSource,
    p: &AffinePencil,
    cfg: &GreedyConfig,
    report: &GreedyReport,
    train: &Grid,
    evals: &[SurrogateEval],
) -> Result<()> {
    let full = BuildReport { pencil: source, n: p.n(), d: p.d(), config: cfg, greedy: report };
    write_json(&dir.join("report.json"), &full)?;

    let mut trace = csv::Writer::from_path(dir.join("max_bound.csv"))?;
    trace.write_record(["iteration", "max_bound"])?;
    for (i, u) in report.max_bound_trace.iter().enumerate() {
        trace.write_record([i.to_string(), format!("{u:e}")])?;
    }
    trace.flush()?;

    eval_rows(File::create(dir.join("grid.csv"))?, p.d(), &train.points(), evals)?;

    let mut samples = csv::Writer::from_path(dir.join("samples.csv"))?;
    let mut header = omega_header(p.d());
    header.extend(["kind", "index", "deflated"].map(String::from));
    samples.write_record(&header)?;
    for v in &report.samples {
        let (kind, idx) = match v.kind {
            VectorKind::Eigenvector(i) => ("eigenvector", i),
            VectorKind::Derivative(j) => ("derivative", j),
        };
        let mut row: Vec<String> = v.omega.iter().map(|x| format!("{x:e}")).collect();
        row.extend([kind.to_string(), idx.to_string(), v.deflated.to_string()]);
        samples.write_record(&row)?;
    }
    samples.flush()?;
    Ok(())
}

pub fn write_eval(out: Option<&Path>, d: usize, points: &[Vec<f64>], evals: &[SurrogateEval]) -> Result<()> {
    match out {
        Some(path) => eval_rows(File::create(path).with_context(|| format!("creating {}", path.display()))?, d, points, evals),
        None => eval_rows(std::io::stdout().lock(), d, points, evals),
    }
}

pub fn write_audit(dir: &Path, report: &AuditReport) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("audit.json"), report)?;
    let d = report.rows.first().map_or(0, |r| r.omega.len());
    let mut out = csv::Writer::from_path(dir.join("audit.csv"))?;
    let mut header = omega_header(d);
    header.extend(
        ["lambda_true", "lambda", "error", "bound", "bound_kind", "bauer_fike", "gap_estimate", "true_gap", "bound_holds"]
            .map(String::from),
    );
    out.write_record(&header)?;
    for r in &report.rows {
        let mut row: Vec<String> = r.omega.iter().map(|x| format!("{x:e}")).collect();
        let kind = serde_json::to_value(r.kind)?.as_str().unwrap_or_default().to_string();
        row.extend([
            format!("{:e}", r.lambda_true),
            format!("{:e}", r.lambda),
            format!("{:e}", r.error),
            format!("{:e}", r.bound),
            kind,
            format!("{:e}", r.bauer_fike),
            fmt_opt(r.gap_estimate),
            format!("{:e}", r.true_gap),
            r.bound_holds().to_string(),
        ]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_compare(dir: &Path, table: &CompareTable) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("compare.json"), table)?;
    let path = dir.join("compare.csv");
    std::fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))
}
