//! The four enrichment variants run side by side on one pencil.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::greedy::{run, GreedyConfig, GreedyReport};
use crate::pencil::AffinePencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Variant {
    pub m: usize,
    pub derivatives: bool,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant { m: 1, derivatives: false },
        Variant { m: 2, derivatives: false },
        Variant { m: 1, derivatives: true },
        Variant { m: 2, derivatives: true },
    ];

    pub fn label(&self) -> String {
        let base = if self.m == 1 { "1 eigv".to_string() } else { format!("{} eigv", self.m) };
        if self.derivatives {
            format!("{base} + deriv")
        } else {
            base
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VariantResult {
    pub variant: Variant,
    pub label: String,
    pub converged: bool,
    pub basis_dim: usize,
    pub sample_count: usize,
    pub total_s: f64,
    pub derivative_per_vector_s: f64,
    pub eigensolve_per_vector_s: f64,
    pub report: GreedyReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareTable {
    pub variants: Vec<VariantResult>,
}

impl CompareTable {
    pub const METRICS: [&'static str; 5] =
        ["dimension V", "sample points", "total time [s]", "time derivative [s/vector]", "time eigenvector [s/vector]"];

    pub fn get(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }

    /// One row per metric, one column per variant.
    pub fn rows(&self) -> Vec<(&'static str, Vec<String>)> {
        let col = |f: &dyn Fn(&VariantResult) -> String| self.variants.iter().map(f).collect::<Vec<_>>();
        vec![
            (Self::METRICS[0], col(&|r| r.basis_dim.to_string())),
            (Self::METRICS[1], col(&|r| r.sample_count.to_string())),
            (Self::METRICS[2], col(&|r| format!("{:.3}", r.total_s))),
            (Self::METRICS[3], col(&|r| if r.variant.derivatives { format!("{:.3e}", r.derivative_per_vector_s) } else { "-".into() })),
            (Self::METRICS[4], col(&|r| format!("{:.3e}", r.eigensolve_per_vector_s))),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for r in &self.variants {
            out.push(',');
            out.push_str(&r.label);
        }
        out.push('\n');
        for (name, cells) in self.rows() {
            out.push_str(name);
            for c in cells {
                out.push(',');
                out.push_str(&c);
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for CompareTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.rows();
        let first = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let widths: Vec<usize> = self
            .variants
            .iter()
            .enumerate()
            .map(|(i, r)| rows.iter().map(|(_, c)| c[i].len()).chain([r.label.len()]).max().unwrap_or(0))
            .collect();
        write!(f, "{:first$}", "")?;
        for (r, w) in self.variants.iter().zip(&widths) {
            write!(f, " | {:>w$}", r.label)?;
        }
        writeln!(f)?;
        for (name, cells) in rows {
            write!(f, "{name:first$}")?;
            for (c, w) in cells.iter().zip(&widths) {
                write!(f, " | {c:>w$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Runs every variant with `base` otherwise unchanged.
pub fn compare(p: &AffinePencil, base: &GreedyConfig) -> Result<CompareTable> {
    let mut variants = Vec::new();
    for v in Variant::ALL {
        let cfg = GreedyConfig { m: v.m, use_derivatives: v.derivatives, ..base.clone() };
        let (_, report) = run(p, &cfg)?;
        log::info!("{}: {} samples, dim {}", v.label(), report.sample_count, report.basis_dim);
        variants.push(VariantResult {
            variant: v,
            label: v.label(),
            converged: report.converged,
            basis_dim: report.basis_dim,
            sample_count: report.sample_count,
            total_s: report.timings.total_s,
            derivative_per_vector_s: report.timings.derivative_per_vector(),
            eigensolve_per_vector_s: report.timings.eigensolve_per_vector(),
            report,
        });
    }
    Ok(CompareTable { variants })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{example1, Rotation};

    #[test]
    fn table_shape() {
        let p = example1(8, Rotation::Givens { seed: 3 }).unwrap().pencil;
        let base = GreedyConfig { train_grid: vec![7, 7], ..Default::default() };
        let t = compare(&p, &base).unwrap();
        assert_eq!(t.variants.len(), 4);
        let rows = t.rows();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|(_, c)| c.len() == 4));
        assert_eq!(t.to_csv().lines().count(), 6);
        assert!(t.to_string().contains("2 eigv + deriv"));
    }
}
