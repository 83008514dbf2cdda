//! Aggregated results of a plan and their CSV / Markdown renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::plan::ExperimentPlan;
use super::run::CellKey;
use super::stats::{iqm, mean_std, Iqm};
use super::write_atomic;
use crate::rng::derive_seed;
use crate::Result;

/// Placeholder for failed or missing cells.
pub const MISSING: &str = "—";

/// One cell's evaluation curve and final score, or the reason it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub curve: Vec<f64>,
    pub final_score: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn failed(message: &str) -> CellResult {
        CellResult {
            curve: Vec::new(),
            final_score: None,
            error: Some(message.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub settings: Vec<String>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub bootstrap_reps: usize,
    pub bootstrap_seed: u64,
    cells: BTreeMap<(usize, usize, u64), CellResult>,
}

impl ExperimentReport {
    pub fn empty(plan: &ExperimentPlan) -> ExperimentReport {
        ExperimentReport {
            name: plan.name.clone(),
            settings: plan.settings.iter().map(|s| s.to_string()).collect(),
            methods: plan.methods.iter().map(|m| m.label.clone()).collect(),
            seeds: plan.seeds.clone(),
            bootstrap_reps: plan.bootstrap_reps,
            bootstrap_seed: plan.data_seed,
            cells: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: CellKey, cell: CellResult) {
        self.cells.insert((key.setting, key.method, key.seed), cell);
    }

    pub fn cell(&self, setting: usize, method: usize, seed: u64) -> Option<&CellResult> {
        self.cells.get(&(setting, method, seed))
    }

    /// Number of cells with a result file (completed or failed).
    pub fn n_recorded(&self) -> usize {
        self.cells.len()
    }

    pub fn n_failed(&self) -> usize {
        self.cells.values().filter(|c| c.final_score.is_none()).count()
    }

    pub fn method_index(&self, label: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == label)
    }

    pub fn setting_index(&self, label: &str) -> Option<usize> {
        self.settings.iter().position(|s| s == label)
    }

    /// Final score per seed, `None` for failed or missing cells.
    pub fn seed_scores(&self, setting: usize, method: usize) -> Vec<Option<f64>> {
        self.seeds
            .iter()
            .map(|&s| self.cell(setting, method, s).and_then(|c| c.final_score))
            .collect()
    }

    /// Mean and sample std over the completed seeds.
    pub fn mean_std(&self, setting: usize, method: usize) -> Option<(f64, f64)> {
        let ok: Vec<f64> = self.seed_scores(setting, method).into_iter().flatten().collect();
        (!ok.is_empty()).then(|| mean_std(&ok))
    }

    /// Average of the per-setting means; `None` unless every setting has one.
    pub fn method_average(&self, method: usize) -> Option<f64> {
        let means: Option<Vec<f64>> = (0..self.settings.len())
            .map(|s| self.mean_std(s, method).map(|(m, _)| m))
            .collect();
        means.map(|m| m.iter().sum::<f64>() / m.len() as f64)
    }

    /// IQM over every completed per-seed final score of a method, pooled across settings.
    pub fn method_iqm(&self, method: usize) -> Option<(Iqm, usize)> {
        let pooled: Vec<f64> = (0..self.settings.len())
            .flat_map(|s| self.seed_scores(s, method))
            .flatten()
            .collect();
        let seed = derive_seed(self.bootstrap_seed, &format!("iqm/{}", self.methods[method]));
        iqm(&pooled, self.bootstrap_reps.max(1), seed).ok().map(|r| (r, pooled.len()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,method,mean,std");
        for s in &self.seeds {
            write!(out, ",seed_{s}").expect("writing to a String");
        }
        out.push('\n');
        for (si, setting) in self.settings.iter().enumerate() {
            for (mi, method) in self.methods.iter().enumerate() {
                let (mean, std) = match self.mean_std(si, mi) {
                    Some((m, s)) => (fmt(m), fmt(s)),
                    None => (MISSING.to_string(), MISSING.to_string()),
                };
                write!(out, "{setting},{method},{mean},{std}").expect("writing to a String");
                for score in self.seed_scores(si, mi) {
                    write!(out, ",{}", score.map(fmt).unwrap_or_else(|| MISSING.to_string()))
                        .expect("writing to a String");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# {}\n\nMean ± std of the final normalized score over {} seeds.\n\n| Setting |",
            self.name,
            self.seeds.len()
        );
        for m in &self.methods {
            write!(out, " {m} |").expect("writing to a String");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.methods.len()));
        out.push('\n');
        for (si, setting) in self.settings.iter().enumerate() {
            write!(out, "| {setting} |").expect("writing to a String");
            for mi in 0..self.methods.len() {
                let cell = match self.mean_std(si, mi) {
                    Some((m, s)) => format!("{} ± {}", fmt2(m), fmt2(s)),
                    None => MISSING.to_string(),
                };
                write!(out, " {cell} |").expect("writing to a String");
            }
            out.push('\n');
        }
        out.push_str("| **Average** |");
        for mi in 0..self.methods.len() {
            let cell = self
                .method_average(mi)
                .map(|a| format!("**{}**", fmt2(a)))
                .unwrap_or_else(|| MISSING.to_string());
            write!(out, " {cell} |").expect("writing to a String");
        }
        out.push_str(&format!(
            "\n\n## IQM\n\nPooled per-seed final scores across settings, {} bootstrap resamples, 95% interval.\n\n| Method | IQM | 95% CI | n |\n|---|---:|---:|---:|\n",
            self.bootstrap_reps
        ));
        for (mi, method) in self.methods.iter().enumerate() {
            match self.method_iqm(mi) {
                Some((r, n)) => writeln!(
                    out,
                    "| {method} | {} | [{}, {}] | {n} |",
                    fmt2(r.iqm),
                    fmt2(r.ci_low),
                    fmt2(r.ci_high)
                ),
                None => writeln!(out, "| {method} | {MISSING} | {MISSING} | — |"),
            }
            .expect("writing to a String");
        }
        let failed: Vec<String> = self
            .cells
            .iter()
            .filter_map(|(&(s, m, seed), c)| {
                c.error
                    .as_ref()
                    .map(|e| format!("- {} / {} / seed {seed}: {e}", self.settings[s], self.methods[m]))
            })
            .collect();
        if !failed.is_empty() {
            out.push_str("\n## Failed cells\n\n");
            out.push_str(&failed.join("\n"));
            out.push('\n');
        }
        out
    }

    /// Write `report.csv` and `report.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("report.md"), self.to_markdown().as_bytes())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvName;

    fn report() -> ExperimentReport {
        let mut plan = ExperimentPlan::new("t", EnvName::PointMass2d);
        plan.methods.truncate(2);
        plan.seeds = vec![0, 1];
        plan.bootstrap_reps = 100;
        let mut r = ExperimentReport::empty(&plan);
        for s in 0..3 {
            for m in 0..2 {
                r.insert(
                    CellKey { setting: s, method: m, seed: 0 },
                    CellResult {
                        curve: vec![1.0; 10],
                        final_score: Some((10 * s + m) as f64),
                        error: None,
                    },
                );
            }
        }
        r.insert(CellKey { setting: 0, method: 0, seed: 1 }, CellResult::failed("boom"));
        r
    }

    #[test]
    fn csv_shape_and_placeholders() {
        let r = report();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3 * 2 + 1);
        assert_eq!(lines[0], "setting,method,mean,std,seed_0,seed_1");
        assert_eq!(lines[1], "5/0,roida,0.000000,0.000000,0.000000,—");
        assert_eq!(csv, r.clone().to_csv());
    }

    #[test]
    fn markdown_has_average_row_and_failures() {
        let md = report().to_markdown();
        assert!(md.contains("| **Average** | **10.00** | **11.00** |"));
        assert!(md.contains("seed 1: boom"));
    }

    #[test]
    fn iqm_needs_four_scores() {
        let r = report();
        assert!(r.method_iqm(0).is_none());
    }
}
