//! Executing plans cell by cell with resumable on-disk results.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::plan::{ExperimentPlan, MethodSpec};
use super::report::{CellResult, ExperimentReport};
use super::stats::final_score;
use super::write_atomic;
use crate::agent::{log_from_csv, log_to_csv, train_roida};
use crate::data::{build_mixture, MixtureSetting, TransitionSet};
use crate::envs::{generate_dataset, BehaviorPolicy};
use crate::rng::derive_seed;
use crate::tensorcore::ModelCheckpoint;
use crate::{Error, Result};

pub const RESULTS_ENV_VAR: &str = "ROIDA_RESULTS_DIR";

/// `$ROIDA_RESULTS_DIR`, or `results` in the working directory.
pub fn results_root() -> PathBuf {
    std::env::var_os(RESULTS_ENV_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// One (setting, method, seed) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellKey {
    pub setting: usize,
    pub method: usize,
    pub seed: u64,
}

/// `<root>/<plan>/<setting>/<method>/<seed>`
pub fn cell_dir(root: &Path, plan: &ExperimentPlan, key: CellKey) -> PathBuf {
    root.join(&plan.name)
        .join(plan.settings[key.setting].dir_name())
        .join(&plan.methods[key.method].label)
        .join(key.seed.to_string())
}

/// What happened to a cell during `run_plan`.
#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Skipped,
    Completed(f64),
    Failed(String),
}

/// Expert and suboptimal trajectory pools shared by every cell of a plan.
#[derive(Debug, Clone)]
pub struct Pools {
    pub experts: TransitionSet,
    pub suboptimal: TransitionSet,
}

impl Pools {
    pub fn generate(plan: &ExperimentPlan) -> Result<Pools> {
        let n_sub = plan.settings.iter().map(|s| s.n_suboptimal_in_o).max().unwrap_or(0).max(1);
        let policy: BehaviorPolicy = plan.suboptimal_policy.parse()?;
        Ok(Pools {
            experts: generate_dataset(
                &plan.env,
                BehaviorPolicy::Expert,
                plan.expert_pool,
                derive_seed(plan.data_seed, "expert_pool"),
            )?,
            suboptimal: generate_dataset(&plan.env, policy, n_sub, derive_seed(plan.data_seed, "suboptimal_pool"))?,
        })
    }

    /// D_E and D_O of one setting for one run seed. D_E depends only on the seed.
    pub fn mixture(&self, plan: &ExperimentPlan, setting: &MixtureSetting, seed: u64) -> Result<(TransitionSet, TransitionSet)> {
        build_mixture(
            setting,
            &self.experts,
            &self.suboptimal,
            derive_seed(plan.data_seed, &format!("mixture/{seed}")),
        )
    }
}

/// Train one cell and write `log.csv`, `policy.ckpt` and finally `final.txt`.
pub fn run_cell(plan: &ExperimentPlan, pools: &Pools, method: &MethodSpec, setting: &MixtureSetting, seed: u64, dir: &Path) -> Result<f64> {
    let config = plan.cell_config(method, seed)?;
    let (de, d_o) = pools.mixture(plan, setting, seed)?;
    let outcome = train_roida(&de, &d_o, &config, &plan.env)?;
    let score = final_score(&outcome.eval_curve())?;
    write_atomic(&dir.join("log.csv"), log_to_csv(&outcome.log).as_bytes())?;
    ModelCheckpoint {
        role: "policy".into(),
        model: outcome.policy.mean_net.clone(),
        log_std: Some(outcome.policy.log_std.clone()),
    }
    .save(&dir.join("policy.ckpt"))?;
    write_atomic(&dir.join("final.txt"), format!("{score:?}\n").as_bytes())?;
    Ok(score)
}

/// Read a finished cell back from disk. `None` if the cell has not completed.
pub fn load_cell(dir: &Path) -> Result<Option<CellResult>> {
    let final_path = dir.join("final.txt");
    let text = match fs::read_to_string(&final_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&final_path, e)),
    };
    let line = text.trim_end();
    if let Some(msg) = line.strip_prefix("failed: ") {
        return Ok(Some(CellResult::failed(msg)));
    }
    let score: f64 = line.parse().map_err(|_| Error::Parse {
        offset: 0,
        message: format!("{}: expected a score or `failed: ...`", final_path.display()),
    })?;
    let log_path = dir.join("log.csv");
    let log = fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let curve = log_from_csv(&log)?.iter().map(|r| r.eval_score).collect();
    Ok(Some(CellResult {
        curve,
        final_score: Some(score),
        error: None,
    }))
}

/// Every cell key of a plan in report order.
pub fn cell_keys(plan: &ExperimentPlan) -> Vec<CellKey> {
    let mut keys = Vec::with_capacity(plan.n_cells());
    for setting in 0..plan.settings.len() {
        for method in 0..plan.methods.len() {
            for &seed in &plan.seeds {
                keys.push(CellKey { setting, method, seed });
            }
        }
    }
    keys
}

/// Run every missing cell of `plan` under `root`, then aggregate and write
/// `report.csv` / `report.md`. Cells whose `final.txt` exists are skipped; a failing cell
/// is recorded as failed and the plan continues.
pub fn run_plan<F>(plan: &ExperimentPlan, root: &Path, progress: F) -> Result<ExperimentReport>
where
    F: Fn(CellKey, &CellStatus) + Sync,
{
    plan.validate()?;
    let plan_dir = root.join(&plan.name);
    write_atomic(&plan_dir.join("plan.txt"), plan.to_text().as_bytes())?;
    let keys = cell_keys(plan);
    let pending: Vec<CellKey> = keys
        .iter()
        .copied()
        .filter(|&k| !cell_dir(root, plan, k).join("final.txt").exists())
        .collect();
    for &k in keys.iter().filter(|k| !pending.contains(k)) {
        progress(k, &CellStatus::Skipped);
    }
    if !pending.is_empty() {
        let pools = Pools::generate(plan)?;
        let next = AtomicUsize::new(0);
        let io_error: Mutex<Option<Error>> = Mutex::new(None);
        let worker = || loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(&key) = pending.get(i) else { break };
            let dir = cell_dir(root, plan, key);
            let status = match run_cell(plan, &pools, &plan.methods[key.method], &plan.settings[key.setting], key.seed, &dir) {
                Ok(score) => CellStatus::Completed(score),
                Err(e @ Error::Io { .. }) => {
                    io_error.lock().expect("poisoned").get_or_insert(e);
                    break;
                }
                Err(e) => {
                    let msg = e.to_string().replace('\n', " ");
                    if let Err(w) = write_atomic(&dir.join("final.txt"), format!("failed: {msg}\n").as_bytes()) {
                        io_error.lock().expect("poisoned").get_or_insert(w);
                        break;
                    }
                    CellStatus::Failed(msg)
                }
            };
            progress(key, &status);
        };
        let jobs = plan.jobs.clamp(1, pending.len());
        std::thread::scope(|s| {
            for _ in 1..jobs {
                s.spawn(worker);
            }
            worker();
        });
        if let Some(e) = io_error.into_inner().expect("poisoned") {
            return Err(e);
        }
    }
    let report = collect_report(plan, root)?;
    report.write(&plan_dir)?;
    Ok(report)
}

/// Aggregate whatever cells of `plan` exist under `root`.
pub fn collect_report(plan: &ExperimentPlan, root: &Path) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::empty(plan);
    for key in cell_keys(plan) {
        if let Some(cell) = load_cell(&cell_dir(root, plan, key))? {
            report.insert(key, cell);
        }
    }
    Ok(report)
}
