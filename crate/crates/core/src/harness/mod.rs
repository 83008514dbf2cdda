//! Experiment plans, resumable sweeps, score aggregation, reports and the self-test.

mod plan;
mod report;
mod run;
pub mod selftest;
mod stats;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

pub use plan::{ExperimentPlan, MethodSpec};
pub use report::{CellResult, ExperimentReport, MISSING};
pub use run::{
    cell_dir, cell_keys, collect_report, load_cell, results_root, run_cell, run_plan, CellKey, CellStatus, Pools,
    RESULTS_ENV_VAR,
};
pub use stats::{final_score, interquartile_mean, iqm, mean_std, Iqm, DEFAULT_BOOTSTRAP_REPS, FINAL_WINDOW};

/// Write `bytes` to a sibling temp file and rename it over `path`, creating parent
/// directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let name = path.file_name().ok_or_else(|| Error::config(format!("{} has no file name", path.display())))?;
    let tmp = parent.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
