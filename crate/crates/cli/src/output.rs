//! CSV and manifest writers. Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use simcov::procedures::{ConvergenceRow, ConvergenceTable, Strategy};

use crate::config::Config;
use crate::CliError;

pub const CONVERGENCE_HEADER: &str = "problem,kernel,dist,m,n,macro_reps,mean_max_imse,se_max_imse,mean_ipfs_ind,se_ipfs_ind,mean_ipfs_apfs,se_ipfs_apfs";

/// Round-trip exact float text.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f64)
}

pub fn convergence_csv(rows: &[ConvergenceRow], with_strategy: bool) -> String {
    let mut out = String::new();
    if with_strategy {
        out.push_str("strategy,");
    }
    out.push_str(CONVERGENCE_HEADER);
    out.push('\n');
    for r in rows {
        if with_strategy {
            out.push_str(r.strategy.name());
            out.push(',');
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.problem,
            r.kernel,
            r.dist,
            r.m,
            r.n,
            r.macro_reps,
            fmt_f64(r.mean_max_imse),
            fmt_f64(r.se_max_imse),
            fmt_f64(r.mean_ipfs_ind),
            fmt_f64(r.se_ipfs_ind),
            fmt_f64(r.mean_ipfs_apfs),
            fmt_f64(r.se_ipfs_apfs),
        );
    }
    out
}

/// Per macro-replication results, including the empirical squared error
/// against the true means.
pub fn cells_csv(tables: &[(Strategy, String, usize, &ConvergenceTable)]) -> String {
    let mut out = String::from("strategy,kernel,n,m,macro_rep,max_imse,ipfs_ind,ipfs_apfs,max_sq_err,error\n");
    for (strategy, kernel, n, table) in tables {
        for rep in &table.cells {
            for c in rep {
                let r = c.report.as_ref();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    strategy.name(),
                    kernel,
                    n,
                    c.m,
                    c.macro_rep,
                    fmt_opt(r.map(|r| r.max_imse)),
                    fmt_opt(r.and_then(|r| r.ipfs_indicator)),
                    fmt_opt(r.map(|r| r.ipfs_apfs)),
                    fmt_opt(r.and_then(|r| r.max_sq_err)),
                    c.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
                );
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

/// Run metadata written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'static str,
    pub config_hash: Option<String>,
    pub master_seed: Option<u64>,
    pub tool_version: &'static str,
    pub config: Option<&'a Config>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub timing: Vec<Timing>,
    pub warnings: Vec<String>,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'static str, config: Option<&'a Config>, master_seed: Option<u64>) -> Self {
        Self {
            command,
            config_hash: config.map(Config::hash),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            metadata: BTreeMap::new(),
            timing: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        self.metadata.insert(key.to_string(), serde_json::to_value(value).expect("metadata serializes"));
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(dir, "manifest.json", &text)
}
