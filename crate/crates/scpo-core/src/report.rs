//! CSV reports: one schema for verification suites, one for training
//! metrics. Files are written whole and atomically (write to a temp path,
//! then rename), so an interrupted run leaves the previous complete file.

use std::path::Path;

use crate::error::Result;
use crate::trainer::IterationMetrics;

/// One verification check outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub check: String,
    /// Instance seed the check ran under; 0 for deterministic fixtures.
    pub seed: u64,
    /// Residual, slack or measured value, depending on the check.
    pub value: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(check: impl Into<String>, seed: u64, value: f64, pass: bool) -> Self {
        Self {
            check: check.into(),
            seed,
            value,
            pass,
        }
    }
}

pub const CHECK_HEADER: &str = "check,seed,value,pass";

pub fn check_csv(records: &[CheckRecord]) -> String {
    let mut out = String::from(CHECK_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.check, r.seed, r.value, r.pass));
    }
    out
}

pub const METRICS_HEADER: &str =
    "iteration,env_steps,mean_return,mean_cost,cost_std,vc_loss,value_loss,surrogate_loss,entropy";

pub fn metrics_csv(rows: &[IterationMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            m.iteration,
            m.env_steps,
            m.mean_return,
            m.mean_cost,
            m.cost_std,
            m.vc_loss,
            m.value_loss,
            m.surrogate_loss,
            m.entropy
        ));
    }
    out
}

/// Writes a file atomically via a sibling temp file and rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layouts() {
        let records = vec![
            CheckRecord::new("a/b", 7, 1.5e-12, true),
            CheckRecord::new("c", 0, -0.25, false),
        ];
        let csv = check_csv(&records);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CHECK_HEADER));
        assert_eq!(lines.next(), Some("a/b,7,0.0000000000015,true"));
        assert_eq!(lines.next(), Some("c,0,-0.25,false"));
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = std::env::temp_dir().join("scpo-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        write_atomic(&path, "first\n").unwrap();
        write_atomic(&path, "second\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
