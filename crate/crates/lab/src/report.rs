//! Human-readable summary of a finished run.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LabError, Result};
use crate::runner::{read_manifest, CriterionRow, SUMMARY};

/// Table of criteria, measured values, targets and verdicts, ending in one verdict line.
pub fn report(out: &Path) -> Result<String> {
    let manifest = read_manifest(out)?;
    if !manifest.complete {
        return Err(LabError::Output {
            path: out.into(),
            reason: format!(
                "incomplete manifest: {} of {} jobs done",
                manifest.done.len(),
                manifest.total
            ),
        });
    }
    let mut rows = Vec::new();
    for r in csv::Reader::from_path(out.join(SUMMARY))?.deserialize() {
        let r: CriterionRow = r?;
        rows.push(r);
    }
    Ok(render(&rows))
}

pub fn render(rows: &[CriterionRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:<22} {:<10} {:>13} {:>13} {:>9}  verdict",
        "criterion", "fixture", "phi", "measured", "target", "tol"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<18} {:<22} {:<10} {:>13.6e} {:>13.6e} {:>9.3}  {}",
            r.criterion,
            r.fixture,
            r.phi,
            r.measured,
            r.target,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    if rows.is_empty() {
        s.push_str("no criteria apply to this run\n");
    } else if failed == 0 {
        s.push_str("all criteria pass\n");
    } else {
        let _ = writeln!(s, "{failed} of {} criteria fail", rows.len());
    }
    s
}
