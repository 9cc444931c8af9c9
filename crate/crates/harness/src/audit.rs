//! Post-run settlement audit over the emitted CSVs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::output::read_csv;
use crate::pipeline::SettlementRow;

pub const SETTLEMENT_SUFFIX: &str = "settlements.csv";

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub files: Vec<String>,
    pub rows: usize,
    pub deals: usize,
    pub unmet: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.deals > 0
    }
}

/// Check every deal: total payouts stay within the budget, a met target
/// pays exactly the agreed price, and an unmet target pays exactly zero.
pub fn audit_rows(source: &str, rows: &[SettlementRow], report: &mut AuditReport) {
    let mut deals: BTreeMap<(&str, &str, u32, u32), (f64, f64)> = BTreeMap::new();
    for (line, row) in rows.iter().enumerate() {
        let at = format!("{source}:{}", line + 2);
        let deal = deals.entry((&row.experiment, &row.cell, row.replication, row.year)).or_insert((row.budget, 0.0));
        deal.1 += row.payout;
        if row.budget != deal.0 {
            report.violations.push(format!("{at}: budget differs within one deal"));
        }
        if row.reached != (row.achieved_level >= row.promised) {
            report.violations.push(format!(
                "{at}: reached={} but achieved {} against promised {}",
                row.reached, row.achieved_level, row.promised
            ));
        }
        if row.reached && row.payout != row.price {
            report.violations.push(format!("{at}: met target paid {} instead of {}", row.payout, row.price));
        }
        if !row.reached {
            report.unmet += 1;
            if row.payout != 0.0 {
                report.violations.push(format!("{at}: unmet target paid {}", row.payout));
            }
        }
    }
    for ((experiment, cell, replication, year), (budget, paid)) in &deals {
        if *paid > *budget {
            report.violations.push(format!(
                "{source}: deal {experiment}/{cell}/rep={replication}/year={year} paid {paid} over budget {budget}"
            ));
        }
    }
    report.rows += rows.len();
    report.deals += deals.len();
}

/// Audit every `*settlements.csv` file in `dir`.
pub fn audit_dir(dir: &Path) -> Result<AuditReport> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(SETTLEMENT_SUFFIX)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Audit(format!("no *{SETTLEMENT_SUFFIX} files in {}", dir.display())));
    }
    let mut report = AuditReport::default();
    for path in files {
        let rows: Vec<SettlementRow> = read_csv(&path)?;
        let name = path.file_name().expect("file").to_string_lossy().into_owned();
        audit_rows(&name, &rows, &mut report);
        report.files.push(name);
    }
    Ok(report)
}
