//! The `verify` subcommand.

use serde::Serialize;

use crate::criteria::{self, CriterionResult};

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub results: Vec<CriterionResult>,
    pub passed: usize,
    pub failed: usize,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&r.line());
            out.push('\n');
        }
        out.push_str(&format!("{} passed, {} failed\n", self.passed, self.failed));
        out
    }
}

/// Runs the selected criteria (all of them when `ids` is empty) in order.
/// Unknown ids are reported back as an error.
pub fn verify(ids: &[u8]) -> Result<VerifyReport, u8> {
    let ids: Vec<u8> = if ids.is_empty() { (1..=criteria::CRITERIA).collect() } else { ids.to_vec() };
    let mut results = Vec::with_capacity(ids.len());
    for id in ids {
        let f = criteria::by_id(id).ok_or(id)?;
        results.push(f());
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let failed = results.len() - passed;
    Ok(VerifyReport { results, passed, failed })
}
