//! Reporting harness for the acceptance checks: each check runs once, is
//! timed against its budget and prints a single pass/fail line.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

/// Result of one check before timing is taken into account.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
    pub detail: String,
}

impl Record {
    /// A check passes only if its outcome holds within budget.
    pub fn from_outcome(
        id: u32,
        title: &str,
        budget: Option<Duration>,
        elapsed: Duration,
        outcome: Result<Outcome, String>,
    ) -> Self {
        let (mut passed, mut detail) = match outcome {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(b) = budget {
            if elapsed >= b {
                passed = false;
                detail.push_str(&format!("; over the {} s budget", b.as_secs_f64()));
            }
        }
        Self { id, title: title.into(), passed, elapsed, budget, detail }
    }

    pub fn line(&self) -> String {
        let mut line = format!(
            "[{}] {:>2} {} ({:.3} s",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64()
        );
        if let Some(b) = self.budget {
            let _ = write!(line, " of {} s", b.as_secs_f64());
        }
        let _ = write!(line, "): {}", self.detail);
        line
    }
}

#[derive(Debug, Default)]
pub struct Suite {
    records: Vec<Record>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `check`, prints its line and keeps the record.
    pub fn run<F>(&mut self, id: u32, title: &str, budget: Option<Duration>, check: F) -> bool
    where
        F: FnOnce() -> Result<Outcome, String>,
    {
        let start = Instant::now();
        let outcome = check();
        let record = Record::from_outcome(id, title, budget, start.elapsed(), outcome);
        println!("{}", record.line());
        let passed = record.passed;
        self.records.push(record);
        passed
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn failed(&self) -> Vec<u32> {
        self.records.iter().filter(|r| !r.passed).map(|r| r.id).collect()
    }

    pub fn summary(&self) -> String {
        let n = self.records.len();
        let failed = self.failed();
        if failed.is_empty() {
            format!("acceptance: {n}/{n} criteria pass")
        } else {
            let ids: Vec<String> = failed.iter().map(u32::to_string).collect();
            format!("acceptance: {}/{n} criteria pass; failing: {}", n - failed.len(), ids.join(", "))
        }
    }
}
