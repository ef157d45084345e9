//! Pass/fail bookkeeping for the acceptance suite in `tests/acceptance.rs`.

use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// Extra line that does not count towards the verdict.
pub fn note(text: &str) {
    println!("       note: {text}");
}

/// Runs criteria in order and prints one `[PASS]`/`[FAIL]` line each.
#[derive(Debug, Default)]
pub struct Suite {
    pub outcomes: Vec<Outcome>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    /// `f` returns `(pass, detail)`; an `Err` counts as a failure.
    pub fn run<E: std::fmt::Display>(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, String), E>) -> bool {
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let o = Outcome { id: self.outcomes.len() + 1, name: name.to_string(), pass, detail, elapsed: t.elapsed() };
        println!("[{}] {:>2}. {} ({:.1}s): {}", if pass { "PASS" } else { "FAIL" }, o.id, o.name, o.elapsed.as_secs_f64(), o.detail);
        self.outcomes.push(o);
        pass
    }

    pub fn failed(&self) -> Vec<&Outcome> {
        self.outcomes.iter().filter(|o| !o.pass).collect()
    }

    pub fn summary(&self) -> String {
        let f = self.failed();
        format!("{} of {} criteria passed", self.outcomes.len() - f.len(), self.outcomes.len())
    }
}
