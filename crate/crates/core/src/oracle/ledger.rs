use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// Exact count of backend queries. Runs partition the total: the current run
/// owns every query since the previous `start_run`.
#[derive(Debug)]
pub struct QueryLedger {
    total: AtomicU64,
    cache_hits: AtomicU64,
    runs: Mutex<Vec<(String, u64)>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCount {
    pub name: String,
    pub queries: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub total: u64,
    pub cache_hits: u64,
    pub runs: Vec<RunCount>,
}

impl Default for QueryLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl QueryLedger {
    pub fn new() -> Self {
        QueryLedger {
            total: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            // (name, total at start)
            runs: Mutex::new(vec![("default".into(), 0)]),
        }
    }

    pub(crate) fn record_query(&self) {
        self.total.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn record_cache_hit(&self) {
        self.cache_hits.fetch_add(1, Ordering::SeqCst);
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::SeqCst)
    }

    /// Queries counted since the current run started.
    pub fn current_run(&self) -> u64 {
        let runs = self.runs.lock().unwrap();
        self.total() - runs.last().unwrap().1
    }

    pub fn start_run(&self, name: &str) {
        let mut runs = self.runs.lock().unwrap();
        let now = self.total();
        if runs.len() == 1 && runs[0].1 == now && runs[0].0 == "default" && now == 0 {
            runs.clear();
        }
        runs.push((name.to_string(), now));
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let runs = self.runs.lock().unwrap();
        let total = self.total();
        let mut counts = Vec::with_capacity(runs.len());
        for (i, (name, start)) in runs.iter().enumerate() {
            let end = runs.get(i + 1).map_or(total, |r| r.1);
            counts.push(RunCount {
                name: name.clone(),
                queries: end - start,
            });
        }
        LedgerSnapshot {
            total,
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            runs: counts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_partition_total() {
        let l = QueryLedger::new();
        l.start_run("collect");
        (0..4).for_each(|_| l.record_query());
        l.start_run("attack");
        (0..6).for_each(|_| l.record_query());
        assert_eq!(l.current_run(), 6);
        let s = l.snapshot();
        assert_eq!(s.total, 10);
        assert_eq!(
            s.runs,
            vec![
                RunCount {
                    name: "collect".into(),
                    queries: 4
                },
                RunCount {
                    name: "attack".into(),
                    queries: 6
                }
            ]
        );
    }

    #[test]
    fn queries_before_any_run_stay_in_default() {
        let l = QueryLedger::new();
        l.record_query();
        l.start_run("a");
        l.record_query();
        let s = l.snapshot();
        assert_eq!(s.runs.iter().map(|r| r.queries).sum::<u64>(), s.total);
        assert_eq!(s.runs[0].name, "default");
    }

    #[test]
    fn concurrent_counting_is_exact() {
        let l = QueryLedger::new();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| (0..1000).for_each(|_| l.record_query()));
            }
        });
        assert_eq!(l.total(), 8000);
    }
}
