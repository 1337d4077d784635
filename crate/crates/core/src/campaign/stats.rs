use serde::{Deserialize, Serialize};

/// Score histogram bucket width.
pub const BUCKET: f64 = 0.05;
pub const BUCKETS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub strategy: String,
    /// `counts[i]` covers `[i * 0.05, (i + 1) * 0.05)`; 1.0 lands in the last bucket.
    pub counts: Vec<u64>,
}

impl ScoreHistogram {
    pub fn new(strategy: impl Into<String>) -> Self {
        Self {
            strategy: strategy.into(),
            counts: vec![0; BUCKETS],
        }
    }

    pub fn add(&mut self, score: f64) {
        let i = ((score / BUCKET) as usize).min(BUCKETS - 1);
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub iterations: u64,
    pub unique_binaries: u64,
    pub fallback_count: u64,
    pub crash_count: u64,
    pub timeout_count: u64,
    /// Iterations whose build failed outright, or whose output was not a usable ELF.
    pub build_errors: u64,
    pub dedup_hits: u64,
    /// Fallback builds whose binary scored above zero.
    pub fallback_scored: u64,
    pub corpus_size: u64,
    pub corpus_total_weight: f64,
    pub elapsed_secs: f64,
    pub histogram: ScoreHistogram,
}

impl CampaignStats {
    pub fn new(strategy: impl Into<String>) -> Self {
        Self {
            iterations: 0,
            unique_binaries: 0,
            fallback_count: 0,
            crash_count: 0,
            timeout_count: 0,
            build_errors: 0,
            dedup_hits: 0,
            fallback_scored: 0,
            corpus_size: 0,
            corpus_total_weight: 0.0,
            elapsed_secs: 0.0,
            histogram: ScoreHistogram::new(strategy),
        }
    }

    /// Adds another worker's per-iteration counters.
    pub fn absorb(&mut self, other: &CampaignStats) {
        self.iterations += other.iterations;
        self.fallback_count += other.fallback_count;
        self.crash_count += other.crash_count;
        self.timeout_count += other.timeout_count;
        self.build_errors += other.build_errors;
        self.dedup_hits += other.dedup_hits;
        self.fallback_scored += other.fallback_scored;
        for (a, b) in self.histogram.counts.iter_mut().zip(&other.histogram.counts) {
            *a += b;
        }
    }

    /// Equality ignoring wall-clock time.
    pub fn same_counts(&self, other: &CampaignStats) -> bool {
        let mut a = self.clone();
        a.elapsed_secs = other.elapsed_secs;
        a == *other
    }

    pub fn progress_line(&self) -> String {
        format!(
            "iter={} unique={} corpus={} fallback={} crash={} timeout={} errors={}",
            self.iterations,
            self.unique_binaries,
            self.corpus_size,
            self.fallback_count,
            self.crash_count,
            self.timeout_count,
            self.build_errors
        )
    }
}
