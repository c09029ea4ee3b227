use std::sync::atomic::{AtomicU64, Ordering};

/// Running total of forward-equivalents spent.
///
/// One deterministic forward pass is one unit; a gradient costs one forward
/// plus one backward; a mean-and-variance propagation costs two. Increments
/// commute, so a counter may be shared across threads.
#[derive(Debug, Default)]
pub struct EvalCounter {
    total: AtomicU64,
}

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.total.fetch_add(n, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn concurrent_increments_sum() {
        let c = EvalCounter::new();
        (0..1000u64).into_par_iter().for_each(|i| c.add(i % 3));
        assert_eq!(c.total(), (0..1000u64).map(|i| i % 3).sum::<u64>());
    }
}
