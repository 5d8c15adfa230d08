//! Seeded, thread-count-independent parallel sampling.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per work unit. Each chunk owns an RNG stream, so results do not
/// depend on how chunks are scheduled.
pub const CHUNK: usize = 512;

/// RNG for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Splits `0..total` into fixed chunks and maps them in parallel, returning
/// per-chunk results in chunk order.
pub fn par_chunks<T, F>(total: usize, seed: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, Range<usize>) -> T + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            work(&mut rng, c * CHUNK..((c + 1) * CHUNK).min(total))
        })
        .collect()
}

/// Keeps the `cap` entries with the smallest margin, ordered by margin and
/// then by insertion order.
#[derive(Debug, Clone)]
pub struct WorstList<T> {
    cap: usize,
    items: Vec<(f64, T)>,
}

impl<T> WorstList<T> {
    pub fn new(cap: usize) -> Self {
        WorstList { cap, items: Vec::new() }
    }

    pub fn push(&mut self, margin: f64, item: T) {
        self.items.push((margin, item));
        if self.items.len() > 2 * self.cap.max(1) {
            self.compact();
        }
    }

    fn compact(&mut self) {
        self.items.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.items.truncate(self.cap);
    }

    pub fn merge(&mut self, other: WorstList<T>) {
        self.items.extend(other.items);
        if self.items.len() > 2 * self.cap.max(1) {
            self.compact();
        }
    }

    pub fn into_sorted(mut self) -> Vec<(f64, T)> {
        self.compact();
        self.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunking_is_schedule_independent() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| par_chunks(3000, 9, |rng, r| r.map(|_| rng.gen::<u64>()).collect::<Vec<_>>()))
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn worst_list_keeps_smallest() {
        let mut w = WorstList::new(2);
        for (m, t) in [(3.0, 'a'), (-1.0, 'b'), (0.5, 'c'), (-2.0, 'd')] {
            w.push(m, t);
        }
        let v = w.into_sorted();
        assert_eq!(v, vec![(-2.0, 'd'), (-1.0, 'b')]);
    }
}
