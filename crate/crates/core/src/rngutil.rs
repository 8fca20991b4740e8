//! Seeded ChaCha streams for reproducible, worker-count-independent
//! parallelism.
//!
//! Work is split into a fixed number of chunks keyed by chunk index, not by
//! thread. Each chunk gets its own RNG stream, and rayon's indexed collect
//! preserves chunk order, so the merged result depends only on the seed and
//! chunk layout.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// RNG for stream `stream` of seed `seed`. Distinct streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run `f(chunk_index, rng)` over `chunks` independent streams in parallel
/// and return the results in chunk order.
pub fn par_map_streams<T: Send>(
    seed: u64,
    chunks: u64,
    f: impl Fn(u64, ChaCha12Rng) -> T + Sync,
) -> Vec<T> {
    (0..chunks)
        .into_par_iter()
        .map(|i| f(i, stream_rng(seed, i)))
        .collect()
}

/// Split `total` items into `chunks` near-equal ranges.
pub fn chunk_sizes(total: u64, chunks: u64) -> Vec<u64> {
    let chunks = chunks.max(1).min(total.max(1));
    let base = total / chunks;
    let extra = total % chunks;
    (0..chunks)
        .map(|i| base + u64::from(i < extra))
        .collect()
}

/// Build a rayon pool with `workers` threads (0 = rayon default).
pub fn pool(workers: usize) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        b = b.num_threads(workers);
    }
    b.build().expect("thread pool")
}
