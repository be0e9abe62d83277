//! Deterministic parallel ensembles.
//!
//! Replicate `r` always draws from `stream_rng(master_seed, tag, r)`.
//! Replicates are grouped into fixed blocks; blocks run on the rayon pool
//! and their accumulators are merged in block order, so results do not
//! depend on the number of threads.

use branco_core::rng::stream_rng;
use branco_core::EnsembleStats;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const BLOCK: u64 = 256;

/// Runs `replicates` independent replicates of `body`, each of which fills
/// `width` observations, and returns one accumulator per observation slot.
pub fn ensemble<F>(replicates: u64, master_seed: u64, tag: u64, width: usize, body: F) -> branco_core::Result<Vec<EnsembleStats>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> branco_core::Result<()> + Sync,
{
    let blocks = replicates.div_ceil(BLOCK);
    let partial: Vec<Vec<EnsembleStats>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![EnsembleStats::new(); width];
            let mut obs = vec![0.0; width];
            for r in b * BLOCK..((b + 1) * BLOCK).min(replicates) {
                let mut rng = stream_rng(master_seed, tag, r);
                obs.fill(0.0);
                body(&mut rng, &mut obs)?;
                for (a, &v) in acc.iter_mut().zip(&obs) {
                    a.push(v);
                }
            }
            Ok(acc)
        })
        .collect::<branco_core::Result<_>>()?;
    let mut total = vec![EnsembleStats::new(); width];
    for block in &partial {
        for (t, b) in total.iter_mut().zip(block) {
            t.merge(b);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draw(threads: usize, replicates: u64) -> Vec<EnsembleStats> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            ensemble(replicates, 11, 3, 2, |rng, out| {
                let u: f64 = rng.random();
                out[0] = u;
                out[1] = u * u;
                Ok(())
            })
            .unwrap()
        })
    }

    #[test]
    fn thread_count_does_not_matter() {
        let one = draw(1, 1000);
        let four = draw(4, 1000);
        assert_eq!(one, four);
        assert_eq!(one[0].count(), 1000);
        assert!((one[0].mean() - 0.5).abs() < 0.05);
    }

    #[test]
    fn merged_blocks_match_single_pass() {
        let stats = draw(2, 2 * BLOCK + 17);
        let mut single = EnsembleStats::new();
        for r in 0..2 * BLOCK + 17 {
            let u: f64 = stream_rng(11, 3, r).random();
            single.push(u);
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        assert!(rel(stats[0].mean(), single.mean()) < 1e-12);
        assert!(rel(stats[0].m2(), single.m2()) < 1e-12);
    }

    #[test]
    fn errors_propagate() {
        let res = ensemble(10, 0, 0, 1, |_, _| Err(branco_core::Error::InvalidParameter("boom")));
        assert!(res.is_err());
    }
}
