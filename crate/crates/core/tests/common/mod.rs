use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xpview::workload::{random_intersection, random_unrelated_intersection, PatternConfig};
use xpview::Pattern;

/// A random DAG with at most 12 main-branch nodes; the flag marks DAGs
/// built from extended skeletons.
pub fn oracle_dag(seed: u64) -> (Pattern, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = PatternConfig::default();
    cfg.mb_len = 2 + (seed % 5) as usize;
    if seed % 7 < 3 {
        cfg.pred_prob = 0.5;
    }
    if seed % 5 == 0 {
        cfg.labels.pop();
    }
    let k = 2 + (seed % 2) as usize;
    loop {
        let (d, es) = match seed % 3 {
            0 => (random_unrelated_intersection(&mut rng, &cfg, k).0, false),
            1 => (random_intersection(&mut rng, &cfg, k, false).0, false),
            _ => (random_intersection(&mut rng, &cfg, k, true).0, true),
        };
        if d.mbn().len() <= 12 {
            return (d, es);
        }
    }
}
