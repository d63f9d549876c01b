mod common;

use xpview::interleave::{dag_equivalent, interleavings_capped, is_satisfiable, union_free_oracle};
use xpview::mapping::equivalent;
use xpview::rules::{apply_rules, termination_bound};

#[test]
fn rules_agree_with_interleavings() {
    let mut failures = Vec::new();
    // seeds disjoint from the acceptance corpus
    let n_seeds: u64 = std::env::var("ORACLE_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(400);
    let mut stats = [0usize; 4];
    for seed in 10_000..10_000 + n_seeds {
        let (d, es) = common::oracle_dag(seed);
        let (t, trace) = match apply_rules(&d) {
            Ok(x) => x,
            Err(e) => {
                failures.push(format!("seed {seed}: apply_rules error {e}: {}", d.canonical()));
                continue;
            }
        };
        if trace.len() > termination_bound(&d) {
            failures.push(format!("seed {seed}: trace {} over bound", trace.len()));
        }
        if !dag_equivalent(&d, &t).unwrap() {
            failures.push(format!("seed {seed}: not equivalent\n  d = {}\n  t = {}", d.canonical(), t.canonical()));
        }
        let n = interleavings_capped(&d, 100_000).unwrap().len();
        if is_satisfiable(&d) != (n > 0) {
            failures.push(format!("seed {seed}: satisfiability mismatch"));
        }
        if es {
            stats[0] += 1;
            if let Some(dom) = union_free_oracle(&d).unwrap() {
                stats[1] += 1;
                if !d.is_tree() {
                    stats[2] += 1;
                }
                if !t.is_tree() || !equivalent(&t, &dom) {
                    failures.push(format!(
                        "seed {seed}: union-free but got\n  d = {}\n  t = {}\n  dom = {}",
                        d.canonical(),
                        t.canonical(),
                        dom.xpath()
                    ));
                }
            }
        }
    }
    eprintln!("es dags {}, union-free {}, non-tree union-free {}", stats[0], stats[1], stats[2]);
    for f in &failures {
        eprintln!("{f}");
    }
    assert!(failures.is_empty(), "{} failures", failures.len());
}
