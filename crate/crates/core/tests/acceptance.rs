//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances are the
//! constants below.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::ops::ControlFlow;
use std::time::Instant;
use xpview::bench::{bench_workload, log_log_slope, median, BenchStatus};
use xpview::dag::{parse_dag, unfold, ViewSet};
use xpview::eval::{eval_plan, eval_tree_pattern, materialize_all};
use xpview::fragment::{classify, extended_skeleton, FragmentClass};
use xpview::interleave::{dag_contained, dag_equivalent, for_each_interleaving, interleavings, interleavings_capped, is_satisfiable, union_free_oracle};
use xpview::mapping::{equivalent, tree_contained_in_dag, tree_contains};
use xpview::nested::{build_rewrite_candidate, nested_rewrite, RewritingGraph};
use xpview::rewrite::{rewrite, view_images, Mode, RewriteOptions};
use xpview::rules::{apply_rules, termination_bound, try_rule, RewriteTrace, RuleId};
use xpview::workload::{generalize, generate_workload, intersect_all, random_pattern, GenConfig, PatternConfig};
use xpview::xml::{generate_tree, TreeConfig};
use xpview::{parse, Dialect, Pattern};

const RULE_EXAMPLES_SECS: f64 = 1.0;
const NESTED_EXAMPLE_SECS: f64 = 1.0;
const RUNNING_EXAMPLE_INTERLEAVINGS: usize = 7;
const ORACLE_DAGS: u64 = 500;
const MAX_MBN: usize = 12;
const COMPLETENESS_INSTANCES: u64 = 300;
const COMPLETENESS_MAX_MB: usize = 8;
const ORACLE_CAP: usize = 20_000;
const DOCS_PER_PLAN: u64 = 20;
const VIEW_SET_SIZES: [usize; 5] = [40, 80, 160, 320, 640];
const MAX_SCALING_EXPONENT: f64 = 1.3;
const MAX_CASE_SECS: f64 = 5.0;
const SELECTIVITY_FACTOR: usize = 4;
const MIN_SELECTIVE_CASES: usize = 5;
const MIN_CONTAINMENT_INSTANCES: usize = 100;
const GRAPHS_PER_INSTANCE: usize = 6;

type Outcome = Result<String, String>;

/// Every rule trace seen, with the bound of the DAG it ran on.
#[derive(Default)]
struct Traces {
    seen: Vec<(usize, usize, String)>,
}

impl Traces {
    fn add(&mut self, t: &RewriteTrace, bound: usize, from: impl Into<String>) {
        self.seen.push((t.len(), bound, from.into()));
    }
}

fn dag(s: &str) -> Pattern {
    parse_dag(s).unwrap().unwrap()
}

fn pat(s: &str) -> Pattern {
    Pattern::parse(s).unwrap()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels_of(d: &Pattern, nodes: &[usize]) -> Vec<String> {
    nodes.iter().map(|&n| d.label(n).to_string()).collect()
}

fn rules_fired(t: &RewriteTrace) -> Vec<RuleId> {
    t.entries.iter().map(|e| e.instance.rule).collect()
}

fn run_rules(x: &Pattern, traces: &mut Traces, from: &str) -> Result<(Pattern, RewriteTrace), String> {
    let (t, trace) = apply_rules(x).map_err(|e| format!("{from}: {e}"))?;
    traces.add(&trace, termination_bound(x), from);
    Ok((t, trace))
}

const RUNNING_V1: &str = r#"doc("L")//paper//section[theorem]//image"#;
const RUNNING_V2: &str = r#"doc("L")/lib/paper//section//figure[caption[.//label]]/image"#;
const RUNNING_TREE: &str = r#"doc("L")/lib/paper//section[theorem]//figure[caption[.//label]]/image"#;

fn rule_examples(traces: &mut Traces) -> Outcome {
    let start = Instant::now();

    let x = dag(r#"doc("L")/paper//image & doc("L")/paper/section/image"#);
    let (_, inst) = try_rule(RuleId::R1, &x).ok_or("R1 does not apply to the two paper branches")?;
    let pair = labels_of(&x, &[inst.bindings["n1"][0], inst.bindings["n2"][0]]);
    check(pair == ["paper", "paper"], || format!("R1 collapsed {pair:?}"))?;
    run_rules(&x, traces, "R1 example")?;

    let x = dag(r#"doc("L")/lib/paper/section//figure[caption]/image & doc("L")//lib[.//caption]//section//theorem//image"#);
    let (y, inst) = try_rule(RuleId::R4i, &x).ok_or("R4.i does not apply")?;
    let n4 = labels_of(&x, &inst.bindings["n4"]);
    check(n4 == ["theorem"], || format!("R4.i re-hangs {n4:?}"))?;
    check(dag_equivalent(&x, &y).unwrap(), || "R4.i changed the meaning".into())?;
    run_rules(&x, traces, "R4.i example")?;

    let x = dag(r#"doc("L")/lib/paper/section//image & doc("L")//paper[.//caption]//image"#);
    let (t, trace) = run_rules(&x, traces, "R5 example")?;
    let r5 = trace.entries.iter().find(|e| e.instance.rule == RuleId::R5).ok_or("R5 did not fire")?;
    let copied = labels_of(&x, &r5.instance.bindings["q"]);
    check(copied == ["caption"], || format!("R5 copied {copied:?}"))?;
    check(t.xpath() == r#"doc("L")/lib/paper[.//caption]/section//image"#, || format!("R5 example ended at {}", t.xpath()))?;

    let x = dag(r#"doc("L")//lib/paper[.//caption]/section//image & doc("L")//lib[.//figure]/paper/section//image"#);
    let (_, inst) = try_rule(RuleId::R6, &x).ok_or("R6 does not apply")?;
    let (p1, p2) = (labels_of(&x, &inst.bindings["p1"]), labels_of(&x, &inst.bindings["p2"]));
    check(p1 == ["lib", "paper", "section"] && p2 == p1, || format!("R6 merged {p1:?} and {p2:?}"))?;
    run_rules(&x, traces, "R6 example")?;

    let x = dag(&format!("{RUNNING_V1} & {RUNNING_V2}"));
    let (t, trace) = run_rules(&x, traces, "running example")?;
    check(rules_fired(&trace).contains(&RuleId::R7), || "R7 did not fire on the running example".into())?;
    check(t.xpath() == RUNNING_TREE, || format!("running example ended at {}", t.xpath()))?;

    let x = dag(r#"doc("L")/lib/paper/section/figure/image & doc("L")//paper[.//caption]//image"#);
    let (_, inst) = try_rule(RuleId::R8, &x).ok_or("R8 does not apply")?;
    let pair = labels_of(&x, &[inst.bindings["n1"][0], inst.bindings["n2"][0]]);
    check(pair == ["paper", "paper"], || format!("R8 collapsed {pair:?}"))?;
    run_rules(&x, traces, "R8 example")?;

    let x = dag(r#"doc("L")/lib/section/section/section[figure]/image & doc("L")//section[figure]/section[figure]//image"#);
    let (t, trace) = run_rules(&x, traces, "R9 example")?;
    let fired = rules_fired(&trace);
    let i9 = fired.iter().position(|&r| r == RuleId::R9).ok_or("R9 did not fire")?;
    check(fired[i9..].contains(&RuleId::R7), || format!("R7 did not follow R9: {fired:?}"))?;
    check(t.xpath() == r#"doc("L")/lib/section/section[figure]/section[figure]/image"#, || format!("R9 example ended at {}", t.xpath()))?;

    let secs = start.elapsed().as_secs_f64();
    check(secs < RULE_EXAMPLES_SECS, || format!("took {secs:.3} s"))?;
    Ok(format!("7 rule examples, {secs:.3} s"))
}

fn library_views() -> ViewSet {
    let mut vs = ViewSet::new();
    vs.insert("v1", pat(r#"doc("L")//paper//section"#));
    vs.insert("v2", pat(r#"doc("L")//section[theorem]"#));
    vs.insert("v3", pat(r#"doc("L")/lib//figure/image"#));
    vs
}

fn nested_example(traces: &mut Traces) -> Outcome {
    let start = Instant::now();
    let vs = library_views();
    let q = pat(r#"doc("L")/lib//paper//section[theorem]//figure/image"#);
    let plan = nested_rewrite(&q, &vs).map_err(|e| e.to_string())?.ok_or("nested_rewrite found no plan")?;
    traces.add(&plan.trace, plan.rule_bound, "nested example");
    let three = parse(r#"(doc("v1")/v1 & doc("v2")/v2)//figure/image & doc("v3")/v3"#, Dialect::XpInt).unwrap();
    let got = unfold(&plan.ast, &vs).unwrap().ok_or("plan unfolds to nothing")?;
    let want = unfold(&three, &vs).unwrap().unwrap();
    check(dag_equivalent(&got, &want).unwrap(), || format!("{} is not equivalent to the three-view plan", plan.text()))?;

    let sub = pat(r#"doc("L")//paper//section[theorem]//figure/image"#);
    let two = vs.subset(&["v1", "v2"]);
    let p = rewrite(&sub, &two, &RewriteOptions::full()).map_err(|e| e.to_string())?.ok_or("no plan for the section prefix")?;
    traces.add(&p.trace, p.rule_bound, "section prefix");
    let expected = r#"(doc("v1")/v1 & doc("v2")/v2)//figure/image"#;
    check(p.text() == expected, || format!("section-prefix plan {}", p.text()))?;
    check(dag_equivalent(&unfold(&p.ast, &two).unwrap().unwrap(), &sub).unwrap(), || "section-prefix plan not equivalent".into())?;

    let secs = start.elapsed().as_secs_f64();
    check(secs < NESTED_EXAMPLE_SECS, || format!("took {secs:.3} s"))?;
    Ok(format!("nested plan {}, {secs:.3} s", plan.text()))
}

fn interleaving_count() -> Outcome {
    let mut vs = ViewSet::new();
    vs.insert("v1", pat(RUNNING_V1));
    vs.insert("v2", pat(RUNNING_V2));
    let plan = parse(r#"doc("v1")/v1 & doc("v2")/v2"#, Dialect::XpCap).unwrap();
    let d = unfold(&plan, &vs).unwrap().ok_or("empty unfolding")?;
    let il = interleavings(&d).map_err(|e| e.to_string())?;
    check(il.len() == RUNNING_EXAMPLE_INTERLEAVINGS, || format!("{} interleavings", il.len()))?;
    let want = r#"doc("L")/lib/paper//paper//section[theorem]//figure[caption[.//label]]/image"#;
    check(il.iter().any(|i| i.pattern.xpath() == want), || "the stated interleaving is missing".into())?;
    Ok(format!("{} interleavings", il.len()))
}

fn oracle_equivalence(traces: &mut Traces) -> Outcome {
    let mut failures = Vec::new();
    let (mut es, mut uf) = (0, 0);
    for seed in 0..ORACLE_DAGS {
        let (d, from_es) = common::oracle_dag(seed);
        if d.mbn().len() > MAX_MBN {
            failures.push(format!("seed {seed}: too many main-branch nodes"));
            continue;
        }
        let (t, _) = match run_rules(&d, traces, &format!("oracle seed {seed}")) {
            Ok(x) => x,
            Err(e) => {
                failures.push(e);
                continue;
            }
        };
        if !dag_equivalent(&d, &t).unwrap() {
            failures.push(format!("seed {seed}: rules changed the meaning"));
        }
        let n = interleavings_capped(&d, 1_000_000).unwrap().len();
        if is_satisfiable(&d) != (n > 0) {
            failures.push(format!("seed {seed}: satisfiability disagrees with enumeration"));
        }
        if from_es {
            es += 1;
            if let Some(dom) = union_free_oracle(&d).unwrap() {
                uf += 1;
                if !t.is_tree() || !equivalent(&t, &dom) {
                    failures.push(format!("seed {seed}: union-free but the rules left {}", t.canonical()));
                }
            }
        }
    }
    check(failures.is_empty(), || format!("{} failures, first: {}", failures.len(), failures[0]))?;
    Ok(format!("{ORACLE_DAGS} DAGs, {es} from skeletons, {uf} of those union-free, 0 failures"))
}

fn completeness_instance(seed: u64) -> (Pattern, ViewSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9) ^ 0x5eed);
    let mut cfg = PatternConfig { mb_len: 2 + (seed % 5) as usize, pred_prob: 0.4, ..Default::default() };
    if seed % 4 == 0 {
        cfg.labels.push("d".into());
    }
    let q = extended_skeleton(&random_pattern(&mut rng, &cfg));
    let mb = q.main_branch();
    let mut vs = ViewSet::new();
    for i in 0..1 + (seed % 3) as usize {
        let v = if rng.gen_bool(0.75) {
            let j = rng.gen_range(1..mb.len());
            generalize(&mut rng, &q.with_output(mb[j]))
        } else {
            let c = PatternConfig { mb_len: rng.gen_range(1..=3), ..cfg.clone() };
            random_pattern(&mut rng, &c)
        };
        vs.insert(format!("v{i}"), v);
    }
    (q, vs)
}

/// Some prefix is equivalent to the intersection of every compensation of
/// every view. The intersection always contains the prefix, so this asks
/// whether each of its interleavings is contained in the prefix. `None` when
/// the enumeration overflows.
fn rewriting_exists(q: &Pattern, views: &ViewSet) -> Option<bool> {
    let mb = q.main_branch();
    for &n in &mb[1..] {
        let p = q.with_output(n);
        let mut parts = Vec::new();
        for (_, v) in views.iter() {
            for b in view_images(v, &p) {
                parts.push(Pattern::compensate(v, &p, b).unwrap());
            }
        }
        if parts.is_empty() {
            continue;
        }
        let Some(d) = intersect_all(&parts) else { continue };
        let mut all = true;
        let r = for_each_interleaving(&d, ORACLE_CAP, |il| {
            if tree_contains(&p, &il.pattern) {
                ControlFlow::Continue(())
            } else {
                all = false;
                ControlFlow::Break(())
            }
        });
        if r.is_err() {
            return None;
        }
        if all {
            return Some(true);
        }
    }
    Some(false)
}

fn rewriting_completeness(traces: &mut Traces) -> Outcome {
    let mut mismatches = Vec::new();
    let (mut positive, mut nonempty) = (0, 0);
    let (mut decided, mut skipped, mut seed) = (0, 0, 0u64);
    while decided < COMPLETENESS_INSTANCES {
        seed += 1;
        let (q, vs) = completeness_instance(seed);
        check(classify(&q) == FragmentClass::ExtendedSkeleton && q.main_branch().len() <= COMPLETENESS_MAX_MB, || format!("seed {seed}: bad instance"))?;
        let plan = rewrite(&q, &vs, &RewriteOptions::default()).map_err(|e| format!("seed {seed}: {e}"))?;
        let Some(oracle) = rewriting_exists(&q, &vs) else {
            skipped += 1;
            continue;
        };
        decided += 1;
        if plan.is_some() != oracle {
            mismatches.push(format!("seed {seed}: efficient {} oracle {oracle} for {} with {}", plan.is_some(), q.xpath(), vs.to_text().replace('\n', "; ")));
            continue;
        }
        let Some(plan) = plan else { continue };
        positive += 1;
        traces.add(&plan.trace, plan.rule_bound, format!("completeness seed {seed}"));
        for k in 0..DOCS_PER_PLAN {
            let mut labels: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
            labels.rotate_left((k % 3) as usize);
            let t = generate_tree(&TreeConfig { depth: 7, fanout: 3, labels, texts: Vec::new(), seed: seed * 100 + k });
            let want = eval_tree_pattern(&q, &t);
            let got = eval_plan(&plan.ast, &materialize_all(&vs, &t)).map_err(|e| e.to_string())?;
            if !want.is_empty() {
                nonempty += 1;
            }
            if got != want {
                mismatches.push(format!("seed {seed}: plan {} differs from the query on document {k}", plan.text()));
                break;
            }
        }
    }
    check(mismatches.is_empty(), || format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]))?;
    Ok(format!(
        "{decided} instances, {positive} rewritable, {nonempty} documents with answers, {skipped} skipped past the enumeration cap, 0 mismatches"
    ))
}

fn termination(traces: &Traces) -> Outcome {
    let over: Vec<&(usize, usize, String)> = traces.seen.iter().filter(|(len, bound, _)| len > bound).collect();
    check(over.is_empty(), || format!("{} traces over the bound, first: {:?}", over.len(), over[0]))?;
    let worst = traces.seen.iter().map(|(l, b, _)| *l as f64 / (*b).max(1) as f64).fold(0.0, f64::max);
    Ok(format!("{} traces, longest at {:.0}% of its bound", traces.seen.len(), worst * 100.0))
}

fn scaling(traces: &mut Traces) -> Outcome {
    let mut points = Vec::new();
    let mut slowest: f64 = 0.0;
    let (mut selective, mut faster) = (0, 0);
    let mut losers = Vec::new();
    for &n in &VIEW_SET_SIZES {
        let mut times = Vec::new();
        for (i, cat) in [FragmentClass::ExtendedSkeleton, FragmentClass::SlashSlash, FragmentClass::Full].into_iter().enumerate() {
            for (j, mbs) in [5, 7, 9].into_iter().enumerate() {
                let cfg = GenConfig { seed: 7 + (3 * i + j) as u64, main_branch_size: mbs, category: cat, view_set_size: n, ..Default::default() };
                let w = generate_workload(&cfg).map_err(|e| format!("{cfg:?}: {e}"))?;
                let case = bench_workload(&cfg, &w, Mode::Efficient).map_err(|e| e.to_string())?;
                check(case.status == BenchStatus::Rewritten, || format!("{cfg:?}: {:?}", case.status))?;
                check(case.results_match == Some(true), || format!("{cfg:?}: plan answers differ"))?;
                let plan = rewrite(&w.query, &w.views, &RewriteOptions::default()).unwrap().unwrap();
                traces.add(&plan.trace, plan.rule_bound, format!("workload {n}/{mbs}/{}", cat.name()));
                times.push(case.rewrite_time_ms);
                slowest = slowest.max(case.rewrite_time_ms);
                if case.view_doc_nodes * SELECTIVITY_FACTOR <= case.doc_nodes {
                    selective += 1;
                    if case.plan_eval_time_ms.unwrap() < case.direct_eval_time_ms {
                        faster += 1;
                    } else {
                        losers.push(format!("{n} views, size {mbs}, {}", cat.name()));
                    }
                }
            }
        }
        points.push((n as f64, median(&mut times)));
    }
    let slope = log_log_slope(&points);
    let medians: Vec<String> = points.iter().map(|(n, t)| format!("{n}:{t:.2}ms")).collect();
    check(slope <= MAX_SCALING_EXPONENT, || format!("exponent {slope:.2} ({})", medians.join(" ")))?;
    check(slowest / 1e3 < MAX_CASE_SECS, || format!("slowest rewrite {slowest:.0} ms"))?;
    check(selective >= MIN_SELECTIVE_CASES, || format!("only {selective} workloads with selective views"))?;
    check(losers.is_empty(), || format!("plan evaluation slower on {}", losers.join("; ")))?;
    Ok(format!("exponent {slope:.2} ({}), slowest {slowest:.1} ms, plan faster on {faster}/{selective} selective workloads", medians.join(" ")))
}

fn relaxed<R: Rng>(rng: &mut R, q: &Pattern) -> Pattern {
    let mut r = q.clone();
    let mb = q.mb_mask();
    for (x, y, ax) in q.edges() {
        if !r.is_alive(y) {
            continue;
        }
        if !mb[y] && mb[x] && rng.gen_bool(0.3) {
            r.remove_subtree(y);
        } else if ax == xpview::Axis::Child && rng.gen_bool(0.3) {
            r.remove_edge(x, y, ax);
            r.add_edge(x, y, xpview::Axis::Descendant);
        }
    }
    r
}

fn minimal_containment(traces: &mut Traces) -> Outcome {
    let mut failures = Vec::new();
    let (mut instances, mut graphs, mut oversized) = (0, 0, 0);
    let mut seed = 0u64;
    while instances < MIN_CONTAINMENT_INSTANCES {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
        let cfg = PatternConfig { mb_len: 2 + (seed % 4) as usize, pred_prob: 0.4, ..Default::default() };
        let q = random_pattern(&mut rng, &cfg);
        let mb = q.main_branch();
        let mut vs = ViewSet::new();
        for i in 0..2 + (seed % 3) as usize {
            let j = rng.gen_range(1..mb.len());
            vs.insert(format!("v{i}"), generalize(&mut rng, &q.with_output(mb[j])));
        }
        let Some(cand) = build_rewrite_candidate(&q, &vs) else { continue };
        let u = cand.unfold(&vs).unwrap();
        if u.mbn().len() > MAX_MBN {
            oversized += 1;
            continue;
        }
        instances += 1;
        match nested_rewrite(&q, &vs) {
            Ok(Some(p)) => traces.add(&p.trace, p.rule_bound, format!("nested seed {seed}")),
            Ok(None) => {}
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
        let depth = |n: usize| mb.iter().position(|&x| x == n).unwrap();
        for _ in 0..GRAPHS_PER_INSTANCE {
            let heads: Vec<_> = cand.heads.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
            if heads.is_empty() {
                continue;
            }
            let top = heads.iter().map(|h| h.image).min_by_key(|&n| depth(n)).unwrap();
            let other = RewritingGraph { base: relaxed(&mut rng, &q), top, heads };
            let u2 = other.unfold(&vs).unwrap();
            if !tree_contained_in_dag(&q, &u2) {
                failures.push(format!("seed {seed}: sampled graph does not contain the query"));
                continue;
            }
            graphs += 1;
            if !dag_contained(&u, &u2).unwrap() {
                failures.push(format!("seed {seed}: candidate not contained in a sampled graph for {}", q.xpath()));
            }
        }
    }
    check(failures.is_empty(), || format!("{} failures, first: {}", failures.len(), failures[0]))?;
    Ok(format!("{instances} instances, {graphs} sampled graphs, {oversized} skipped over {MAX_MBN} main-branch nodes, 0 failures"))
}

#[test]
fn acceptance() {
    let mut traces = Traces::default();
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut(&mut Traces) -> Outcome, traces: &mut Traces| {
        let t = Instant::now();
        let r = f(traces);
        let secs = t.elapsed().as_secs_f64();
        let line = match &r {
            Ok(s) => format!("criterion {n} {name}: PASS ({s}) [{secs:.1} s]"),
            Err(s) => format!("criterion {n} {name}: FAIL ({s}) [{secs:.1} s]"),
        };
        // bypasses the harness capture so the lines show up in plain `cargo test` output
        let _ = writeln!(std::io::stdout().lock(), "{line}");
        results.push((n, name, r, secs));
    };
    run(1, "rule examples", &mut rule_examples, &mut traces);
    run(2, "nested example", &mut nested_example, &mut traces);
    run(3, "interleaving count", &mut |_| interleaving_count(), &mut traces);
    run(4, "oracle equivalence", &mut oracle_equivalence, &mut traces);
    run(5, "rewriting completeness", &mut rewriting_completeness, &mut traces);
    run(7, "scaling", &mut scaling, &mut traces);
    run(8, "minimal containment", &mut minimal_containment, &mut traces);
    run(6, "termination bound", &mut |t| termination(t), &mut traces);
    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
