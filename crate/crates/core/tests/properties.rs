use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xpview::ast::{AbsPath, Expr, Pred, Step, XpAst};
use xpview::dag::ViewSet;
use xpview::eval::{eval_plan, eval_tree_pattern, materialize_all};
use xpview::fragment::{classify, es_violations, extended_skeleton, FragmentClass};
use xpview::mapping::tree_contains;
use xpview::rewrite::{best_comp, rewrite, view_images, Mode, RewriteOptions};
use xpview::workload::{generalize, generate_workload, random_pattern, GenConfig, PatternConfig};
use xpview::xml::{generate_tree, TreeConfig};
use xpview::{parse, Axis, Dialect, Pattern};

const LABELS: [&str; 6] = ["a", "b", "c", "paper", "section", "x1"];

fn axis() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::Child), Just(Axis::Descendant)]
}

fn label() -> impl Strategy<Value = String> {
    prop::sample::select(&LABELS[..]).prop_map(str::to_string)
}

fn step(depth: u32) -> BoxedStrategy<Step> {
    let preds = if depth == 0 { Just(Vec::new()).boxed() } else { prop::collection::vec(pred(depth - 1), 0..3).boxed() };
    (axis(), label(), preds).prop_map(|(axis, label, preds)| Step { axis, label, preds }).boxed()
}

fn pred(depth: u32) -> BoxedStrategy<Pred> {
    let value = prop::option::weighted(0.25, prop::sample::select(&["x", "C 1", ""][..]).prop_map(str::to_string));
    (prop::collection::vec(step(depth), 1..3), value).prop_map(|(path, value)| Pred { path, value }).boxed()
}

fn abs_path() -> impl Strategy<Value = Expr> {
    (prop::sample::select(&["L", "v1", "doc 2"][..]), prop::collection::vec(step(2), 1..4))
        .prop_map(|(doc, steps)| Expr::Path(AbsPath { doc: doc.to_string(), steps }))
}

fn expr() -> impl Strategy<Value = Expr> {
    abs_path().prop_recursive(3, 16, 3, |inner| {
        let and = prop::collection::vec(inner, 2..4).prop_map(Expr::Intersect);
        prop_oneof![
            and.clone(),
            (and, prop::collection::vec(step(1), 1..3)).prop_map(|(e, s)| Expr::Nav(Box::new(e), s)),
        ]
    })
}

fn pattern(seed: u64, mb_len: usize) -> Pattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pattern(&mut rng, &PatternConfig { mb_len, pred_prob: 0.4, ..Default::default() })
}

/// An extended-skeleton query and views: generalized prefixes, sometimes
/// with an unrelated pattern added.
fn instance(seed: u64) -> (Pattern, ViewSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PatternConfig { mb_len: rng.gen_range(2..=5), pred_prob: 0.4, ..Default::default() };
    let q = extended_skeleton(&random_pattern(&mut rng, &cfg));
    let mb = q.main_branch();
    let mut vs = ViewSet::new();
    for i in 0..rng.gen_range(1..=3) {
        let v = if rng.gen_bool(0.8) {
            let j = rng.gen_range(1..mb.len());
            generalize(&mut rng, &q.with_output(mb[j]))
        } else {
            random_pattern(&mut rng, &PatternConfig { mb_len: 2, ..cfg.clone() })
        };
        vs.insert(format!("v{i}"), v);
    }
    (q, vs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_ast_parses_back(e in expr()) {
        let ast = XpAst { dialect: Dialect::XpInt, expr: e };
        let text = ast.to_string();
        let back = parse(&text, Dialect::XpInt).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(&back.expr, &ast.expr, "{}", text);
        prop_assert_eq!(back.to_string(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn best_compensation_is_contained_in_every_other(seed in any::<u64>(), k in 1usize..4) {
        let q = pattern(seed, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mb = q.main_branch();
        let v = generalize(&mut rng, &q.with_output(mb[k.min(mb.len() - 1)]));
        let best = best_comp(&v, &q);
        let images = view_images(&v, &q);
        prop_assert_eq!(best.is_some(), !images.is_empty());
        if let Some(best) = best {
            for b in images {
                let c = Pattern::compensate(&v, &q, b).unwrap();
                prop_assert!(tree_contains(&c, &best), "{} not in {}", best.xpath(), c.xpath());
            }
        }
    }

    #[test]
    fn skeleton_is_idempotent(seed in any::<u64>(), mb_len in 1usize..7) {
        let p = pattern(seed, mb_len);
        let s = extended_skeleton(&p);
        prop_assert!(es_violations(&s).is_empty());
        prop_assert_eq!(classify(&s), FragmentClass::ExtendedSkeleton);
        prop_assert!(tree_contains(&s, &p));
        prop_assert_eq!(extended_skeleton(&s).canonical(), s.canonical());
    }

    #[test]
    fn full_and_efficient_agree_on_skeletons(seed in any::<u64>()) {
        let (q, vs) = instance(seed);
        let e = rewrite(&q, &vs, &RewriteOptions::default()).unwrap();
        let f = rewrite(&q, &vs, &RewriteOptions::full()).unwrap();
        prop_assert_eq!(e.is_some(), f.is_some(), "{} with {}", q.xpath(), vs.to_text());
    }

    #[test]
    fn skeleton_views_decide_the_same(seed in any::<u64>()) {
        let (q, vs) = instance(seed);
        let with = rewrite(&q, &vs, &RewriteOptions::default()).unwrap();
        let without = rewrite(&q, &vs, &RewriteOptions { skeletons: false, ..Default::default() }).unwrap();
        prop_assert_eq!(with.is_some(), without.is_some(), "{} with {}", q.xpath(), vs.to_text());
    }

    #[test]
    fn efficient_examines_one_candidate_per_prefix(seed in any::<u64>()) {
        let (q, vs) = instance(seed);
        if let Some(plan) = rewrite(&q, &vs, &RewriteOptions::default()).unwrap() {
            prop_assert!(plan.candidates <= q.main_branch().len());
        }
    }

    #[test]
    fn plans_return_the_query_answers(seed in any::<u64>(), doc_seed in any::<u64>()) {
        let (q, vs) = instance(seed);
        for mode in [Mode::Efficient, Mode::Full] {
            let Some(plan) = rewrite(&q, &vs, &RewriteOptions { mode, ..Default::default() }).unwrap() else { continue };
            for k in 0..3 {
                let t = generate_tree(&TreeConfig { depth: 6, seed: doc_seed.wrapping_add(k), ..Default::default() });
                let got = eval_plan(&plan.ast, &materialize_all(&vs, &t)).unwrap();
                prop_assert_eq!(got, eval_tree_pattern(&q, &t), "{}", plan.text());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn workloads_are_deterministic(seed in 0u64..1000, cat in 0usize..3) {
        let category = [FragmentClass::ExtendedSkeleton, FragmentClass::SlashSlash, FragmentClass::Full][cat];
        let cfg = GenConfig { seed, category, view_set_size: 12, doc_depth: 8, ..Default::default() };
        let a = generate_workload(&cfg).unwrap();
        let b = generate_workload(&cfg).unwrap();
        prop_assert_eq!(a.query.xpath(), b.query.xpath());
        prop_assert_eq!(a.views.to_text(), b.views.to_text());
        prop_assert_eq!(a.useful, b.useful);
        prop_assert_eq!(a.doc.to_xml(), b.doc.to_xml());
        prop_assert_eq!(classify(&a.query), category);
    }
}
