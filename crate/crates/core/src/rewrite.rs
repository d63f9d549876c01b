//! Rewriting a query as an intersection of compensated views.

use crate::ast::{AbsPath, Axis, Dialect, Expr, Step, XpAst};
use crate::dag::ViewSet;
use crate::error::Result;
use crate::fragment::{are_akin, classify, extended_skeleton, root_token_code, FragmentClass};
use crate::interleave::dag_contained_in_tree;
use crate::mapping::{find_mapping_with, has_containment_mapping, tree_contains, MapOptions};
use crate::pattern::{NodeId, Pattern};
use crate::rules::{apply_rules, termination_bound, RewriteTrace};
use crate::workload::intersect_all;
use std::collections::HashSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Decides `d ⊑ p` through interleavings when the rules leave a DAG.
    Full,
    /// Accepts a prefix only when the rules produce a tree.
    Efficient,
}

#[derive(Clone, Debug)]
pub struct RewriteOptions {
    pub mode: Mode,
    /// One compensation per view, from its highest image.
    pub best_comp: bool,
    /// Build DAGs from extended skeletons of the views when the query is one.
    pub skeletons: bool,
    /// Discard candidates failing cheap main-branch tests.
    pub fast_prune: bool,
    /// Try the branches sharing the prefix's root token first.
    pub akin_first: bool,
    /// Only prefixes contained in one of these target paths are tried.
    pub keys: Option<Vec<Pattern>>,
}

impl Default for RewriteOptions {
    fn default() -> Self {
        RewriteOptions { mode: Mode::Efficient, best_comp: true, skeletons: true, fast_prune: true, akin_first: false, keys: None }
    }
}

impl RewriteOptions {
    pub fn full() -> Self {
        RewriteOptions { mode: Mode::Full, ..Default::default() }
    }
}

/// A view compensated to a prefix: the view name and the image of its
/// output in the prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub view: String,
    pub image: NodeId,
}

#[derive(Clone, Debug)]
pub struct RewritePlan {
    pub ast: XpAst,
    /// Position on the main branch of the query where the prefix ends (root = 0).
    pub prefix_index: usize,
    pub branches: Vec<Branch>,
    pub trace: RewriteTrace,
    /// Termination bound of the DAG the rules ran on.
    pub rule_bound: usize,
    /// Candidate plans examined before this one succeeded, this one included.
    pub candidates: usize,
}

impl RewritePlan {
    pub fn text(&self) -> String {
        self.ast.to_string()
    }
}

/// Images in `p` of the output of `v` under root-mappings, top first.
pub fn view_images(v: &Pattern, p: &Pattern) -> Vec<NodeId> {
    if v.label(v.root()) != p.label(p.root()) || v.out() == v.root() {
        return Vec::new();
    }
    let out_label = v.label(v.out());
    p.main_branch()
        .into_iter()
        .filter(|&b| b != p.root() && p.label(b) == out_label)
        .filter(|&b| {
            let opts = MapOptions { root_to: Some(p.root()), out_to: Some(b), mb_to_mb: true, ..Default::default() };
            find_mapping_with(v, p, &opts).is_some()
        })
        .collect()
}

/// `v` compensated from its highest image in `p`.
pub fn best_comp(v: &Pattern, p: &Pattern) -> Option<Pattern> {
    let b = *view_images(v, p).first()?;
    Pattern::compensate(v, p, b).ok()
}

/// Predicates of main-branch node `n` of `q`, skipping the main-branch child.
pub(crate) fn preds_of(q: &Pattern, mb: &[bool], n: NodeId) -> Vec<(NodeId, Axis)> {
    let mut kids: Vec<(NodeId, Axis)> = q.children(n).iter().copied().filter(|&(c, _)| !mb[c]).collect();
    kids.sort();
    kids
}

/// Steps of `q` below main-branch node `from` down to `to`, with the
/// predicates of every node.
fn comp_steps(q: &Pattern, from: NodeId, to: NodeId) -> Vec<Step> {
    let mb = q.mb_mask();
    let path = q.main_branch();
    let i = path.iter().position(|&x| x == from).unwrap();
    let j = path.iter().position(|&x| x == to).unwrap();
    (i + 1..=j)
        .map(|k| Step {
            axis: q.edge_axis(path[k - 1], path[k]).unwrap(),
            label: q.label(path[k]).to_string(),
            preds: preds_of(q, &mb, path[k]).into_iter().map(|(c, a)| q.pred_ast(c, a)).collect(),
        })
        .collect()
}

/// The XP∩ plan for `branches` over the prefix of `q` ending at `out_p`,
/// followed by the navigation of `q` below `out_p`. Compensation
/// predicates at `out_p` already enforced at the output of a view compensated
/// from there are left out.
pub fn plan_ast(q: &Pattern, out_p: NodeId, branches: &[Branch], views: &ViewSet) -> XpAst {
    let mb = q.mb_mask();
    let provided: Vec<Pattern> = branches
        .iter()
        .filter(|b| b.image == out_p)
        .filter_map(|b| views.get(&b.view))
        .map(|v| v.subpattern_at(v.out()))
        .collect();
    let implied = |c: NodeId, a: Axis| {
        let mut probe = Pattern::new(q.label(out_p));
        let r = probe.root();
        q.copy_into(c, &mut probe, r, a);
        provided.iter().any(|s| {
            let opts = MapOptions { root_to: Some(s.root()), ..Default::default() };
            find_mapping_with(&probe, s, &opts).is_some()
        })
    };
    let heads: Vec<Expr> = branches
        .iter()
        .map(|b| {
            let preds = preds_of(q, &mb, b.image)
                .into_iter()
                .filter(|&(c, a)| b.image != out_p || !implied(c, a))
                .map(|(c, a)| q.pred_ast(c, a))
                .collect();
            let mut steps = vec![Step { axis: Axis::Child, label: b.view.clone(), preds }];
            steps.extend(comp_steps(q, b.image, out_p));
            Expr::Path(AbsPath { doc: b.view.clone(), steps })
        })
        .collect();
    let nav = comp_steps(q, out_p, q.out());
    let expr = match (heads.len(), nav.is_empty()) {
        (1, _) => {
            let Expr::Path(mut p) = heads.into_iter().next().unwrap() else { unreachable!() };
            p.steps.extend(nav);
            Expr::Path(p)
        }
        (_, true) => Expr::Intersect(heads),
        (_, false) => Expr::Nav(Box::new(Expr::Intersect(heads)), nav),
    };
    let dialect = match expr.min_dialect() {
        Dialect::Xp => Dialect::Xp,
        _ => Dialect::XpCap,
    };
    XpAst { dialect, expr }
}

fn token_codes(p: &Pattern) -> Vec<String> {
    p.tokens().iter().map(|t| p.code_of(&t.nodes)).collect()
}

/// Cheap necessary condition for `∩ branches ≡ p`: a prefix with a
/// `/`-only main branch needs a branch with that same main branch.
pub fn prune_plan_fast(p: &Pattern, branches: &[Pattern]) -> bool {
    let codes = token_codes(p);
    if codes.len() == 1 {
        return branches.iter().any(|b| token_codes(b) == codes);
    }
    true
}

/// Indices of the prefixes contained in one of the key target paths.
pub fn filter_prefixes_by_keys(prefixes: &[Pattern], keys: &[Pattern]) -> Vec<usize> {
    (0..prefixes.len()).filter(|&i| keys.iter().any(|k| tree_contains(k, &prefixes[i]))).collect()
}

/// Drops compensated branches containing another branch.
fn drop_subsumed(items: Vec<(Branch, Pattern)>) -> Vec<(Branch, Pattern)> {
    let mut seen = HashSet::new();
    let items: Vec<(Branch, Pattern)> = items.into_iter().filter(|(_, p)| seen.insert(p.canonical())).collect();
    let mut keep = vec![true; items.len()];
    for i in 0..items.len() {
        for j in 0..items.len() {
            if i != j && keep[j] && keep[i] && has_containment_mapping(&items[i].1, &items[j].1) {
                // items[j] ⊑ items[i]: i adds nothing
                keep[i] = false;
            }
        }
    }
    items.into_iter().zip(keep).filter(|(_, k)| *k).map(|(x, _)| x).collect()
}

struct Candidate {
    p: Pattern,
    items: Vec<(Branch, Pattern)>,
}

/// The compensated branches for the prefix ending at `n`.
fn candidate(q: &Pattern, n: NodeId, views: &ViewSet, opts: &RewriteOptions, es: bool) -> Candidate {
    let p = q.with_output(n);
    let mut items = Vec::new();
    for (name, def) in views.iter() {
        let images = view_images(def, &p);
        let chosen: Vec<NodeId> = if opts.best_comp { images.into_iter().take(1).collect() } else { images };
        for b in chosen {
            let base = if es { extended_skeleton(def) } else { def.clone() };
            if let Ok(c) = Pattern::compensate(&base, &p, b) {
                items.push((Branch { view: name.to_string(), image: b }, c));
            }
        }
    }
    Candidate { p, items }
}

/// Tests `∩ items ≡ p`; returns the rule trace and its bound on success.
fn test_candidate(p: &Pattern, items: &[(Branch, Pattern)], mode: Mode) -> Result<Option<(RewriteTrace, usize)>> {
    let parts: Vec<Pattern> = items.iter().map(|(_, c)| c.clone()).collect();
    let Some(d) = intersect_all(&parts) else { return Ok(None) };
    let (t, trace) = apply_rules(&d)?;
    let bound = termination_bound(&d);
    let ok = if t.is_tree() {
        has_containment_mapping(p, &t)
    } else {
        match mode {
            Mode::Efficient => false,
            Mode::Full => dag_contained_in_tree(&t, p)?,
        }
    };
    Ok(ok.then_some((trace, bound)))
}

/// REWRITE / EFFICIENT: lossless prefixes shortest first, all applicable
/// compensated views intersected, first success returned.
pub fn rewrite(q: &Pattern, views: &ViewSet, opts: &RewriteOptions) -> Result<Option<RewritePlan>> {
    let es = opts.skeletons && classify(q) == FragmentClass::ExtendedSkeleton;
    let mb = q.main_branch();
    let mut allowed: Vec<usize> = (1..mb.len()).collect();
    if let Some(keys) = &opts.keys {
        let prefixes: Vec<Pattern> = mb.iter().map(|&n| q.with_output(n)).collect();
        let ok = filter_prefixes_by_keys(&prefixes, keys);
        allowed.retain(|i| ok.contains(i));
    }
    let mut examined = 0;
    for i in allowed {
        let cand = candidate(q, mb[i], views, opts, es);
        if cand.items.is_empty() {
            continue;
        }
        // the plan names every applicable view; the test only needs the
        // branches not containing another one
        let all = cand.items;
        let items = drop_subsumed(all.clone());
        examined += 1;
        if opts.fast_prune {
            let pats: Vec<Pattern> = items.iter().map(|(_, c)| c.clone()).collect();
            if !prune_plan_fast(&cand.p, &pats) {
                continue;
            }
        }
        if opts.akin_first {
            let code = root_token_code(&cand.p);
            let akin: Vec<(Branch, Pattern)> = all.iter().filter(|(_, c)| root_token_code(c) == code).cloned().collect();
            if !akin.is_empty() && akin.len() < all.len() {
                if let Some(trace) = test_candidate(&cand.p, &drop_subsumed(akin.clone()), opts.mode)? {
                    return Ok(Some(finish(q, views, mb[i], i, akin, trace, examined)));
                }
            }
        }
        if let Some(trace) = test_candidate(&cand.p, &items, opts.mode)? {
            return Ok(Some(finish(q, views, mb[i], i, all, trace, examined)));
        }
    }
    Ok(None)
}

fn finish(q: &Pattern, views: &ViewSet, out_p: NodeId, index: usize, items: Vec<(Branch, Pattern)>, (trace, rule_bound): (RewriteTrace, usize), examined: usize) -> RewritePlan {
    let mut branches: Vec<Branch> = items.into_iter().map(|(b, _)| b).collect();
    branches.sort_by(|a, b| a.view.cmp(&b.view).then(a.image.cmp(&b.image)));
    RewritePlan { ast: plan_ast(q, out_p, &branches, views), prefix_index: index, branches, trace, rule_bound, candidates: examined }
}

/// ALLREWRITES: every subset of the applicable compensated views, per
/// prefix, smallest subsets first, up to `max_views` views per plan.
pub fn all_rewrites(q: &Pattern, views: &ViewSet, max_views: usize) -> Result<Vec<RewritePlan>> {
    let opts = RewriteOptions { mode: Mode::Full, best_comp: false, skeletons: false, fast_prune: false, ..Default::default() };
    let mb = q.main_branch();
    let mut out = Vec::new();
    let mut examined = 0;
    for i in 1..mb.len() {
        let cand = candidate(q, mb[i], views, &opts, false);
        let n = cand.items.len();
        if n > 20 {
            continue;
        }
        let mut subsets: Vec<u32> = (1u32..(1 << n)).filter(|m| m.count_ones() as usize <= max_views).collect();
        subsets.sort_by_key(|m| (m.count_ones(), *m));
        for m in subsets {
            let items: Vec<(Branch, Pattern)> = (0..n).filter(|k| m & (1 << k) != 0).map(|k| cand.items[k].clone()).collect();
            examined += 1;
            if let Some(trace) = test_candidate(&cand.p, &items, Mode::Full)? {
                out.push(finish(q, views, mb[i], i, items, trace, examined));
            }
        }
    }
    Ok(out)
}

/// Whether every branch of a plan unfolds to patterns with the same root token.
pub fn plan_is_akin(plan: &RewritePlan, q: &Pattern, views: &ViewSet) -> bool {
    let p = q.with_output(q.main_branch()[plan.prefix_index]);
    let pats: Vec<Pattern> = plan
        .branches
        .iter()
        .filter_map(|b| views.get(&b.view).and_then(|v| Pattern::compensate(v, &p, b.image).ok()))
        .collect();
    are_akin(&pats)
}
