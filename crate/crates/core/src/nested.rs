//! Rewritings with nested intersections: the candidate rewriting graph and
//! its equivalence test.

use crate::ast::{AbsPath, Axis, Expr, Step, XpAst};
use crate::dag::ViewSet;
use crate::error::{Error, Result};
use crate::interleave::dag_contained_in_tree;
use crate::mapping::{find_mapping_with, has_containment_mapping, MapOptions};
use crate::pattern::{NodeId, Pattern};
use crate::rewrite::{view_images, Branch, RewritePlan};
use crate::rules::{apply_rules, termination_bound, RewriteTrace};
use std::collections::HashMap;

/// A query pattern with view heads attached to main-branch nodes. Only the
/// part of `base` below `top` belongs to the graph.
#[derive(Clone, Debug)]
pub struct RewritingGraph {
    pub base: Pattern,
    pub top: NodeId,
    pub heads: Vec<Branch>,
}

/// Attaches `doc("v")/v` at every main-branch image of every view output and
/// keeps what the heads reach. `None` when no view reaches the output.
pub fn build_rewrite_candidate(q: &Pattern, views: &ViewSet) -> Option<RewritingGraph> {
    let mb = q.main_branch();
    let mut heads = Vec::new();
    for (name, v) in views.iter() {
        for image in view_images(v, q) {
            heads.push(Branch { view: name.to_string(), image });
        }
    }
    let depth = |n: NodeId| mb.iter().position(|&x| x == n).unwrap();
    let top = heads.iter().map(|b| b.image).min_by_key(|&n| depth(n))?;
    heads.sort_by(|a, b| depth(a.image).cmp(&depth(b.image)).then(a.view.cmp(&b.view)));
    Some(RewritingGraph { base: q.clone(), top, heads })
}

impl RewritingGraph {
    /// The DAG pattern obtained by replacing each head with its view
    /// definition, the view output merged into the node it hangs from.
    pub fn unfold(&self, views: &ViewSet) -> Result<Pattern> {
        let q = &self.base;
        let mut d = Pattern::new(q.label(q.root()));
        let keep = q.reachable_from(self.top);
        let mut map: HashMap<NodeId, NodeId> = HashMap::new();
        for n in q.ids().filter(|&n| keep[n]) {
            map.insert(n, d.add_node(q.label(n), q.test(n).map(str::to_string)));
        }
        for (x, y, ax) in q.edges() {
            if keep[x] && keep[y] {
                d.add_edge(map[&x], map[&y], ax);
            }
        }
        for h in &self.heads {
            let v = views.get(&h.view).ok_or_else(|| Error::UnknownView(h.view.clone()))?;
            let mut vm: HashMap<NodeId, NodeId> = HashMap::new();
            vm.insert(v.root(), d.root());
            vm.insert(v.out(), map[&h.image]);
            for n in v.ids() {
                if !vm.contains_key(&n) {
                    vm.insert(n, d.add_node(v.label(n), v.test(n).map(str::to_string)));
                }
            }
            for (x, y, ax) in v.edges() {
                d.add_edge(vm[&x], vm[&y], ax);
            }
        }
        d.set_out(map[&q.out()]);
        Ok(d)
    }

    /// The graph as an XPint expression. Predicates of a node already
    /// enforced by a view hanging there are left out.
    pub fn plan(&self, views: &ViewSet) -> XpAst {
        let q = &self.base;
        let mbm = q.mb_mask();
        let path = q.main_branch();
        let start = path.iter().position(|&x| x == self.top).unwrap();
        let mut attach: Vec<NodeId> = path[start..].iter().copied().filter(|&n| self.heads.iter().any(|h| h.image == n)).collect();
        attach.dedup();
        let preds_at = |n: NodeId| {
            let provided: Vec<Pattern> = self
                .heads
                .iter()
                .filter(|h| h.image == n)
                .filter_map(|h| views.get(&h.view))
                .map(|v| v.subpattern_at(v.out()))
                .collect();
            let mut kids: Vec<(NodeId, Axis)> = q.children(n).iter().copied().filter(|&(c, _)| !mbm[c]).collect();
            kids.sort();
            kids.into_iter()
                .filter(|&(c, a)| {
                    let mut probe = Pattern::new(q.label(n));
                    let r = probe.root();
                    q.copy_into(c, &mut probe, r, a);
                    !provided.iter().any(|s| {
                        let opts = MapOptions { root_to: Some(s.root()), ..Default::default() };
                        find_mapping_with(&probe, s, &opts).is_some()
                    })
                })
                .map(|(c, a)| q.pred_ast(c, a))
                .collect::<Vec<_>>()
        };
        let steps = |from: NodeId, to: NodeId| -> Vec<Step> {
            let i = path.iter().position(|&x| x == from).unwrap();
            let j = path.iter().position(|&x| x == to).unwrap();
            (i + 1..=j)
                .map(|k| {
                    let preds = if attach.contains(&path[k]) {
                        preds_at(path[k])
                    } else {
                        crate::rewrite::preds_of(q, &mbm, path[k]).into_iter().map(|(c, a)| q.pred_ast(c, a)).collect()
                    };
                    Step { axis: q.edge_axis(path[k - 1], path[k]).unwrap(), label: q.label(path[k]).to_string(), preds }
                })
                .collect()
        };
        let head = |view: &str, preds| Expr::Path(AbsPath { doc: view.to_string(), steps: vec![Step { axis: Axis::Child, label: view.to_string(), preds }] });
        let names_at = |n: NodeId| self.heads.iter().filter(move |h| h.image == n).map(|h| h.view.as_str());

        let first: Vec<Expr> = names_at(attach[0]).map(|v| head(v, preds_at(attach[0]))).collect();
        let mut expr = one_or_all(first);
        for w in attach.windows(2) {
            let mut items = vec![extend(expr, steps(w[0], w[1]))];
            items.extend(names_at(w[1]).map(|v| head(v, Vec::new())));
            expr = one_or_all(items);
        }
        let last = *attach.last().unwrap();
        expr = extend(expr, steps(last, q.out()));
        XpAst { dialect: expr.min_dialect(), expr }
    }
}

fn one_or_all(mut items: Vec<Expr>) -> Expr {
    if items.len() == 1 {
        items.pop().unwrap()
    } else {
        Expr::Intersect(items)
    }
}

fn extend(e: Expr, steps: Vec<Step>) -> Expr {
    if steps.is_empty() {
        return e;
    }
    match e {
        Expr::Path(mut p) => {
            p.steps.extend(steps);
            Expr::Path(p)
        }
        Expr::Nav(inner, mut s) => {
            s.extend(steps);
            Expr::Nav(inner, s)
        }
        other => Expr::Nav(Box::new(other), steps),
    }
}

/// `d ⊑ q`, first through the rules and, when they leave a DAG, through
/// interleavings. Returns the rule trace when the rules were run to the end.
pub fn dag_in_query(d: &Pattern, q: &Pattern) -> Result<(bool, RewriteTrace)> {
    match apply_rules(d) {
        Ok((t, trace)) if t.is_tree() => Ok((has_containment_mapping(q, &t), trace)),
        Ok((t, trace)) => Ok((dag_contained_in_tree(&t, q)?, trace)),
        Err(Error::CapExceeded(_)) => Ok((dag_contained_in_tree(d, q)?, RewriteTrace::default())),
        Err(e) => Err(e),
    }
}

/// The candidate graph as a plan when its unfolding is equivalent to `q`.
pub fn nested_rewrite(q: &Pattern, views: &ViewSet) -> Result<Option<RewritePlan>> {
    let Some(g) = build_rewrite_candidate(q, views) else {
        return Ok(None);
    };
    let d = g.unfold(views)?;
    let (ok, trace) = dag_in_query(&d, q)?;
    if !ok {
        return Ok(None);
    }
    Ok(Some(RewritePlan {
        ast: g.plan(views),
        prefix_index: q.main_branch().len() - 1,
        branches: g.heads.clone(),
        trace,
        rule_bound: termination_bound(&d),
        candidates: 1,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::unfold;
    use crate::interleave::dag_equivalent;
    use crate::ast::Dialect;
    use crate::parse;

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    fn library_views() -> ViewSet {
        let mut vs = ViewSet::new();
        vs.insert("v1", pat(r#"doc("L")//paper//section"#));
        vs.insert("v2", pat(r#"doc("L")//section[theorem]"#));
        vs.insert("v3", pat(r#"doc("L")/lib//figure/image"#));
        vs
    }

    #[test]
    fn three_view_nested_plan() {
        let q = pat(r#"doc("L")/lib//paper//section[theorem]//figure/image"#);
        let vs = library_views();
        let plan = nested_rewrite(&q, &vs).unwrap().expect("rewriting");
        assert_eq!(plan.text(), r#"(doc("v1")/v1 & doc("v2")/v2)//figure/image & doc("v3")/v3"#);
        let three = parse(r#"(doc("v1")/v1 & doc("v2")/v2)//figure/image & doc("v3")/v3"#, Dialect::XpInt).unwrap();
        let a = unfold(&plan.ast, &vs).unwrap().unwrap();
        let b = unfold(&three, &vs).unwrap().unwrap();
        assert!(dag_equivalent(&a, &b).unwrap());
    }

    #[test]
    fn query_as_view() {
        let q = pat(r#"doc("L")/a//b[c]/d"#);
        let mut vs = ViewSet::new();
        vs.insert("q", q.clone());
        let plan = nested_rewrite(&q, &vs).unwrap().unwrap();
        assert!(plan.branches.iter().any(|b| b.view == "q" && b.image == q.out()));
    }

    #[test]
    fn output_label_in_no_view() {
        let q = pat(r#"doc("L")/a/b"#);
        let mut vs = ViewSet::new();
        vs.insert("v", pat(r#"doc("L")//c"#));
        assert!(build_rewrite_candidate(&q, &vs).is_none());
        assert!(nested_rewrite(&q, &vs).unwrap().is_none());
    }

    #[test]
    fn too_loose_views_fail() {
        let q = pat(r#"doc("L")/a/b[c]/d"#);
        let mut vs = ViewSet::new();
        vs.insert("v", pat(r#"doc("L")//b"#));
        assert!(build_rewrite_candidate(&q, &vs).is_some());
        assert!(nested_rewrite(&q, &vs).unwrap().is_none());
    }
}
