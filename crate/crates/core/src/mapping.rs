//! Mappings between patterns, containment, minimization and equivalence.
//!
//! A tree source is handled by a bottom-up pass computing, for every source
//! node, the target nodes it can map to given its subtree; a top-down pass
//! then extracts one mapping. A DAG source into a tree target maps its
//! main-branch nodes onto a root-to-node chain of the target, which is a
//! min-closed constraint problem: after arc consistency, taking every
//! domain's minimum is a solution. A DAG into a DAG falls back to search.

use crate::ast::Axis;
use crate::pattern::{NodeId, Pattern};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MappingKind {
    /// Labels, tests and edges respected; main branch into main branch.
    Mapping,
    /// A mapping sending root to root.
    RootMapping,
    /// A root-mapping sending output to output.
    Containment,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternMapping {
    pub kind: MappingKind,
    pub table: HashMap<NodeId, NodeId>,
}

/// Constraints on a mapping search.
#[derive(Clone, Debug, Default)]
pub struct MapOptions {
    pub root_to: Option<NodeId>,
    pub out_to: Option<NodeId>,
    /// Main-branch nodes of the source must map to main-branch nodes.
    pub mb_to_mb: bool,
    /// Allowed images for particular source nodes.
    pub allowed: HashMap<NodeId, Vec<NodeId>>,
}

impl MapOptions {
    pub fn of_kind(kind: MappingKind, src: &Pattern, dst: &Pattern) -> Self {
        let _ = src;
        let mut o = MapOptions { mb_to_mb: true, ..Default::default() };
        if matches!(kind, MappingKind::RootMapping | MappingKind::Containment) {
            o.root_to = Some(dst.root());
        }
        if kind == MappingKind::Containment {
            o.out_to = Some(dst.out());
        }
        o
    }
}

/// Strict-descendant relation of a pattern, as rows of booleans.
pub struct Reach {
    below: Vec<Vec<bool>>,
}

impl Reach {
    pub fn new(p: &Pattern) -> Self {
        let n = p.capacity();
        let mut below = vec![vec![false; n]; n];
        let order = p.topo_order();
        match order {
            Some(order) => {
                for &x in order.iter().rev() {
                    let mut row = vec![false; n];
                    for &(c, _) in p.children(x) {
                        row[c] = true;
                        for (i, v) in below[c].iter().enumerate() {
                            if *v {
                                row[i] = true;
                            }
                        }
                    }
                    below[x] = row;
                }
            }
            None => {
                for x in p.ids() {
                    let mut r = vec![false; n];
                    for &(c, _) in p.children(x) {
                        for (i, v) in p.reachable_from(c).into_iter().enumerate() {
                            r[i] |= v;
                        }
                    }
                    below[x] = r;
                }
            }
        }
        Reach { below }
    }

    /// `b` is a strict descendant of `a`.
    pub fn below(&self, a: NodeId, b: NodeId) -> bool {
        self.below[a][b]
    }
}

fn edge_ok(dst: &Pattern, reach: &Reach, t: NodeId, t2: NodeId, axis: Axis) -> bool {
    match axis {
        Axis::Child => dst.has_edge(t, t2, Axis::Child),
        Axis::Descendant => reach.below(t, t2),
    }
}

fn local_ok(src: &Pattern, s: NodeId, dst: &Pattern, t: NodeId) -> bool {
    src.label(s) == dst.label(t)
        && match src.test(s) {
            None => true,
            Some(c) => dst.test(t) == Some(c),
        }
}

struct Ctx<'a> {
    src: &'a Pattern,
    dst: &'a Pattern,
    reach: Reach,
    src_mb: Vec<bool>,
    dst_mb: Vec<bool>,
    opts: &'a MapOptions,
}

impl<'a> Ctx<'a> {
    fn new(src: &'a Pattern, dst: &'a Pattern, opts: &'a MapOptions) -> Self {
        Ctx { src, dst, reach: Reach::new(dst), src_mb: src.mb_mask(), dst_mb: dst.mb_mask(), opts }
    }

    fn base_ok(&self, s: NodeId, t: NodeId) -> bool {
        if !local_ok(self.src, s, self.dst, t) {
            return false;
        }
        if self.opts.mb_to_mb && self.src_mb[s] && !self.dst_mb[t] {
            return false;
        }
        if s == self.src.root() {
            if let Some(r) = self.opts.root_to {
                if t != r {
                    return false;
                }
            }
        }
        if s == self.src.out() {
            if let Some(o) = self.opts.out_to {
                if t != o {
                    return false;
                }
            }
        }
        if let Some(list) = self.opts.allowed.get(&s) {
            if !list.contains(&t) {
                return false;
            }
        }
        true
    }

    /// Candidate images of the subtree of `s`, ignoring main-branch children
    /// when `only_preds` is set.
    fn candidates(&self, s: NodeId, memo: &mut HashMap<NodeId, Vec<bool>>, only_preds: bool) -> Vec<bool> {
        if !only_preds {
            if let Some(c) = memo.get(&s) {
                return c.clone();
            }
        }
        let n = self.dst.capacity();
        let mut cand: Vec<bool> = (0..n).map(|t| self.dst.is_alive(t) && self.base_ok(s, t)).collect();
        for &(c, a) in self.src.children(s) {
            if only_preds && self.src_mb[c] {
                continue;
            }
            let cc = self.candidates(c, memo, false);
            for t in 0..n {
                if cand[t] {
                    cand[t] = match a {
                        Axis::Child => self.dst.children(t).iter().any(|&(x, ax)| ax == Axis::Child && cc[x]),
                        Axis::Descendant => (0..n).any(|x| cc[x] && self.reach.below(t, x)),
                    };
                }
            }
        }
        if !only_preds {
            memo.insert(s, cand.clone());
        }
        cand
    }

    fn extract(&self, s: NodeId, t: NodeId, memo: &mut HashMap<NodeId, Vec<bool>>, out: &mut HashMap<NodeId, NodeId>) {
        out.insert(s, t);
        for &(c, a) in self.src.children(s) {
            if out.contains_key(&c) {
                continue;
            }
            let cc = self.candidates(c, memo, false);
            let t2 = (0..cc.len())
                .find(|&x| cc[x] && edge_ok(self.dst, &self.reach, t, x, a))
                .expect("candidate sets are consistent");
            self.extract(c, t2, memo, out);
        }
    }

    fn tree_source(&self) -> Option<HashMap<NodeId, NodeId>> {
        let mut memo = HashMap::new();
        let root = self.src.root();
        let cand = self.candidates(root, &mut memo, false);
        let t = (0..cand.len()).find(|&t| cand[t])?;
        let mut out = HashMap::new();
        self.extract(root, t, &mut memo, &mut out);
        Some(out)
    }

    fn mb_edges(&self) -> Vec<(NodeId, NodeId, Axis)> {
        self.src.edges().into_iter().filter(|&(a, b, _)| self.src_mb[a] && self.src_mb[b]).collect()
    }

    /// DAG source, tree target.
    fn chain_source(&self) -> Option<HashMap<NodeId, NodeId>> {
        let mut memo = HashMap::new();
        let mbn: Vec<NodeId> = self.src.ids().filter(|&n| self.src_mb[n]).collect();
        let local: HashMap<NodeId, Vec<bool>> =
            mbn.iter().map(|&n| (n, self.candidates(n, &mut memo, true))).collect();
        let edges = self.mb_edges();
        let outs: Vec<NodeId> = match self.opts.out_to {
            Some(o) => vec![o],
            None => self.dst.ids().filter(|&t| local[&self.src.out()][t]).collect(),
        };
        for to in outs {
            if !local[&self.src.out()][to] {
                continue;
            }
            let mut chain = vec![to];
            let mut cur = to;
            while let Some(&(p, _)) = self.dst.parents(cur).first() {
                chain.push(p);
                cur = p;
            }
            chain.reverse();
            let k = chain.len();
            let slash_after: Vec<bool> =
                (0..k).map(|i| i + 1 < k && self.dst.has_edge(chain[i], chain[i + 1], Axis::Child)).collect();
            let mut dom: HashMap<NodeId, Vec<bool>> =
                mbn.iter().map(|&n| (n, (0..k).map(|i| local[&n][chain[i]]).collect())).collect();
            if let Some(v) = dom.get_mut(&self.src.out()) {
                for (i, x) in v.iter_mut().enumerate() {
                    *x = *x && i + 1 == k;
                }
            }
            if arc_consistency(&mut dom, &edges, &slash_after) {
                let mut out = HashMap::new();
                for &n in &mbn {
                    let i = dom[&n].iter().position(|&x| x).unwrap();
                    out.insert(n, chain[i]);
                }
                for &n in &mbn {
                    let t = out[&n];
                    for &(c, a) in self.src.children(n) {
                        if self.src_mb[c] {
                            continue;
                        }
                        let cc = self.candidates(c, &mut memo, false);
                        let t2 = (0..cc.len()).find(|&x| cc[x] && edge_ok(self.dst, &self.reach, t, x, a)).unwrap();
                        self.extract(c, t2, &mut memo, &mut out);
                    }
                }
                return Some(out);
            }
        }
        None
    }

    /// DAG source, DAG target: backtracking over main-branch nodes.
    fn search_source(&self) -> Option<HashMap<NodeId, NodeId>> {
        let mut memo = HashMap::new();
        let order: Vec<NodeId> = self.src.topo_order()?.into_iter().filter(|&n| self.src_mb[n]).collect();
        let local: HashMap<NodeId, Vec<NodeId>> = order
            .iter()
            .map(|&n| {
                let c = self.candidates(n, &mut memo, true);
                (n, (0..c.len()).filter(|&t| c[t]).collect())
            })
            .collect();
        let mut assign: HashMap<NodeId, NodeId> = HashMap::new();
        if !self.backtrack(&order, 0, &local, &mut assign) {
            return None;
        }
        let mut out = assign.clone();
        for &n in &order {
            let t = assign[&n];
            for &(c, a) in self.src.children(n) {
                if self.src_mb[c] {
                    continue;
                }
                let cc = self.candidates(c, &mut memo, false);
                let t2 = (0..cc.len()).find(|&x| cc[x] && edge_ok(self.dst, &self.reach, t, x, a)).unwrap();
                self.extract(c, t2, &mut memo, &mut out);
            }
        }
        Some(out)
    }

    fn backtrack(
        &self,
        order: &[NodeId],
        i: usize,
        local: &HashMap<NodeId, Vec<NodeId>>,
        assign: &mut HashMap<NodeId, NodeId>,
    ) -> bool {
        if i == order.len() {
            return true;
        }
        let n = order[i];
        for &t in &local[&n] {
            let ok = self.src.parents(n).iter().all(|&(p, a)| match assign.get(&p) {
                Some(&tp) => edge_ok(self.dst, &self.reach, tp, t, a),
                None => true,
            });
            if ok {
                assign.insert(n, t);
                if self.backtrack(order, i + 1, local, assign) {
                    return true;
                }
                assign.remove(&n);
            }
        }
        false
    }
}

/// Arc consistency over chain positions; `false` when a domain empties.
fn arc_consistency(dom: &mut HashMap<NodeId, Vec<bool>>, edges: &[(NodeId, NodeId, Axis)], slash_after: &[bool]) -> bool {
    let k = slash_after.len();
    loop {
        let mut changed = false;
        for &(a, b, ax) in edges {
            let da = dom[&a].clone();
            let db = dom[&b].clone();
            let mut na = da.clone();
            let mut nb = db.clone();
            match ax {
                Axis::Child => {
                    for i in 0..k {
                        na[i] = da[i] && slash_after[i] && db[i + 1];
                    }
                    for j in 0..k {
                        nb[j] = db[j] && j > 0 && da[j - 1] && slash_after[j - 1];
                    }
                }
                Axis::Descendant => {
                    let max_b = db.iter().rposition(|&x| x);
                    let min_a = da.iter().position(|&x| x);
                    for i in 0..k {
                        na[i] = da[i] && max_b.is_some_and(|m| m > i);
                    }
                    for j in 0..k {
                        nb[j] = db[j] && min_a.is_some_and(|m| m < j);
                    }
                }
            }
            if na != da || nb != db {
                changed = true;
                dom.insert(a, na);
                dom.insert(b, nb);
            }
        }
        if dom.values().any(|d| !d.iter().any(|&x| x)) {
            return false;
        }
        if !changed {
            return true;
        }
    }
}

/// Searches a mapping from `src` into `dst` under `opts`.
pub fn find_mapping_with(src: &Pattern, dst: &Pattern, opts: &MapOptions) -> Option<HashMap<NodeId, NodeId>> {
    let ctx = Ctx::new(src, dst, opts);
    if src.is_tree() {
        ctx.tree_source()
    } else if dst.is_tree() {
        ctx.chain_source()
    } else {
        ctx.search_source()
    }
}

pub fn find_mapping(src: &Pattern, dst: &Pattern, kind: MappingKind) -> Option<PatternMapping> {
    let opts = MapOptions::of_kind(kind, src, dst);
    find_mapping_with(src, dst, &opts).map(|table| PatternMapping { kind, table })
}

pub fn has_root_mapping(src: &Pattern, dst: &Pattern) -> bool {
    find_mapping(src, dst, MappingKind::RootMapping).is_some()
}

pub fn has_containment_mapping(src: &Pattern, dst: &Pattern) -> bool {
    find_mapping(src, dst, MappingKind::Containment).is_some()
}

/// `p2 ⊑ p1` for tree patterns.
pub fn tree_contains(p1: &Pattern, p2: &Pattern) -> bool {
    has_containment_mapping(p1, p2)
}

/// `p ⊑ d` for a tree pattern `p` and a DAG pattern `d`.
pub fn tree_contained_in_dag(p: &Pattern, d: &Pattern) -> bool {
    has_containment_mapping(d, p)
}

/// Drops predicate subtrees, largest first, while equivalence holds.
pub fn minimize(p: &Pattern) -> Pattern {
    let mut cur = p.clone();
    'restart: loop {
        let mb = cur.mb_mask();
        let mut cands: Vec<(usize, NodeId)> = cur
            .ids()
            .filter(|&n| !mb[n])
            .map(|n| (cur.reachable_from(n).iter().filter(|&&x| x).count(), n))
            .collect();
        cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, n) in cands {
            let mut smaller = cur.clone();
            smaller.remove_subtree(n);
            if has_containment_mapping(&cur, &smaller) {
                cur = smaller;
                continue 'restart;
            }
        }
        return cur.compact().0;
    }
}

/// Tree-pattern equivalence: isomorphic after minimization.
pub fn equivalent(p1: &Pattern, p2: &Pattern) -> bool {
    minimize(p1).canonical() == minimize(p2).canonical()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::parse_dag;

    fn p(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    #[test]
    fn view_root_maps_into_query() {
        let q = p(r#"doc("L")/lib//paper//section[theorem]//figure/image"#);
        let v1 = p(r#"doc("L")//paper//section"#);
        let opts = MapOptions { root_to: Some(q.root()), mb_to_mb: true, ..Default::default() };
        let m = find_mapping_with(&v1, &q, &opts).unwrap();
        assert_eq!(q.label(m[&v1.out()]), "section");
    }

    #[test]
    fn identity_mapping() {
        let q = p(r#"doc("L")/a[b//c="x"]//d"#);
        assert!(has_containment_mapping(&q, &q));
    }

    #[test]
    fn running_views_are_incomparable() {
        let v1 = p(r#"doc("L")//paper//section"#);
        let v2 = p(r#"doc("L")//section[theorem]"#);
        assert!(!tree_contains(&v1, &v2));
        assert!(!tree_contains(&v2, &v1));
    }

    #[test]
    fn descendant_contains_child() {
        assert!(tree_contains(&p(r#"doc("L")//figure/image"#), &p(r#"doc("L")/lib//figure/image"#)));
        assert!(!tree_contains(&p(r#"doc("L")/lib//figure/image"#), &p(r#"doc("L")//figure/image"#)));
    }

    #[test]
    fn minimize_drops_redundant_predicates() {
        assert_eq!(minimize(&p(r#"doc("L")/a[b][b]"#)).xpath(), r#"doc("L")/a[b]"#);
        assert_eq!(minimize(&p(r#"doc("L")/a[b/c][b]"#)).xpath(), r#"doc("L")/a[b/c]"#);
        assert_eq!(minimize(&p(r#"doc("L")/a[.//c][b/c]"#)).xpath(), r#"doc("L")/a[b/c]"#);
        let q = p(r#"doc("L")/lib//paper//section[theorem]//figure/image"#);
        assert_eq!(minimize(&q).canonical(), q.canonical());
    }

    #[test]
    fn equivalence_modulo_redundancy() {
        assert!(equivalent(&p(r#"doc("L")/a[b][b/c]//d"#), &p(r#"doc("L")/a[b/c]//d"#)));
        assert!(!equivalent(&p(r#"doc("L")/a//d"#), &p(r#"doc("L")/a/d"#)));
    }

    #[test]
    fn dag_into_tree() {
        let d = parse_dag(r#"doc("L")//paper//section & doc("L")//section[theorem]"#).unwrap().unwrap();
        assert!(tree_contained_in_dag(&p(r#"doc("L")/lib/paper/x//section[theorem]"#), &d));
        assert!(!tree_contained_in_dag(&p(r#"doc("L")/paper/section"#), &d));
        assert!(!tree_contained_in_dag(&p(r#"doc("L")//section[theorem]"#), &d));
        let d2 = parse_dag(r#"doc("L")/a/b & doc("L")//b"#).unwrap().unwrap();
        assert!(tree_contained_in_dag(&p(r#"doc("L")/a/b"#), &d2));
        assert!(!tree_contained_in_dag(&p(r#"doc("L")/x/b"#), &d2));
    }

    #[test]
    fn dag_into_dag() {
        let d1 = parse_dag(r#"doc("L")//a//c & doc("L")//b//c"#).unwrap().unwrap();
        let d2 = parse_dag(r#"doc("L")/a/b/c & doc("L")//b/c"#).unwrap().unwrap();
        assert!(has_containment_mapping(&d1, &d2));
        assert!(!has_containment_mapping(&d2, &d1));
    }
}
