//! Equivalence-preserving rewrite rules over DAG patterns.
//!
//! Each rule looks for a configuration of main-branch nodes and either
//! collapses two nodes, moves or removes `//`-edges, removes a parallel
//! branch, or copies a predicate. `apply_rules` runs them to a fixpoint,
//! saturating R1 before every other attempt.

use crate::ast::Axis;
use crate::error::{Error, Result};
use crate::fragment::es_allows_at;
use crate::mapping::{find_mapping_with, has_containment_mapping, MapOptions};
use crate::pattern::{NodeId, Pattern};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    R1,
    R2i,
    R2ii,
    R3i,
    R3ii,
    R4i,
    R4ii,
    R5,
    R6,
    R7,
    R8,
    R9,
}

impl RuleId {
    pub const ALL: [RuleId; 12] = [
        RuleId::R1,
        RuleId::R2i,
        RuleId::R2ii,
        RuleId::R3i,
        RuleId::R3ii,
        RuleId::R4i,
        RuleId::R4ii,
        RuleId::R5,
        RuleId::R6,
        RuleId::R7,
        RuleId::R8,
        RuleId::R9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::R1 => "R1",
            RuleId::R2i => "R2.i",
            RuleId::R2ii => "R2.ii",
            RuleId::R3i => "R3.i",
            RuleId::R3ii => "R3.ii",
            RuleId::R4i => "R4.i",
            RuleId::R4ii => "R4.ii",
            RuleId::R5 => "R5",
            RuleId::R6 => "R6",
            RuleId::R7 => "R7",
            RuleId::R8 => "R8",
            RuleId::R9 => "R9",
        }
    }

    pub fn from_name(s: &str) -> Option<RuleId> {
        RuleId::ALL.into_iter().find(|r| r.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One firing of a rule: which rule, and the nodes it was matched on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleInstance {
    pub rule: RuleId,
    pub bindings: BTreeMap<&'static str, Vec<NodeId>>,
}

impl RuleInstance {
    fn new(rule: RuleId) -> Self {
        RuleInstance { rule, bindings: BTreeMap::new() }
    }

    fn bind(mut self, name: &'static str, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        self.bindings.insert(name, nodes.into_iter().collect());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub instance: RuleInstance,
    pub mbn_before: usize,
    pub mbn_after: usize,
}

impl TraceEntry {
    pub fn to_json(&self) -> Value {
        let b: serde_json::Map<String, Value> =
            self.instance.bindings.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
        json!({
            "rule": self.instance.rule.name(),
            "bindings": b,
            "mbnBefore": self.mbn_before,
            "mbnAfter": self.mbn_after,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RewriteTrace {
    pub entries: Vec<TraceEntry>,
}

impl RewriteTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(self.entries.iter().map(TraceEntry::to_json).collect())
    }
}

/// Upper bound on the number of rule firings for an input DAG.
pub fn termination_bound(d: &Pattern) -> usize {
    d.len() * d.len() + d.predicate_count()
}

// Graph view with the main-branch mask and reachability precomputed.
struct G<'a> {
    d: &'a Pattern,
    mb: Vec<bool>,
    reach: Vec<Vec<bool>>,
}

impl<'a> G<'a> {
    fn new(d: &'a Pattern) -> Self {
        let mb = d.mb_mask();
        let reach = (0..d.capacity())
            .map(|i| if d.is_alive(i) && mb[i] { d.reachable_from(i) } else { Vec::new() })
            .collect();
        G { d, mb, reach }
    }

    fn mbn(&self) -> Vec<NodeId> {
        self.d.ids().filter(|&n| self.mb[n]).collect()
    }

    /// `b` is reachable from `a`, `a` itself included. Main-branch nodes only.
    fn reaches(&self, a: NodeId, b: NodeId) -> bool {
        self.reach[a].get(b).copied().unwrap_or(false)
    }

    fn related(&self, a: NodeId, b: NodeId) -> bool {
        self.reaches(a, b) || self.reaches(b, a)
    }

    fn out_mb(&self, n: NodeId) -> Vec<(NodeId, Axis)> {
        self.d.children(n).iter().copied().filter(|&(c, _)| self.mb[c]).collect()
    }

    fn in_mb(&self, n: NodeId) -> Vec<(NodeId, Axis)> {
        self.d.parents(n).iter().copied().filter(|&(c, _)| self.mb[c]).collect()
    }

    fn out_ax(&self, n: NodeId, axis: Axis) -> Vec<NodeId> {
        self.out_mb(n).into_iter().filter(|&(_, a)| a == axis).map(|(c, _)| c).collect()
    }

    fn in_ax(&self, n: NodeId, axis: Axis) -> Vec<NodeId> {
        self.in_mb(n).into_iter().filter(|&(_, a)| a == axis).map(|(c, _)| c).collect()
    }

    /// `n` followed by unique main-branch `/`-children, as long as they are unique.
    fn chain_down(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = vec![n];
        loop {
            let ch = self.out_ax(*out.last().unwrap(), Axis::Child);
            if ch.len() != 1 || out.contains(&ch[0]) {
                return out;
            }
            out.push(ch[0]);
        }
    }

    /// `n` followed by unique main-branch `/`-parents.
    fn chain_up(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = vec![n];
        loop {
            let ps = self.in_ax(*out.last().unwrap(), Axis::Child);
            if ps.len() != 1 || out.contains(&ps[0]) {
                return out;
            }
            out.push(ps[0]);
        }
    }

    fn labels(&self, path: &[NodeId]) -> Vec<&str> {
        path.iter().map(|&n| self.d.label(n)).collect()
    }

    fn is_chain_node(&self, n: NodeId) -> bool {
        self.mb[n]
            && n != self.d.root()
            && n != self.d.out()
            && self.in_mb(n).len() == 1
            && self.out_mb(n).len() == 1
    }
}

/// Collapses `b` into `a` and drops duplicate predicates of the merged node.
fn merge(d: &Pattern, a: NodeId, b: NodeId) -> Option<Pattern> {
    let mut x = d.collapse(a, b).ok()?;
    dedup_predicates(&mut x, a);
    Some(x)
}

fn dedup_predicates(x: &mut Pattern, n: NodeId) {
    let mb = x.mb_mask();
    let mut seen = HashSet::new();
    for (c, a) in x.predicates(n, &mb) {
        if x.parents(c).len() != 1 {
            continue;
        }
        if !seen.insert((a, x.canonical_at(c))) {
            x.remove_subtree(c);
        }
    }
}

/// Tree pattern made of a path of `d` and the predicates of its nodes.
/// Returns the pattern and the ids of the path nodes inside it.
fn tp(d: &Pattern, mb: &[bool], path: &[NodeId]) -> (Pattern, Vec<NodeId>) {
    let mut p = Pattern::new(d.label(path[0]));
    p.set_test(p.root(), d.test(path[0]).map(str::to_string));
    let mut ids = vec![p.root()];
    for w in path.windows(2) {
        let n = p.add_node(d.label(w[1]), d.test(w[1]).map(str::to_string));
        p.add_edge(*ids.last().unwrap(), n, d.edge_axis(w[0], w[1]).unwrap_or(Axis::Descendant));
        ids.push(n);
    }
    for (i, &n) in path.iter().enumerate() {
        for (c, a) in d.predicates(n, mb) {
            d.copy_into(c, &mut p, ids[i], a);
        }
    }
    p.set_out(*ids.last().unwrap());
    (p, ids)
}

/// Pattern `label(n)` with the predicate subtree `q` of `src` below it.
fn pred_pattern(label: &str, src: &Pattern, q: NodeId, axis: Axis) -> Pattern {
    let mut p = Pattern::new(label);
    let r = p.root();
    src.copy_into(q, &mut p, r, axis);
    p
}

fn root_maps_at(qpat: &Pattern, d: &Pattern, n: NodeId) -> bool {
    let (s, _) = d.subpattern_at_with_map(n);
    root_maps(qpat, &s)
}

fn root_maps(qpat: &Pattern, s: &Pattern) -> bool {
    let opts = MapOptions { root_to: Some(s.root()), ..Default::default() };
    find_mapping_with(qpat, s, &opts).is_some()
}

/// A labelled path with the given separators embeds into the `/`-path `target`.
fn path_into_slash_path(labels: &[&str], axes: &[Axis], target: &[&str]) -> bool {
    let m = target.len();
    let mut cur: Vec<bool> = (0..m).map(|j| target[j] == labels[0]).collect();
    for i in 1..labels.len() {
        let mut next = vec![false; m];
        for j in 0..m {
            if target[j] != labels[i] {
                continue;
            }
            next[j] = match axes[i - 1] {
                Axis::Child => j > 0 && cur[j - 1],
                Axis::Descendant => cur[..j].iter().any(|&x| x),
            };
        }
        cur = next;
    }
    cur.iter().any(|&x| x)
}

// ---------------------------------------------------------------------
// Unsatisfiability and collapsibility

fn r1_pair(g: &G) -> Option<(NodeId, NodeId)> {
    for n in g.mbn() {
        for group in [g.out_ax(n, Axis::Child), g.in_ax(n, Axis::Child)] {
            for (i, &a) in group.iter().enumerate() {
                for &b in &group[i + 1..] {
                    if a != b && g.d.label(a) == g.d.label(b) {
                        return Some((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    None
}

/// Syntactic unsatisfiability after R1 saturation: a cycle, two `/`-parents
/// or `/`-children with different labels, or two paths between the same
/// nodes incompatible with a fixed `/`-distance.
pub fn immediately_unsatisfiable(d: &Pattern) -> bool {
    let mut x = d.clone();
    loop {
        if !x.is_acyclic() {
            return true;
        }
        let pair = r1_pair(&G::new(&x));
        match pair {
            Some((a, b)) => match x.collapse(a, b) {
                Ok(y) => x = y,
                Err(_) => return true,
            },
            None => break,
        }
    }
    structurally_unsat(&x)
}

fn structurally_unsat(x: &Pattern) -> bool {
    let g = G::new(x);
    let mbn = g.mbn();
    if mbn.iter().any(|&n| g.out_ax(n, Axis::Child).len() > 1 || g.in_ax(n, Axis::Child).len() > 1) {
        return true;
    }
    let order: Vec<NodeId> = match x.topo_order() {
        Some(o) => o.into_iter().filter(|&n| g.mb[n]).collect(),
        None => return true,
    };
    for (i, &a) in order.iter().enumerate() {
        // slash[n]: length of the `/`-path from a, if any; longest[n]: longest path.
        let mut slash: HashMap<NodeId, usize> = HashMap::new();
        let mut longest: HashMap<NodeId, usize> = HashMap::new();
        slash.insert(a, 0);
        longest.insert(a, 0);
        for &n in &order[i..] {
            let Some(&ln) = longest.get(&n) else { continue };
            let sn = slash.get(&n).copied();
            for (c, ax) in g.out_mb(n) {
                let e = longest.entry(c).or_insert(0);
                *e = (*e).max(ln + 1);
                if ax == Axis::Child {
                    if let Some(s) = sn {
                        match slash.get(&c) {
                            Some(&old) if old != s + 1 => return true,
                            _ => {
                                slash.insert(c, s + 1);
                            }
                        }
                    }
                }
            }
        }
        for (n, s) in &slash {
            if longest[n] > *s {
                return true;
            }
        }
    }
    false
}

/// Same label, and collapsing them does not make `d` immediately unsatisfiable.
pub fn collapsible(d: &Pattern, n1: NodeId, n2: NodeId) -> bool {
    if d.label(n1) != d.label(n2) {
        return false;
    }
    match d.collapse(n1, n2) {
        Ok(x) => !immediately_unsatisfiable(&x),
        Err(_) => false,
    }
}

// ---------------------------------------------------------------------
// Similarity of two `/`-paths with predicates

/// Every merge of two `/`-paths with the same code (overlapping at any
/// shift, or one above the other) is root-mapped into by both.
pub fn similar(t1: &Pattern, t2: &Pattern) -> bool {
    let m1 = t1.main_branch();
    let m2 = t2.main_branch();
    if t1.code_of(&m1) != t2.code_of(&m2) {
        return false;
    }
    let k = m1.len();
    for (a, ma, b, mb) in [(t1, &m1, t2, &m2), (t2, &m2, t1, &m1)] {
        for s in 0..=k {
            let Some(p12) = merged_paths(a, ma, b, mb, s) else { continue };
            if !root_maps(t1, &p12) || !root_maps(t2, &p12) {
                return false;
            }
        }
    }
    true
}

/// `a` placed first and `b` starting `s` positions lower. With `s == len`
/// the two are stacked with a `//` between them.
fn merged_paths(a: &Pattern, ma: &[NodeId], b: &Pattern, mb: &[NodeId], s: usize) -> Option<Pattern> {
    let k = ma.len();
    let total = s + mb.len();
    let mut pos_labels: Vec<Option<&str>> = vec![None; total];
    for (i, &n) in ma.iter().enumerate() {
        pos_labels[i] = Some(a.label(n));
    }
    for (j, &n) in mb.iter().enumerate() {
        let p = s + j;
        match pos_labels[p] {
            Some(l) if l != b.label(n) => return None,
            _ => pos_labels[p] = Some(b.label(n)),
        }
    }
    let mut p = Pattern::new(pos_labels[0].unwrap());
    let mut ids = vec![p.root()];
    for (i, lbl) in pos_labels.iter().enumerate().skip(1) {
        let n = p.add_node(lbl.unwrap(), None);
        let axis = if s == k && i == k { Axis::Descendant } else { Axis::Child };
        p.add_edge(ids[i - 1], n, axis);
        ids.push(n);
    }
    let amb = a.mb_mask();
    for (i, &n) in ma.iter().enumerate() {
        for (c, ax) in a.predicates(n, &amb) {
            a.copy_into(c, &mut p, ids[i], ax);
        }
    }
    let bmb = b.mb_mask();
    for (j, &n) in mb.iter().enumerate() {
        for (c, ax) in b.predicates(n, &bmb) {
            b.copy_into(c, &mut p, ids[s + j], ax);
        }
    }
    p.set_out(*ids.last().unwrap());
    Some(p)
}

// ---------------------------------------------------------------------
// The rules

type Fired = (Pattern, RuleInstance);

fn r1(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    let (a, b) = r1_pair(&g)?;
    if g.related(a, b) {
        return None;
    }
    Some((merge(d, a, b)?, RuleInstance::new(RuleId::R1).bind("n1", [a]).bind("n2", [b])))
}

fn r2i(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    for n0 in g.mbn() {
        for n1 in g.out_ax(n0, Axis::Child) {
            for n2 in g.out_ax(n0, Axis::Descendant) {
                if n1 == n2 || g.related(n1, n2) || collapsible(d, n1, n2) {
                    continue;
                }
                let mut x = d.clone();
                x.remove_edge(n0, n2, Axis::Descendant);
                x.add_edge(n1, n2, Axis::Descendant);
                let inst = RuleInstance::new(RuleId::R2i).bind("n0", [n0]).bind("n1", [n1]).bind("n2", [n2]);
                return Some((x, inst));
            }
        }
    }
    None
}

fn r2ii(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    for n0 in g.mbn() {
        for n1 in g.in_ax(n0, Axis::Child) {
            for n2 in g.in_ax(n0, Axis::Descendant) {
                if n1 == n2 || g.related(n1, n2) || collapsible(d, n1, n2) {
                    continue;
                }
                let mut x = d.clone();
                x.remove_edge(n2, n0, Axis::Descendant);
                x.add_edge(n2, n1, Axis::Descendant);
                let inst = RuleInstance::new(RuleId::R2ii).bind("n0", [n0]).bind("n1", [n1]).bind("n2", [n2]);
                return Some((x, inst));
            }
        }
    }
    None
}

/// Maximal `/`-chain from `n2` whose nodes have one incoming main-branch
/// edge (`down`) or one outgoing one (`!down`). Bottom-up order when `!down`
/// is reversed to top-down.
fn r3_path(g: &G, n2: NodeId, down: bool) -> Option<Vec<NodeId>> {
    let mut p = if down { g.chain_down(n2) } else { g.chain_up(n2) };
    let last = *p.last().unwrap();
    let more = if down { g.out_ax(last, Axis::Child) } else { g.in_ax(last, Axis::Child) };
    if !more.is_empty() {
        return None;
    }
    for &n in &p {
        let deg = if down { g.in_mb(n).len() } else { g.out_mb(n).len() };
        if deg != 1 || n == g.d.out() || n == g.d.root() {
            return None;
        }
    }
    if !down {
        p.reverse();
    }
    Some(p)
}

/// The `/`-path from `n1` following the labels of `like`.
fn matching_path(g: &G, n1: NodeId, like: &[NodeId], down: bool) -> Option<Vec<NodeId>> {
    let seq: Vec<NodeId> = if down { like.to_vec() } else { like.iter().rev().copied().collect() };
    let mut p = vec![n1];
    for &l in &seq[1..] {
        let last = *p.last().unwrap();
        let next = if down { g.out_ax(last, Axis::Child) } else { g.in_ax(last, Axis::Child) };
        let c = next.into_iter().find(|&c| g.d.label(c) == g.d.label(l))?;
        p.push(c);
    }
    if !down {
        p.reverse();
    }
    Some(p)
}

fn r3(d: &Pattern, down: bool) -> Option<Fired> {
    let g = G::new(d);
    let rule = if down { RuleId::R3i } else { RuleId::R3ii };
    for n0 in g.mbn() {
        let (slash, desc) = if down {
            (g.out_ax(n0, Axis::Child), g.out_ax(n0, Axis::Descendant))
        } else {
            (g.in_ax(n0, Axis::Child), g.in_ax(n0, Axis::Descendant))
        };
        for &n1 in &slash {
            for &n2 in &desc {
                if n1 == n2 || d.label(n1) != d.label(n2) || g.related(n1, n2) {
                    continue;
                }
                let Some(p2) = r3_path(&g, n2, down) else { continue };
                let Some(p1) = matching_path(&g, n1, &p2, down) else { continue };
                if p1.iter().any(|n| p2.contains(n)) {
                    continue;
                }
                let (t2, _) = tp(d, &g.mb, &p2);
                let (t1, _) = tp(d, &g.mb, &p1);
                if !has_containment_mapping(&t2, &t1) {
                    continue;
                }
                let Some(x) = merge(d, n1, n2) else { continue };
                let inst = RuleInstance::new(rule).bind("n0", [n0]).bind("p1", p1).bind("p2", p2);
                return Some((x, inst));
            }
        }
    }
    None
}

fn r4(d: &Pattern, down: bool) -> Option<Fired> {
    let g = G::new(d);
    let rule = if down { RuleId::R4i } else { RuleId::R4ii };
    for n0 in g.mbn() {
        let (slash, desc) = if down {
            (g.out_ax(n0, Axis::Child), g.out_ax(n0, Axis::Descendant))
        } else {
            (g.in_ax(n0, Axis::Child), g.in_ax(n0, Axis::Descendant))
        };
        for &n1 in &slash {
            for &n2 in &desc {
                if n1 == n2 || g.related(n1, n2) {
                    continue;
                }
                if let Some(f) = r4_at(d, &g, n0, n1, n2, down, rule) {
                    return Some(f);
                }
            }
        }
    }
    None
}

fn r4_at(d: &Pattern, g: &G, n0: NodeId, n1: NodeId, n2: NodeId, down: bool, rule: RuleId) -> Option<Fired> {
    let ins = |n| if down { g.in_mb(n) } else { g.out_mb(n) };
    let outs = |n| if down { g.out_mb(n) } else { g.in_mb(n) };
    if ins(n2).len() != 1 {
        return None;
    }
    let p1full = if down { g.chain_down(n1) } else { g.chain_up(n1) };
    let mut chain = vec![n2];
    loop {
        let next = outs(*chain.last().unwrap());
        if next.len() != 1 {
            break;
        }
        let nx = next[0].0;
        if chain.contains(&nx) || nx == g.d.out() || nx == g.d.root() || ins(nx).len() != 1 {
            break;
        }
        chain.push(nx);
    }
    // longest p2 first, then longest p1
    for len in (1..=chain.len()).rev() {
        let n3 = chain[len - 1];
        let beyond = outs(n3);
        let ok_end = n3 != g.d.out()
            && n3 != g.d.root()
            && !beyond.is_empty()
            && beyond.iter().all(|&(_, a)| a == Axis::Descendant);
        if !ok_end {
            continue;
        }
        let p2: Vec<NodeId> = if down { chain[..len].to_vec() } else { chain[..len].iter().rev().copied().collect() };
        let n4s: Vec<NodeId> = beyond.iter().map(|&(c, _)| c).collect();
        for j in (1..=p1full.len()).rev() {
            let p1: Vec<NodeId> = if down { p1full[..j].to_vec() } else { p1full[..j].iter().rev().copied().collect() };
            if p1.iter().any(|n| p2.contains(n) || n4s.contains(n)) {
                continue;
            }
            if let Some(f) = r4_try(d, g, n0, &p1, &p2, &n4s, down, rule) {
                return Some(f);
            }
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn r4_try(
    d: &Pattern,
    g: &G,
    n0: NodeId,
    p1: &[NodeId],
    p2: &[NodeId],
    n4s: &[NodeId],
    down: bool,
    rule: RuleId,
) -> Option<Fired> {
    let (t2, ids2) = tp(d, &g.mb, p2);
    let (target, images): (Pattern, Vec<NodeId>) = if down {
        let (s, map) = d.subpattern_at_with_map(p1[0]);
        let imgs = p1.iter().map(|n| map[n]).collect();
        (s, imgs)
    } else {
        let (t1, ids1) = tp(d, &g.mb, p1);
        (t1, ids1)
    };
    let mut opts = MapOptions::default();
    for &i in &ids2 {
        opts.allowed.insert(i, images.clone());
    }
    find_mapping_with(&t2, &target, &opts)?;
    let p1_labels = g.labels(p1);
    let p2_labels = g.labels(p2);
    let p2_axes: Vec<Axis> = p2.windows(2).map(|w| d.edge_axis(w[0], w[1]).unwrap()).collect();
    for &n4 in n4s {
        let (labels, axes) = if down {
            let mut l = p2_labels.clone();
            l.push(d.label(n4));
            let mut a = p2_axes.clone();
            a.push(Axis::Descendant);
            (l, a)
        } else {
            let mut l = vec![d.label(n4)];
            l.extend(&p2_labels);
            let mut a = vec![Axis::Descendant];
            a.extend(&p2_axes);
            (l, a)
        };
        if path_into_slash_path(&labels, &axes, &p1_labels) {
            return None;
        }
    }
    let n5 = if down { *p1.last().unwrap() } else { p1[0] };
    let mut x = d.clone();
    for &n4 in n4s {
        if down {
            if g.reaches(n4, n5) {
                return None;
            }
            x.add_edge(n5, n4, Axis::Descendant);
        } else {
            if g.reaches(n5, n4) {
                return None;
            }
            x.add_edge(n4, n5, Axis::Descendant);
        }
    }
    for &n in p2 {
        x.remove_node(n);
    }
    x.prune_unreachable();
    let inst = RuleInstance::new(rule).bind("n0", [n0]).bind("p1", p1.to_vec()).bind("p2", p2.to_vec()).bind("n4", n4s.to_vec());
    Some((x, inst))
}

fn r5(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    for n0 in g.mbn() {
        let q = g.chain_down(n0);
        for t in g.out_ax(n0, Axis::Descendant) {
            let s = g.chain_down(t);
            for i in 0..s.len().min(q.len() - 1) {
                if g.labels(&q[1..=i]) != g.labels(&s[..i]) {
                    break;
                }
                let (n2, n3) = (q[i + 1], s[i]);
                if n2 == n3 || s.contains(&n2) || q.contains(&n3) || !collapsible(d, n2, n3) {
                    continue;
                }
                if let Some(f) = r5_at(d, &g, n0, n2, n3) {
                    return Some(f);
                }
            }
        }
    }
    None
}

fn r5_at(d: &Pattern, g: &G, n0: NodeId, n2: NodeId, n3: NodeId) -> Option<Fired> {
    let p2 = g.chain_down(n2);
    let disjoint = p2.iter().all(|&x| !g.reaches(n3, x));
    for (c, a) in d.predicates(n3, &g.mb) {
        let qpat = pred_pattern(d.label(n2), d, c, a);
        if root_maps_at(&qpat, d, n2) {
            continue;
        }
        let mut ok = true;
        for &n4 in &p2[1..] {
            if d.label(n4) != d.label(n3) || !collapsible(d, n4, n3) {
                continue;
            }
            match merge(d, n4, n3) {
                Some(y) if root_maps_at(&qpat, &y, n2) => {}
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && disjoint {
            let (mut s, map) = d.subpattern_at_with_map(n2);
            d.copy_into(c, &mut s, map[p2.last().unwrap()], Axis::Descendant);
            ok = root_maps(&qpat, &s);
        }
        if ok {
            let mut x = d.clone();
            d.copy_into(c, &mut x, n2, a);
            let inst = RuleInstance::new(RuleId::R5).bind("n0", [n0]).bind("n2", [n2]).bind("n3", [n3]).bind("q", [c]);
            return Some((x, inst));
        }
    }
    None
}

/// `/`-chain from `n` for R6: one incoming edge per node, inner nodes with
/// a single outgoing edge, the last one with only `//` outgoing edges.
fn r6_path(g: &G, n: NodeId) -> Option<Vec<NodeId>> {
    if g.in_mb(n).len() != 1 {
        return None;
    }
    let mut p = vec![n];
    loop {
        let last = *p.last().unwrap();
        let outs = g.out_mb(last);
        let slash: Vec<NodeId> = outs.iter().filter(|&&(_, a)| a == Axis::Child).map(|&(c, _)| c).collect();
        if slash.is_empty() {
            return if outs.is_empty() { None } else { Some(p) };
        }
        if outs.len() != 1 {
            return None;
        }
        let nx = slash[0];
        if p.contains(&nx) || g.in_mb(nx).len() != 1 {
            return None;
        }
        p.push(nx);
    }
}

fn r6(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    for n0 in g.mbn() {
        let kids = g.out_ax(n0, Axis::Descendant);
        for (i, &n1) in kids.iter().enumerate() {
            for &n2 in &kids[i + 1..] {
                if d.label(n1) != d.label(n2) || g.related(n1, n2) {
                    continue;
                }
                let (Some(p1), Some(p2)) = (r6_path(&g, n1), r6_path(&g, n2)) else { continue };
                if p1.len() != p2.len() || g.labels(&p1) != g.labels(&p2) || p1.iter().any(|n| p2.contains(n)) {
                    continue;
                }
                let (t1, _) = tp(d, &g.mb, &p1);
                let (t2, _) = tp(d, &g.mb, &p2);
                if !similar(&t1, &t2) {
                    continue;
                }
                let Some(x) = merge(d, n1, n2) else { continue };
                let inst = RuleInstance::new(RuleId::R6).bind("n0", [n0]).bind("p1", p1).bind("p2", p2);
                return Some((x, inst));
            }
        }
    }
    None
}

/// `d` without the main-branch nodes `part`, provided `n1 -> part -> n5`
/// maps into what is left with `n1` and `n5` fixed.
fn remove_redundant(d: &Pattern, g: &G, n1: NodeId, part: &[NodeId], n5: NodeId) -> Option<Pattern> {
    let mut rest = d.clone();
    for &n in part {
        rest.remove_node(n);
    }
    rest.prune_unreachable();
    if !rest.is_alive(n1) || !rest.is_alive(n5) || !rest.reachable_from(n1)[n5] {
        return None;
    }
    let mut src = Pattern::new(d.label(n1));
    let mut ids: HashMap<NodeId, NodeId> = HashMap::new();
    ids.insert(n1, src.root());
    for &n in part.iter().chain(std::iter::once(&n5)) {
        ids.insert(n, src.add_node(d.label(n), d.test(n).map(str::to_string)));
    }
    for &n in part {
        for &(p, a) in d.parents(n) {
            if let Some(&pi) = ids.get(&p) {
                src.add_edge(pi, ids[&n], a);
            }
        }
        for &(c, a) in d.children(n) {
            if c == n5 {
                src.add_edge(ids[&n], ids[&n5], a);
            } else if !g.mb[c] {
                d.copy_into(c, &mut src, ids[&n], a);
            }
        }
    }
    src.set_out(ids[&n5]);
    let opts = MapOptions { root_to: Some(n1), out_to: Some(n5), mb_to_mb: true, allowed: HashMap::new() };
    find_mapping_with(&src, &rest, &opts).map(|_| rest)
}

/// Largest set of main-branch nodes grown from `s` whose only entry is
/// `n1 -> s` and whose only exit is a single node.
fn enclosed_part(g: &G, n1: NodeId, s: NodeId) -> Option<(Vec<NodeId>, NodeId)> {
    if g.in_mb(s).iter().any(|&(p, _)| p != n1) || s == g.d.out() {
        return None;
    }
    let mut part = vec![s];
    loop {
        let mut grew = false;
        for i in 0..part.len() {
            for (c, _) in g.out_mb(part[i]) {
                if part.contains(&c) || c == g.d.out() {
                    continue;
                }
                if g.in_mb(c).iter().all(|(p, _)| part.contains(p)) {
                    part.push(c);
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    let mut exits: Vec<NodeId> =
        part.iter().flat_map(|&n| g.out_mb(n)).map(|(c, _)| c).filter(|c| !part.contains(c)).collect();
    exits.sort_unstable();
    exits.dedup();
    match exits[..] {
        [n5] if n5 != n1 => Some((part, n5)),
        _ => None,
    }
}

fn r7(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    for start in g.mbn() {
        if !g.is_chain_node(start) {
            continue;
        }
        let n1 = g.in_mb(start)[0].0;
        if g.is_chain_node(n1) {
            continue;
        }
        let mut p2 = vec![start];
        loop {
            let nx = g.out_mb(*p2.last().unwrap())[0].0;
            if !g.is_chain_node(nx) || p2.contains(&nx) {
                break;
            }
            p2.push(nx);
        }
        let n5 = g.out_mb(*p2.last().unwrap())[0].0;
        if let Some(rest) = remove_redundant(d, &g, n1, &p2, n5) {
            let inst = RuleInstance::new(RuleId::R7).bind("n1", [n1]).bind("p2", p2).bind("n5", [n5]);
            return Some((rest, inst));
        }
    }
    // empty p2: a `//`-edge implied by another path
    for n1 in g.mbn() {
        for n5 in g.out_ax(n1, Axis::Descendant) {
            let mut x = d.clone();
            x.remove_edge(n1, n5, Axis::Descendant);
            if x.reachable_from(n1)[n5] {
                let inst = RuleInstance::new(RuleId::R7).bind("n1", [n1]).bind("p2", []).bind("n5", [n5]);
                return Some((x, inst));
            }
        }
    }
    // a branching part with one entry and one exit
    for n1 in g.mbn() {
        for (s, _) in g.out_mb(n1) {
            let Some((part, n5)) = enclosed_part(&g, n1, s) else { continue };
            if part.iter().all(|&n| g.is_chain_node(n)) {
                continue;
            }
            if let Some(rest) = remove_redundant(d, &g, n1, &part, n5) {
                let inst = RuleInstance::new(RuleId::R7).bind("n1", [n1]).bind("p2", part).bind("n5", [n5]);
                return Some((rest, inst));
            }
        }
    }
    None
}

/// Configuration shared by R8 and R9: an all-`/` path `q[0]/../q[k]` and a
/// chain `p2` of single in/out nodes from `q[0]` to `q[k]`.
struct Parallel {
    q: Vec<NodeId>,
    p2: Vec<NodeId>,
    /// Separators along `q[0] -> p2 -> q[k]`.
    axes: Vec<Axis>,
}

fn parallels(g: &G) -> Vec<Parallel> {
    let mut out = Vec::new();
    for n0 in g.mbn() {
        let q = g.chain_down(n0);
        if q.len() < 3 {
            continue;
        }
        for (t, a0) in g.out_mb(n0) {
            if !g.is_chain_node(t) {
                continue;
            }
            let mut p2 = vec![t];
            let mut axes = vec![a0];
            let n3 = loop {
                let (nx, ax) = g.out_mb(*p2.last().unwrap())[0];
                axes.push(ax);
                if !g.is_chain_node(nx) || p2.contains(&nx) {
                    break nx;
                }
                p2.push(nx);
            };
            if let Some(k) = q.iter().position(|&x| x == n3) {
                if k >= 2 && p2.iter().all(|n| !q.contains(n)) {
                    out.push(Parallel { q: q[..=k].to_vec(), p2, axes });
                }
            }
        }
    }
    out
}

/// For every chain node, the positions `1..k` of `q` it may take.
fn feasible_positions(d: &Pattern, par: &Parallel) -> Vec<Vec<usize>> {
    let k = par.q.len() - 1;
    let m = par.p2.len();
    let fits = |i: usize, j: usize| d.label(par.p2[i]) == d.label(par.q[j]);
    let step_ok = |ax: Axis, from: usize, to: usize| match ax {
        Axis::Child => to == from + 1,
        Axis::Descendant => to > from,
    };
    // fwd[i][j]: p2[i] at position j is consistent with everything above it
    let mut fwd = vec![vec![false; k + 1]; m];
    for j in 1..k {
        fwd[0][j] = fits(0, j) && step_ok(par.axes[0], 0, j);
    }
    for i in 1..m {
        for j in 1..k {
            fwd[i][j] = fits(i, j) && (1..k).any(|jj| fwd[i - 1][jj] && step_ok(par.axes[i], jj, j));
        }
    }
    let mut bwd = vec![vec![false; k + 1]; m];
    for j in 1..k {
        bwd[m - 1][j] = step_ok(par.axes[m], j, k);
    }
    for i in (0..m - 1).rev() {
        for j in 1..k {
            bwd[i][j] = (1..k).any(|jj| bwd[i + 1][jj] && fwd[i + 1][jj] && step_ok(par.axes[i + 1], j, jj));
        }
    }
    (0..m).map(|i| (1..k).filter(|&j| fwd[i][j] && bwd[i][j]).collect()).collect()
}

/// All consistent position assignments, or `None` past `cap`.
fn assignments(d: &Pattern, par: &Parallel, cap: usize) -> Option<Vec<Vec<usize>>> {
    let feas = feasible_positions(d, par);
    let k = par.q.len() - 1;
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(
        i: usize,
        prev: usize,
        feas: &[Vec<usize>],
        axes: &[Axis],
        k: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> bool {
        if i == feas.len() {
            let ok = match axes[i] {
                Axis::Child => prev + 1 == k,
                Axis::Descendant => prev < k,
            };
            if ok {
                if out.len() >= cap {
                    return false;
                }
                out.push(cur.clone());
            }
            return true;
        }
        for &j in &feas[i] {
            let ok = match axes[i] {
                Axis::Child => j == prev + 1,
                Axis::Descendant => j > prev,
            };
            if ok {
                cur.push(j);
                let go = rec(i + 1, j, feas, axes, k, cur, out, cap);
                cur.pop();
                if !go {
                    return false;
                }
            }
        }
        true
    }
    if rec(0, 0, &feas, &par.axes, k, &mut cur, &mut out, cap) {
        Some(out)
    } else {
        None
    }
}

fn r8(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    for par in parallels(&g) {
        let feas = feasible_positions(d, &par);
        if feas.iter().any(|f| f.is_empty()) {
            continue;
        }
        for (i, f) in feas.iter().enumerate() {
            if let [j] = f[..] {
                let Some(x) = merge(d, par.q[j], par.p2[i]) else { continue };
                let inst = RuleInstance::new(RuleId::R8)
                    .bind("n0", [par.q[0]])
                    .bind("n3", [*par.q.last().unwrap()])
                    .bind("n1", [par.q[j]])
                    .bind("n2", [par.p2[i]]);
                return Some((x, inst));
            }
        }
    }
    None
}

/// Assignments beyond this many are not enumerated and R9 is skipped.
pub const R9_ASSIGNMENT_CAP: usize = 10_000;

fn r9(d: &Pattern) -> Option<Fired> {
    let g = G::new(d);
    let pars = parallels(&g);
    if pars.is_empty() {
        return None;
    }
    // candidate predicates: subtrees reached by a `/`-edge, deduplicated
    let mut seen = HashSet::new();
    let mut cands = Vec::new();
    for n in d.ids() {
        if g.mb[n] || !d.parents(n).iter().any(|&(_, a)| a == Axis::Child) {
            continue;
        }
        if seen.insert(d.canonical_at(n)) {
            cands.push(n);
        }
    }
    for par in pars {
        let Some(asg) = assignments(d, &par, R9_ASSIGNMENT_CAP) else { continue };
        if asg.is_empty() {
            continue;
        }
        let variants: Vec<Pattern> = asg
            .iter()
            .filter_map(|a| {
                let mut y = d.clone();
                for (i, &j) in a.iter().enumerate() {
                    y = merge(&y, par.q[j], par.p2[i])?;
                }
                (!immediately_unsatisfiable(&y)).then_some(y)
            })
            .collect();
        let k = par.q.len() - 1;
        for &n in &par.q[1..k] {
            let here: Vec<Pattern> = variants.iter().map(|y| y.subpattern_at(n)).collect();
            for &c in &cands {
                let qpat = pred_pattern(d.label(n), d, c, Axis::Child);
                if root_maps_at(&qpat, d, n) || !es_allows_at(d, n, d, c) {
                    continue;
                }
                if here.iter().all(|s| root_maps(&qpat, s)) {
                    let mut x = d.clone();
                    d.copy_into(c, &mut x, n, Axis::Child);
                    let inst = RuleInstance::new(RuleId::R9)
                        .bind("n0", [par.q[0]])
                        .bind("n3", [par.q[k]])
                        .bind("p2", par.p2.clone())
                        .bind("n", [n])
                        .bind("q", [c]);
                    return Some((x, inst));
                }
            }
        }
    }
    None
}

fn creates_cycle(x: &Pattern) -> bool {
    !x.is_acyclic()
}

/// Tries one rule on `d`. Returns the rewritten pattern and the instance.
pub fn try_rule(rule: RuleId, d: &Pattern) -> Option<(Pattern, RuleInstance)> {
    let fired = match rule {
        RuleId::R1 => r1(d),
        RuleId::R2i => r2i(d),
        RuleId::R2ii => r2ii(d),
        RuleId::R3i => r3(d, true),
        RuleId::R3ii => r3(d, false),
        RuleId::R4i => r4(d, true),
        RuleId::R4ii => r4(d, false),
        RuleId::R5 => r5(d),
        RuleId::R6 => r6(d),
        RuleId::R7 => r7(d),
        RuleId::R8 => r8(d),
        RuleId::R9 => r9(d),
    }?;
    if creates_cycle(&fired.0) {
        return None;
    }
    Some(fired)
}

fn mbn_count(d: &Pattern) -> usize {
    d.mb_mask().iter().filter(|&&x| x).count()
}

/// Runs the rules to a fixpoint: R1 to saturation, then the first of
/// R2..R9 that applies, and again from the start.
pub fn apply_rules(d: &Pattern) -> Result<(Pattern, RewriteTrace)> {
    let limit = 4 * termination_bound(d) + 64;
    let mut cur = d.clone();
    let mut trace = RewriteTrace::default();
    'outer: loop {
        if trace.len() > limit {
            return Err(Error::CapExceeded(limit));
        }
        for rule in RuleId::ALL {
            if let Some((next, instance)) = try_rule(rule, &cur) {
                trace.entries.push(TraceEntry { instance, mbn_before: mbn_count(&cur), mbn_after: mbn_count(&next) });
                cur = next;
                continue 'outer;
            }
        }
        break;
    }
    Ok((cur, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::parse_dag;
    use crate::interleave::{dag_equivalent, interleavings};

    fn d(s: &str) -> Pattern {
        parse_dag(s).unwrap().unwrap()
    }

    fn fired(rule: RuleId, x: &Pattern) -> Pattern {
        try_rule(rule, x).unwrap_or_else(|| panic!("{rule} should apply")).0
    }

    #[test]
    fn running_example_has_seven_interleavings() {
        let x = d(r#"doc("L")//paper//section[theorem]//image & doc("L")/lib/paper//section//figure[caption[.//label]]/image"#);
        let il = interleavings(&x).unwrap();
        assert_eq!(il.len(), 7);
        let want = r#"doc("L")/lib/paper//paper//section[theorem]//figure[caption[.//label]]/image"#;
        assert!(il.iter().any(|i| i.pattern.xpath() == want));
    }

    #[test]
    fn running_example_rewrites_to_tree() {
        let x = d(r#"doc("L")//paper//section[theorem]//image & doc("L")/lib/paper//section//figure[caption[.//label]]/image"#);
        let (t, trace) = apply_rules(&x).unwrap();
        assert!(t.is_tree());
        assert_eq!(t.xpath(), r#"doc("L")/lib/paper//section[theorem]//figure[caption[.//label]]/image"#);
        let rules: Vec<RuleId> = trace.entries.iter().map(|e| e.instance.rule).collect();
        assert_eq!(rules[0], RuleId::R2i);
        assert!(rules.contains(&RuleId::R3i));
        assert!(rules.contains(&RuleId::R7));
        assert!(trace.len() <= termination_bound(&x));
        assert!(dag_equivalent(&x, &t).unwrap());
    }

    #[test]
    fn r1_collapses_same_label_children() {
        let x = d(r#"doc("L")/a[c]/b & doc("L")/a[e]/b"#);
        let (t, _) = apply_rules(&x).unwrap();
        assert!(t.is_tree());
        assert!(crate::mapping::equivalent(&t, &Pattern::parse(r#"doc("L")/a[c][e]/b"#).unwrap()));
        assert_eq!(try_rule(RuleId::R1, &x).unwrap().1.rule, RuleId::R1);
    }

    #[test]
    fn unsatisfiable_shapes() {
        assert!(immediately_unsatisfiable(&d(r#"doc("L")/a/c & doc("L")/b/c"#)));
        assert!(immediately_unsatisfiable(&d(r#"doc("L")/a/b/c & doc("L")/a//c"#)) == false);
        assert!(immediately_unsatisfiable(&d(r#"doc("L")/a/c & doc("L")/a//b//c"#)));
        assert!(!immediately_unsatisfiable(&d(r#"doc("L")//paper//section & doc("L")/book/section"#)));
    }

    #[test]
    fn r4i_rehangs_the_branch() {
        let x = d(r#"doc("L")/lib/paper/section//figure[caption]/image & doc("L")//lib[.//caption]//section//theorem//image"#);
        let (y, inst) = try_rule(RuleId::R4i, &x).unwrap();
        assert_eq!(inst.bindings["p2"].len(), 2);
        assert!(dag_equivalent(&x, &y).unwrap());
        let (t, _) = apply_rules(&x).unwrap();
        assert!(dag_equivalent(&x, &t).unwrap());
    }

    #[test]
    fn r5_copies_a_predicate() {
        let x = d(r#"doc("L")/lib/paper/section//image & doc("L")//paper[.//caption]//image"#);
        let y = fired(RuleId::R5, &fired(RuleId::R2i, &x));
        assert!(dag_equivalent(&x, &y).unwrap());
        let (t, _) = apply_rules(&x).unwrap();
        assert!(t.is_tree());
        assert_eq!(t.xpath(), r#"doc("L")/lib/paper[.//caption]/section//image"#);
    }

    #[test]
    fn r6_merges_similar_paths() {
        let x = d(r#"doc("L")//lib/paper[.//caption]/section//image & doc("L")//lib[.//figure]/paper/section//image"#);
        let y = fired(RuleId::R6, &x);
        assert!(dag_equivalent(&x, &y).unwrap());
        let (t, _) = apply_rules(&x).unwrap();
        assert!(t.is_tree());
        assert_eq!(t.xpath(), r#"doc("L")//lib[.//figure]/paper[.//caption]/section//image"#);
    }

    #[test]
    fn similarity_example() {
        let a = Pattern::parse(r#"doc("L")/a/b[.//c]/d[.//e]"#).unwrap().subpattern_at(1);
        let b = Pattern::parse(r#"doc("L")/a[b//e]/b/d[.//c]"#).unwrap().subpattern_at(1);
        assert!(similar(&a, &b));
        let c = Pattern::parse(r#"doc("L")/a[x]/b/d"#).unwrap().subpattern_at(1);
        let e = Pattern::parse(r#"doc("L")/a/b/d"#).unwrap().subpattern_at(1);
        assert!(!similar(&c, &e));
    }

    #[test]
    fn r8_collapses_the_unique_position() {
        let x = d(r#"doc("L")/lib/paper/section/figure/image & doc("L")//paper[.//caption]//image"#);
        let (y, inst) = try_rule(RuleId::R8, &x).unwrap();
        assert_eq!(x.label(inst.bindings["n2"][0]), "paper");
        assert!(dag_equivalent(&x, &y).unwrap());
        let (t, _) = apply_rules(&x).unwrap();
        assert!(t.is_tree());
        assert_eq!(t.xpath(), r#"doc("L")/lib/paper[.//caption]/section/figure/image"#);
    }

    #[test]
    fn r9_then_r7() {
        let x = d(r#"doc("L")/lib/section/section/section[figure]/image & doc("L")//section[figure]/section[figure]//image"#);
        let (t, trace) = apply_rules(&x).unwrap();
        let rules: Vec<RuleId> = trace.entries.iter().map(|e| e.instance.rule).collect();
        assert!(rules.contains(&RuleId::R9), "{rules:?}");
        assert_eq!(rules.last(), Some(&RuleId::R7));
        assert!(t.is_tree());
        assert_eq!(t.xpath(), r#"doc("L")/lib/section/section[figure]/section[figure]/image"#);
    }

    #[test]
    fn trees_are_left_alone() {
        let t = Pattern::parse(r#"doc("L")/a[b//c]//d[e]/f"#).unwrap();
        let (u, trace) = apply_rules(&t).unwrap();
        assert!(trace.is_empty());
        assert_eq!(u, t);
    }
}
