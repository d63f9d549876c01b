//! Tree and DAG patterns.
//!
//! One representation serves both: a tree pattern is a DAG pattern in which
//! every node but the root has a single incoming edge. Node ids are indices
//! into the node table; removed nodes stay as tombstones until `compact`.

use crate::ast::{quote, AbsPath, Axis, Pred, Step};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub test: Option<String>,
    children: Vec<(NodeId, Axis)>,
    parents: Vec<(NodeId, Axis)>,
    alive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    nodes: Vec<Node>,
    root: NodeId,
    out: NodeId,
}

pub type TreePattern = Pattern;
pub type DagPattern = Pattern;

/// Label used for the root of a pattern over document `name`.
pub fn doc_label(name: &str) -> String {
    format!("doc({})", quote(name))
}

/// Inverse of [`doc_label`].
pub fn doc_name(label: &str) -> Option<String> {
    let inner = label.strip_prefix("doc(\"")?.strip_suffix("\")")?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(chars.next()?);
        } else {
            out.push(c);
        }
    }
    Some(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Root,
    Intermediary,
    Result,
    /// The main branch has no `//`-edge, so the only token is both root and result.
    Single,
}

/// A maximal `/`-connected segment of the main branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub nodes: Vec<NodeId>,
    pub kind: TokenKind,
}

#[derive(Serialize, Deserialize)]
struct JsonNode {
    id: NodeId,
    label: String,
    test: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct JsonEdge {
    from: NodeId,
    to: NodeId,
    kind: Axis,
}

#[derive(Serialize, Deserialize)]
struct JsonPattern {
    nodes: Vec<JsonNode>,
    edges: Vec<JsonEdge>,
    root: NodeId,
    output: NodeId,
}

impl Pattern {
    pub fn new(root_label: impl Into<String>) -> Self {
        let root = Node {
            label: root_label.into(),
            test: None,
            children: Vec::new(),
            parents: Vec::new(),
            alive: true,
        };
        Pattern { nodes: vec![root], root: 0, out: 0 }
    }

    pub fn add_node(&mut self, label: impl Into<String>, test: Option<String>) -> NodeId {
        self.nodes.push(Node {
            label: label.into(),
            test,
            children: Vec::new(),
            parents: Vec::new(),
            alive: true,
        });
        self.nodes.len() - 1
    }

    /// Adds `from -axis-> to` unless that exact edge exists.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId, axis: Axis) {
        if !self.has_edge(from, to, axis) {
            self.nodes[from].children.push((to, axis));
            self.nodes[to].parents.push((from, axis));
        }
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId, axis: Axis) -> bool {
        self.nodes[from].children.contains(&(to, axis))
    }

    pub fn remove_edge(&mut self, from: NodeId, to: NodeId, axis: Axis) -> bool {
        let before = self.nodes[from].children.len();
        self.nodes[from].children.retain(|&e| e != (to, axis));
        self.nodes[to].parents.retain(|&e| e != (from, axis));
        before != self.nodes[from].children.len()
    }

    /// Detaches `n` and marks it removed.
    pub fn remove_node(&mut self, n: NodeId) {
        for (c, a) in std::mem::take(&mut self.nodes[n].children) {
            self.nodes[c].parents.retain(|&e| e != (n, a));
        }
        for (p, a) in std::mem::take(&mut self.nodes[n].parents) {
            self.nodes[p].children.retain(|&e| e != (n, a));
        }
        self.nodes[n].alive = false;
    }

    /// Removes `n` and every node that becomes unreachable from the root.
    pub fn remove_subtree(&mut self, n: NodeId) {
        self.remove_node(n);
        self.prune_unreachable();
    }

    pub fn prune_unreachable(&mut self) {
        let reach = self.reachable_from(self.root);
        for i in 0..self.nodes.len() {
            if self.nodes[i].alive && !reach[i] {
                self.remove_node(i);
            }
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn out(&self) -> NodeId {
        self.out
    }

    pub fn set_out(&mut self, n: NodeId) {
        self.out = n;
    }

    pub fn set_root(&mut self, n: NodeId) {
        self.root = n;
    }

    pub fn with_output(&self, n: NodeId) -> Pattern {
        let mut p = self.clone();
        p.out = n;
        p
    }

    pub fn label(&self, n: NodeId) -> &str {
        &self.nodes[n].label
    }

    pub fn test(&self, n: NodeId) -> Option<&str> {
        self.nodes[n].test.as_deref()
    }

    pub fn set_test(&mut self, n: NodeId, test: Option<String>) {
        self.nodes[n].test = test;
    }

    pub fn set_label(&mut self, n: NodeId, label: impl Into<String>) {
        self.nodes[n].label = label.into();
    }

    pub fn children(&self, n: NodeId) -> &[(NodeId, Axis)] {
        &self.nodes[n].children
    }

    pub fn parents(&self, n: NodeId) -> &[(NodeId, Axis)] {
        &self.nodes[n].parents
    }

    pub fn is_alive(&self, n: NodeId) -> bool {
        n < self.nodes.len() && self.nodes[n].alive
    }

    /// Size of the id space, tombstones included.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    /// Number of live nodes.
    pub fn len(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.nodes[i].alive)
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId, Axis)> {
        let mut out = Vec::new();
        for n in self.ids() {
            for &(c, a) in &self.nodes[n].children {
                out.push((n, c, a));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.ids().map(|n| self.nodes[n].children.len()).sum()
    }

    /// Nodes reachable from `n`, `n` included.
    pub fn reachable_from(&self, n: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![n];
        seen[n] = true;
        while let Some(x) = stack.pop() {
            for &(c, _) in &self.nodes[x].children {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        seen
    }

    /// Nodes from which `n` is reachable, `n` included.
    pub fn reaching(&self, n: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![n];
        seen[n] = true;
        while let Some(x) = stack.pop() {
            for &(p, _) in &self.nodes[x].parents {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Marks the main-branch nodes: those on some root-to-output path.
    pub fn mb_mask(&self) -> Vec<bool> {
        let down = self.reachable_from(self.root);
        let mut up = self.reaching(self.out);
        for i in 0..up.len() {
            up[i] = up[i] && down[i] && self.nodes[i].alive;
        }
        up
    }

    pub fn mbn(&self) -> Vec<NodeId> {
        let m = self.mb_mask();
        self.ids().filter(|&i| m[i]).collect()
    }

    pub fn is_tree(&self) -> bool {
        self.ids().all(|n| {
            let k = self.nodes[n].parents.len();
            if n == self.root {
                k == 0
            } else {
                k == 1
            }
        })
    }

    /// Root-to-output node sequence of a tree pattern.
    pub fn main_branch(&self) -> Vec<NodeId> {
        let mut path = vec![self.out];
        let mut cur = self.out;
        while cur != self.root {
            cur = self.nodes[cur].parents[0].0;
            path.push(cur);
        }
        path.reverse();
        path
    }

    /// Axis of the edge `from -> to`, preferring `/` when both exist.
    pub fn edge_axis(&self, from: NodeId, to: NodeId) -> Option<Axis> {
        let mut found = None;
        for &(c, a) in &self.nodes[from].children {
            if c == to {
                if a == Axis::Child {
                    return Some(a);
                }
                found = Some(a);
            }
        }
        found
    }

    /// Predicate children of main-branch node `n`.
    pub fn predicates(&self, n: NodeId, mb: &[bool]) -> Vec<(NodeId, Axis)> {
        self.nodes[n].children.iter().copied().filter(|&(c, _)| !mb[c]).collect()
    }

    /// Number of predicate subtrees hanging off the main branch.
    pub fn predicate_count(&self) -> usize {
        let mb = self.mb_mask();
        self.ids().filter(|&n| mb[n]).map(|n| self.predicates(n, &mb).len()).sum()
    }

    /// Kahn order over live nodes; `None` on a cycle.
    pub fn topo_order(&self) -> Option<Vec<NodeId>> {
        let mut indeg = vec![0usize; self.nodes.len()];
        for n in self.ids() {
            for &(c, _) in &self.nodes[n].children {
                indeg[c] += 1;
            }
        }
        let mut queue: Vec<NodeId> = self.ids().filter(|&n| indeg[n] == 0).collect();
        queue.reverse();
        let mut order = Vec::with_capacity(self.len());
        while let Some(n) = queue.pop() {
            order.push(n);
            for &(c, _) in &self.nodes[n].children {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        (order.len() == self.len()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_order().is_some()
    }

    /// Copies the subgraph reachable from `n` in `self` below `parent` in `dst`.
    /// Returns the id of the copy of `n`.
    pub fn copy_into(&self, n: NodeId, dst: &mut Pattern, parent: NodeId, axis: Axis) -> NodeId {
        let mut map = HashMap::new();
        let c = self.copy_rec(n, dst, &mut map);
        dst.add_edge(parent, c, axis);
        c
    }

    /// Copies the subgraph reachable from `n` into `dst` without attaching it.
    pub fn copy_detached(&self, n: NodeId, dst: &mut Pattern, map: &mut HashMap<NodeId, NodeId>) -> NodeId {
        self.copy_rec(n, dst, map)
    }

    fn copy_rec(&self, n: NodeId, dst: &mut Pattern, map: &mut HashMap<NodeId, NodeId>) -> NodeId {
        if let Some(&m) = map.get(&n) {
            return m;
        }
        let m = dst.add_node(self.nodes[n].label.clone(), self.nodes[n].test.clone());
        map.insert(n, m);
        for &(c, a) in &self.nodes[n].children {
            let cm = self.copy_rec(c, dst, map);
            dst.add_edge(m, cm, a);
        }
        m
    }

    /// Renumbers live nodes densely, preserving relative id order.
    pub fn compact(&self) -> (Pattern, Vec<Option<NodeId>>) {
        let mut map = vec![None; self.nodes.len()];
        let mut nodes = Vec::with_capacity(self.len());
        for n in self.ids() {
            map[n] = Some(nodes.len());
            nodes.push(Node {
                label: self.nodes[n].label.clone(),
                test: self.nodes[n].test.clone(),
                children: Vec::new(),
                parents: Vec::new(),
                alive: true,
            });
        }
        let mut p = Pattern {
            nodes,
            root: map[self.root].expect("root is live"),
            out: map[self.out].expect("output is live"),
        };
        for n in self.ids() {
            for &(c, a) in &self.nodes[n].children {
                p.add_edge(map[n].unwrap(), map[c].unwrap(), a);
            }
        }
        (p, map)
    }

    /// SUB(d, n): the part of the pattern reachable from `n`, rooted at `n`.
    /// The output is kept when reachable, otherwise it becomes `n`.
    pub fn subpattern_at(&self, n: NodeId) -> Pattern {
        self.subpattern_at_with_map(n).0
    }

    pub fn subpattern_at_with_map(&self, n: NodeId) -> (Pattern, HashMap<NodeId, NodeId>) {
        let reach = self.reachable_from(n);
        let mut p = Pattern { nodes: Vec::new(), root: 0, out: 0 };
        let mut map = HashMap::new();
        for i in self.ids().filter(|&i| reach[i]) {
            map.insert(i, p.add_node(self.nodes[i].label.clone(), self.nodes[i].test.clone()));
        }
        for i in self.ids().filter(|&i| reach[i]) {
            for &(c, a) in &self.nodes[i].children {
                p.add_edge(map[&i], map[&c], a);
            }
        }
        p.root = map[&n];
        p.out = map.get(&self.out).copied().unwrap_or(p.root);
        (p, map)
    }

    /// Replaces `n1` and `n2` by a single node inheriting the edges of both.
    /// The merged node keeps id `n1`.
    pub fn collapse(&self, n1: NodeId, n2: NodeId) -> Result<Pattern> {
        if self.label(n1) != self.label(n2) {
            return Err(Error::LabelMismatch(self.label(n1).into(), self.label(n2).into()));
        }
        let mut p = self.clone();
        if n1 == n2 {
            return Ok(p);
        }
        if p.nodes[n1].test.is_none() {
            p.nodes[n1].test = p.nodes[n2].test.clone();
        }
        let children = p.nodes[n2].children.clone();
        let parents = p.nodes[n2].parents.clone();
        p.remove_node(n2);
        for (c, a) in children {
            let c = if c == n2 { n1 } else { c };
            p.add_edge(n1, c, a);
        }
        for (q, a) in parents {
            let q = if q == n2 { n1 } else { q };
            p.add_edge(q, n1, a);
        }
        if p.root == n2 {
            p.root = n1;
        }
        if p.out == n2 {
            p.out = n1;
        }
        Ok(p)
    }

    /// Code of a node sequence: labels joined by the separators of the
    /// edges between consecutive nodes.
    pub fn code_of(&self, path: &[NodeId]) -> String {
        let mut s = String::new();
        for (i, &n) in path.iter().enumerate() {
            if i > 0 {
                let a = self.edge_axis(path[i - 1], n).unwrap_or(Axis::Descendant);
                s.push_str(a.sep());
            }
            s.push_str(&self.nodes[n].label);
        }
        s
    }

    /// Code of the main branch of a tree pattern.
    pub fn mb_code(&self) -> String {
        self.code_of(&self.main_branch())
    }

    /// Tokens of a tree pattern, root token first.
    pub fn tokens(&self) -> Vec<Token> {
        let mb = self.main_branch();
        let mut groups: Vec<Vec<NodeId>> = vec![vec![mb[0]]];
        for w in mb.windows(2) {
            if self.edge_axis(w[0], w[1]) == Some(Axis::Child) {
                groups.last_mut().unwrap().push(w[1]);
            } else {
                groups.push(vec![w[1]]);
            }
        }
        let k = groups.len();
        groups
            .into_iter()
            .enumerate()
            .map(|(i, nodes)| {
                let kind = if k == 1 {
                    TokenKind::Single
                } else if i == 0 {
                    TokenKind::Root
                } else if i + 1 == k {
                    TokenKind::Result
                } else {
                    TokenKind::Intermediary
                };
                Token { nodes, kind }
            })
            .collect()
    }

    /// One pattern per main-branch node, with the output moved there.
    /// Ordered root first; the last element is the pattern itself.
    pub fn lossless_prefixes(&self) -> Vec<Pattern> {
        self.main_branch().into_iter().map(|n| self.with_output(n)).collect()
    }

    /// Pattern-level compensation: `r` extended below its output with the
    /// navigation that follows `n` in `p` (predicates of `n` included).
    pub fn compensate(r: &Pattern, p: &Pattern, n: NodeId) -> Result<Pattern> {
        let mb = p.mb_mask();
        if !p.is_alive(n) || !mb[n] {
            return Err(Error::NotMainBranch(n));
        }
        let mut out = r.clone();
        let at = r.out;
        let mut new_out = at;
        for &(c, a) in p.children(n) {
            let mut map = HashMap::new();
            let cc = p.copy_rec(c, &mut out, &mut map);
            out.add_edge(at, cc, a);
            if let Some(&o) = map.get(&p.out) {
                new_out = o;
            }
        }
        out.out = new_out;
        Ok(out)
    }

    /// PATTERN(q) for a plain absolute path.
    pub fn from_path(path: &AbsPath) -> Pattern {
        let mut p = Pattern::new(doc_label(&path.doc));
        let mut cur = p.root;
        for step in &path.steps {
            cur = p.add_step(cur, step);
        }
        p.out = cur;
        p
    }

    /// Appends `step` and its predicates below `parent`; returns the step node.
    pub fn add_step(&mut self, parent: NodeId, step: &Step) -> NodeId {
        let n = self.add_node(step.label.clone(), None);
        self.add_edge(parent, n, step.axis);
        for pr in &step.preds {
            self.add_pred(n, pr);
        }
        n
    }

    pub fn add_pred(&mut self, at: NodeId, pred: &Pred) -> NodeId {
        let mut cur = at;
        let mut first = None;
        for step in &pred.path {
            cur = self.add_step(cur, step);
            first.get_or_insert(cur);
        }
        if pred.value.is_some() {
            self.nodes[cur].test = pred.value.clone();
        }
        first.expect("predicate paths are non-empty")
    }

    /// Parses `doc("L")/...` into a pattern.
    pub fn parse(text: &str) -> Result<Pattern> {
        Ok(Pattern::from_path(&crate::parser::parse_xp(text)?))
    }

    /// Document name of the root label, if it has the `doc("...")` form.
    pub fn doc(&self) -> Option<String> {
        doc_name(self.label(self.root))
    }

    /// Predicate rooted at `c` (hung below its parent by `axis`) as syntax.
    pub fn pred_ast(&self, c: NodeId, axis: Axis) -> Pred {
        let mut path = Vec::new();
        let mut cur = c;
        let mut ax = axis;
        loop {
            let node = &self.nodes[cur];
            if node.test.is_none() && node.children.len() == 1 && node.children[0].1 == Axis::Child {
                path.push(Step::new(ax, node.label.clone()));
                let (nx, na) = node.children[0];
                cur = nx;
                ax = na;
                continue;
            }
            let mut step = Step::new(ax, node.label.clone());
            for (pc, pa) in self.sorted_children(cur) {
                step.preds.push(self.pred_ast(pc, pa));
            }
            path.push(step);
            return Pred { path, value: node.test.clone() };
        }
    }

    fn sorted_children(&self, n: NodeId) -> Vec<(NodeId, Axis)> {
        let mut v = self.nodes[n].children.clone();
        v.sort();
        v
    }

    /// Syntax of a tree pattern whose output is not its root.
    pub fn to_path(&self) -> Result<AbsPath> {
        if !self.is_tree() {
            return Err(Error::InvalidPattern("not a tree".into()));
        }
        if self.out == self.root {
            return Err(Error::InvalidPattern("output is the root".into()));
        }
        let doc = self
            .doc()
            .ok_or_else(|| Error::InvalidPattern(format!("root label {} is not a document", self.label(self.root))))?;
        let mb = self.main_branch();
        let mask = self.mb_mask();
        if mb.iter().any(|&n| self.nodes[n].test.is_some()) {
            return Err(Error::InvalidPattern("main-branch node carries a test".into()));
        }
        if !self.predicates(self.root, &mask).is_empty() {
            return Err(Error::InvalidPattern("root carries predicates".into()));
        }
        let mut steps = Vec::new();
        for w in mb.windows(2) {
            let mut step = Step::new(self.edge_axis(w[0], w[1]).unwrap(), self.label(w[1]));
            for (c, a) in self.sorted_children(w[1]) {
                if !mask[c] {
                    step.preds.push(self.pred_ast(c, a));
                }
            }
            steps.push(step);
        }
        Ok(AbsPath { doc, steps })
    }

    /// XPath text of a tree pattern, predicates ordered by node id. A
    /// pattern whose output is its root prints as the root label followed by
    /// its predicates.
    pub fn xpath(&self) -> String {
        if let Ok(p) = self.to_path() {
            return p.to_string();
        }
        if self.is_tree() {
            let mut s = String::new();
            self.write_loose(&mut s);
            return s;
        }
        self.to_json()
    }

    /// Fallback printer for trees that do not fit the grammar.
    fn write_loose(&self, s: &mut String) {
        let mask = self.mb_mask();
        let mb = self.main_branch();
        for (i, &n) in mb.iter().enumerate() {
            if i > 0 {
                s.push_str(self.edge_axis(mb[i - 1], n).unwrap().sep());
            }
            s.push_str(self.label(n));
            for (c, a) in self.sorted_children(n) {
                if !mask[c] {
                    crate::ast::write_pred(s, &self.pred_ast(c, a)).unwrap();
                }
            }
            if let Some(t) = self.test(n) {
                let _ = write!(s, "{{={}}}", quote(t));
            }
        }
    }

    /// Order-independent canonical text of a tree pattern. Two tree patterns
    /// are isomorphic iff their canonical texts are equal.
    pub fn canonical(&self) -> String {
        let mask = self.mb_mask();
        self.canon_rec(self.root, &mask)
    }

    /// Canonical text of the subgraph below `n` (a predicate subtree).
    pub fn canonical_at(&self, n: NodeId) -> String {
        let mask = self.mb_mask();
        self.canon_rec(n, &mask)
    }

    fn canon_rec(&self, n: NodeId, mask: &[bool]) -> String {
        let node = &self.nodes[n];
        let mut s = node.label.clone();
        if let Some(t) = &node.test {
            s.push('=');
            s.push_str(&quote(t));
        }
        if n == self.out {
            s.push('!');
        }
        let mut kids: Vec<String> = node
            .children
            .iter()
            .map(|&(c, a)| {
                let mark = if mask[c] { "^" } else { "" };
                format!("{}{}{}", a.sep(), mark, self.canon_rec(c, mask))
            })
            .collect();
        kids.sort();
        if !kids.is_empty() {
            s.push('{');
            s.push_str(&kids.join(","));
            s.push('}');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let (p, _) = self.compact();
        let j = JsonPattern {
            nodes: p
                .ids()
                .map(|i| JsonNode { id: i, label: p.nodes[i].label.clone(), test: p.nodes[i].test.clone() })
                .collect(),
            edges: p.edges().into_iter().map(|(from, to, kind)| JsonEdge { from, to, kind }).collect(),
            root: p.root,
            output: p.out,
        };
        serde_json::to_string(&j).expect("pattern serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.to_json()).expect("valid json")
    }

    pub fn from_json(text: &str) -> Result<Pattern> {
        let j: JsonPattern =
            serde_json::from_str(text).map_err(|e| Error::InvalidPattern(e.to_string()))?;
        let n = j.nodes.iter().map(|x| x.id + 1).max().unwrap_or(0);
        if j.root >= n || j.output >= n {
            return Err(Error::InvalidPattern("root or output out of range".into()));
        }
        let mut p = Pattern {
            nodes: (0..n)
                .map(|_| Node {
                    label: String::new(),
                    test: None,
                    children: Vec::new(),
                    parents: Vec::new(),
                    alive: false,
                })
                .collect(),
            root: j.root,
            out: j.output,
        };
        for x in j.nodes {
            p.nodes[x.id].label = x.label;
            p.nodes[x.id].test = x.test;
            p.nodes[x.id].alive = true;
        }
        for e in j.edges {
            if !p.is_alive(e.from) || !p.is_alive(e.to) {
                return Err(Error::InvalidPattern(format!("edge {}->{} uses an unknown node", e.from, e.to)));
            }
            p.add_edge(e.from, e.to, e.kind);
        }
        if !p.is_alive(p.root) || !p.is_alive(p.out) {
            return Err(Error::InvalidPattern("root or output is not a node".into()));
        }
        if !p.is_acyclic() {
            return Err(Error::InvalidPattern("cycle".into()));
        }
        Ok(p)
    }

    /// Checks the structural invariants of a DAG pattern.
    pub fn validate(&self) -> Result<()> {
        if !self.is_acyclic() {
            return Err(Error::InvalidPattern("cycle".into()));
        }
        let reach = self.reachable_from(self.root);
        if self.ids().any(|n| !reach[n]) {
            return Err(Error::InvalidPattern("node unreachable from the root".into()));
        }
        if !reach[self.out] {
            return Err(Error::InvalidPattern("output unreachable".into()));
        }
        let mb = self.mb_mask();
        for n in self.ids() {
            if !mb[n] && self.nodes[n].parents.len() != 1 {
                return Err(Error::InvalidPattern(format!("predicate node {n} has several parents")));
            }
            if mb[n] && self.nodes[n].test.is_some() {
                return Err(Error::InvalidPattern(format!("main-branch node {n} carries a test")));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.xpath())
    }
}
