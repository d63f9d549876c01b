//! Evaluation of tree and DAG patterns over data trees, view
//! materialization and plan evaluation over view documents.

use crate::ast::{Axis, Expr, Step, XpAst};
use crate::error::{Error, Result};
use crate::pattern::{NodeId, Pattern};
use crate::xml::{XId, XmlTree, ORIGID};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// For every pattern node below `skip_root`, the data nodes at which its
/// subtree embeds. Main-branch children are ignored when `mb` is given.
fn sat_sets(p: &Pattern, t: &XmlTree, mb: Option<&[bool]>) -> HashMap<NodeId, Vec<bool>> {
    let order = p.topo_order().expect("patterns are acyclic");
    let post = t.preorder();
    let mut sat: HashMap<NodeId, Vec<bool>> = HashMap::new();
    for &s in order.iter().rev() {
        let mut v: Vec<bool> = (0..t.len())
            .map(|x| {
                t.label(x) == p.label(s)
                    && match p.test(s) {
                        None => true,
                        Some(c) => t.text(x) == c,
                    }
            })
            .collect();
        for &(c, a) in p.children(s) {
            if mb.is_some_and(|m| m[c]) {
                continue;
            }
            let below = &sat[&c];
            let ok = match a {
                Axis::Child => has_child_in(t, below),
                Axis::Descendant => has_desc_in(t, below, &post),
            };
            for x in 0..v.len() {
                v[x] = v[x] && ok[x];
            }
        }
        sat.insert(s, v);
    }
    sat
}

fn has_child_in(t: &XmlTree, set: &[bool]) -> Vec<bool> {
    (0..t.len()).map(|x| t.children(x).iter().any(|&c| set[c])).collect()
}

fn has_desc_in(t: &XmlTree, set: &[bool], preorder: &[XId]) -> Vec<bool> {
    let mut below = vec![false; t.len()];
    for &x in preorder.iter().rev() {
        below[x] = t.children(x).iter().any(|&c| set[c] || below[c]);
    }
    below
}

/// Pattern nodes whose images are fixed to `start` for the root; the root's
/// own label is not checked.
fn eval_tree_from(p: &Pattern, t: &XmlTree, start: &[bool]) -> BTreeSet<XId> {
    let preorder = t.preorder();
    let mask = p.mb_mask();
    let sat = sat_sets_rooted(p, t, &mask);
    let mb = p.main_branch();
    let mut marks: Vec<bool> = (0..t.len()).map(|x| start[x] && sat[&mb[0]][x]).collect();
    for w in mb.windows(2) {
        let axis = p.edge_axis(w[0], w[1]).unwrap();
        let next_sat = &sat[&w[1]];
        let mut next = vec![false; t.len()];
        match axis {
            Axis::Child => {
                for x in 0..t.len() {
                    if marks[x] {
                        for &c in t.children(x) {
                            if next_sat[c] {
                                next[c] = true;
                            }
                        }
                    }
                }
            }
            Axis::Descendant => {
                let mut inherited = vec![false; t.len()];
                for &x in &preorder {
                    if let Some(par) = t.parent(x) {
                        inherited[x] = inherited[par] || marks[par];
                    }
                    next[x] = inherited[x] && next_sat[x];
                }
            }
        }
        marks = next;
    }
    (0..t.len()).filter(|&x| marks[x]).collect()
}

/// Satisfaction sets where each main-branch node only accounts for its
/// predicates; the root ignores its label.
fn sat_sets_rooted(p: &Pattern, t: &XmlTree, mask: &[bool]) -> HashMap<NodeId, Vec<bool>> {
    let mut sat = sat_sets(p, t, Some(mask));
    let r = p.root();
    let mut v = vec![true; t.len()];
    for &(c, a) in p.children(r) {
        if mask[c] {
            continue;
        }
        let ok = match a {
            Axis::Child => has_child_in(t, &sat[&c]),
            Axis::Descendant => has_desc_in(t, &sat[&c], &t.preorder()),
        };
        for x in 0..v.len() {
            v[x] = v[x] && ok[x];
        }
    }
    sat.insert(r, v);
    sat
}

/// `{ e(OUT(p)) : e embedding of p into t }`; the pattern root maps to the
/// document node.
pub fn eval_tree_pattern(p: &Pattern, t: &XmlTree) -> BTreeSet<XId> {
    let mut start = vec![false; t.len()];
    start[t.root()] = true;
    if p.is_tree() {
        eval_tree_from(p, t, &start)
    } else {
        eval_dag_from(p, t, &start)
    }
}

/// DAG evaluation: for each candidate output, the main-branch nodes must be
/// placed on its ancestor chain; arc consistency decides this exactly.
pub fn eval_dag_pattern(d: Option<&Pattern>, t: &XmlTree) -> BTreeSet<XId> {
    match d {
        None => BTreeSet::new(),
        Some(d) => eval_tree_pattern(d, t),
    }
}

fn eval_dag_from(d: &Pattern, t: &XmlTree, start: &[bool]) -> BTreeSet<XId> {
    let mask = d.mb_mask();
    let sat = sat_sets_rooted(d, t, &mask);
    let mbn: Vec<NodeId> = d.ids().filter(|&n| mask[n]).collect();
    let edges: Vec<(NodeId, NodeId, Axis)> =
        d.edges().into_iter().filter(|&(a, b, _)| mask[a] && mask[b]).collect();
    let mut res = BTreeSet::new();
    for x in 0..t.len() {
        if !sat[&d.out()][x] {
            continue;
        }
        let mut chain = vec![x];
        let mut cur = x;
        while let Some(p) = t.parent(cur) {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        let k = chain.len();
        let mut dom: HashMap<NodeId, Vec<bool>> = mbn
            .iter()
            .map(|&n| {
                let v = (0..k)
                    .map(|i| {
                        let y = chain[i];
                        sat[&n][y] && (n != d.root() || start[y]) && (n != d.out() || i + 1 == k)
                    })
                    .collect();
                (n, v)
            })
            .collect();
        if consistent(&mut dom, &edges, k) {
            res.insert(x);
        }
    }
    res
}

fn consistent(dom: &mut HashMap<NodeId, Vec<bool>>, edges: &[(NodeId, NodeId, Axis)], k: usize) -> bool {
    loop {
        let mut changed = false;
        for &(a, b, ax) in edges {
            let da = dom[&a].clone();
            let db = dom[&b].clone();
            let (na, nb): (Vec<bool>, Vec<bool>) = match ax {
                Axis::Child => (
                    (0..k).map(|i| da[i] && i + 1 < k && db[i + 1]).collect(),
                    (0..k).map(|j| db[j] && j > 0 && da[j - 1]).collect(),
                ),
                Axis::Descendant => {
                    let max_b = db.iter().rposition(|&v| v);
                    let min_a = da.iter().position(|&v| v);
                    (
                        (0..k).map(|i| da[i] && max_b.is_some_and(|m| m > i)).collect(),
                        (0..k).map(|j| db[j] && min_a.is_some_and(|m| m < j)).collect(),
                    )
                }
            };
            if na != da || nb != db {
                changed = true;
                dom.insert(a, na);
                dom.insert(b, nb);
            }
        }
        if dom.values().any(|v| !v.iter().any(|&x| x)) {
            return false;
        }
        if !changed {
            return true;
        }
    }
}

/// A materialized view: the view element under the document node, holding a
/// copy of every answer subtree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewDocument {
    pub name: String,
    pub tree: XmlTree,
    /// Original id of every copied node.
    pub origin: HashMap<XId, XId>,
}

impl ViewDocument {
    /// The view element.
    pub fn view_root(&self) -> XId {
        self.tree.children(self.tree.root())[0]
    }

    /// Copies of the answer nodes.
    pub fn answers(&self) -> &[XId] {
        self.tree.children(self.view_root())
    }

    /// XML text in which every copied element starts with an
    /// `<_origid>N</_origid>` child giving its original id.
    pub fn to_xml(&self) -> String {
        let mut s = format!("<{}>", self.name);
        for &a in self.answers() {
            self.write(a, &mut s);
        }
        s.push_str(&format!("</{}>", self.name));
        s
    }

    fn write(&self, n: XId, s: &mut String) {
        let label = self.tree.label(n);
        s.push_str(&format!("<{label}><{ORIGID}>{}</{ORIGID}>", self.origin[&n]));
        s.push_str(&self.tree.text(n).replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;"));
        for &c in self.tree.children(n) {
            self.write(c, s);
        }
        s.push_str(&format!("</{label}>"));
    }

    pub fn from_xml(text: &str) -> Result<ViewDocument> {
        let raw = XmlTree::parse_xml(text)?;
        let top = raw.children(raw.root())[0];
        let name = raw.label(top).to_string();
        let mut tree = XmlTree::new();
        let vroot = tree.add(tree.root(), name.clone(), "");
        let mut origin = HashMap::new();
        fn walk(raw: &XmlTree, n: XId, tree: &mut XmlTree, parent: XId, origin: &mut HashMap<XId, XId>) -> Result<()> {
            let mut id = None;
            let me = tree.add(parent, raw.label(n), raw.text(n));
            for &c in raw.children(n) {
                if raw.label(c) == ORIGID {
                    id = Some(raw.text(c).parse::<XId>().map_err(|e| Error::Xml(e.to_string()))?);
                } else {
                    walk(raw, c, tree, me, origin)?;
                }
            }
            let id = id.ok_or_else(|| Error::Xml(format!("element `{}` lacks an {ORIGID} marker", raw.label(n))))?;
            origin.insert(me, id);
            Ok(())
        }
        for &a in raw.children(top) {
            walk(&raw, a, &mut tree, vroot, &mut origin)?;
        }
        Ok(ViewDocument { name, tree, origin })
    }
}

pub fn materialize_view(v: &Pattern, name: &str, t: &XmlTree) -> ViewDocument {
    let answers = eval_tree_pattern(v, t);
    let mut tree = XmlTree::new();
    let vroot = tree.add(tree.root(), name, "");
    let mut origin = HashMap::new();
    for a in answers {
        tree.copy_subtree(vroot, t, a, &mut |o, c| {
            origin.insert(c, o);
        });
    }
    ViewDocument { name: name.to_string(), tree, origin }
}

pub fn materialize_all(views: &crate::dag::ViewSet, t: &XmlTree) -> HashMap<String, ViewDocument> {
    views.iter().map(|(n, v)| (n.to_string(), materialize_view(v, n, t))).collect()
}

/// Result of a plan sub-expression: original id → (view, node in that view
/// document) representative.
type Bindings = BTreeMap<XId, (String, XId)>;

fn steps_pattern(steps: &[Step]) -> Pattern {
    let mut p = Pattern::new("");
    let mut cur = p.root();
    for s in steps {
        cur = p.add_step(cur, s);
    }
    p.set_out(cur);
    p
}

fn navigate(doc: &ViewDocument, from: &[bool], steps: &[Step]) -> Vec<XId> {
    let p = steps_pattern(steps);
    eval_tree_from(&p, &doc.tree, from).into_iter().collect()
}

fn eval_expr(e: &Expr, docs: &HashMap<String, ViewDocument>) -> Result<Bindings> {
    match e {
        Expr::Path(p) => {
            let doc = docs.get(&p.doc).ok_or_else(|| Error::UnknownView(p.doc.clone()))?;
            let mut start = vec![false; doc.tree.len()];
            for &a in doc.answers() {
                start[a] = true;
            }
            let head = &p.steps[0];
            let mut nodes: Vec<XId> = doc.answers().to_vec();
            if !head.preds.is_empty() {
                let mut hp = Pattern::new("");
                let r = hp.root();
                for pr in &head.preds {
                    hp.add_pred(r, pr);
                }
                let sat = sat_sets_rooted(&hp, &doc.tree, &hp.mb_mask());
                nodes.retain(|&x| sat[&r][x]);
            }
            if p.steps.len() > 1 {
                let mut from = vec![false; doc.tree.len()];
                for &x in &nodes {
                    from[x] = true;
                }
                nodes = navigate(doc, &from, &p.steps[1..]);
            }
            Ok(nodes.into_iter().map(|x| (doc.origin[&x], (p.doc.clone(), x))).collect())
        }
        Expr::Intersect(items) => {
            let mut acc: Option<Bindings> = None;
            for it in items {
                let b = eval_expr(it, docs)?;
                acc = Some(match acc {
                    None => b,
                    Some(a) => a.into_iter().filter(|(k, _)| b.contains_key(k)).collect(),
                });
            }
            Ok(acc.unwrap_or_default())
        }
        Expr::Nav(inner, steps) => {
            let b = eval_expr(inner, docs)?;
            let mut per_doc: BTreeMap<String, Vec<XId>> = BTreeMap::new();
            for (_, (d, x)) in b {
                per_doc.entry(d).or_default().push(x);
            }
            let mut out = Bindings::new();
            for (d, xs) in per_doc {
                let doc = &docs[&d];
                let mut from = vec![false; doc.tree.len()];
                for x in xs {
                    from[x] = true;
                }
                for y in navigate(doc, &from, steps) {
                    out.entry(doc.origin[&y]).or_insert((d.clone(), y));
                }
            }
            Ok(out)
        }
    }
}

/// Evaluates a plan over view documents; the result is a set of original
/// node ids.
pub fn eval_plan(plan: &XpAst, docs: &HashMap<String, ViewDocument>) -> Result<BTreeSet<XId>> {
    Ok(eval_expr(&plan.expr, docs)?.into_keys().collect())
}
