//! Seeded generators for patterns, intersections and benchmark workloads.

use crate::ast::Axis;
use crate::dag::{intersect, ViewSet};
use crate::error::{Error, Result};
use crate::fragment::{classify, extended_skeleton, FragmentClass};
use crate::mapping::{find_mapping_with, MapOptions};
use crate::pattern::{doc_label, NodeId, Pattern};
use crate::rewrite::{rewrite, RewriteOptions};
use crate::xml::{XId, XmlTree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shape of random tree patterns.
#[derive(Clone, Debug)]
pub struct PatternConfig {
    pub labels: Vec<String>,
    pub doc: String,
    pub mb_len: usize,
    /// Chance that a main-branch edge is `//`.
    pub desc_prob: f64,
    /// Chance that a main-branch node gets a predicate.
    pub pred_prob: f64,
    pub pred_depth: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            labels: ["a", "b", "c"].iter().map(|s| s.to_string()).collect(),
            doc: "L".into(),
            mb_len: 4,
            desc_prob: 0.4,
            pred_prob: 0.3,
            pred_depth: 2,
        }
    }
}

fn pick<'a, R: Rng>(rng: &mut R, labels: &'a [String]) -> &'a str {
    labels.choose(rng).unwrap()
}

fn axis<R: Rng>(rng: &mut R, desc_prob: f64) -> Axis {
    if rng.gen_bool(desc_prob) {
        Axis::Descendant
    } else {
        Axis::Child
    }
}

fn grow_pred<R: Rng>(rng: &mut R, p: &mut Pattern, at: NodeId, cfg: &PatternConfig, depth: usize) {
    let ax = axis(rng, cfg.desc_prob);
    let n = p.add_node(pick(rng, &cfg.labels), None);
    p.add_edge(at, n, ax);
    if depth > 1 && rng.gen_bool(0.4) {
        grow_pred(rng, p, n, cfg, depth - 1);
    }
}

/// Random tree pattern with `cfg.mb_len` main-branch nodes below the root.
pub fn random_pattern<R: Rng>(rng: &mut R, cfg: &PatternConfig) -> Pattern {
    let mut p = Pattern::new(doc_label(&cfg.doc));
    let mut cur = p.root();
    for _ in 0..cfg.mb_len {
        let n = p.add_node(pick(rng, &cfg.labels), None);
        p.add_edge(cur, n, axis(rng, cfg.desc_prob));
        cur = n;
    }
    p.set_out(cur);
    let mb = p.main_branch();
    for &n in &mb[1..] {
        if rng.gen_bool(cfg.pred_prob) {
            grow_pred(rng, &mut p, n, cfg, cfg.pred_depth);
        }
    }
    p
}

/// A random pattern containing `p`: some `/`-edges relaxed, predicates
/// dropped, main-branch nodes skipped over. The output label is kept.
pub fn generalize<R: Rng>(rng: &mut R, p: &Pattern) -> Pattern {
    let mb = p.main_branch();
    let mbm = p.mb_mask();
    let mut keep: Vec<NodeId> = vec![mb[0]];
    for &n in &mb[1..mb.len() - 1] {
        if !rng.gen_bool(0.3) {
            keep.push(n);
        }
    }
    keep.push(*mb.last().unwrap());
    let mut out = Pattern::new(p.label(mb[0]));
    let mut ids = vec![out.root()];
    for w in keep.windows(2) {
        let direct = p.edge_axis(w[0], w[1]);
        let ax = match direct {
            Some(Axis::Child) if rng.gen_bool(0.7) => Axis::Child,
            _ => Axis::Descendant,
        };
        let n = out.add_node(p.label(w[1]), p.test(w[1]).map(str::to_string));
        out.add_edge(*ids.last().unwrap(), n, ax);
        ids.push(n);
    }
    for (i, &n) in keep.iter().enumerate() {
        for (c, a) in p.predicates(n, &mbm) {
            if rng.gen_bool(0.6) {
                let a = if a == Axis::Child && rng.gen_bool(0.2) { Axis::Descendant } else { a };
                p.copy_into(c, &mut out, ids[i], a);
            }
        }
    }
    out.set_out(*ids.last().unwrap());
    out
}

/// Intersection of `k` random generalizations of one base pattern,
/// optionally restricted to extended skeletons.
pub fn random_intersection<R: Rng>(rng: &mut R, cfg: &PatternConfig, k: usize, es: bool) -> (Pattern, Vec<Pattern>) {
    loop {
        let base = random_pattern(rng, cfg);
        let parts: Vec<Pattern> = (0..k)
            .map(|_| {
                let g = generalize(rng, &base);
                if es {
                    extended_skeleton(&g)
                } else {
                    g
                }
            })
            .collect();
        if let Some(d) = intersect_all(&parts) {
            return (d, parts);
        }
    }
}

/// Intersection of independent random patterns sharing the output label.
pub fn random_unrelated_intersection<R: Rng>(rng: &mut R, cfg: &PatternConfig, k: usize) -> (Pattern, Vec<Pattern>) {
    loop {
        let parts: Vec<Pattern> = (0..k)
            .map(|_| {
                let mut c = cfg.clone();
                c.mb_len = rng.gen_range(1..=cfg.mb_len);
                random_pattern(rng, &c)
            })
            .collect();
        if let Some(d) = intersect_all(&parts) {
            return (d, parts);
        }
    }
}

pub fn intersect_all(parts: &[Pattern]) -> Option<Pattern> {
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc = intersect(&acc, p)?;
    }
    Some(acc)
}

/// Settings for one benchmark workload: a document, a query drawn from it,
/// and a view set mixing useful and useless views.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    /// Main-branch nodes of the query below the document node.
    pub main_branch_size: usize,
    pub category: FragmentClass,
    pub view_set_size: usize,
    pub useful_ratio: f64,
    pub doc_depth: usize,
    pub doc_fanout: usize,
    /// Element names in the document vocabulary.
    pub labels: usize,
    /// Attempts before giving up.
    pub retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            main_branch_size: 5,
            category: FragmentClass::ExtendedSkeleton,
            view_set_size: 40,
            useful_ratio: 0.10,
            doc_depth: 12,
            doc_fanout: 3,
            labels: 12,
            retries: 400,
        }
    }
}

pub fn parse_category(s: &str) -> Result<FragmentClass> {
    match s.to_ascii_lowercase().as_str() {
        "es" | "extendedskeleton" => Ok(FragmentClass::ExtendedSkeleton),
        "slashslash" | "//" => Ok(FragmentClass::SlashSlash),
        "full" => Ok(FragmentClass::Full),
        _ => Err(Error::Config(format!("unknown category `{s}`"))),
    }
}

impl GenConfig {
    /// Reads `key = value` lines; `#` starts a comment. Unset keys keep
    /// their default.
    pub fn from_kv(text: &str) -> Result<GenConfig> {
        let mut c = GenConfig::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("expected key = value, got `{line}`")))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for {k}")))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "mainBranchSize" => self.main_branch_size = num(key, value)?,
            "category" => self.category = parse_category(value)?,
            "viewSetSize" => self.view_set_size = num(key, value)?,
            "usefulRatio" => self.useful_ratio = num(key, value)?,
            "docDepth" => self.doc_depth = num(key, value)?,
            "docFanout" => self.doc_fanout = num(key, value)?,
            "labels" => self.labels = num(key, value)?,
            "retries" => self.retries = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.useful_ratio > 0.0 && self.useful_ratio <= 1.0) {
            return Err(Error::Config("usefulRatio must lie in (0, 1]".into()));
        }
        if self.main_branch_size == 0 || self.view_set_size == 0 {
            return Err(Error::Config("mainBranchSize and viewSetSize must be positive".into()));
        }
        if self.doc_depth <= self.main_branch_size || self.doc_fanout == 0 || self.labels < 2 {
            return Err(Error::Config("document too small for the query".into()));
        }
        Ok(())
    }

    /// At least two when the set has room: one useful view alone would be a
    /// single-view rewriting.
    pub fn useful_count(&self) -> usize {
        ((self.view_set_size as f64 * self.useful_ratio).round() as usize).clamp(2.min(self.view_set_size), self.view_set_size)
    }
}

/// A generated benchmark instance. `useful` names the views generated to
/// form a rewriting together.
#[derive(Clone, Debug)]
pub struct Workload {
    pub doc: XmlTree,
    pub query: Pattern,
    pub views: ViewSet,
    pub useful: Vec<String>,
}

impl Workload {
    /// The same workload restricted to its useless views.
    pub fn without_useful(&self) -> ViewSet {
        let mut vs = ViewSet::new();
        for (n, v) in self.views.iter() {
            if !self.useful.iter().any(|u| u == n) {
                vs.insert(n, v.clone());
            }
        }
        vs
    }
}

pub fn vocabulary(n: usize) -> Vec<String> {
    const NAMES: [&str; 12] = ["lib", "paper", "section", "figure", "image", "caption", "theorem", "label", "title", "para", "table", "note"];
    (0..n).map(|i| if i < NAMES.len() { NAMES[i].to_string() } else { format!("e{i}") }).collect()
}

/// A document in which every element above `depth` has between one and
/// `fanout` children, so paths of full depth always exist.
pub fn bench_document<R: Rng>(rng: &mut R, depth: usize, fanout: usize, labels: &[String]) -> XmlTree {
    let mut t = XmlTree::new();
    let top = t.add(t.root(), labels[0].clone(), "");
    let mut frontier = vec![top];
    for _ in 1..depth {
        let mut next = Vec::new();
        for &n in &frontier {
            for _ in 0..rng.gen_range(1..=fanout) {
                next.push(t.add(n, pick(rng, &labels[1..]).to_string(), ""));
            }
        }
        frontier = next;
    }
    t
}

fn random_descendant<R: Rng>(rng: &mut R, t: &XmlTree, n: XId, min_depth: usize) -> Option<XId> {
    let mut cur = n;
    let mut d = 0;
    while !t.children(cur).is_empty() && (d < min_depth || rng.gen_bool(0.5)) {
        cur = *t.children(cur).choose(rng).unwrap();
        d += 1;
    }
    (d >= min_depth).then_some(cur)
}

/// A query matching a root-to-node path of `t`, with predicates read off
/// the document, in the requested fragment.
fn query_from_document<R: Rng>(rng: &mut R, t: &XmlTree, cfg: &GenConfig) -> Option<Pattern> {
    let top = t.children(t.root())[0];
    let end = random_descendant(rng, t, top, cfg.main_branch_size + 1)?;
    let mut path = vec![end];
    while let Some(p) = t.parent(*path.last().unwrap()) {
        path.push(p);
    }
    path.pop();
    path.reverse();
    // positions on the document path, the last one fixed
    let mut pos: Vec<usize> = (0..path.len() - 1).collect();
    pos.shuffle(rng);
    pos.truncate(cfg.main_branch_size - 1);
    pos.push(path.len() - 1);
    pos.sort();

    let mut q = Pattern::new(doc_label("L"));
    let mut ids = Vec::new();
    let mut prev: Option<usize> = None;
    let mut cur = q.root();
    for &i in &pos {
        let adjacent = match prev {
            None => i == 0,
            Some(j) => i == j + 1,
        };
        let ax = if adjacent && rng.gen_bool(0.7) { Axis::Child } else { Axis::Descendant };
        let n = q.add_node(t.label(path[i]), None);
        q.add_edge(cur, n, ax);
        ids.push(n);
        cur = n;
        prev = Some(i);
    }
    q.set_out(cur);
    for (k, &i) in pos.iter().enumerate() {
        let x = path[i];
        if !rng.gen_bool(0.3) {
            continue;
        }
        let kids: Vec<XId> = t.children(x).iter().copied().filter(|&c| Some(&c) != path.get(i + 1)).collect();
        let Some(&c) = kids.choose(rng).or_else(|| t.children(x).first()) else { continue };
        let pc = q.add_node(t.label(c), None);
        q.add_edge(ids[k], pc, Axis::Child);
        if !t.children(c).is_empty() && rng.gen_bool(0.3) {
            let g = *t.children(c).choose(rng).unwrap();
            let pg = q.add_node(t.label(g), None);
            q.add_edge(pc, pg, Axis::Child);
        }
    }
    let inner: Vec<usize> = (0..pos.len() - 1).collect();
    match cfg.category {
        FragmentClass::ExtendedSkeleton => {}
        FragmentClass::SlashSlash => {
            let k = *inner.choose(rng)?;
            let d = random_descendant(rng, t, path[pos[k]], 2)?;
            let pd = q.add_node(t.label(d), None);
            q.add_edge(ids[k], pd, Axis::Descendant);
        }
        FragmentClass::Full => {
            let k = *inner.iter().filter(|&&k| q.edge_axis(ids[k], ids[k + 1]) == Some(Axis::Child)).collect::<Vec<_>>().choose(rng).copied()?;
            let c = path[pos[k + 1]];
            let d = random_descendant(rng, t, c, 1)?;
            let pc = q.add_node(t.label(c), None);
            q.add_edge(ids[k], pc, Axis::Child);
            let pd = q.add_node(t.label(d), None);
            q.add_edge(pc, pd, Axis::Descendant);
        }
    }
    let q = if cfg.category == FragmentClass::ExtendedSkeleton { extended_skeleton(&q) } else { q };
    (classify(&q) == cfg.category).then_some(q)
}

fn useful_view<R: Rng>(rng: &mut R, q: &Pattern) -> Pattern {
    let mb = q.main_branch();
    let k = rng.gen_range((mb.len() / 2).max(1)..mb.len());
    generalize(rng, &q.with_output(mb[k]))
}

fn useless_view<R: Rng>(rng: &mut R, q: &Pattern, labels: &[String]) -> Option<Pattern> {
    let cfg = PatternConfig {
        labels: labels[1..].to_vec(),
        mb_len: rng.gen_range(1..=3),
        pred_prob: 0.3,
        desc_prob: 0.6,
        ..Default::default()
    };
    for _ in 0..50 {
        let mut v = random_pattern(rng, &cfg);
        if rng.gen_bool(0.5) {
            // start from the top element so the view is not trivially empty
            let first = v.children(v.root())[0].0;
            v.remove_edge(v.root(), first, v.edge_axis(v.root(), first).unwrap());
            let top = v.add_node(labels[0].clone(), None);
            v.add_edge(v.root(), top, Axis::Child);
            v.add_edge(top, first, Axis::Descendant);
        }
        let opts = MapOptions { root_to: Some(q.root()), ..Default::default() };
        if find_mapping_with(&v, q, &opts).is_none() {
            return Some(v);
        }
    }
    None
}

fn rewrites(q: &Pattern, views: &ViewSet) -> bool {
    matches!(rewrite(q, views, &RewriteOptions::default()), Ok(Some(_)))
}

/// Draws a document, a query over it and a view set in which the useful
/// views rewrite the query together but no single view does, and the
/// useless ones do not map into the query. Deterministic for a seed.
pub fn generate_workload(cfg: &GenConfig) -> Result<Workload> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = vocabulary(cfg.labels);
    let doc = bench_document(&mut rng, cfg.doc_depth, cfg.doc_fanout, &labels);
    let n_useful = cfg.useful_count();
    for _ in 0..cfg.retries {
        let Some(q) = query_from_document(&mut rng, &doc, cfg) else { continue };
        let mut useful = ViewSet::new();
        let mut ok = true;
        for i in 0..n_useful {
            let found = (0..20).map(|_| useful_view(&mut rng, &q)).find(|v| {
                let mut one = ViewSet::new();
                one.insert("v", v.clone());
                !rewrites(&q, &one)
            });
            match found {
                Some(v) => useful.insert(format!("u{i}"), v),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || !rewrites(&q, &useful) {
            continue;
        }
        let mut views = ViewSet::new();
        let mut names = Vec::new();
        let mut useless = Vec::new();
        for _ in n_useful..cfg.view_set_size {
            match useless_view(&mut rng, &q, &labels) {
                Some(v) => useless.push(v),
                None => break,
            }
        }
        if useless.len() < cfg.view_set_size - n_useful {
            continue;
        }
        // useful views are spread over the set under neutral names
        let mut slots: Vec<bool> = (0..cfg.view_set_size).map(|i| i < n_useful).collect();
        slots.shuffle(&mut rng);
        let mut u = useful.iter();
        let mut w = useless.into_iter();
        for (i, is_useful) in slots.into_iter().enumerate() {
            let name = format!("v{i}");
            if is_useful {
                views.insert(name.clone(), u.next().unwrap().1.clone());
                names.push(name);
            } else {
                views.insert(name, w.next().unwrap());
            }
        }
        return Ok(Workload { doc, query: q, views, useful: names });
    }
    Err(Error::GenerationTimeout(cfg.retries))
}
