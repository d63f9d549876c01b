//! Interleavings of DAG patterns, satisfiability, normal forms and the
//! brute-force union-freedom oracle.
//!
//! An interleaving places the main-branch nodes on a single code: an ordered
//! partition of MBN(d) into blocks, each block one position. A `/`-edge must
//! join consecutive positions, a `//`-edge any two increasing positions. The
//! separator between positions is `/` exactly when some `/`-edge lands there.

use crate::ast::Axis;
use crate::error::{Error, Result};
use crate::mapping::{has_containment_mapping, tree_contains};
use crate::pattern::{NodeId, Pattern};
use std::collections::{HashMap, HashSet};
use std::ops::ControlFlow;

pub const DEFAULT_CAP: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct Interleaving {
    pub code: String,
    /// Position of every main-branch node of the source DAG.
    pub f: HashMap<NodeId, usize>,
    pub pattern: Pattern,
}

struct Mbn {
    ids: Vec<NodeId>,
    slash_parents: Vec<Vec<usize>>,
    desc_parents: Vec<Vec<usize>>,
    slash_children: Vec<Vec<usize>>,
    labels: Vec<String>,
}

impl Mbn {
    fn new(d: &Pattern) -> Self {
        let mask = d.mb_mask();
        let ids: Vec<NodeId> = d.ids().filter(|&n| mask[n]).collect();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let k = ids.len();
        let mut slash_parents = vec![Vec::new(); k];
        let mut desc_parents = vec![Vec::new(); k];
        let mut slash_children = vec![Vec::new(); k];
        for (a, b, ax) in d.edges() {
            if let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) {
                match ax {
                    Axis::Child => {
                        slash_parents[ib].push(ia);
                        slash_children[ia].push(ib);
                    }
                    Axis::Descendant => desc_parents[ib].push(ia),
                }
            }
        }
        let labels = ids.iter().map(|&n| d.label(n).to_string()).collect();
        Mbn { ids, slash_parents, desc_parents, slash_children, labels }
    }

    /// Choices for the next block given the placement so far, or `None` on a
    /// dead end. `pos[i]` is the block of node `i`; `last` the current last block.
    fn next_blocks(&self, pos: &[Option<usize>], last: Option<usize>) -> Option<Vec<Vec<usize>>> {
        let k = self.ids.len();
        let mut forced = Vec::new();
        let mut avail = Vec::new();
        for i in 0..k {
            if pos[i].is_some() {
                continue;
            }
            let mut slash_last = false;
            let mut ready = true;
            for &p in &self.slash_parents[i] {
                match pos[p] {
                    None => ready = false,
                    Some(b) if Some(b) == last => slash_last = true,
                    Some(_) => return None,
                }
            }
            if self.desc_parents[i].iter().any(|&p| pos[p].is_none()) {
                ready = false;
            }
            if slash_last {
                if !ready {
                    return None;
                }
                forced.push(i);
            } else if ready && self.slash_parents[i].is_empty() {
                avail.push(i);
            }
        }
        let mut out = Vec::new();
        if !forced.is_empty() {
            let l = &self.labels[forced[0]];
            if forced.iter().any(|&i| &self.labels[i] != l) {
                return None;
            }
            let optional: Vec<usize> = avail.into_iter().filter(|&i| &self.labels[i] == l).collect();
            for mask in 0u64..(1u64 << optional.len()) {
                let mut s = forced.clone();
                for (j, &i) in optional.iter().enumerate() {
                    if mask >> j & 1 == 1 {
                        s.push(i);
                    }
                }
                s.sort();
                out.push(s);
            }
        } else {
            let mut by_label: Vec<(&str, Vec<usize>)> = Vec::new();
            for i in avail {
                match by_label.iter_mut().find(|(l, _)| *l == self.labels[i]) {
                    Some((_, v)) => v.push(i),
                    None => by_label.push((&self.labels[i], vec![i])),
                }
            }
            by_label.sort_by(|a, b| a.0.cmp(b.0));
            for (_, group) in by_label {
                for mask in 1u64..(1u64 << group.len()) {
                    let s: Vec<usize> =
                        group.iter().enumerate().filter(|(j, _)| mask >> j & 1 == 1).map(|(_, &i)| i).collect();
                    out.push(s);
                }
            }
        }
        Some(out)
    }
}

fn build(d: &Pattern, mbn: &Mbn, blocks: &[Vec<usize>]) -> Interleaving {
    let mask = d.mb_mask();
    let mut pos = vec![0usize; mbn.ids.len()];
    for (b, block) in blocks.iter().enumerate() {
        for &i in block {
            pos[i] = b;
        }
    }
    let m = blocks.len();
    let mut slash_sep = vec![false; m];
    for (i, ps) in mbn.slash_parents.iter().enumerate() {
        for &p in ps {
            debug_assert_eq!(pos[p] + 1, pos[i]);
            slash_sep[pos[p]] = true;
        }
    }
    let mut p = Pattern::new(mbn.labels[blocks[0][0]].clone());
    let mut nodes = vec![p.root()];
    let mut code = mbn.labels[blocks[0][0]].clone();
    for b in 1..m {
        let n = p.add_node(mbn.labels[blocks[b][0]].clone(), None);
        let ax = if slash_sep[b - 1] { Axis::Child } else { Axis::Descendant };
        p.add_edge(nodes[b - 1], n, ax);
        code.push_str(ax.sep());
        code.push_str(&mbn.labels[blocks[b][0]]);
        nodes.push(n);
    }
    p.set_out(nodes[m - 1]);
    for (b, block) in blocks.iter().enumerate() {
        let mut seen = HashSet::new();
        let mut members: Vec<NodeId> = block.iter().map(|&i| mbn.ids[i]).collect();
        members.sort();
        for n in members {
            for &(c, a) in d.children(n) {
                if mask[c] {
                    continue;
                }
                if seen.insert((a, d.canonical_at(c))) {
                    d.copy_into(c, &mut p, nodes[b], a);
                }
            }
        }
    }
    let f = mbn.ids.iter().enumerate().map(|(i, &n)| (n, pos[i])).collect();
    Interleaving { code, f, pattern: p }
}

struct Enum<'a, F: FnMut(Interleaving) -> ControlFlow<()>> {
    d: &'a Pattern,
    mbn: Mbn,
    seen: HashSet<String>,
    cap: usize,
    sink: F,
}

impl<'a, F: FnMut(Interleaving) -> ControlFlow<()>> Enum<'a, F> {
    fn rec(&mut self, pos: &mut Vec<Option<usize>>, blocks: &mut Vec<Vec<usize>>, placed: usize) -> Result<ControlFlow<()>> {
        if placed == self.mbn.ids.len() {
            let il = build(self.d, &self.mbn, blocks);
            if self.seen.insert(il.pattern.canonical()) {
                if self.seen.len() > self.cap {
                    return Err(Error::CapExceeded(self.cap));
                }
                return Ok((self.sink)(il));
            }
            return Ok(ControlFlow::Continue(()));
        }
        let last = blocks.len().checked_sub(1);
        let Some(choices) = self.mbn.next_blocks(pos, last) else {
            return Ok(ControlFlow::Continue(()));
        };
        for s in choices {
            let b = blocks.len();
            for &i in &s {
                pos[i] = Some(b);
            }
            let n = s.len();
            blocks.push(s);
            let r = self.rec(pos, blocks, placed + n)?;
            let s = blocks.pop().unwrap();
            for &i in &s {
                pos[i] = None;
            }
            if r.is_break() {
                return Ok(r);
            }
        }
        Ok(ControlFlow::Continue(()))
    }
}

/// Streams the distinct interleavings of `d` to `sink`, which may stop the
/// enumeration early. Fails once more than `cap` distinct interleavings are seen.
pub fn for_each_interleaving(
    d: &Pattern,
    cap: usize,
    sink: impl FnMut(Interleaving) -> ControlFlow<()>,
) -> Result<()> {
    let mbn = Mbn::new(d);
    let k = mbn.ids.len();
    let mut e = Enum { d, mbn, seen: HashSet::new(), cap, sink };
    let mut pos = vec![None; k];
    let _ = e.rec(&mut pos, &mut Vec::new(), 0)?;
    Ok(())
}

/// All distinct interleavings, sorted by code and then canonical form.
pub fn interleavings(d: &Pattern) -> Result<Vec<Interleaving>> {
    interleavings_capped(d, DEFAULT_CAP)
}

pub fn interleavings_capped(d: &Pattern, cap: usize) -> Result<Vec<Interleaving>> {
    let mut out = Vec::new();
    for_each_interleaving(d, cap, |il| {
        out.push(il);
        ControlFlow::Continue(())
    })?;
    out.sort_by_cached_key(|il| (il.code.clone(), il.pattern.canonical()));
    Ok(out)
}

/// Whether some interleaving exists. Searches placements (placed set, last
/// block) with memoized failures, so only distinct frontiers are explored.
pub fn is_satisfiable(d: &Pattern) -> bool {
    if !d.is_acyclic() {
        return false;
    }
    let mbn = Mbn::new(d);
    let k = mbn.ids.len();
    let mut failed: HashSet<(Vec<bool>, Vec<bool>)> = HashSet::new();
    let mut pos = vec![None; k];
    sat_rec(&mbn, &mut pos, 0, 0, &mut failed)
}

fn sat_rec(
    mbn: &Mbn,
    pos: &mut Vec<Option<usize>>,
    nblocks: usize,
    placed: usize,
    failed: &mut HashSet<(Vec<bool>, Vec<bool>)>,
) -> bool {
    let k = mbn.ids.len();
    if placed == k {
        return true;
    }
    let last = nblocks.checked_sub(1);
    let key = (
        pos.iter().map(|p| p.is_some()).collect::<Vec<_>>(),
        pos.iter().map(|p| p.is_some() && *p == last).collect::<Vec<_>>(),
    );
    if failed.contains(&key) {
        return false;
    }
    if let Some(choices) = mbn.next_blocks(pos, last) {
        // larger merges first: they close more `/`-constraints at once
        let mut choices = choices;
        choices.sort_by_key(|s| std::cmp::Reverse(s.len()));
        for s in choices {
            for &i in &s {
                pos[i] = Some(nblocks);
            }
            let ok = sat_rec(mbn, pos, nblocks + 1, placed + s.len(), failed);
            for &i in &s {
                pos[i] = None;
            }
            if ok {
                return true;
            }
        }
    }
    let _ = &mbn.slash_children;
    failed.insert(key);
    false
}

/// Interleavings pruned to an antichain under containment; of two
/// equivalent interleavings the first in enumeration order is kept.
pub fn normal_form(d: &Pattern) -> Result<Vec<Pattern>> {
    let all: Vec<Pattern> = interleavings(d)?.into_iter().map(|il| il.pattern).collect();
    Ok(antichain(all))
}

/// Drops every pattern contained in another one.
pub fn antichain(all: Vec<Pattern>) -> Vec<Pattern> {
    let n = all.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        for j in 0..n {
            if i == j || !keep[j] {
                continue;
            }
            // i ⊑ j: drop i unless they are equivalent and i comes first
            if tree_contains(&all[j], &all[i]) {
                let equiv = tree_contains(&all[i], &all[j]);
                if !equiv || j < i {
                    keep[i] = false;
                    break;
                }
            }
        }
    }
    all.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect()
}

/// The interleaving containing all others, if any.
pub fn union_free_oracle(d: &Pattern) -> Result<Option<Pattern>> {
    let nf = normal_form(d)?;
    Ok(if nf.len() == 1 { nf.into_iter().next() } else { None })
}

/// `d ⊑ p`: every interleaving of `d` is contained in `p`.
pub fn dag_contained_in_tree(d: &Pattern, p: &Pattern) -> Result<bool> {
    if d.is_tree() {
        return Ok(tree_contains(p, d));
    }
    let mut ok = true;
    for_each_interleaving(d, DEFAULT_CAP, |il| {
        if tree_contains(p, &il.pattern) {
            ControlFlow::Continue(())
        } else {
            ok = false;
            ControlFlow::Break(())
        }
    })?;
    Ok(ok)
}

/// `d1 ⊑ d2` for DAG patterns: every interleaving of `d1` maps `d2` into it.
pub fn dag_contained(d1: &Pattern, d2: &Pattern) -> Result<bool> {
    let mut ok = true;
    for_each_interleaving(d1, DEFAULT_CAP, |il| {
        if has_containment_mapping(d2, &il.pattern) {
            ControlFlow::Continue(())
        } else {
            ok = false;
            ControlFlow::Break(())
        }
    })?;
    Ok(ok)
}

pub fn dag_equivalent(d1: &Pattern, d2: &Pattern) -> Result<bool> {
    Ok(dag_contained(d1, d2)? && dag_contained(d2, d1)?)
}
