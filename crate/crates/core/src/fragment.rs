//! Syntactic fragments: extended skeletons, the `//`-predicate relaxation,
//! and akin patterns.

use crate::ast::Axis;
use crate::pattern::{NodeId, Pattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FragmentClass {
    /// Every `//`-subpredicate is separated from the main branch by a
    /// `/`-path whose code is incomparable with what follows its node.
    ExtendedSkeleton,
    /// Predicates may also hang from the main branch by a `//`-edge.
    SlashSlash,
    Full,
}

impl FragmentClass {
    pub fn name(self) -> &'static str {
        match self {
            FragmentClass::ExtendedSkeleton => "es",
            FragmentClass::SlashSlash => "slashslash",
            FragmentClass::Full => "full",
        }
    }
}

/// A `//`-subpredicate hanging below main-branch node `at`, rooted at `root`,
/// reached from `at` through the `/`-path labelled `incoming`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubPredicate {
    pub at: NodeId,
    pub root: NodeId,
    pub incoming: Vec<String>,
}

/// `a` occurs as a contiguous run inside `b`. The empty code occurs everywhere.
pub fn code_maps(a: &[String], b: &[String]) -> bool {
    a.is_empty() || b.windows(a.len()).any(|w| w == a)
}

/// Labels of the main-branch `/`-chain after `n`, stopping at the first
/// node with no `/`-child on the main branch.
pub fn following_code(p: &Pattern, mb: &[bool], n: NodeId) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = n;
    let mut seen = vec![false; p.capacity()];
    while let Some(&(c, _)) = p.children(cur).iter().find(|&&(c, a)| mb[c] && a == Axis::Child) {
        if seen[c] {
            break;
        }
        seen[c] = true;
        out.push(p.label(c).to_string());
        cur = c;
    }
    out
}

/// All `//`-subpredicates of predicate-rooted subtrees below `n`.
pub fn sub_predicates(p: &Pattern, mb: &[bool], n: NodeId) -> Vec<SubPredicate> {
    let mut found = Vec::new();
    let mut stack: Vec<(NodeId, Vec<String>)> = vec![(n, Vec::new())];
    while let Some((u, path)) = stack.pop() {
        for &(c, a) in p.children(u) {
            if mb[c] {
                continue;
            }
            match a {
                Axis::Descendant => found.push(SubPredicate { at: n, root: c, incoming: path.clone() }),
                Axis::Child => {
                    let mut next = path.clone();
                    next.push(p.label(c).to_string());
                    stack.push((c, next));
                }
            }
        }
    }
    found
}

/// Subpredicates breaking the extended-skeleton condition.
pub fn es_violations(p: &Pattern) -> Vec<SubPredicate> {
    let mb = p.mb_mask();
    let mut out = Vec::new();
    for n in p.mbn() {
        if n == p.out() {
            continue;
        }
        let follow = following_code(p, &mb, n);
        for sp in sub_predicates(p, &mb, n) {
            if code_maps(&sp.incoming, &follow) || code_maps(&follow, &sp.incoming) {
                out.push(sp);
            }
        }
    }
    out
}

/// Would attaching the predicate subtree `q` of `src` below `n` by a
/// `/`-edge keep the extended-skeleton condition at `n`?
pub fn es_allows_at(d: &Pattern, n: NodeId, src: &Pattern, q: NodeId) -> bool {
    if n == d.out() {
        return true;
    }
    let follow = following_code(d, &d.mb_mask(), n);
    let mut probe = Pattern::new(d.label(n));
    let r = probe.root();
    src.copy_into(q, &mut probe, r, Axis::Child);
    let mb = probe.mb_mask();
    sub_predicates(&probe, &mb, probe.root())
        .iter()
        .all(|sp| !code_maps(&sp.incoming, &follow) && !code_maps(&follow, &sp.incoming))
}

pub fn classify(p: &Pattern) -> FragmentClass {
    let v = es_violations(p);
    if v.is_empty() {
        FragmentClass::ExtendedSkeleton
    } else if v.iter().all(|sp| sp.incoming.is_empty()) {
        FragmentClass::SlashSlash
    } else {
        FragmentClass::Full
    }
}

/// The pattern with every violating `//`-subpredicate removed.
pub fn extended_skeleton(p: &Pattern) -> Pattern {
    let mut out = p.clone();
    for sp in es_violations(p) {
        if out.is_alive(sp.root) {
            out.remove_subtree(sp.root);
        }
    }
    out.compact().0
}

/// Labels of the root token of a tree pattern.
pub fn root_token_code(p: &Pattern) -> String {
    let tokens = p.tokens();
    p.code_of(&tokens[0].nodes)
}

/// Root tokens share a main-branch code.
pub fn are_akin(ps: &[Pattern]) -> bool {
    match ps.split_first() {
        None => true,
        Some((first, rest)) => {
            let c = root_token_code(first);
            rest.iter().all(|p| root_token_code(p) == c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    #[test]
    fn es_examples() {
        assert_eq!(classify(&pat("doc(\"L\")/a[b//c]/d//e")), FragmentClass::ExtendedSkeleton);
        assert_eq!(classify(&pat("doc(\"L\")/a[b//c//d]/e//d")), FragmentClass::ExtendedSkeleton);
        assert_eq!(classify(&pat("doc(\"L\")/a[.//c]//d")), FragmentClass::SlashSlash);
        assert_eq!(classify(&pat("doc(\"L\")/a[b//c]//d")), FragmentClass::Full);
        assert_eq!(classify(&pat("doc(\"L\")/a[b//c]/b//d")), FragmentClass::Full);
        assert_eq!(classify(&pat("doc(\"L\")/a[b/c]//d")), FragmentClass::ExtendedSkeleton);
        assert_eq!(classify(&pat("doc(\"L\")/a//d[.//x]")), FragmentClass::ExtendedSkeleton);
    }

    #[test]
    fn skeleton_is_idempotent() {
        let p = pat("doc(\"L\")/a[b//c][.//x]/b//d[e//f]");
        let s = extended_skeleton(&p);
        assert_eq!(s.canonical(), extended_skeleton(&s).canonical());
        assert_eq!(classify(&s), FragmentClass::ExtendedSkeleton);
        assert_eq!(s.xpath(), "doc(\"L\")/a[b]/b//d[e[.//f]]");
    }

    #[test]
    fn akin_compares_root_tokens() {
        let v1 = pat("doc(\"L\")//paper//section[theorem]//image");
        let v2 = pat("doc(\"L\")/lib/paper//section//figure[caption[.//label]]/image");
        let v2b = pat("doc(\"L\")//figure[.//caption//label]//subfigure/image[ps]");
        assert!(are_akin(&[v1.clone(), v2b]));
        assert!(are_akin(&[v1.clone(), v1.clone()]));
        assert!(!are_akin(&[v1, v2]));
    }
}
