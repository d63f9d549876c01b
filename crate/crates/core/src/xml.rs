//! Unordered labeled data trees with persistent node ids.
//!
//! The root of every tree is a synthetic document node; the top element is
//! its only child. Node ids are indices assigned in creation order and never
//! reused.

use crate::ast::Axis;
use crate::error::{Error, Result};
use crate::pattern::{NodeId, Pattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

pub type XId = usize;

/// Label of the synthetic document node. Not a valid element name.
pub const DOCUMENT: &str = "#document";

/// Element name marking the original id of a copied node in serialized
/// view documents.
pub const ORIGID: &str = "_origid";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XmlNode {
    pub label: String,
    pub text: String,
    pub parent: Option<XId>,
    pub children: Vec<XId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XmlTree {
    nodes: Vec<XmlNode>,
}

impl Default for XmlTree {
    fn default() -> Self {
        Self::new()
    }
}

impl XmlTree {
    /// A tree holding only the document node.
    pub fn new() -> Self {
        XmlTree { nodes: vec![XmlNode { label: DOCUMENT.into(), text: String::new(), parent: None, children: Vec::new() }] }
    }

    pub fn root(&self) -> XId {
        0
    }

    pub fn add(&mut self, parent: XId, label: impl Into<String>, text: impl Into<String>) -> XId {
        let id = self.nodes.len();
        self.nodes.push(XmlNode { label: label.into(), text: text.into(), parent: Some(parent), children: Vec::new() });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn node(&self, id: XId) -> &XmlNode {
        &self.nodes[id]
    }

    pub fn label(&self, id: XId) -> &str {
        &self.nodes[id].label
    }

    pub fn text(&self, id: XId) -> &str {
        &self.nodes[id].text
    }

    pub fn children(&self, id: XId) -> &[XId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: XId) -> Option<XId> {
        self.nodes[id].parent
    }

    /// Ids in an order where every parent precedes its children.
    pub fn preorder(&self) -> Vec<XId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(x) = stack.pop() {
            out.push(x);
            for &c in self.nodes[x].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Copies the subtree of `src` in `from` below `parent`; `on_copy`
    /// receives (original, copy) pairs.
    pub fn copy_subtree(&mut self, parent: XId, from: &XmlTree, src: XId, on_copy: &mut impl FnMut(XId, XId)) -> XId {
        let me = self.add(parent, from.label(src), from.text(src));
        on_copy(src, me);
        for &c in from.children(src) {
            self.copy_subtree(me, from, c, on_copy);
        }
        me
    }

    /// Parses the supported XML subset: elements and text. Attributes are
    /// rejected; whitespace around text is trimmed.
    pub fn parse_xml(text: &str) -> Result<XmlTree> {
        let doc = roxmltree::Document::parse(text).map_err(|e| Error::Xml(e.to_string()))?;
        let mut t = XmlTree::new();
        fn walk(t: &mut XmlTree, parent: XId, n: roxmltree::Node) -> Result<()> {
            if n.attributes().len() > 0 {
                return Err(Error::Xml(format!("attributes are not supported (element `{}`)", n.tag_name().name())));
            }
            if n.tag_name().namespace().is_some() {
                return Err(Error::Xml("namespaces are not supported".into()));
            }
            let text: String = n.children().filter(|c| c.is_text()).filter_map(|c| c.text()).collect();
            let me = t.add(parent, n.tag_name().name(), text.trim());
            for c in n.children().filter(|c| c.is_element()) {
                walk(t, me, c)?;
            }
            Ok(())
        }
        walk(&mut t, 0, doc.root_element())?;
        Ok(t)
    }

    pub fn to_xml(&self) -> String {
        let mut s = String::new();
        for &c in self.children(0) {
            self.write(c, &mut s);
        }
        s
    }

    fn write(&self, n: XId, s: &mut String) {
        let node = &self.nodes[n];
        if node.text.is_empty() && node.children.is_empty() {
            s.push('<');
            s.push_str(&node.label);
            s.push_str("/>");
            return;
        }
        s.push('<');
        s.push_str(&node.label);
        s.push('>');
        s.push_str(&escape(&node.text));
        for &c in &node.children {
            self.write(c, s);
        }
        s.push_str("</");
        s.push_str(&node.label);
        s.push('>');
    }

    /// Label/text structure as an order-independent string, for comparisons.
    pub fn canonical(&self) -> String {
        self.canon(0)
    }

    fn canon(&self, n: XId) -> String {
        let mut kids: Vec<String> = self.children(n).iter().map(|&c| self.canon(c)).collect();
        kids.sort();
        format!("{}={:?}{{{}}}", self.label(n), self.text(n), kids.join(","))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Parameters for random documents.
#[derive(Clone, Debug)]
pub struct TreeConfig {
    pub depth: usize,
    pub fanout: usize,
    pub labels: Vec<String>,
    /// Text constants drawn for leaves and some inner nodes.
    pub texts: Vec<String>,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            depth: 5,
            fanout: 3,
            labels: ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
            texts: vec!["x".into(), "y".into()],
            seed: 0,
        }
    }
}

/// Random tree, deterministic for a seed. The top element has the first label.
pub fn generate_tree(cfg: &TreeConfig) -> XmlTree {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = XmlTree::new();
    let top = t.add(0, cfg.labels[0].clone(), String::new());
    grow(&mut t, top, 1, cfg, &mut rng);
    t
}

fn grow(t: &mut XmlTree, at: XId, depth: usize, cfg: &TreeConfig, rng: &mut ChaCha8Rng) {
    if depth >= cfg.depth {
        return;
    }
    let k = rng.gen_range(0..=cfg.fanout);
    for _ in 0..k {
        let label = cfg.labels[rng.gen_range(0..cfg.labels.len())].clone();
        let text = if !cfg.texts.is_empty() && rng.gen_bool(0.3) {
            cfg.texts[rng.gen_range(0..cfg.texts.len())].clone()
        } else {
            String::new()
        };
        let c = t.add(at, label, text);
        grow(t, c, depth + 1, cfg, rng);
    }
}

/// mod′_p: the pattern read as a tree, with each `//`-edge replaced by a
/// `/z/` step through a fresh label `z`, and tests turned into text. The
/// pattern root becomes the document node. Returns the tree and the image of
/// each pattern node.
pub fn canonical_model(p: &Pattern, z: &str) -> (XmlTree, HashMap<NodeId, XId>) {
    let mut t = XmlTree::new();
    let mut map = HashMap::new();
    map.insert(p.root(), 0);
    let mut stack = vec![p.root()];
    while let Some(n) = stack.pop() {
        let at = map[&n];
        for &(c, a) in p.children(n) {
            let parent = match a {
                Axis::Child => at,
                Axis::Descendant => t.add(at, z, ""),
            };
            let me = t.add(parent, p.label(c), p.test(c).unwrap_or(""));
            map.insert(c, me);
            stack.push(c);
        }
    }
    (t, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xml_round_trip() {
        let src = "<lib><paper><section>hello<theorem/></section></paper><book>x &amp; y</book></lib>";
        let t = XmlTree::parse_xml(src).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.to_xml(), src);
        assert_eq!(XmlTree::parse_xml(&t.to_xml()).unwrap(), t);
    }

    #[test]
    fn attributes_rejected() {
        assert!(matches!(XmlTree::parse_xml("<a b=\"1\"/>"), Err(Error::Xml(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = TreeConfig { seed: 7, ..Default::default() };
        assert_eq!(generate_tree(&cfg), generate_tree(&cfg));
        let other = TreeConfig { seed: 8, ..Default::default() };
        assert_ne!(generate_tree(&cfg).to_xml(), generate_tree(&other).to_xml());
    }

    #[test]
    fn canonical_model_of_descendant_edge() {
        let p = Pattern::parse(r#"doc("L")/a//b"#).unwrap();
        let (t, map) = canonical_model(&p, "z");
        assert_eq!(t.to_xml(), "<a><z><b/></z></a>");
        assert_eq!(t.label(map[&p.out()]), "b");
    }

    #[test]
    fn canonical_model_of_running_query() {
        let q = Pattern::parse(r#"doc("L")/lib//paper//section[theorem]//figure/image"#).unwrap();
        let (t, _) = canonical_model(&q, "z");
        // document node, 6 query nodes and 3 z nodes
        assert_eq!(t.len(), 10);
    }
}
