//! Visual-property category hierarchy.
//!
//! A hierarchy is a forest of [`VisualCategory`] nodes, one root per domain.
//! Every node carries a visual genus (what it shares with its parent) and a
//! visual differentia (what separates it from its siblings). Node identity is
//! positional: the [`ConceptId`] `2-5-3` is the third child of the fifth child
//! of the second root, and the parser refuses documents whose stored ids
//! disagree with their position.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Positional conceptual identifier, rendered as dash-joined 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(Vec<u32>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid concept id {0:?}: expected dash-joined positive integers such as \"1-1\"")]
pub struct ConceptIdError(pub String);

impl ConceptId {
    pub fn new(path: Vec<u32>) -> Result<Self, ConceptIdError> {
        if path.is_empty() || path.contains(&0) {
            return Err(ConceptIdError(format!("{path:?}")));
        }
        Ok(ConceptId(path))
    }

    pub fn root(index: u32) -> Self {
        assert!(index >= 1, "concept indices are 1-based");
        ConceptId(vec![index])
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    /// Number of levels; roots have depth 1.
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, index: u32) -> Self {
        assert!(index >= 1, "concept indices are 1-based");
        let mut path = self.0.clone();
        path.push(index);
        ConceptId(path)
    }

    pub fn parent(&self) -> Option<Self> {
        (self.0.len() > 1).then(|| ConceptId(self.0[..self.0.len() - 1].to_vec()))
    }

    /// The 1-based position of this node among its siblings.
    pub fn sibling_index(&self) -> u32 {
        *self.0.last().expect("concept ids are non-empty")
    }

    /// True when `self` lies on the path from a root to `other`, inclusive.
    pub fn is_ancestor_or_self(&self, other: &ConceptId) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// Prefixes of this id from the root down, excluding the id itself.
    pub fn prefixes(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (1..self.0.len()).map(|k| ConceptId(self.0[..k].to_vec()))
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

impl FromStr for ConceptId {
    type Err = ConceptIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConceptIdError(s.to_string());
        if s.is_empty() {
            return Err(bad());
        }
        let path = s
            .split('-')
            .map(|part| {
                if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad());
                }
                match part.parse::<u32>() {
                    Ok(0) | Err(_) => Err(bad()),
                    Ok(v) => Ok(v),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConceptId(path))
    }
}

impl Serialize for ConceptId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConceptId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A node of the category hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisualCategory {
    pub id: ConceptId,
    pub name: String,
    /// Visual properties inherited from the parent domain.
    pub genus: String,
    /// Visual properties that separate this node from its siblings; the text
    /// of the yes/no question asked about it.
    pub differentia: String,
    /// Free-text knowledge-base provenance (e.g. a WordNet synset).
    pub provenance: Option<String>,
    pub children: Vec<VisualCategory>,
}

impl VisualCategory {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a VisualCategory>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }
}

/// Id-free node description used to build hierarchies programmatically.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeSpec {
    pub name: String,
    pub genus: String,
    pub differentia: String,
    pub provenance: Option<String>,
    pub children: Vec<NodeSpec>,
}

impl NodeSpec {
    pub fn new(name: &str, genus: &str, differentia: &str) -> Self {
        NodeSpec {
            name: name.into(),
            genus: genus.into(),
            differentia: differentia.into(),
            provenance: None,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<NodeSpec>) -> Self {
        self.children = children;
        self
    }
}

/// Kinds of structural violation reported by validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    MalformedId,
    DuplicateId,
    IdPositionMismatch,
    EmptyName,
    EmptyGenus,
    EmptyDifferentia,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Location in the document, e.g. `roots[0].children[1]`.
    pub locus: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locus, self.message)
    }
}

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("malformed hierarchy document at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("hierarchy failed validation ({} violation(s)):\n{}", .0.len(), render_violations(.0))]
    Validation(Vec<Violation>),
    #[error("unknown concept id {0}")]
    NotFound(ConceptId),
}

fn render_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("  - {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl HierarchyError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            HierarchyError::Validation(v) => v,
            _ => &[],
        }
    }
}

/// The on-disk shape of a hierarchy document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyDocument {
    #[serde(default = "default_version")]
    pub version: u32,
    pub roots: Vec<DocumentNode>,
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentNode {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub genus: String,
    pub differentia: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<DocumentNode>,
}

/// An immutable, validated forest of visual categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    roots: Vec<VisualCategory>,
    /// Every node id in document (pre-)order.
    order: Vec<ConceptId>,
}

impl Hierarchy {
    /// Parses and validates a JSON hierarchy document.
    pub fn parse(document: &str) -> Result<Self, HierarchyError> {
        let doc: HierarchyDocument =
            serde_json::from_str(document).map_err(|e| HierarchyError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &HierarchyDocument) -> Result<Self, HierarchyError> {
        let mut violations = Vec::new();
        let mut first_seen: BTreeMap<String, String> = BTreeMap::new();
        let mut roots = Vec::with_capacity(doc.roots.len());
        for (i, node) in doc.roots.iter().enumerate() {
            let expected = ConceptId::root(i as u32 + 1);
            let locus = format!("roots[{i}]");
            roots.push(convert(
                node,
                expected,
                &locus,
                &mut first_seen,
                &mut violations,
            ));
        }
        if !violations.is_empty() {
            return Err(HierarchyError::Validation(violations));
        }
        Ok(Self::from_roots(roots))
    }

    /// Builds a hierarchy from id-free specs, deriving ids from position.
    pub fn build(roots: Vec<NodeSpec>) -> Result<Self, HierarchyError> {
        fn to_doc(spec: &NodeSpec, id: ConceptId) -> DocumentNode {
            DocumentNode {
                id: id.to_string(),
                name: spec.name.clone(),
                genus: spec.genus.clone(),
                differentia: spec.differentia.clone(),
                provenance: spec.provenance.clone(),
                children: spec
                    .children
                    .iter()
                    .enumerate()
                    .map(|(k, c)| to_doc(c, id.child(k as u32 + 1)))
                    .collect(),
            }
        }
        let doc = HierarchyDocument {
            version: 1,
            roots: roots
                .iter()
                .enumerate()
                .map(|(i, r)| to_doc(r, ConceptId::root(i as u32 + 1)))
                .collect(),
        };
        Self::from_document(&doc)
    }

    fn from_roots(roots: Vec<VisualCategory>) -> Self {
        let mut nodes = Vec::new();
        for r in &roots {
            r.walk(&mut nodes);
        }
        let order = nodes.into_iter().map(|n| n.id.clone()).collect();
        Hierarchy { roots, order }
    }

    pub fn to_document(&self) -> HierarchyDocument {
        fn node(c: &VisualCategory) -> DocumentNode {
            DocumentNode {
                id: c.id.to_string(),
                name: c.name.clone(),
                genus: c.genus.clone(),
                differentia: c.differentia.clone(),
                provenance: c.provenance.clone(),
                children: c.children.iter().map(node).collect(),
            }
        }
        HierarchyDocument {
            version: 1,
            roots: self.roots.iter().map(node).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("hierarchy serializes")
    }

    pub fn roots(&self) -> &[VisualCategory] {
        &self.roots
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    /// All node ids in document order.
    pub fn ids(&self) -> &[ConceptId] {
        &self.order
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.get(id).is_some()
    }

    pub fn get(&self, id: &ConceptId) -> Option<&VisualCategory> {
        let (first, rest) = id.path().split_first()?;
        let mut node = self.roots.get(*first as usize - 1)?;
        for idx in rest {
            node = node.children.get(*idx as usize - 1)?;
        }
        Some(node)
    }

    pub fn node(&self, id: &ConceptId) -> Result<&VisualCategory, HierarchyError> {
        self.get(id)
            .ok_or_else(|| HierarchyError::NotFound(id.clone()))
    }

    /// Ancestors of `id`, root first, excluding the node itself.
    pub fn ancestors(&self, id: &ConceptId) -> Result<Vec<&VisualCategory>, HierarchyError> {
        self.node(id)?;
        Ok(id
            .prefixes()
            .map(|p| self.get(&p).expect("prefixes of a present id are present"))
            .collect())
    }

    /// The node and its ancestors, root first.
    pub fn path_to(&self, id: &ConceptId) -> Result<Vec<&VisualCategory>, HierarchyError> {
        let mut path = self.ancestors(id)?;
        path.push(self.get(id).expect("checked by ancestors"));
        Ok(path)
    }

    /// Leaf nodes in document order.
    pub fn leaves(&self) -> Vec<&VisualCategory> {
        self.nodes().into_iter().filter(|n| n.is_leaf()).collect()
    }

    /// All nodes in document order.
    pub fn nodes(&self) -> Vec<&VisualCategory> {
        let mut out = Vec::with_capacity(self.order.len());
        for r in &self.roots {
            r.walk(&mut out);
        }
        out
    }

    pub fn is_leaf(&self, id: &ConceptId) -> bool {
        self.get(id).is_some_and(VisualCategory::is_leaf)
    }

    pub fn children_of(&self, id: &ConceptId) -> &[VisualCategory] {
        self.get(id).map(|n| n.children.as_slice()).unwrap_or(&[])
    }
}

fn convert(
    node: &DocumentNode,
    expected: ConceptId,
    locus: &str,
    first_seen: &mut BTreeMap<String, String>,
    violations: &mut Vec<Violation>,
) -> VisualCategory {
    let mut push = |code, message: String| {
        violations.push(Violation {
            code,
            locus: locus.to_string(),
            message,
        })
    };
    match node.id.parse::<ConceptId>() {
        Err(_) => push(
            ViolationCode::MalformedId,
            format!(
                "id {:?} is not a dash-joined list of positive integers",
                node.id
            ),
        ),
        Ok(stored) if stored != expected => push(
            ViolationCode::IdPositionMismatch,
            format!(
                "id \"{}\" does not match its position, expected \"{expected}\"",
                node.id
            ),
        ),
        Ok(_) => {}
    }
    if let Some(prev) = first_seen.get(&node.id) {
        push(
            ViolationCode::DuplicateId,
            format!(
                "id \"{}\" repeats id \"{}\" first declared at {prev}",
                node.id, node.id
            ),
        );
    } else {
        first_seen.insert(node.id.clone(), locus.to_string());
    }
    if node.name.trim().is_empty() {
        push(ViolationCode::EmptyName, "name is empty".into());
    }
    if node.genus.trim().is_empty() {
        push(
            ViolationCode::EmptyGenus,
            format!("genus of \"{}\" is empty", node.id),
        );
    }
    if node.differentia.trim().is_empty() {
        push(
            ViolationCode::EmptyDifferentia,
            format!("differentia of \"{}\" is empty", node.id),
        );
    }
    let children = node
        .children
        .iter()
        .enumerate()
        .map(|(k, c)| {
            convert(
                c,
                expected.child(k as u32 + 1),
                &format!("{locus}.children[{k}]"),
                first_seen,
                violations,
            )
        })
        .collect();
    VisualCategory {
        id: expected,
        name: node.name.clone(),
        genus: node.genus.clone(),
        differentia: node.differentia.clone(),
        provenance: node.provenance.clone(),
        children,
    }
}
