//! Directed trees: explicit finite edge lists and the one-branching-vertex
//! model family with a trunk of length `kappa` below vertex `0` and `eta`
//! branches above it.
//!
//! Model trees are never materialized. Every traversal takes a
//! [`TruncationWindow`] and only ever touches vertices inside it, while
//! structural questions (is `u` a branching vertex?) are answered for the
//! untruncated tree.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexId {
    /// Trunk vertex `-k`; `Trunk(0)` is the branching vertex `0`.
    Trunk(u64),
    /// Vertex `j` (from 1) on branch `i` (from 1).
    Branch(u64, u64),
    /// Vertex of a user-supplied tree.
    Label(i64),
}

pub const ORIGIN: VertexId = VertexId::Trunk(0);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexId::Trunk(0) => write!(f, "0"),
            VertexId::Trunk(k) => write!(f, "-{k}"),
            VertexId::Branch(i, j) => write!(f, "({i},{j})"),
            VertexId::Label(m) => write!(f, "#{m}"),
        }
    }
}

/// A count that may be infinite; serialized as an integer or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extent {
    Finite(u64),
    Infinite,
}

impl Extent {
    pub fn admits(self, k: u64) -> bool {
        match self {
            Extent::Finite(n) => k <= n,
            Extent::Infinite => true,
        }
    }

    pub fn cap(self, k: u64) -> u64 {
        match self {
            Extent::Finite(n) => n.min(k),
            Extent::Infinite => k,
        }
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Extent::Finite(n) => Some(n),
            Extent::Infinite => None,
        }
    }
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extent::Finite(n) => write!(f, "{n}"),
            Extent::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Extent {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Extent::Infinite),
            t => t
                .parse::<u64>()
                .map(Extent::Finite)
                .map_err(|_| format!("expected a nonnegative integer or 'inf', got {t:?}")),
        }
    }
}

impl Serialize for Extent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extent::Finite(n) => s.serialize_u64(*n),
            Extent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(n) => Ok(Extent::Finite(n)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("vertex {0} is not in the tree")]
    UnknownVertex(VertexId),
    #[error("vertex {0} has two parents")]
    TwoParents(VertexId),
    #[error("edge relation contains a cycle through {0}")]
    Cycle(VertexId),
    #[error("tree is disconnected: roots {0} and {1}")]
    Disconnected(VertexId, VertexId),
    #[error("tree has no vertices")]
    Empty,
    #[error("model tree needs eta >= 2, got {0}")]
    InvalidModel(Extent),
    #[error("invalid truncation window: {0}")]
    InvalidWindow(String),
    #[error("traversal from {0} leaves the truncation window")]
    WindowOverflow(VertexId),
}

/// Finite view of a possibly infinite model tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationWindow {
    pub max_trunk: u64,
    pub max_branch: u64,
    pub max_depth: u64,
}

impl TruncationWindow {
    pub fn new(max_trunk: u64, max_branch: u64, max_depth: u64) -> Result<Self, TreeError> {
        if max_branch == 0 || max_depth == 0 {
            return Err(TreeError::InvalidWindow(
                "max_branch and max_depth must be at least 1".into(),
            ));
        }
        Ok(Self {
            max_trunk,
            max_branch,
            max_depth,
        })
    }

    /// Clamp to the extents of a model tree.
    pub fn fit(self, eta: Extent, kappa: Extent) -> Self {
        Self {
            max_trunk: kappa.cap(self.max_trunk),
            max_branch: eta.cap(self.max_branch),
            max_depth: self.max_depth,
        }
    }

    /// The same window one level deeper on every branch.
    pub fn with_fringe(self) -> Self {
        Self {
            max_depth: self.max_depth + 1,
            ..self
        }
    }

    /// Whether `self` lies inside `outer`.
    pub fn within(&self, outer: &TruncationWindow) -> bool {
        self.max_trunk <= outer.max_trunk
            && self.max_branch <= outer.max_branch
            && self.max_depth <= outer.max_depth
    }
}

/// A validated finite directed tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitTree {
    vertices: BTreeSet<VertexId>,
    parent: BTreeMap<VertexId, VertexId>,
    children: BTreeMap<VertexId, Vec<VertexId>>,
    root: VertexId,
}

impl ExplicitTree {
    pub fn from_edges(edges: &[(VertexId, VertexId)]) -> Result<Self, TreeError> {
        Self::with_vertices(edges, &[])
    }

    /// Builds a tree from edges plus optional isolated vertices (needed for
    /// the single-vertex tree).
    pub fn with_vertices(
        edges: &[(VertexId, VertexId)],
        extra: &[VertexId],
    ) -> Result<Self, TreeError> {
        let mut vertices: BTreeSet<VertexId> = extra.iter().copied().collect();
        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        for &(p, c) in edges {
            if p == c {
                return Err(TreeError::Cycle(p));
            }
            vertices.insert(p);
            vertices.insert(c);
            if parent.insert(c, p).is_some() {
                return Err(TreeError::TwoParents(c));
            }
            children.entry(p).or_default().push(c);
        }
        for list in children.values_mut() {
            list.sort();
            list.dedup();
        }
        let mut roots = vertices.iter().filter(|v| !parent.contains_key(v));
        let root = match (roots.next(), roots.next()) {
            (Some(&r), None) => r,
            (Some(&a), Some(&b)) => return Err(TreeError::Disconnected(a, b)),
            // every vertex has a parent: following parents must loop
            (None, _) => match vertices.iter().next() {
                Some(&v) => return Err(TreeError::Cycle(v)),
                None => return Err(TreeError::Empty),
            },
        };
        let mut seen = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &c in children.get(&u).into_iter().flatten() {
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        if let Some(&v) = vertices.iter().find(|v| !seen.contains(v)) {
            // one root and an unreachable vertex: its parent chain is a cycle
            return Err(TreeError::Cycle(v));
        }
        Ok(Self {
            vertices,
            parent,
            children,
            root,
        })
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> Vec<(VertexId, VertexId)> {
        self.parent.iter().map(|(&c, &p)| (p, c)).collect()
    }

    pub fn contains(&self, u: VertexId) -> bool {
        self.vertices.contains(&u)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DirectedTreeSpec {
    Model { eta: Extent, kappa: Extent },
    Explicit(ExplicitTree),
}

impl DirectedTreeSpec {
    pub fn model(eta: Extent, kappa: Extent) -> Result<Self, TreeError> {
        if eta < Extent::Finite(2) {
            return Err(TreeError::InvalidModel(eta));
        }
        Ok(DirectedTreeSpec::Model { eta, kappa })
    }

    pub fn explicit(edges: &[(VertexId, VertexId)]) -> Result<Self, TreeError> {
        ExplicitTree::from_edges(edges).map(DirectedTreeSpec::Explicit)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, DirectedTreeSpec::Explicit(_))
    }

    /// Whether `u` is a vertex of the (untruncated) tree.
    pub fn contains(&self, u: VertexId) -> bool {
        match self {
            DirectedTreeSpec::Model { eta, kappa } => match u {
                VertexId::Trunk(k) => kappa.admits(k),
                VertexId::Branch(i, j) => i >= 1 && j >= 1 && eta.admits(i),
                VertexId::Label(_) => false,
            },
            DirectedTreeSpec::Explicit(t) => t.contains(u),
        }
    }

    /// Whether `u` lies inside the window. Explicit trees ignore the window.
    pub fn in_window(&self, u: VertexId, window: &TruncationWindow) -> bool {
        if !self.contains(u) {
            return false;
        }
        match (self, u) {
            (DirectedTreeSpec::Explicit(_), _) => true,
            (_, VertexId::Trunk(k)) => k <= window.max_trunk,
            (_, VertexId::Branch(i, j)) => i <= window.max_branch && j <= window.max_depth,
            (_, VertexId::Label(_)) => false,
        }
    }

    fn check(&self, u: VertexId) -> Result<(), TreeError> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(TreeError::UnknownVertex(u))
        }
    }

    pub fn root(&self) -> Option<VertexId> {
        match self {
            DirectedTreeSpec::Model { kappa, .. } => kappa.finite().map(VertexId::Trunk),
            DirectedTreeSpec::Explicit(t) => Some(t.root()),
        }
    }

    pub fn is_root(&self, u: VertexId) -> bool {
        self.root() == Some(u)
    }

    pub fn parent(&self, u: VertexId) -> Result<Option<VertexId>, TreeError> {
        self.check(u)?;
        Ok(match (self, u) {
            (DirectedTreeSpec::Explicit(t), _) => t.parent.get(&u).copied(),
            (DirectedTreeSpec::Model { kappa, .. }, VertexId::Trunk(k)) => {
                kappa.admits(k + 1).then_some(VertexId::Trunk(k + 1))
            }
            (_, VertexId::Branch(_, 1)) => Some(ORIGIN),
            (_, VertexId::Branch(i, j)) => Some(VertexId::Branch(i, j - 1)),
            (_, VertexId::Label(_)) => unreachable!("labels never belong to model trees"),
        })
    }

    /// Children of `u` that lie inside the window.
    pub fn children(
        &self,
        u: VertexId,
        window: &TruncationWindow,
    ) -> Result<Vec<VertexId>, TreeError> {
        self.check(u)?;
        Ok(match (self, u) {
            (DirectedTreeSpec::Explicit(t), _) => t.children.get(&u).cloned().unwrap_or_default(),
            (DirectedTreeSpec::Model { eta, .. }, VertexId::Trunk(0)) => {
                if window.max_depth == 0 {
                    Vec::new()
                } else {
                    (1..=eta.cap(window.max_branch))
                        .map(|i| VertexId::Branch(i, 1))
                        .collect()
                }
            }
            (_, VertexId::Trunk(k)) => vec![VertexId::Trunk(k - 1)],
            (_, VertexId::Branch(i, j)) if j < window.max_depth => vec![VertexId::Branch(i, j + 1)],
            (_, VertexId::Branch(..)) => Vec::new(),
            (_, VertexId::Label(_)) => unreachable!("labels never belong to model trees"),
        })
    }

    /// Number of children in the untruncated tree (`None` when infinite).
    pub fn child_count(&self, u: VertexId) -> Result<Option<u64>, TreeError> {
        self.check(u)?;
        Ok(match (self, u) {
            (DirectedTreeSpec::Explicit(t), _) => {
                Some(t.children.get(&u).map_or(0, |c| c.len() as u64))
            }
            (DirectedTreeSpec::Model { eta, .. }, VertexId::Trunk(0)) => eta.finite(),
            _ => Some(1),
        })
    }

    /// Children of `u`, failing if the window cuts any of them off.
    pub fn children_complete(
        &self,
        u: VertexId,
        window: &TruncationWindow,
    ) -> Result<Vec<VertexId>, TreeError> {
        let kids = self.children(u, window)?;
        match self.child_count(u)? {
            Some(n) if n == kids.len() as u64 => Ok(kids),
            _ => Err(TreeError::WindowOverflow(u)),
        }
    }

    /// Vertices inside the window with at least two children in the full tree.
    pub fn branching_vertices(&self, window: &TruncationWindow) -> Vec<VertexId> {
        match self {
            DirectedTreeSpec::Explicit(t) => t
                .children
                .iter()
                .filter(|(_, c)| c.len() >= 2)
                .map(|(&u, _)| u)
                .collect(),
            DirectedTreeSpec::Model { .. } => {
                if self.in_window(ORIGIN, window) {
                    vec![ORIGIN]
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// All vertices of the window, trunk first (from `0` down), then branches
    /// in `(i, j)` order.
    pub fn vertices(&self, window: &TruncationWindow) -> Vec<VertexId> {
        match self {
            DirectedTreeSpec::Explicit(t) => t.vertices().collect(),
            DirectedTreeSpec::Model { eta, kappa } => {
                let trunk = (0..=kappa.cap(window.max_trunk)).map(VertexId::Trunk);
                let branches = (1..=eta.cap(window.max_branch)).flat_map(move |i| {
                    (1..=window.max_depth).map(move |j| VertexId::Branch(i, j))
                });
                trunk.chain(branches).collect()
            }
        }
    }

    /// Vertices reachable from `u` in exactly `n` steps inside the window,
    /// with their paths.
    pub fn descendants_at(
        &self,
        u: VertexId,
        n: u32,
        window: &TruncationWindow,
    ) -> Result<Vec<(VertexId, Vec<VertexId>)>, TreeError> {
        self.walk(u, n, window, false)
    }

    /// Like [`descendants_at`](Self::descendants_at), but fails with
    /// `WindowOverflow` if some length-`n` path leaves the window.
    pub fn descendants_complete(
        &self,
        u: VertexId,
        n: u32,
        window: &TruncationWindow,
    ) -> Result<Vec<(VertexId, Vec<VertexId>)>, TreeError> {
        self.walk(u, n, window, true)
    }

    fn walk(
        &self,
        u: VertexId,
        n: u32,
        window: &TruncationWindow,
        strict: bool,
    ) -> Result<Vec<(VertexId, Vec<VertexId>)>, TreeError> {
        self.check(u)?;
        if strict && !self.in_window(u, window) {
            return Err(TreeError::WindowOverflow(u));
        }
        let mut frontier = vec![(u, vec![u])];
        for _ in 0..n {
            let mut next = Vec::new();
            for (v, path) in frontier {
                let kids = if strict {
                    self.children_complete(v, window)?
                } else {
                    self.children(v, window)?
                };
                for c in kids {
                    let mut p = path.clone();
                    p.push(c);
                    next.push((c, p));
                }
            }
            frontier = next;
        }
        Ok(frontier)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TreeRepr {
    Model {
        model: ModelRepr,
    },
    Edges {
        edges: Vec<(VertexId, VertexId)>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        vertices: Vec<VertexId>,
    },
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    eta: Extent,
    kappa: Extent,
}

impl Serialize for DirectedTreeSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DirectedTreeSpec::Model { eta, kappa } => TreeRepr::Model {
                model: ModelRepr {
                    eta: *eta,
                    kappa: *kappa,
                },
            },
            DirectedTreeSpec::Explicit(t) => {
                let vertices = if t.parent.is_empty() {
                    vec![t.root]
                } else {
                    Vec::new()
                };
                TreeRepr::Edges {
                    edges: t.edges(),
                    vertices,
                }
            }
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DirectedTreeSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match TreeRepr::deserialize(d)? {
            TreeRepr::Model { model } => {
                DirectedTreeSpec::model(model.eta, model.kappa).map_err(D::Error::custom)
            }
            TreeRepr::Edges { edges, vertices } => ExplicitTree::with_vertices(&edges, &vertices)
                .map(DirectedTreeSpec::Explicit)
                .map_err(D::Error::custom),
        }
    }
}
