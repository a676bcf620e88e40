//! The heterogeneous global graph over train sessions.
//!
//! A [`TypedEdge`] `(head, tail, r)` delivers messages from `head` to `tail`.
//! Item transitions `a → b` give `(a, b, r_in)` and `(b, a, r_out)`, each
//! weighted by how often the transition occurs; co-occurrence gives
//! `(v_j, v_i, r_similar)`; interactions give `(v, u, r_interact)` and
//! `(u, v, r_interacted_by)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::SessionCorpus;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::tape::RowGroups;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    In,
    Out,
    Similar,
    Interact,
    InteractedBy,
}

impl EdgeType {
    pub const ALL: [EdgeType; 5] = [
        EdgeType::In,
        EdgeType::Out,
        EdgeType::Similar,
        EdgeType::Interact,
        EdgeType::InteractedBy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::In => "r_in",
            EdgeType::Out => "r_out",
            EdgeType::Similar => "r_similar",
            EdgeType::Interact => "r_interact",
            EdgeType::InteractedBy => "r_interacted_by",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        EdgeType::ALL.into_iter().find(|e| e.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Kind of node on the receiving end.
    pub fn tail_kind(self) -> NodeKind {
        match self {
            EdgeType::Interact => NodeKind::User,
            _ => NodeKind::Item,
        }
    }

    pub fn head_kind(self) -> NodeKind {
        match self {
            EdgeType::InteractedBy => NodeKind::User,
            _ => NodeKind::Item,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Item,
    User,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Item => "item",
            NodeKind::User => "user",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "item" => Some(NodeKind::Item),
            "user" => Some(NodeKind::User),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub id: usize,
}

impl NodeRef {
    pub fn item(id: usize) -> Self {
        NodeRef {
            kind: NodeKind::Item,
            id,
        }
    }

    pub fn user(id: usize) -> Self {
        NodeRef {
            kind: NodeKind::User,
            id,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypedEdge {
    pub head: NodeRef,
    pub tail: NodeRef,
    pub etype: EdgeType,
    pub weight: f64,
}

impl TypedEdge {
    /// Sort key `(tail_kind, tail_id, etype, head_id)`.
    pub fn sort_key(&self) -> (NodeKind, usize, EdgeType, NodeKind, usize) {
        (self.tail.kind, self.tail.id, self.etype, self.head.kind, self.head.id)
    }
}

/// Which edge classes the graph keeps. Everything is on by default; the
/// graph ablations switch one class off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeMask {
    pub in_edges: bool,
    pub out_edges: bool,
    pub similar_edges: bool,
    pub user_edges: bool,
}

impl Default for EdgeMask {
    fn default() -> Self {
        EdgeMask {
            in_edges: true,
            out_edges: true,
            similar_edges: true,
            user_edges: true,
        }
    }
}

impl EdgeMask {
    pub fn allows(&self, e: EdgeType) -> bool {
        match e {
            EdgeType::In => self.in_edges,
            EdgeType::Out => self.out_edges,
            EdgeType::Similar => self.similar_edges,
            EdgeType::Interact | EdgeType::InteractedBy => self.user_edges,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphConfig {
    /// `S`: transition edges kept per item and per direction.
    pub sample_size: usize,
    /// `K`: upper bound on similarity edges per item.
    pub similar_k: usize,
    pub keep_self_loops: bool,
    pub mask: EdgeMask,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            sample_size: 8,
            similar_k: 10,
            keep_self_loops: true,
            mask: EdgeMask::default(),
        }
    }
}

/// Transition frequencies keyed by `(head, tail, type)`, types `r_in`/`r_out`.
pub type TransitionCounts = BTreeMap<(usize, usize, EdgeType), u64>;

/// Counts every adjacent pair `a → b` of every session as one `(a, b, r_in)`
/// and one `(b, a, r_out)`.
pub fn count_transitions<'a, I>(sessions: I, keep_self_loops: bool) -> TransitionCounts
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut counts = TransitionCounts::new();
    for s in sessions {
        for w in s.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b && !keep_self_loops {
                continue;
            }
            *counts.entry((a, b, EdgeType::In)).or_insert(0) += 1;
            *counts.entry((b, a, EdgeType::Out)).or_insert(0) += 1;
        }
    }
    counts
}

/// Session incidence used by the co-occurrence score.
#[derive(Clone, Debug, Default)]
pub struct CooccurrenceIndex {
    /// Per item: ascending ids of the sessions containing it.
    sessions_of: Vec<Vec<usize>>,
    /// Per session: its items, distinct and ascending.
    items_of: Vec<Vec<usize>>,
}

impl CooccurrenceIndex {
    pub fn new<'a, I>(sessions: I, num_items: usize) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut sessions_of = vec![Vec::new(); num_items];
        let mut items_of = Vec::new();
        for (sid, s) in sessions.into_iter().enumerate() {
            let distinct: BTreeSet<usize> = s.iter().copied().collect();
            for &i in &distinct {
                sessions_of[i].push(sid);
            }
            items_of.push(distinct.into_iter().collect());
        }
        CooccurrenceIndex { sessions_of, items_of }
    }

    pub fn num_items(&self) -> usize {
        self.sessions_of.len()
    }

    /// `|N(v)|`: number of sessions containing `v`.
    pub fn support(&self, v: usize) -> usize {
        self.sessions_of[v].len()
    }

    /// `(Σ_{s ∈ N(a) ∩ N(b)} 1/|N(s)|) / sqrt(|N(a)|·|N(b)|)` where `|N(s)|`
    /// counts the distinct items of session `s`. Zero when either item
    /// occurs in no session.
    pub fn score(&self, a: usize, b: usize) -> f64 {
        let (na, nb) = (&self.sessions_of[a], &self.sessions_of[b]);
        if na.is_empty() || nb.is_empty() {
            return 0.0;
        }
        let (mut x, mut y) = (0, 0);
        let mut total = 0.0;
        while x < na.len() && y < nb.len() {
            match na[x].cmp(&nb[y]) {
                core::cmp::Ordering::Less => x += 1,
                core::cmp::Ordering::Greater => y += 1,
                core::cmp::Ordering::Equal => {
                    total += 1.0 / self.items_of[na[x]].len() as f64;
                    x += 1;
                    y += 1;
                }
            }
        }
        total / sqrt(na.len() as f64 * nb.len() as f64)
    }

    /// Every other item with a positive score against `v`, ascending by id.
    pub fn candidates(&self, v: usize) -> Vec<(usize, f64)> {
        let others: BTreeSet<usize> = self.sessions_of[v]
            .iter()
            .flat_map(|&s| self.items_of[s].iter().copied())
            .filter(|&j| j != v)
            .collect();
        others
            .into_iter()
            .map(|j| (j, self.score(v, j)))
            .filter(|&(_, s)| s > 0.0)
            .collect()
    }
}

/// Per-item transition neighborhoods `N_v = {u | (v, u, r) for r ∈ {r_in, r_out}}`.
pub fn transition_neighbors(counts: &TransitionCounts, num_items: usize) -> Vec<BTreeSet<usize>> {
    let mut n = vec![BTreeSet::new(); num_items];
    for &(head, tail, _) in counts.keys() {
        n[head].insert(tail);
    }
    n
}

/// For each item `v`, links its `K' = min(K, |N_v|)` best co-occurring items
/// `u` as `(u, v, r_similar)`, ranked by score descending then id
/// ascending. A pair already joined by `(u, v, r_in)` keeps only the
/// transition edge.
pub fn build_similar_edges(
    index: &CooccurrenceIndex,
    neighbors: &[BTreeSet<usize>],
    in_edges: &BTreeSet<(usize, usize)>,
    k: usize,
) -> Vec<TypedEdge> {
    let mut out = Vec::new();
    for (v, nv) in neighbors.iter().enumerate().take(index.num_items()) {
        let cap = k.min(nv.len());
        if cap == 0 {
            continue;
        }
        let mut cands = index.candidates(v);
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        cands.truncate(cap);
        for (u, score) in cands {
            if in_edges.contains(&(u, v)) {
                continue;
            }
            out.push(TypedEdge {
                head: NodeRef::item(u),
                tail: NodeRef::item(v),
                etype: EdgeType::Similar,
                weight: score,
            });
        }
    }
    out
}

/// Keeps, per tail node and edge type, the `s` incoming edges of largest
/// weight (ties to the smaller head id). Output is in sort-key order.
pub fn sample_top_s(mut edges: Vec<TypedEdge>, s: usize) -> Vec<TypedEdge> {
    edges.sort_by(|a, b| {
        (a.tail, a.etype)
            .cmp(&(b.tail, b.etype))
            .then(b.weight.total_cmp(&a.weight))
            .then(a.head.cmp(&b.head))
    });
    let mut out = Vec::with_capacity(edges.len());
    let mut run = 0;
    for (i, e) in edges.iter().enumerate() {
        if i > 0 && (edges[i - 1].tail, edges[i - 1].etype) == (e.tail, e.etype) {
            run += 1;
        } else {
            run = 0;
        }
        if run < s {
            out.push(*e);
        }
    }
    out.sort_by_key(TypedEdge::sort_key);
    out
}

/// One `(v, u, r_interact)` and one `(u, v, r_interacted_by)` per distinct
/// user–item pair, weight 1.
pub fn build_user_edges<'a, I>(sessions: I) -> Vec<TypedEdge>
where
    I: IntoIterator<Item = (usize, &'a [usize])>,
{
    let pairs: BTreeSet<(usize, usize)> = sessions
        .into_iter()
        .flat_map(|(u, items)| items.iter().map(move |&v| (u, v)))
        .collect();
    let mut out = Vec::with_capacity(pairs.len() * 2);
    for (u, v) in pairs {
        out.push(TypedEdge {
            head: NodeRef::item(v),
            tail: NodeRef::user(u),
            etype: EdgeType::Interact,
            weight: 1.0,
        });
        out.push(TypedEdge {
            head: NodeRef::user(u),
            tail: NodeRef::item(v),
            etype: EdgeType::InteractedBy,
            weight: 1.0,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStats {
    pub num_users: usize,
    pub num_items: usize,
    /// Indexed by [`EdgeType::index`].
    pub edge_counts: [usize; 5],
}

impl GraphStats {
    pub fn count(&self, e: EdgeType) -> usize {
        self.edge_counts[e.index()]
    }

    pub fn total_edges(&self) -> usize {
        self.edge_counts.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct HeteroGraph {
    num_users: usize,
    num_items: usize,
    mask: EdgeMask,
    edges: Vec<TypedEdge>,
    /// Per edge type: source ids grouped by destination id.
    neighbors: [Arc<RowGroups>; 5],
}

impl HeteroGraph {
    /// Indexes an edge list. Edges are re-sorted by their sort key.
    pub fn from_edges(num_users: usize, num_items: usize, mask: EdgeMask, mut edges: Vec<TypedEdge>) -> Result<Self> {
        edges.sort_by_key(TypedEdge::sort_key);
        let mut lists: [Vec<Vec<usize>>; 5] = Default::default();
        for e in EdgeType::ALL {
            let n = match e.tail_kind() {
                NodeKind::Item => num_items,
                NodeKind::User => num_users,
            };
            lists[e.index()] = vec![Vec::new(); n];
        }
        for e in &edges {
            let bound = |r: NodeRef| match r.kind {
                NodeKind::Item => num_items,
                NodeKind::User => num_users,
            };
            if e.head.kind != e.etype.head_kind() || e.tail.kind != e.etype.tail_kind() {
                return Err(Error::invalid(alloc::format!(
                    "{} edge cannot join a {} to a {}",
                    e.etype.as_str(),
                    e.head.kind.as_str(),
                    e.tail.kind.as_str()
                )));
            }
            if e.head.id >= bound(e.head) || e.tail.id >= bound(e.tail) {
                return Err(Error::invalid("edge endpoint out of range"));
            }
            if !e.weight.is_finite() || e.weight <= 0.0 {
                return Err(Error::invalid("edge weight must be positive and finite"));
            }
            lists[e.etype.index()][e.tail.id].push(e.head.id);
        }
        let neighbors = lists.map(|l| Arc::new(RowGroups::from_lists(l)));
        Ok(HeteroGraph {
            num_users,
            num_items,
            mask,
            edges,
            neighbors,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn mask(&self) -> EdgeMask {
        self.mask
    }

    /// All edges in `(tail_kind, tail_id, etype, head_id)` order.
    pub fn edges(&self) -> &[TypedEdge] {
        &self.edges
    }

    /// Sources of `etype` edges ending at node `dest`.
    pub fn neighbors(&self, etype: EdgeType, dest: usize) -> &[usize] {
        self.neighbors[etype.index()].group(dest)
    }

    pub fn neighbor_groups(&self, etype: EdgeType) -> &Arc<RowGroups> {
        &self.neighbors[etype.index()]
    }

    pub fn stats(&self) -> GraphStats {
        let mut edge_counts = [0; 5];
        for e in &self.edges {
            edge_counts[e.etype.index()] += 1;
        }
        GraphStats {
            num_users: self.num_users,
            num_items: self.num_items,
            edge_counts,
        }
    }
}

/// Builds the graph from the train sessions of a split corpus.
pub fn assemble_graph(corpus: &SessionCorpus, config: &GraphConfig) -> Result<HeteroGraph> {
    if config.sample_size == 0 || config.similar_k == 0 {
        return Err(Error::invalid("graph sample size S and similarity K must be at least 1"));
    }
    let num_items = corpus.num_items();
    let train: Vec<(usize, &[usize])> = corpus
        .train_sessions()
        .map(|s| (s.user_id, s.items.as_slice()))
        .collect();
    let mask = config.mask;

    let counts = count_transitions(train.iter().map(|t| t.1), config.keep_self_loops);
    let transitions: Vec<TypedEdge> = counts
        .iter()
        .filter(|(k, _)| mask.allows(k.2))
        .map(|(&(h, t, e), &w)| TypedEdge {
            head: NodeRef::item(h),
            tail: NodeRef::item(t),
            etype: e,
            weight: w as f64,
        })
        .collect();
    let mut edges = sample_top_s(transitions, config.sample_size);

    if mask.similar_edges {
        let index = CooccurrenceIndex::new(train.iter().map(|t| t.1), num_items);
        let neighbors = transition_neighbors(&counts, num_items);
        let in_pairs: BTreeSet<(usize, usize)> = if mask.in_edges {
            counts
                .keys()
                .filter(|k| k.2 == EdgeType::In)
                .map(|k| (k.0, k.1))
                .collect()
        } else {
            BTreeSet::new()
        };
        edges.extend(build_similar_edges(&index, &neighbors, &in_pairs, config.similar_k));
    }
    if mask.user_edges {
        edges.extend(build_user_edges(train.iter().copied()));
    }
    HeteroGraph::from_edges(corpus.num_users(), num_items, mask, edges)
}
