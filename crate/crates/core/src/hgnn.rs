//! Heterogeneous graph encoder.
//!
//! One layer, for every relation `r` a node receives:
//!
//! ```text
//! agg_r  = mean of neighbour embeddings over N_r(node)   (zeros if empty)
//! msg_r  = relu(W_r · [agg_r || self] + b_r)
//! next   = mean over the relations of the node's kind
//! ```
//!
//! Items receive `r_interacted_by`, `r_in`, `r_out` and `r_similar`; users
//! receive `r_interact`. After `K` synchronous layers the outputs of layers
//! `0..=K` are averaged with weight `1/(K+1)`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{EdgeType, HeteroGraph};
use crate::tape::{RowGroups, Tape, Var};

/// Item-side relations, in accumulation order.
pub const ITEM_RELATIONS: [EdgeType; 4] = [
    EdgeType::InteractedBy,
    EdgeType::In,
    EdgeType::Out,
    EdgeType::Similar,
];

/// Per-relation transform parameters, `weight: d × 2d`, `bias: 1 × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation<T> {
    pub weight: T,
    pub bias: T,
}

/// Combined embeddings on a tape.
#[derive(Clone, Copy, Debug)]
pub struct NodeEmbeddings {
    /// `|V| × d`
    pub items: Var,
    /// `|U| × d`
    pub users: Var,
}

/// Mean of source rows per destination; zero rows where the neighbour set
/// is empty.
pub fn aggregate_relation(tape: &mut Tape, src: Var, groups: &Arc<RowGroups>) -> Result<Var> {
    tape.group_mean(src, groups)
}

/// `relu(W · [agg || self] + b)` row by row.
pub fn transform_relation(tape: &mut Tape, agg: Var, this: Var, rel: &Relation<Var>) -> Result<Var> {
    let cat = tape.concat(agg, this)?;
    let pre = tape.linear(cat, rel.weight, Some(rel.bias))?;
    tape.relu(pre)
}

/// Elementwise mean of the relation messages a node kind receives.
pub fn accumulate_node(tape: &mut Tape, messages: &[Var]) -> Result<Var> {
    tape.mean_of(messages)
}

/// Uniform `1/(K+1)` average of the layer outputs `0..=K`.
pub fn combine_layers(tape: &mut Tape, layers: &[Var]) -> Result<Var> {
    tape.mean_of(layers)
}

/// Runs `layers.len()` rounds over the whole graph and combines them.
///
/// Relations switched off in the graph's edge mask take no part in the
/// item-side mean. Without user edges the users keep their initial
/// embeddings.
pub fn forward(
    tape: &mut Tape,
    graph: &HeteroGraph,
    items0: Var,
    users0: Var,
    layers: &[[Relation<Var>; 5]],
) -> Result<NodeEmbeddings> {
    let mask = graph.mask();
    let item_rels: Vec<EdgeType> = ITEM_RELATIONS.into_iter().filter(|&r| mask.allows(r)).collect();
    let mut p = alloc::vec![items0];
    let mut q = alloc::vec![users0];
    for params in layers {
        let (pk, qk) = (*p.last().unwrap(), *q.last().unwrap());
        let mut messages = Vec::with_capacity(item_rels.len());
        for &r in &item_rels {
            let src = if r == EdgeType::InteractedBy { qk } else { pk };
            let agg = aggregate_relation(tape, src, graph.neighbor_groups(r))?;
            messages.push(transform_relation(tape, agg, pk, &params[r.index()])?);
        }
        let p_next = if messages.is_empty() {
            pk
        } else {
            accumulate_node(tape, &messages)?
        };
        if mask.user_edges {
            let agg = aggregate_relation(tape, pk, graph.neighbor_groups(EdgeType::Interact))?;
            let msg = transform_relation(tape, agg, qk, &params[EdgeType::Interact.index()])?;
            q.push(accumulate_node(tape, &[msg])?);
        }
        p.push(p_next);
    }
    Ok(NodeEmbeddings {
        items: combine_layers(tape, &p)?,
        users: combine_layers(tape, &q)?,
    })
}
