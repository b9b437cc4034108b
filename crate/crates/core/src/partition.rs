//! Node-budget partitioning of context subgraphs and the token-budget
//! feedback loop.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{group_edges, ContextSubgraph, Edge, NodeId};

pub const DEFAULT_N_MAX: usize = 30;
pub const DEFAULT_T_MAX: usize = 256;
pub const DEFAULT_CHARS_PER_TOKEN: f64 = 4.0;
pub const MIN_T_MAX: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
}

/// Token counting strategy. The default divides character count by a fixed
/// ratio; a real tokenizer can be plugged in behind this trait.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharRatioEstimator {
    pub chars_per_token: f64,
}

impl TokenEstimator for CharRatioEstimator {
    fn estimate(&self, text: &str) -> usize {
        estimate_tokens(text, self.chars_per_token)
    }
}

/// `ceil(chars / chars_per_token)`, counting Unicode scalar values.
pub fn estimate_tokens(text: &str, chars_per_token: f64) -> usize {
    let chars = text.chars().count();
    if chars == 0 {
        return 0;
    }
    (chars as f64 / chars_per_token).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub t_max: usize,
    pub chars_per_token: f64,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
        }
    }
}

impl TokenBudget {
    pub fn new(t_max: usize, chars_per_token: f64) -> Result<Self, PartitionError> {
        let b = Self { t_max, chars_per_token };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        if self.t_max < MIN_T_MAX {
            return Err(PartitionError::InvalidBudget(format!(
                "t_max {} is below the minimum of {MIN_T_MAX}",
                self.t_max
            )));
        }
        if !(self.chars_per_token.is_finite() && self.chars_per_token > 0.0) {
            return Err(PartitionError::InvalidBudget(format!(
                "chars_per_token must be positive, got {}",
                self.chars_per_token
            )));
        }
        Ok(())
    }

    pub fn estimator(&self) -> CharRatioEstimator {
        CharRatioEstimator {
            chars_per_token: self.chars_per_token,
        }
    }

    pub fn estimate(&self, text: &str) -> usize {
        estimate_tokens(text, self.chars_per_token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub center: NodeId,
    pub edges: Vec<Edge>,
    pub node_count: usize,
    /// Set when even a single-edge partition exceeds the token budget.
    pub oversized: bool,
}

impl Partition {
    fn from_parts(center: &NodeId, mut edges: Vec<Edge>, nodes: &BTreeSet<NodeId>) -> Self {
        edges.sort();
        Self {
            center: center.clone(),
            edges,
            node_count: nodes.len(),
            oversized: false,
        }
    }

    fn single(center: &NodeId, edge: Edge) -> Self {
        let mut nodes = BTreeSet::from([center.clone()]);
        nodes.insert(edge.head.clone());
        nodes.insert(edge.tail.clone());
        Self::from_parts(center, vec![edge], &nodes)
    }
}

fn min_n_max(ctx: &ContextSubgraph) -> usize {
    if ctx.edges.iter().all(|e| e.touches(&ctx.center)) {
        2
    } else {
        // a center plus both endpoints of a non-incident edge
        3
    }
}

/// Splits `ctx` into partitions of at most `n_max` nodes (center included).
///
/// Relation groups are visited in canonical order and packed greedily;
/// a group is chunked only when it alone holds more neighbors than fit
/// beside the center. Each context edge lands in exactly one partition.
pub fn partition_context(ctx: &ContextSubgraph, n_max: usize) -> Result<Vec<Partition>, PartitionError> {
    let floor = min_n_max(ctx);
    if n_max < floor {
        return Err(PartitionError::InvalidBudget(format!(
            "n_max {n_max} is below {floor} for this context"
        )));
    }
    let center = &ctx.center;
    let mut out = Vec::new();
    let mut cur_edges: Vec<Edge> = Vec::new();
    let mut cur_nodes: BTreeSet<NodeId> = BTreeSet::from([center.clone()]);

    for group in group_edges(center, &ctx.edges) {
        let central = &group.anchor == center;
        let chunk_len = if central { n_max - 1 } else { n_max - 2 };
        for chunk in group.edges.chunks(chunk_len) {
            let mut chunk_nodes: BTreeSet<NodeId> = BTreeSet::new();
            for e in chunk {
                chunk_nodes.insert(e.head.clone());
                chunk_nodes.insert(e.tail.clone());
            }
            let merged = cur_nodes.union(&chunk_nodes).count();
            if merged > n_max && !cur_edges.is_empty() {
                out.push(Partition::from_parts(
                    center,
                    std::mem::take(&mut cur_edges),
                    &cur_nodes,
                ));
                cur_nodes = BTreeSet::from([center.clone()]);
            }
            cur_nodes.extend(chunk_nodes);
            cur_edges.extend(chunk.iter().cloned());
        }
    }
    if !cur_edges.is_empty() {
        out.push(Partition::from_parts(center, cur_edges, &cur_nodes));
    }
    Ok(out)
}

/// Result of [`fit_to_budget`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetedPartitions {
    pub partitions: Vec<Partition>,
    /// Deepest chain of re-partitioning applied to any partition.
    pub rounds: usize,
}

/// Partitions `ctx` and re-partitions, with a halved node budget, every
/// partition whose rendered samples exceed `budget.t_max` tokens.
///
/// `measure` renders a candidate partition and returns the token estimate of
/// its longest sample. Once the node budget reaches its floor, remaining
/// offenders are split into single edges; a single edge that still does not
/// fit is emitted with `oversized` set.
pub fn fit_to_budget<E, F>(
    ctx: &ContextSubgraph,
    n_max: usize,
    budget: &TokenBudget,
    mut measure: F,
) -> Result<BudgetedPartitions, E>
where
    E: From<PartitionError>,
    F: FnMut(&Partition) -> Result<usize, E>,
{
    budget.validate()?;
    let floor = min_n_max(ctx);
    let mut out = BudgetedPartitions {
        partitions: Vec::new(),
        rounds: 0,
    };
    fit_rec(ctx, n_max, floor, 0, budget, &mut measure, &mut out)?;
    Ok(out)
}

fn fit_rec<E, F>(
    ctx: &ContextSubgraph,
    n_max: usize,
    floor: usize,
    depth: usize,
    budget: &TokenBudget,
    measure: &mut F,
    out: &mut BudgetedPartitions,
) -> Result<(), E>
where
    E: From<PartitionError>,
    F: FnMut(&Partition) -> Result<usize, E>,
{
    out.rounds = out.rounds.max(depth);
    for p in partition_context(ctx, n_max)? {
        if measure(&p)? <= budget.t_max {
            out.partitions.push(p);
        } else if p.edges.len() == 1 {
            out.partitions.push(Partition { oversized: true, ..p });
        } else if n_max > floor {
            let sub = ContextSubgraph::from_edges(ctx.center.clone(), ctx.k, p.edges);
            fit_rec(&sub, (n_max / 2).max(floor), floor, depth + 1, budget, measure, out)?;
        } else {
            out.rounds = out.rounds.max(depth + 1);
            for e in p.edges {
                let single = Partition::single(&ctx.center, e);
                let oversized = measure(&single)? > budget.t_max;
                out.partitions.push(Partition { oversized, ..single });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn star(n: usize, rel: &str) -> ContextSubgraph {
        let edges = (0..n)
            .map(|i| Edge::new(id("hub"), rel, id(&format!("n{i:03}"))))
            .collect();
        ContextSubgraph::from_edges(id("hub"), 1, edges)
    }

    #[test]
    fn estimate_tokens_examples() {
        assert_eq!(estimate_tokens("", 4.0), 0);
        assert_eq!(estimate_tokens("abcd", 4.0), 1);
        assert_eq!(estimate_tokens("abcde", 4.0), 2);
        assert_eq!(estimate_tokens("é", 4.0), 1);
    }

    #[test]
    fn budget_validation() {
        assert!(TokenBudget::new(31, 4.0).is_err());
        assert!(TokenBudget::new(32, 0.0).is_err());
        assert!(TokenBudget::new(256, 4.0).is_ok());
    }

    #[test]
    fn star_of_ten_with_n_max_five() {
        let parts = partition_context(&star(10, "r"), 5).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.node_count).collect();
        assert_eq!(sizes, vec![5, 5, 3]);
    }

    #[test]
    fn small_context_is_one_partition() {
        let ctx = star(2, "r");
        let parts = partition_context(&ctx, 10).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].edges, ctx.edges);
        assert_eq!(parts[0].node_count, 3);
    }

    #[test]
    fn rejects_tiny_n_max() {
        assert!(partition_context(&star(3, "r"), 1).is_err());
        let ctx = ContextSubgraph::from_edges(
            id("c"),
            2,
            vec![Edge::new(id("c"), "r", id("a")), Edge::new(id("a"), "r", id("b"))],
        );
        assert!(partition_context(&ctx, 2).is_err());
        assert_eq!(partition_context(&ctx, 3).unwrap().len(), 1);
    }

    #[test]
    fn small_groups_share_a_partition() {
        let mut edges: Vec<Edge> = (0..3)
            .map(|i| Edge::new(id("hub"), "a", id(&format!("x{i}"))))
            .collect();
        edges.extend((0..3).map(|i| Edge::new(id(&format!("y{i}")), "b", id("hub"))));
        let ctx = ContextSubgraph::from_edges(id("hub"), 1, edges);
        let parts = partition_context(&ctx, 10).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].node_count, 7);
    }

    fn label_measure(p: &Partition) -> Result<usize, PartitionError> {
        // 10 tokens per edge plus a fixed overhead
        Ok(4 + 10 * p.edges.len())
    }

    #[test]
    fn fit_identical_when_within_budget() {
        let ctx = star(10, "r");
        let budget = TokenBudget::new(256, 4.0).unwrap();
        let fitted = fit_to_budget(&ctx, 5, &budget, label_measure).unwrap();
        assert_eq!(fitted.partitions, partition_context(&ctx, 5).unwrap());
        assert_eq!(fitted.rounds, 0);
    }

    #[test]
    fn only_the_offending_partition_is_split() {
        // group "a" has long labels (cost 40 per edge), group "b" short ones
        let mut edges: Vec<Edge> = (0..4)
            .map(|i| Edge::new(id("hub"), "a", id(&format!("long{i}"))))
            .collect();
        edges.extend((0..4).map(|i| Edge::new(id("hub"), "b", id(&format!("s{i}")))));
        let ctx = ContextSubgraph::from_edges(id("hub"), 1, edges);
        let cost = |p: &Partition| -> Result<usize, PartitionError> {
            Ok(p.edges.iter().map(|e| if e.relation == "a" { 40 } else { 10 }).sum())
        };
        let budget = TokenBudget::new(80, 4.0).unwrap();
        let base = partition_context(&ctx, 5).unwrap();
        assert_eq!(base.len(), 2);
        assert_eq!(cost(&base[0]).unwrap(), 160);
        let fitted = fit_to_budget(&ctx, 5, &budget, cost).unwrap();
        // the "a" partition is re-split at n_max = 2 into single edges
        assert_eq!(fitted.partitions.len(), 5);
        assert_eq!(fitted.partitions[4], base[1]);
        assert!(fitted.partitions.iter().all(|p| !p.oversized));
        assert_eq!(fitted.rounds, 1);
    }

    #[test]
    fn single_huge_edge_is_flagged() {
        let ctx = star(1, "r");
        let budget = TokenBudget::new(256, 4.0).unwrap();
        let fitted = fit_to_budget(&ctx, 30, &budget, |_p: &Partition| -> Result<usize, PartitionError> {
            Ok(estimate_tokens(&"x".repeat(5000), 4.0))
        })
        .unwrap();
        assert_eq!(fitted.partitions.len(), 1);
        assert!(fitted.partitions[0].oversized);
    }

    #[test]
    fn parallel_edges_split_at_floor() {
        let edges = vec![Edge::new(id("hub"), "a", id("x")), Edge::new(id("hub"), "b", id("x"))];
        let ctx = ContextSubgraph::from_edges(id("hub"), 1, edges);
        let budget = TokenBudget::new(32, 4.0).unwrap();
        let fitted = fit_to_budget(&ctx, 2, &budget, |p: &Partition| -> Result<usize, PartitionError> {
            Ok(20 * p.edges.len())
        })
        .unwrap();
        assert_eq!(fitted.partitions.len(), 2);
        assert!(fitted.partitions.iter().all(|p| !p.oversized && p.edges.len() == 1));
    }
}
