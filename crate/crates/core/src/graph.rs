//! Prerequisite graph and candidate selection.
//!
//! Edges `(i, j)` mean item `i` is a prerequisite of item `j`. Items are dense
//! indices `0..num_items`.

use std::collections::{BTreeSet, BinaryHeap, HashSet, VecDeque};
use std::cmp::Reverse;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub type ItemId = usize;

/// Default neighbourhood radius for candidate selection.
pub const DEFAULT_HOPS: usize = 2;

/// Non-empty set of learning-target items.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TargetSet(BTreeSet<ItemId>);

impl TargetSet {
    pub fn new(items: impl IntoIterator<Item = ItemId>) -> Result<Self> {
        let set: BTreeSet<ItemId> = items.into_iter().collect();
        if set.is_empty() {
            return Err(Error::EmptyTarget);
        }
        Ok(TargetSet(set))
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.0.contains(&item)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.0.iter().copied()
    }

    pub fn max_item(&self) -> ItemId {
        *self.0.iter().next_back().expect("target set is non-empty")
    }

    /// Checks every target is a node of a graph with `num_items` nodes.
    pub fn validate(&self, num_items: usize) -> Result<()> {
        match self.0.iter().find(|&&t| t >= num_items) {
            Some(&item) => Err(Error::ItemOutOfRange { item, num_items }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", items.join(","))
    }
}

/// A directed graph that may still contain cycles, as read from an edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    num_items: usize,
    edges: Vec<(ItemId, ItemId)>,
}

impl DiGraph {
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn edges(&self) -> &[(ItemId, ItemId)] {
        &self.edges
    }

    fn successor_lists(&self) -> Vec<Vec<ItemId>> {
        let mut succ = vec![Vec::new(); self.num_items];
        for &(i, j) in &self.edges {
            succ[i].push(j);
        }
        succ
    }
}

/// Builds a directed graph from an edge list, dropping duplicate edges.
pub fn load_graph(edges: &[(ItemId, ItemId)], num_items: usize) -> Result<DiGraph> {
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(edges.len());
    for &(i, j) in edges {
        for item in [i, j] {
            if item >= num_items {
                return Err(Error::ItemOutOfRange { item, num_items });
            }
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        if seen.insert((i, j)) {
            kept.push((i, j));
        }
    }
    Ok(DiGraph {
        num_items,
        edges: kept,
    })
}

/// Removes back edges found by a depth-first search that starts from nodes in
/// ascending id order and follows successors in input edge order.
pub fn break_cycles(graph: &DiGraph) -> PrereqGraph {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        OnStack,
        Done,
    }

    let succ = graph.successor_lists();
    let mut mark = vec![Mark::New; graph.num_items];
    let mut removed = HashSet::new();

    for root in 0..graph.num_items {
        if mark[root] != Mark::New {
            continue;
        }
        // (node, index of next successor to visit)
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::OnStack;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&child) = succ[node].get(*next) {
                *next += 1;
                match mark[child] {
                    Mark::New => {
                        mark[child] = Mark::OnStack;
                        stack.push((child, 0));
                    }
                    Mark::OnStack => {
                        removed.insert((node, child));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }

    let edges: Vec<_> = graph
        .edges
        .iter()
        .copied()
        .filter(|e| !removed.contains(e))
        .collect();
    if !removed.is_empty() {
        log::debug!("break_cycles removed {} edge(s)", removed.len());
    }
    PrereqGraph::from_valid_edges(graph.num_items, edges)
}

/// Acyclic prerequisite graph with adjacency in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrereqGraph {
    num_items: usize,
    edges: Vec<(ItemId, ItemId)>,
    succ: Vec<Vec<ItemId>>,
    pred: Vec<Vec<ItemId>>,
}

impl PrereqGraph {
    /// Builds a graph, rejecting self-loops, out-of-range ids and cycles.
    pub fn from_edges(num_items: usize, edges: &[(ItemId, ItemId)]) -> Result<Self> {
        let raw = load_graph(edges, num_items)?;
        let graph = Self::from_valid_edges(num_items, raw.edges);
        graph.topological_order()?;
        Ok(graph)
    }

    fn from_valid_edges(num_items: usize, edges: Vec<(ItemId, ItemId)>) -> Self {
        let mut succ = vec![Vec::new(); num_items];
        let mut pred = vec![Vec::new(); num_items];
        for &(i, j) in &edges {
            succ[i].push(j);
            pred[j].push(i);
        }
        PrereqGraph {
            num_items,
            edges,
            succ,
            pred,
        }
    }

    /// Reads an edge-list file (see [`parse_edge_list`]) and breaks any cycles.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw = parse_edge_list(&text)?;
        Ok(break_cycles(&raw))
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn edges(&self) -> &[(ItemId, ItemId)] {
        &self.edges
    }

    pub fn successors(&self, node: ItemId) -> &[ItemId] {
        &self.succ[node]
    }

    pub fn predecessors(&self, node: ItemId) -> &[ItemId] {
        &self.pred[node]
    }

    pub fn is_root(&self, node: ItemId) -> bool {
        self.pred[node].is_empty()
    }

    pub fn check_item(&self, item: ItemId) -> Result<()> {
        if item >= self.num_items {
            Err(Error::ItemOutOfRange {
                item,
                num_items: self.num_items,
            })
        } else {
            Ok(())
        }
    }

    fn within(adj: &[Vec<ItemId>], node: ItemId, hops: usize) -> BTreeSet<ItemId> {
        let mut dist = vec![usize::MAX; adj.len()];
        let mut queue = VecDeque::from([node]);
        dist[node] = 0;
        let mut out = BTreeSet::new();
        while let Some(n) = queue.pop_front() {
            if dist[n] == hops {
                continue;
            }
            for &m in &adj[n] {
                if dist[m] == usize::MAX {
                    dist[m] = dist[n] + 1;
                    out.insert(m);
                    queue.push_back(m);
                }
            }
        }
        out.remove(&node);
        out
    }

    /// Nodes reachable from `node` along at most `hops` forward edges.
    pub fn successors_within(&self, node: ItemId, hops: usize) -> BTreeSet<ItemId> {
        Self::within(&self.succ, node, hops)
    }

    /// Nodes reachable from `node` along at most `hops` reversed edges.
    pub fn predecessors_within(&self, node: ItemId, hops: usize) -> BTreeSet<ItemId> {
        Self::within(&self.pred, node, hops)
    }

    /// Marks every node that has a (possibly empty) path into `targets`.
    pub fn reaches_targets(&self, targets: &TargetSet) -> Vec<bool> {
        let mut mark = vec![false; self.num_items];
        let mut queue: VecDeque<ItemId> = targets.iter().collect();
        for t in targets.iter() {
            mark[t] = true;
        }
        while let Some(n) = queue.pop_front() {
            for &p in &self.pred[n] {
                if !mark[p] {
                    mark[p] = true;
                    queue.push_back(p);
                }
            }
        }
        mark
    }

    pub fn can_reach(&self, node: ItemId, targets: &TargetSet) -> bool {
        let mut seen = vec![false; self.num_items];
        let mut stack = vec![node];
        seen[node] = true;
        while let Some(n) = stack.pop() {
            if targets.contains(n) {
                return true;
            }
            for &m in &self.succ[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        false
    }

    /// Candidate items around a central focus.
    ///
    /// Starts from the focus and its successors within `k - 1` hops, then
    /// adds every predecessor within `k - 1` hops together with that
    /// predecessor's direct neighbours (successors and predecessors).
    /// Candidates that have no path into `targets` are dropped; the result
    /// may be empty.
    pub fn cognitive_navigation(
        &self,
        focus: ItemId,
        targets: &TargetSet,
        k: usize,
    ) -> BTreeSet<ItemId> {
        let radius = k.saturating_sub(1);
        let mut candidates = BTreeSet::from([focus]);
        candidates.extend(self.successors_within(focus, radius));
        let mut queue: VecDeque<ItemId> =
            self.predecessors_within(focus, radius).into_iter().collect();
        while let Some(q) = queue.pop_front() {
            candidates.insert(q);
            candidates.extend(self.succ[q].iter().copied());
            candidates.extend(self.pred[q].iter().copied());
        }
        let reach = self.reaches_targets(targets);
        candidates.retain(|&d| reach[d]);
        candidates
    }

    /// Lowest-id node without predecessors that can reach the targets.
    pub fn fallback_root(&self, targets: &TargetSet) -> Option<ItemId> {
        let reach = self.reaches_targets(targets);
        (0..self.num_items).find(|&n| self.pred[n].is_empty() && reach[n])
    }

    /// Runs [`cognitive_navigation`](Self::cognitive_navigation) and, when it
    /// yields nothing (or there is no focus yet), re-centres on
    /// [`fallback_root`](Self::fallback_root). Returns the focus actually used
    /// together with the candidates.
    pub fn navigate(
        &self,
        focus: Option<ItemId>,
        targets: &TargetSet,
        k: usize,
    ) -> Result<(ItemId, BTreeSet<ItemId>)> {
        if let Some(f) = focus {
            let found = self.cognitive_navigation(f, targets, k);
            if !found.is_empty() {
                return Ok((f, found));
            }
        }
        let root = self.fallback_root(targets).ok_or(Error::EmptyCandidates)?;
        let found = self.cognitive_navigation(root, targets, k);
        if found.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok((root, found))
    }

    /// Kahn's algorithm with ascending-id tie-break.
    pub fn topological_order(&self) -> Result<Vec<ItemId>> {
        let mut indegree: Vec<usize> = self.pred.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<ItemId>> = (0..self.num_items)
            .filter(|&n| indegree[n] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.num_items);
        while let Some(Reverse(n)) = ready.pop() {
            order.push(n);
            for &m in &self.succ[n] {
                indegree[m] -= 1;
                if indegree[m] == 0 {
                    ready.push(Reverse(m));
                }
            }
        }
        if order.len() != self.num_items {
            let stuck = (0..self.num_items)
                .find(|&n| indegree[n] > 0)
                .unwrap_or_default();
            return Err(Error::Cycle(stuck));
        }
        Ok(order)
    }

    /// Longest-path depth of every node (roots have depth 0).
    pub fn depths(&self) -> Vec<usize> {
        let order = self
            .topological_order()
            .expect("PrereqGraph is acyclic by construction");
        let mut depth = vec![0usize; self.num_items];
        for n in order {
            for &m in &self.succ[n] {
                depth[m] = depth[m].max(depth[n] + 1);
            }
        }
        depth
    }

    /// Serializes to the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("items={}\n", self.num_items);
        for &(i, j) in &self.edges {
            out.push_str(&format!("{i},{j}\n"));
        }
        out
    }
}

/// Parses the edge-list text format: one `src,dst` pair per line, `#`
/// comments, and an optional `items=<M>` header. Without the header the item
/// count is one more than the largest id seen.
pub fn parse_edge_list(text: &str) -> Result<DiGraph> {
    let mut declared = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("items=") {
            let m = rest
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(line_no, format!("bad item count: {e}")))?;
            declared = Some(m);
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(line_no, format!("expected `src,dst`, got `{line}`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<ItemId>()
                .map_err(|e| Error::parse(line_no, format!("bad item id `{}`: {e}", s.trim())))
        };
        edges.push((parse(a)?, parse(b)?));
    }
    let inferred = edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
    let num_items = declared.unwrap_or(inferred);
    load_graph(&edges, num_items)
}

/// The ten-item, twelve-edge prerequisite graph used by the default KSS
/// environment.
pub fn default_kss_graph() -> PrereqGraph {
    const EDGES: [(ItemId, ItemId); 12] = [
        (0, 1),
        (0, 2),
        (1, 3),
        (2, 3),
        (1, 4),
        (3, 5),
        (4, 5),
        (2, 6),
        (6, 7),
        (5, 8),
        (7, 8),
        (8, 9),
    ];
    PrereqGraph::from_edges(10, &EDGES).expect("default graph is a DAG")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(n: usize) -> PrereqGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        PrereqGraph::from_edges(n, &edges).unwrap()
    }

    fn targets(items: &[ItemId]) -> TargetSet {
        TargetSet::new(items.iter().copied()).unwrap()
    }

    fn set(items: &[ItemId]) -> BTreeSet<ItemId> {
        items.iter().copied().collect()
    }

    #[test]
    fn load_dedups_and_rejects_bad_edges() {
        let g = load_graph(&[(0, 1), (1, 2)], 3).unwrap();
        assert_eq!(g.num_items(), 3);
        assert_eq!(g.edges().len(), 2);

        let g = load_graph(&[(0, 1), (0, 1)], 2).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);

        assert!(matches!(load_graph(&[(0, 0)], 1), Err(Error::SelfLoop(0))));
        assert!(matches!(
            load_graph(&[(0, 3)], 3),
            Err(Error::ItemOutOfRange { item: 3, .. })
        ));
    }

    #[test]
    fn from_edges_rejects_cycles() {
        assert!(matches!(
            PrereqGraph::from_edges(2, &[(0, 1), (1, 0)]),
            Err(Error::Cycle(_))
        ));
    }

    #[test]
    fn break_two_cycle_drops_the_back_edge() {
        let raw = load_graph(&[(0, 1), (1, 0)], 2).unwrap();
        let g = break_cycles(&raw);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn break_three_cycle_keeps_two_edges() {
        let raw = load_graph(&[(0, 1), (1, 2), (2, 0)], 3).unwrap();
        let g = break_cycles(&raw);
        assert_eq!(g.edges().len(), 2);
        assert!(g.topological_order().is_ok());
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn break_cycles_is_identity_on_dags() {
        let raw = load_graph(default_kss_graph().edges(), 10).unwrap();
        assert_eq!(break_cycles(&raw), default_kss_graph());
    }

    #[test]
    fn hop_queries_on_chain() {
        let g = chain(4);
        assert_eq!(g.successors_within(0, 2), set(&[1, 2]));
        assert!(g.successors_within(0, 0).is_empty());
        assert!(g.successors_within(3, 5).is_empty());
        assert_eq!(g.predecessors_within(3, 1), set(&[2]));
        assert!(g.predecessors_within(3, 0).is_empty());
        assert!(g.predecessors_within(0, 3).is_empty());
    }

    #[test]
    fn reachability_is_reflexive() {
        let g = chain(3);
        assert!(g.can_reach(0, &targets(&[2])));
        assert!(g.can_reach(2, &targets(&[2])));
        assert!(!g.can_reach(2, &targets(&[0])));
        let g = PrereqGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(!g.can_reach(2, &targets(&[1])));
    }

    #[test]
    fn navigation_worked_example() {
        let g = PrereqGraph::from_edges(5, &[(0, 2), (1, 2), (2, 3), (3, 4)]).unwrap();
        assert_eq!(g.cognitive_navigation(2, &targets(&[4]), 2), set(&[0, 1, 2, 3]));
    }

    #[test]
    fn navigation_single_node() {
        let g = PrereqGraph::from_edges(1, &[]).unwrap();
        assert_eq!(g.cognitive_navigation(0, &targets(&[0]), 2), set(&[0]));
    }

    #[test]
    fn navigation_dead_branch_is_empty_and_falls_back() {
        // 0 -> 1 -> 2, and an isolated branch 3 -> 4.
        let g = PrereqGraph::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let t = targets(&[2]);
        assert!(g.cognitive_navigation(3, &t, 2).is_empty());
        let (focus, cands) = g.navigate(Some(3), &t, 2).unwrap();
        assert_eq!(focus, 0);
        assert_eq!(cands, set(&[0, 1]));
    }

    #[test]
    fn topological_orders() {
        assert_eq!(chain(3).topological_order().unwrap(), vec![0, 1, 2]);
        let empty = PrereqGraph::from_edges(3, &[]).unwrap();
        assert_eq!(empty.topological_order().unwrap(), vec![0, 1, 2]);
        let diamond = PrereqGraph::from_edges(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let order = diamond.topological_order().unwrap();
        assert_eq!(order.first(), Some(&0));
        assert_eq!(order.last(), Some(&3));
        let pos = |n| order.iter().position(|&x| x == n).unwrap();
        for &(i, j) in diamond.edges() {
            assert!(pos(i) < pos(j));
        }
    }

    #[test]
    fn default_graph_depths() {
        let g = default_kss_graph();
        assert_eq!(g.edges().len(), 12);
        assert_eq!(g.depths(), vec![0, 1, 1, 2, 2, 3, 2, 3, 4, 5]);
    }

    #[test]
    fn edge_list_parsing() {
        let text = "# demo\nitems=5\n0,1\n1, 2 # trailing\n\n";
        let g = parse_edge_list(text).unwrap();
        assert_eq!(g.num_items(), 5);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);

        let g = parse_edge_list("0,3\n").unwrap();
        assert_eq!(g.num_items(), 4);

        match parse_edge_list("0,1\nfoo\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let kss = default_kss_graph();
        let back = break_cycles(&parse_edge_list(&kss.to_edge_list()).unwrap());
        assert_eq!(back, kss);
    }

    fn arb_digraph() -> impl Strategy<Value = DiGraph> {
        (2usize..=15).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n), 0..=25).prop_map(move |pairs| {
                let edges: Vec<_> = pairs.into_iter().filter(|(a, b)| a != b).collect();
                load_graph(&edges, n).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn broken_graphs_are_acyclic_subsets(raw in arb_digraph()) {
            let g = break_cycles(&raw);
            prop_assert!(g.topological_order().is_ok());
            for e in g.edges() {
                prop_assert!(raw.edges().contains(e));
            }
        }

        #[test]
        fn hop_sets_are_monotone(raw in arb_digraph(), h1 in 0usize..4, extra in 0usize..4) {
            let g = break_cycles(&raw);
            for n in 0..g.num_items() {
                let small = g.successors_within(n, h1);
                let large = g.successors_within(n, h1 + extra);
                prop_assert!(small.is_subset(&large));
                prop_assert!(g.can_reach(n, &TargetSet::new([n]).unwrap()));
            }
        }

        #[test]
        fn navigation_respects_neighbourhood_and_reachability(
            raw in arb_digraph(), focus_seed in any::<usize>(), target_seed in any::<usize>(), k in 1usize..4
        ) {
            let g = break_cycles(&raw);
            let n = g.num_items();
            let focus = focus_seed % n;
            let t = TargetSet::new([target_seed % n]).unwrap();
            let out = g.cognitive_navigation(focus, &t, k);

            let mut envelope = BTreeSet::from([focus]);
            envelope.extend(g.successors_within(focus, k - 1));
            for p in g.predecessors_within(focus, k - 1) {
                envelope.insert(p);
                envelope.extend(g.successors_within(p, 1));
                envelope.extend(g.predecessors_within(p, 1));
            }
            prop_assert!(out.is_subset(&envelope));
            for d in &out {
                prop_assert!(g.can_reach(*d, &t));
            }
        }
    }
}
