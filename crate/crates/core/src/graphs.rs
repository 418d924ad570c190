//! Directed graphs on `m` labeled vertices.
//!
//! Vertices are 0-based internally and 1-based in every serialized form. An
//! arc `(j, i)` means vertex `i` receives from vertex `j`. Self-arcs are
//! implicit: every vertex is its own neighbor and follower and no self-arc is
//! ever stored.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    m: usize,
    arcs: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    pub fn empty(m: usize) -> Self {
        DirectedGraph {
            m,
            arcs: BTreeSet::new(),
        }
    }

    /// Builds a graph from `(from, to)` pairs, 0-based. Self-arcs are dropped.
    pub fn from_arcs(m: usize, arcs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("graph needs at least one vertex"));
        }
        let mut g = DirectedGraph::empty(m);
        for (a, b) in arcs {
            g.add_arc(a, b)?;
        }
        Ok(g)
    }

    /// Directed cycle `0 -> 1 -> ... -> m-1 -> 0`.
    pub fn cycle(m: usize) -> Self {
        let mut g = DirectedGraph::empty(m);
        if m > 1 {
            for i in 0..m {
                g.arcs.insert((i, (i + 1) % m));
            }
        }
        g
    }

    pub fn complete(m: usize) -> Self {
        let mut g = DirectedGraph::empty(m);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    g.arcs.insert((i, j));
                }
            }
        }
        g
    }

    pub fn add_arc(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.m || to >= self.m {
            return Err(Error::invalid(format!(
                "arc {}->{} outside vertex range 1..{}",
                from + 1,
                to + 1,
                self.m
            )));
        }
        if from != to {
            self.arcs.insert((from, to));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Stored arcs, self-arcs excluded, in lexicographic order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.arcs.iter().copied()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// True for stored arcs and for every implicit self-arc.
    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        from == to || self.arcs.contains(&(from, to))
    }

    /// Vertices this vertex receives from, itself included, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.m).filter(|&j| self.has_arc(j, i)).collect()
    }

    /// Vertices that receive from this vertex, itself included, ascending.
    pub fn followers(&self, i: usize) -> Vec<usize> {
        (0..self.m).filter(|&j| self.has_arc(i, j)).collect()
    }

    pub fn neighbor_sets(&self) -> Vec<Vec<usize>> {
        (0..self.m).map(|i| self.neighbors(i)).collect()
    }

    pub fn follower_sets(&self) -> Vec<Vec<usize>> {
        (0..self.m).map(|i| self.followers(i)).collect()
    }

    /// Union of the neighbor sets of the vertices in `s`.
    pub fn neighborhood_of_set(&self, s: &[usize]) -> BTreeSet<usize> {
        s.iter().flat_map(|&i| self.neighbors(i)).collect()
    }

    pub fn union(&self, other: &DirectedGraph) -> Result<DirectedGraph> {
        if self.m != other.m {
            return Err(Error::invalid(format!(
                "union of graphs on {} and {} vertices",
                self.m, other.m
            )));
        }
        let mut g = self.clone();
        g.arcs.extend(other.arcs.iter().copied());
        Ok(g)
    }

    fn reachable_from(&self, q: usize, reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.m];
        let mut queue = VecDeque::from([q]);
        seen[q] = true;
        while let Some(v) = queue.pop_front() {
            for w in 0..self.m {
                let arc = if reverse { (w, v) } else { (v, w) };
                if !seen[w] && self.arcs.contains(&arc) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.m > 0
            && self.reachable_from(0, false).iter().all(|&b| b)
            && self.reachable_from(0, true).iter().all(|&b| b)
    }

    pub fn is_weakly_connected(&self) -> bool {
        if self.m == 0 {
            return false;
        }
        let mut undirected = self.clone();
        for &(a, b) in &self.arcs {
            undirected.arcs.insert((b, a));
        }
        undirected.reachable_from(0, false).iter().all(|&b| b)
    }

    /// Strongly connected components, each sorted, ordered by lowest label.
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.m, self.arcs.len());
        let nodes: Vec<_> = (0..self.m).map(|_| g.add_node(())).collect();
        for &(a, b) in &self.arcs {
            g.add_edge(nodes[a], nodes[b], ());
        }
        let mut comps: Vec<Vec<usize>> = petgraph::algo::tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                v.sort_unstable();
                v
            })
            .collect();
        comps.sort();
        comps
    }

    /// Breadth-first spanning tree rooted at `q` with arcs oriented away from
    /// the root; ties go to the lowest label.
    pub fn spanning_tree(&self, q: usize) -> Result<SpanningTree> {
        if q >= self.m {
            return Err(Error::invalid(format!("root {} outside 1..{}", q + 1, self.m)));
        }
        let mut parent: Vec<Option<usize>> = vec![None; self.m];
        let mut seen = vec![false; self.m];
        let mut order = vec![q];
        seen[q] = true;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for w in 0..self.m {
                if !seen[w] && self.arcs.contains(&(v, w)) {
                    seen[w] = true;
                    parent[w] = Some(v);
                    order.push(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|&b| !b) {
            return Err(Error::domain(format!(
                "vertex {} is not reachable from root {}",
                v + 1,
                q + 1
            )));
        }
        Ok(SpanningTree {
            root: q,
            parent,
            order,
        })
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            m: self.m,
            arcs: self.arcs.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            delays: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    /// `parent[i]` is `None` exactly for the root.
    pub parent: Vec<Option<usize>>,
    /// Breadth-first visiting order, root first.
    pub order: Vec<usize>,
}

impl SpanningTree {
    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.parent.len())
            .filter(|&j| self.parent[j] == Some(i))
            .collect()
    }

    /// Tree arcs `(parent, child)`.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (p, i)))
            .collect()
    }
}

/// Graph with an integer transmission delay on every arc. `delay(i, j)` is
/// the delay from `i` to `j`; self-delays are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayedGraph {
    graph: DirectedGraph,
    delays: BTreeMap<(usize, usize), usize>,
}

impl DelayedGraph {
    pub fn new(graph: DirectedGraph, delays: BTreeMap<(usize, usize), usize>) -> Result<Self> {
        for (&(a, b), &d) in &delays {
            if a == b {
                if d != 0 {
                    return Err(Error::invalid(format!("self-delay of vertex {} must be 0", a + 1)));
                }
            } else if !graph.arcs.contains(&(a, b)) {
                return Err(Error::invalid(format!(
                    "delay given for missing arc {}->{}",
                    a + 1,
                    b + 1
                )));
            }
        }
        if let Some(&(a, b)) = graph.arcs.iter().find(|arc| !delays.contains_key(arc)) {
            return Err(Error::invalid(format!("arc {}->{} has no delay", a + 1, b + 1)));
        }
        let delays = delays.into_iter().filter(|&((a, b), _)| a != b).collect();
        Ok(DelayedGraph { graph, delays })
    }

    /// Every arc gets the same delay.
    pub fn uniform(graph: DirectedGraph, d: usize) -> Self {
        let delays = graph.arcs().map(|arc| (arc, d)).collect();
        DelayedGraph { graph, delays }
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn m(&self) -> usize {
        self.graph.m
    }

    pub fn delay(&self, from: usize, to: usize) -> Option<usize> {
        if from == to {
            Some(0)
        } else {
            self.delays.get(&(from, to)).copied()
        }
    }

    /// Largest delay over the outgoing arcs of `i` (zero without any).
    pub fn max_outgoing_delay(&self, i: usize) -> usize {
        self.graph
            .followers(i)
            .into_iter()
            .filter_map(|j| self.delay(i, j))
            .max()
            .unwrap_or(0)
    }

    pub fn max_outgoing_delays(&self) -> Vec<usize> {
        (0..self.m()).map(|i| self.max_outgoing_delay(i)).collect()
    }

    pub fn to_json(&self) -> GraphJson {
        let mut j = self.graph.to_json();
        j.delays = Some(
            self.delays
                .iter()
                .map(|(&(a, b), &d)| (format!("{}->{}", a + 1, b + 1), d))
                .collect(),
        );
        j
    }
}

/// Serialized form: `{"m":3,"arcs":[[1,2],[2,3]],"delays":{"1->2":1}}` where
/// `[a, b]` is the arc from `a` to `b`, labels 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub m: usize,
    #[serde(default)]
    pub arcs: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<BTreeMap<String, usize>>,
}

fn parse_label(s: &str, m: usize) -> Result<usize> {
    let v: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad vertex label {s:?}")))?;
    if v == 0 || v > m {
        return Err(Error::invalid(format!("vertex label {v} outside 1..{m}")));
    }
    Ok(v - 1)
}

impl GraphJson {
    pub fn to_graph(&self) -> Result<DirectedGraph> {
        let mut g = DirectedGraph::from_arcs(self.m, std::iter::empty())?;
        for &[a, b] in &self.arcs {
            if a == 0 || b == 0 || a > self.m || b > self.m {
                return Err(Error::invalid(format!(
                    "arc [{a},{b}] outside vertex range 1..{}",
                    self.m
                )));
            }
            g.add_arc(a - 1, b - 1)?;
        }
        Ok(g)
    }

    /// Requires the `delays` map to cover every arc.
    pub fn to_delayed_graph(&self) -> Result<DelayedGraph> {
        let g = self.to_graph()?;
        let raw = self
            .delays
            .as_ref()
            .ok_or_else(|| Error::invalid("graph has no delays"))?;
        let mut delays = BTreeMap::new();
        for (key, &d) in raw {
            let (a, b) = key
                .split_once("->")
                .ok_or_else(|| Error::invalid(format!("delay key {key:?} is not of the form \"i->j\"")))?;
            delays.insert((parse_label(a, self.m)?, parse_label(b, self.m)?), d);
        }
        DelayedGraph::new(g, delays)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: usize, arcs: &[(usize, usize)]) -> DirectedGraph {
        DirectedGraph::from_arcs(m, arcs.iter().map(|&(a, b)| (a - 1, b - 1))).unwrap()
    }

    #[test]
    fn connectivity() {
        let c = g(3, &[(1, 2), (2, 3), (3, 1)]);
        assert!(c.is_strongly_connected());
        assert!(c.is_weakly_connected());
        assert!(DirectedGraph::empty(1).is_strongly_connected());
        let p = g(3, &[(1, 2), (2, 3)]);
        assert!(!p.is_strongly_connected());
        assert!(p.is_weakly_connected());
        assert!(!DirectedGraph::empty(2).is_weakly_connected());
    }

    #[test]
    fn neighbor_and_follower_sets() {
        let c = g(3, &[(1, 2), (2, 3), (3, 1)]);
        assert_eq!(c.neighbors(1), vec![0, 1]);
        assert_eq!(DirectedGraph::empty(3).neighbors(2), vec![2]);
        let path = g(3, &[(1, 2), (2, 1), (2, 3), (3, 2)]);
        assert_eq!(path.followers(1), vec![0, 1, 2]);
        assert_eq!(
            c.neighborhood_of_set(&[1]).into_iter().collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert!(c.neighborhood_of_set(&[]).is_empty());
        assert_eq!(c.neighborhood_of_set(&[0, 1, 2]).len(), 3);
    }

    #[test]
    fn spanning_trees() {
        let c = g(3, &[(1, 2), (2, 3), (3, 1)]);
        let t = c.spanning_tree(0).unwrap();
        assert_eq!(t.parent, vec![None, Some(0), Some(1)]);
        assert_eq!(t.children(0), vec![1]);
        let two = g(2, &[(1, 2), (2, 1)]);
        assert_eq!(two.spanning_tree(1).unwrap().parent, vec![Some(1), None]);
        let star = g(4, &[(1, 2), (1, 3), (1, 4)]);
        assert_eq!(star.spanning_tree(0).unwrap().children(0), vec![1, 2, 3]);
        assert!(matches!(star.spanning_tree(1), Err(Error::Domain(_))));
    }

    #[test]
    fn unions() {
        let a = g(2, &[(1, 2)]);
        assert_eq!(a.union(&DirectedGraph::empty(2)).unwrap(), a);
        let u = a.union(&g(2, &[(2, 1)])).unwrap();
        assert!(u.is_strongly_connected());
        assert!(a.union(&DirectedGraph::empty(3)).is_err());
    }

    #[test]
    fn json_round_trip_with_delays() {
        let text = r#"{"m":3,"arcs":[[1,2],[2,1],[2,3],[3,2]],
            "delays":{"1->2":1,"2->1":0,"2->3":2,"3->2":2}}"#;
        let gj: GraphJson = serde_json::from_str(text).unwrap();
        let dg = gj.to_delayed_graph().unwrap();
        assert_eq!(dg.max_outgoing_delays(), vec![1, 2, 2]);
        assert_eq!(dg.delay(0, 1), Some(1));
        let back = dg.to_json();
        assert_eq!(back.to_delayed_graph().unwrap(), dg);
    }

    #[test]
    fn json_rejects_bad_input() {
        let bad: GraphJson = serde_json::from_str(r#"{"m":2,"arcs":[[1,3]]}"#).unwrap();
        assert!(bad.to_graph().is_err());
        let missing: GraphJson =
            serde_json::from_str(r#"{"m":2,"arcs":[[1,2]],"delays":{}}"#).unwrap();
        assert!(missing.to_delayed_graph().is_err());
    }
}
