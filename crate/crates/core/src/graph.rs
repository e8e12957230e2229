//! Causal graphs over coordinate processes.
//!
//! Nodes are labelled `1..=n`. An edge `i → j` means that process `i` enters
//! the dynamics of process `j` directly (some lag-matrix or kernel-integral
//! entry `Φ_ji` is nonzero). Self-loops are never stored: normalization
//! absorbs self-effects, so they carry no information for identification.
//!
//! Both [`CausalGraph::parents`] and [`CausalGraph::descendants`] are
//! reflexive: the query set is always part of the answer.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of 1-based node labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeSet(BTreeSet<usize>);

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.contains(&node)
    }

    pub fn insert(&mut self, node: usize) -> bool {
        self.0.insert(node)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.intersection(&other.0).copied().collect())
    }

    /// 0-based positions, in ascending label order.
    pub fn positions(&self) -> Vec<usize> {
        self.0.iter().map(|&v| v - 1).collect()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.iter().next_back().copied()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        NodeSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[usize; N]> for NodeSet {
    fn from(nodes: [usize; N]) -> Self {
        nodes.into_iter().collect()
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CausalGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph from `(from, to)` pairs. Self-loops are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from != to {
            self.edges.insert((from, to));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> NodeSet {
        (1..=self.n).collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn reversed(&self) -> CausalGraph {
        CausalGraph {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| (j, i)).collect(),
        }
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v == 0 || v > self.n {
            Err(Error::Domain(format!(
                "node {v} outside 1..={} of the graph",
                self.n
            )))
        } else {
            Ok(())
        }
    }

    fn check_set(&self, s: &NodeSet) -> Result<()> {
        s.iter().try_for_each(|v| self.check_node(v))
    }

    /// Direct successors of `s` (not reflexive).
    pub fn children(&self, s: &NodeSet) -> Result<NodeSet> {
        self.check_set(s)?;
        Ok(self
            .edges
            .iter()
            .filter(|(i, _)| s.contains(*i))
            .map(|&(_, j)| j)
            .collect())
    }

    /// All nodes reachable from `s` by directed paths, `s` included.
    pub fn descendants(&self, s: &NodeSet) -> Result<NodeSet> {
        self.check_set(s)?;
        let mut adj = vec![Vec::new(); self.n + 1];
        for &(i, j) in &self.edges {
            adj[i].push(j);
        }
        let mut seen = s.clone();
        let mut queue: VecDeque<usize> = s.iter().collect();
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        Ok(seen)
    }

    /// `{i : i → j for some j ∈ s} ∪ s`.
    pub fn parents(&self, s: &NodeSet) -> Result<NodeSet> {
        self.check_set(s)?;
        let direct: NodeSet = self
            .edges
            .iter()
            .filter(|(_, j)| s.contains(*j))
            .map(|&(i, _)| i)
            .collect();
        Ok(direct.union(s))
    }

    /// True iff no edge enters `s` from outside; edges within `s` are allowed.
    pub fn is_exogenous(&self, s: &NodeSet) -> Result<bool> {
        self.check_set(s)?;
        Ok(!self
            .edges
            .iter()
            .any(|&(i, j)| !s.contains(i) && s.contains(j)))
    }
}

/// Outcome of the graph-level instrument conditions.
///
/// The rank condition on `C_AI` cannot be decided from the graph; it is
/// checked numerically by the estimators in [`crate::iv`], and
/// `rank_condition` stays `None` until a caller fills it in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub exogenous: bool,
    pub descendant_parent: bool,
    pub rank_condition: Option<bool>,
}

impl ValidityReport {
    /// Conjunction of the graph-level checks.
    pub fn graph_valid(&self) -> bool {
        self.exogenous && self.descendant_parent
    }

    /// Graph checks plus the rank check when it has been run.
    pub fn valid(&self) -> bool {
        self.graph_valid() && self.rank_condition.unwrap_or(true)
    }

    /// Name of the first layer that failed, if any.
    pub fn failed_layer(&self) -> Option<&'static str> {
        if !self.exogenous {
            Some("exogeneity")
        } else if !self.descendant_parent {
            Some("descendant-parent")
        } else if self.rank_condition == Some(false) {
            Some("rank")
        } else {
            None
        }
    }
}

pub(crate) fn check_disjoint_nonempty(iv: &NodeSet, a: &NodeSet, b: &NodeSet) -> Result<()> {
    for (name, s) in [("instrument", iv), ("treatment", a), ("outcome", b)] {
        if s.is_empty() {
            return Err(Error::Argument(format!("{name} set is empty")));
        }
    }
    if !iv.is_disjoint(a) || !iv.is_disjoint(b) || !a.is_disjoint(b) {
        return Err(Error::Argument(format!(
            "node sets must be disjoint: I={iv}, A={a}, B={b}"
        )));
    }
    Ok(())
}

/// Checks that `iv` is exogenous and that `de(iv) ∩ pa(b) ⊆ a ∪ b`.
pub fn check_instrument(
    g: &CausalGraph,
    iv: &NodeSet,
    a: &NodeSet,
    b: &NodeSet,
) -> Result<ValidityReport> {
    check_disjoint_nonempty(iv, a, b)?;
    g.check_set(a)?;
    let exogenous = g.is_exogenous(iv)?;
    let de = g.descendants(iv)?;
    let pa = g.parents(b)?;
    let descendant_parent = de.intersection(&pa).is_subset(&a.union(b));
    Ok(ValidityReport {
        exogenous,
        descendant_parent,
        rank_condition: None,
    })
}
