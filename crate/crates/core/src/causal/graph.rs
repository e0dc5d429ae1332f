use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed acyclic graph over named nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        Dag {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            parents: vec![Vec::new(); names.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].contains(&from)
    }

    /// Add `from -> to`; rejects self loops and edges that would close a cycle.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if from == to || self.reaches(to, from) {
            return Err(Error::InvalidConfig(format!(
                "edge {} -> {} would create a cycle",
                self.names[from], self.names[to]
            )));
        }
        if !self.parents[to].contains(&from) {
            self.parents[to].push(from);
            self.parents[to].sort_unstable();
        }
        Ok(())
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; self.len()];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend((0..self.len()).filter(|&c| self.parents[c].contains(&n)));
        }
        false
    }

    /// Nodes ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut placed = vec![false; self.len()];
        while order.len() < self.len() {
            for n in 0..self.len() {
                if !placed[n] && self.parents[n].iter().all(|&p| placed[p]) {
                    placed[n] = true;
                    order.push(n);
                }
            }
        }
        order
    }

    /// Unordered adjacent pairs `(a, b)` with `a < b`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                out.insert((p.min(c), p.max(c)));
            }
        }
        out
    }

    /// Skeleton plus an edge between every pair of parents sharing a child.
    pub fn moral_edges(&self) -> BTreeSet<(usize, usize)> {
        let mut out = self.skeleton();
        for ps in &self.parents {
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    out.insert((a.min(b), a.max(b)));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collider_moralizes() {
        let mut g = Dag::new(&["a", "b", "c"]);
        g.add_edge(0, 2).unwrap();
        g.add_edge(1, 2).unwrap();
        assert_eq!(g.skeleton().len(), 2);
        assert!(g.moral_edges().contains(&(0, 1)));
    }

    #[test]
    fn cycles_are_rejected() {
        let mut g = Dag::new(&["a", "b", "c"]);
        g.add_edge(0, 1).unwrap();
        g.add_edge(1, 2).unwrap();
        assert!(g.add_edge(2, 0).is_err());
        assert!(g.add_edge(1, 1).is_err());
        assert_eq!(g.topological_order(), vec![0, 1, 2]);
    }
}
