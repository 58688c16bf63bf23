use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seeding::rng;

/// Undirected connected communication graph over agents `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkTopology {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl NetworkTopology {
    /// Build from an edge list; duplicate and reversed edges are merged.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("network has no nodes".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidTopology(format!("self-loop at node {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({u}, {v}) outside 0..{n}"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let topo = Self {
            n,
            edges,
            neighbors,
        };
        if !topo.is_connected() {
            return Err(Error::InvalidTopology("graph is disconnected".into()));
        }
        Ok(topo)
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn ring(n: usize) -> Result<Self> {
        let extra = (n > 2).then_some((n - 1, 0));
        Self::new(n, (1..n).map(|i| (i - 1, i)).chain(extra))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Erdos-Renyi graph with edge probability `p`, redrawn until connected.
    /// `p = None` uses `min(1, 2 ln n / n)`, twice the connectivity threshold.
    pub fn erdos_renyi(n: usize, p: Option<f64>, seed: u64) -> Result<Self> {
        let p = p.unwrap_or_else(|| {
            if n <= 2 {
                1.0
            } else {
                (2.0 * (n as f64).ln() / n as f64).min(1.0)
            }
        });
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "edge probability must lie in (0, 1], got {p}"
            )));
        }
        let mut r = rng(seed);
        for _ in 0..10_000 {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if r.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            match Self::new(n, edges) {
                Ok(t) => return Ok(t),
                Err(Error::InvalidTopology(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::InvalidTopology(format!(
            "no connected graph drawn with p = {p}"
        )))
    }

    /// Read `u,v` rows (zero-based labels, optional header). The node count is
    /// `n` when given, otherwise one more than the largest label.
    pub fn read_edge_csv<R: std::io::Read>(reader: R, n: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut edges = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| rec.get(k).and_then(|s| s.parse::<usize>().ok());
            match (rec.len(), parse(0), parse(1)) {
                (2, Some(u), Some(v)) => edges.push((u, v)),
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: "expected two nonnegative integer node labels".into(),
                    })
                }
            }
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(1));
        Self::new(n, edges)
    }

    pub fn load_edge_csv(path: &Path, n: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edge_csv(file, n)
    }

    /// Relabel node `i` as `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidInput(
                "permutation length differs from node count".into(),
            ));
        }
        Self::new(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}
