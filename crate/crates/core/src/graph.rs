//! Undirected simple graph over labelled users.

use std::collections::{HashMap, VecDeque};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Immutable undirected simple graph.
///
/// Nodes are dense indices `0..n` carrying string labels; edges are stored
/// once as `(lo, hi)` with `lo < hi`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    labels: Vec<String>,
    index: HashMap<String, u32>,
    edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    adjacency: Vec<u32>,
}

impl Default for SocialGraph {
    fn default() -> Self {
        SocialGraph::from_index_edges(Vec::new(), Vec::new()).expect("empty graph is valid")
    }
}

impl SocialGraph {
    /// Builds a graph from labels and index pairs; rejects self-loops, duplicates and bad indices.
    pub fn from_index_edges(labels: Vec<String>, edges: Vec<(u32, u32)>) -> Result<Self> {
        let n = labels.len();
        let mut index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate node label `{l}`")));
            }
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a},{b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop on node {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        if norm.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate edge".into()));
        }
        Ok(Self::assemble(labels, index, norm))
    }

    /// Builds a graph from labelled pairs, collapsing duplicates and dropping self-loops.
    /// Node indices follow ascending label order.
    pub fn from_label_pairs<'a, I>(pairs: I) -> (Self, usize)
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut self_loops = 0;
        let mut raw: Vec<(&str, &str)> = Vec::new();
        for (a, b) in pairs {
            if a == b {
                self_loops += 1;
                continue;
            }
            raw.push((a, b));
        }
        let mut labels: Vec<&str> = raw.iter().flat_map(|&(a, b)| [a, b]).collect();
        labels.sort_unstable();
        labels.dedup();
        let index: HashMap<String, u32> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.to_string(), i as u32))
            .collect();
        let mut edges: Vec<(u32, u32)> = raw
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (index[a], index[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let labels = labels.into_iter().map(str::to_string).collect();
        (Self::assemble(labels, index, edges), self_loops)
    }

    fn assemble(labels: Vec<String>, index: HashMap<String, u32>, edges: Vec<(u32, u32)>) -> Self {
        let n = labels.len();
        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![0u32; offsets[n]];
        for &(a, b) in &edges {
            adjacency[fill[a as usize]] = b;
            fill[a as usize] += 1;
            adjacency[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        for i in 0..n {
            adjacency[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        SocialGraph {
            labels,
            index,
            edges,
            offsets,
            adjacency,
        }
    }

    /// Same node set, different edge set. Used by rewiring.
    pub(crate) fn with_edges(&self, edges: Vec<(u32, u32)>) -> Self {
        let mut edges: Vec<(u32, u32)> = edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        edges.sort_unstable();
        Self::assemble(self.labels.clone(), self.index.clone(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, node: u32) -> &str {
        &self.labels[node as usize]
    }

    pub fn index_of(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    /// Edges as `(lo, hi)` index pairs, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        let i = node as usize;
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, node: u32) -> usize {
        let i = node as usize;
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.labels.len())
            .map(|i| self.offsets[i + 1] - self.offsets[i])
            .collect()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// True when no self-loops and no duplicate edges exist.
    pub fn is_simple(&self) -> bool {
        self.edges.iter().all(|&(a, b)| a < b) && self.edges.windows(2).all(|w| w[0] != w[1])
    }

    /// Connected-component id per node, numbered in order of smallest member index.
    pub fn components(&self) -> Vec<u32> {
        let n = self.labels.len();
        let mut comp = vec![u32::MAX; n];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if comp[start] != u32::MAX {
                continue;
            }
            comp[start] = next;
            queue.push_back(start as u32);
            while let Some(v) = queue.pop_front() {
                for &w in self.neighbors(v) {
                    if comp[w as usize] == u32::MAX {
                        comp[w as usize] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Subgraph induced on nodes with `keep[i]`, preserving relative node order.
    pub fn induced(&self, keep: &[bool]) -> SocialGraph {
        let mut remap = vec![u32::MAX; self.labels.len()];
        let mut labels = Vec::new();
        for (i, l) in self.labels.iter().enumerate() {
            if keep[i] {
                remap[i] = labels.len() as u32;
                labels.push(l.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(a, b)| keep[a as usize] && keep[b as usize])
            .map(|&(a, b)| (remap[a as usize], remap[b as usize]))
            .collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
        // remapping is monotone, so edges stay sorted with lo < hi
        Self::assemble(labels, index, edges)
    }

    pub fn write_edge_list<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source", "target"])?;
        for &(a, b) in &self.edges {
            w.write_record([self.label(a), self.label(b)])?;
        }
        w.flush().map_err(|e| Error::io("<edge list>", e))?;
        Ok(())
    }

    pub fn read_edge_list<R: Read>(reader: R, origin: &Path) -> Result<SocialGraph> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::parse(origin, i as u64 + 2, e.to_string()))?;
            if row.len() < 2 {
                return Err(Error::parse(origin, i as u64 + 2, "expected source,target"));
            }
            pairs.push((row[0].to_string(), row[1].to_string()));
        }
        let (g, _) = SocialGraph::from_label_pairs(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())));
        Ok(g)
    }

    pub fn write_edge_list_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_edge_list(std::io::BufWriter::new(f))
    }

    pub fn read_edge_list_file(path: &Path) -> Result<SocialGraph> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edge_list(std::io::BufReader::new(f), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    #[test]
    fn rejects_non_simple_input() {
        assert!(SocialGraph::from_index_edges(labels(3), vec![(0, 0)]).is_err());
        assert!(SocialGraph::from_index_edges(labels(3), vec![(0, 1), (1, 0)]).is_err());
        assert!(SocialGraph::from_index_edges(labels(3), vec![(0, 5)]).is_err());
    }

    #[test]
    fn adjacency_and_degrees() {
        let g = SocialGraph::from_index_edges(labels(4), vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(g.degrees(), vec![1, 2, 2, 1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.has_edge(2, 1));
        assert!(!g.has_edge(0, 3));
        assert!(g.is_connected());
    }

    #[test]
    fn edge_list_round_trip() {
        let (g, _) = SocialGraph::from_label_pairs([("a", "b"), ("b", "c"), ("d", "a")]);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = SocialGraph::read_edge_list(buf.as_slice(), Path::new("g.csv")).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn induced_subgraph_keeps_order() {
        let g = SocialGraph::from_index_edges(labels(4), vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let sub = g.induced(&[true, false, true, true]);
        assert_eq!(sub.labels(), &["n0", "n2", "n3"]);
        assert_eq!(sub.edges(), &[(0, 2), (1, 2)]);
    }
}
