use std::collections::{HashMap, HashSet};

use super::events::CommEvent;
use crate::graph::SocialGraph;

/// Result of collapsing events into an undirected graph.
#[derive(Debug, Clone)]
pub struct GraphBuild {
    pub graph: SocialGraph,
    pub self_loops: usize,
}

/// Undirected simple graph with an edge between any two users who interacted.
pub fn build_graph(events: &[CommEvent]) -> GraphBuild {
    let (graph, self_loops) =
        SocialGraph::from_label_pairs(events.iter().map(|e| (e.caller.as_str(), e.callee.as_str())));
    if self_loops > 0 {
        log::info!("dropped {self_loops} self-interactions");
    }
    GraphBuild { graph, self_loops }
}

/// Recursively strips users without both an outgoing and an incoming event
/// among the surviving users, then returns the undirected graph on the survivors.
pub fn filter_active_core(events: &[CommEvent]) -> SocialGraph {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut names: Vec<&str> = Vec::new();
    for e in events {
        for s in [e.caller.as_str(), e.callee.as_str()] {
            if !ids.contains_key(s) {
                ids.insert(s, names.len() as u32);
                names.push(s);
            }
        }
    }
    let n = names.len();
    let mut arcs: HashSet<(u32, u32)> = HashSet::new();
    for e in events {
        let (a, b) = (ids[e.caller.as_str()], ids[e.callee.as_str()]);
        if a != b {
            arcs.insert((a, b));
        }
    }
    let mut out_nb: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut in_nb: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(a, b) in &arcs {
        out_nb[a as usize].push(b);
        in_nb[b as usize].push(a);
    }
    let mut out_deg: Vec<usize> = out_nb.iter().map(Vec::len).collect();
    let mut in_deg: Vec<usize> = in_nb.iter().map(Vec::len).collect();
    let mut alive = vec![true; n];
    let mut stack: Vec<u32> = (0..n as u32)
        .filter(|&v| out_deg[v as usize] == 0 || in_deg[v as usize] == 0)
        .collect();
    while let Some(v) = stack.pop() {
        let vi = v as usize;
        if !alive[vi] {
            continue;
        }
        alive[vi] = false;
        for &w in &out_nb[vi] {
            let wi = w as usize;
            if alive[wi] {
                in_deg[wi] -= 1;
                if in_deg[wi] == 0 {
                    stack.push(w);
                }
            }
        }
        for &w in &in_nb[vi] {
            let wi = w as usize;
            if alive[wi] {
                out_deg[wi] -= 1;
                if out_deg[wi] == 0 {
                    stack.push(w);
                }
            }
        }
    }
    let pairs = arcs
        .iter()
        .filter(|&&(a, b)| alive[a as usize] && alive[b as usize])
        .map(|&(a, b)| (names[a as usize], names[b as usize]));
    SocialGraph::from_label_pairs(pairs).0
}

/// Subgraph induced on the largest connected component. Ties go to the
/// component holding the smallest node label.
pub fn largest_component(g: &SocialGraph) -> SocialGraph {
    if g.is_empty() {
        return SocialGraph::default();
    }
    let comp = g.components();
    let k = comp.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut size = vec![0usize; k];
    let mut min_label: Vec<Option<&str>> = vec![None; k];
    for (i, &c) in comp.iter().enumerate() {
        let c = c as usize;
        size[c] += 1;
        let l = g.label(i as u32);
        if min_label[c].is_none_or(|m| l < m) {
            min_label[c] = Some(l);
        }
    }
    let best = (0..k)
        .max_by(|&a, &b| size[a].cmp(&size[b]).then_with(|| min_label[b].cmp(&min_label[a])))
        .expect("non-empty graph has a component");
    let keep: Vec<bool> = comp.iter().map(|&c| c as usize == best).collect();
    g.induced(&keep)
}
