//! Generation and queries for the undirected connected graphs walks move on.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;

const CONNECTIVITY_RETRY_CAP: u32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Complete,
    RandomRegular,
    ErdosRenyi,
    PowerLaw,
}

/// Parameters for one graph instance. `degree` applies to `random_regular`,
/// `edge_prob` to `erdos_renyi`, `attachment` (edges added per new node) to
/// `power_law` preferential attachment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub family: GraphFamily,
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<u32>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph spec: {0}")]
    InvalidSpec(String),
    #[error("could not sample a connected graph in {0} attempts")]
    ConnectivityFailure(u32),
}

impl GraphSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.n < 2 {
            return Err(GraphError::InvalidSpec(format!("n = {} < 2", self.n)));
        }
        match self.family {
            GraphFamily::Complete => {}
            GraphFamily::RandomRegular => {
                let d = self
                    .degree
                    .ok_or_else(|| GraphError::InvalidSpec("random_regular needs degree".into()))?;
                if d == 0 || d >= self.n {
                    return Err(GraphError::InvalidSpec(format!(
                        "degree {d} out of range for n = {}",
                        self.n
                    )));
                }
                if (self.n as u64 * d as u64) % 2 != 0 {
                    return Err(GraphError::InvalidSpec(format!(
                        "n * degree = {} * {d} must be even",
                        self.n
                    )));
                }
            }
            GraphFamily::ErdosRenyi => {
                let p = self
                    .edge_prob
                    .ok_or_else(|| GraphError::InvalidSpec("erdos_renyi needs edge_prob".into()))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(GraphError::InvalidSpec(format!("edge_prob {p} not in (0,1]")));
                }
            }
            GraphFamily::PowerLaw => {
                let m = self
                    .attachment
                    .ok_or_else(|| GraphError::InvalidSpec("power_law needs attachment".into()))?;
                if m == 0 || m >= self.n {
                    return Err(GraphError::InvalidSpec(format!(
                        "attachment {m} out of range for n = {}",
                        self.n
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Immutable undirected connected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<u32>>,
}

impl Graph {
    pub fn n(&self) -> u32 {
        self.adjacency.len() as u32
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    pub fn degree(&self, node: u32) -> u32 {
        self.adjacency[node as usize].len() as u32
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    /// Writes the edge list as CSV `src,dst` (each undirected edge once).
    pub fn write_edge_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "src,dst")?;
        for (i, adj) in self.adjacency.iter().enumerate() {
            for &j in adj {
                if (i as u32) < j {
                    writeln!(w, "{i},{j}")?;
                }
            }
        }
        Ok(())
    }
}

/// Samples a graph for `spec`, resampling with a derived seed until the
/// instance is connected (cap 1000 attempts).
pub fn generate(spec: &GraphSpec) -> Result<Graph, GraphError> {
    spec.validate()?;
    for attempt in 0..CONNECTIVITY_RETRY_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, attempt as u64));
        let adjacency = match spec.family {
            GraphFamily::Complete => complete(spec.n),
            GraphFamily::RandomRegular => {
                match random_regular(spec.n, spec.degree.unwrap(), &mut rng) {
                    Some(a) => a,
                    None => continue, // failed stub matching, resample
                }
            }
            GraphFamily::ErdosRenyi => erdos_renyi(spec.n, spec.edge_prob.unwrap(), &mut rng),
            GraphFamily::PowerLaw => preferential_attachment(spec.n, spec.attachment.unwrap(), &mut rng),
        };
        let graph = Graph { adjacency };
        if is_connected(&graph) {
            debug_assert!(is_simple_symmetric(&graph));
            return Ok(graph);
        }
    }
    Err(GraphError::ConnectivityFailure(CONNECTIVITY_RETRY_CAP))
}

/// One uniform step of a simple random walk from `node`.
pub fn uniform_neighbor<R: Rng + ?Sized>(g: &Graph, node: u32, rng: &mut R) -> u32 {
    let adj = g.neighbors(node);
    adj[rng.random_range(0..adj.len())]
}

fn complete(n: u32) -> Vec<Vec<u32>> {
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i).collect())
        .collect()
}

/// Configuration-model sampling with pairwise stub matching: draw two random
/// stubs, accept unless they form a self-loop or duplicate edge, and give up
/// (None, caller resamples) when no progress is possible. Rejecting only the
/// offending pair keeps the success probability high where whole-graph
/// rejection is hopeless for d beyond ~3.
fn random_regular(n: u32, d: u32, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<u32>>> {
    let mut stubs: Vec<u32> = (0..n).flat_map(|i| std::iter::repeat(i).take(d as usize)).collect();
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut rejects: u64 = 0;
    let reject_cap = 200 * stubs.len() as u64;
    while !stubs.is_empty() {
        let i = rng.random_range(0..stubs.len());
        let mut j = rng.random_range(0..stubs.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (stubs[i].min(stubs[j]), stubs[i].max(stubs[j]));
        if a == b || edges.contains(&(a, b)) {
            rejects += 1;
            if rejects > reject_cap {
                return None; // stuck tail (e.g. only duplicate pairs remain)
            }
            continue;
        }
        edges.insert((a, b));
        let (hi, lo) = (i.max(j), i.min(j));
        stubs.swap_remove(hi);
        stubs.swap_remove(lo);
    }
    Some(adjacency_from_edges(n, edges.iter().copied()))
}

fn erdos_renyi(n: u32, p: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    adjacency_from_edges(n, edges.into_iter())
}

/// Barabási–Albert style growth: start from a clique on `m + 1` nodes, then
/// attach each new node to `m` distinct existing nodes chosen with
/// probability proportional to degree.
fn preferential_attachment(n: u32, m: u32, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    let m = m as usize;
    let seed_nodes = (m + 1).min(n as usize);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    // endpoint pool: each node appears once per incident edge
    let mut pool: Vec<u32> = Vec::new();
    for i in 0..seed_nodes as u32 {
        for j in (i + 1)..seed_nodes as u32 {
            edges.push((i, j));
            pool.push(i);
            pool.push(j);
        }
    }
    for v in seed_nodes as u32..n {
        let mut targets: BTreeSet<u32> = BTreeSet::new();
        while targets.len() < m {
            let t = pool[rng.random_range(0..pool.len())];
            targets.insert(t);
        }
        for t in targets {
            edges.push((t, v));
            pool.push(t);
            pool.push(v);
        }
    }
    adjacency_from_edges(n, edges.into_iter())
}

fn adjacency_from_edges(n: u32, edges: impl Iterator<Item = (u32, u32)>) -> Vec<Vec<u32>> {
    let mut adjacency = vec![Vec::new(); n as usize];
    for (a, b) in edges {
        adjacency[a as usize].push(b);
        adjacency[b as usize].push(a);
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    adjacency
}

fn is_connected(g: &Graph) -> bool {
    let n = g.n() as usize;
    if g.adjacency.iter().any(|a| a.is_empty()) {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0u32];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in g.neighbors(v) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

fn is_simple_symmetric(g: &Graph) -> bool {
    for (i, adj) in g.adjacency.iter().enumerate() {
        let mut prev = None;
        for &j in adj {
            if j as usize == i || prev == Some(j) {
                return false;
            }
            if !g.adjacency[j as usize].contains(&(i as u32)) {
                return false;
            }
            prev = Some(j);
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(family: GraphFamily, n: u32, seed: u64) -> GraphSpec {
        GraphSpec {
            family,
            n,
            degree: Some(8),
            edge_prob: Some(0.2),
            attachment: Some(3),
            seed,
        }
    }

    #[test]
    fn complete_k4_has_six_edges_degree_three() {
        let g = generate(&spec(GraphFamily::Complete, 4, 0)).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!((0..4).all(|i| g.degree(i) == 3));
    }

    #[test]
    fn random_regular_100_8() {
        let g = generate(&spec(GraphFamily::RandomRegular, 100, 1)).unwrap();
        assert!((0..100).all(|i| g.degree(i) == 8));
        assert!(is_connected(&g));
        assert!(is_simple_symmetric(&g));
    }

    #[test]
    fn erdos_renyi_connected_by_bfs() {
        let g = generate(&GraphSpec {
            family: GraphFamily::ErdosRenyi,
            n: 50,
            degree: None,
            edge_prob: Some(0.2),
            attachment: None,
            seed: 1,
        })
        .unwrap();
        assert_eq!(g.n(), 50);
        assert!(is_connected(&g));
    }

    #[test]
    fn power_law_connected_simple() {
        let g = generate(&spec(GraphFamily::PowerLaw, 100, 3)).unwrap();
        assert!(is_connected(&g));
        assert!(is_simple_symmetric(&g));
        // attachment 3: every late node has degree >= 3
        assert!((0..100).all(|i| g.degree(i) >= 3));
    }

    #[test]
    fn generation_is_deterministic() {
        for family in [
            GraphFamily::RandomRegular,
            GraphFamily::ErdosRenyi,
            GraphFamily::PowerLaw,
        ] {
            let a = generate(&spec(family, 60, 99)).unwrap();
            let b = generate(&spec(family, 60, 99)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&spec(GraphFamily::Complete, 1, 0)).is_err());
        let mut s = spec(GraphFamily::RandomRegular, 5, 0);
        s.degree = Some(3); // n*d odd
        assert!(generate(&s).is_err());
        let mut s = spec(GraphFamily::ErdosRenyi, 10, 0);
        s.edge_prob = Some(0.0);
        assert!(generate(&s).is_err());
    }

    #[test]
    fn tiny_edge_prob_exhausts_retries() {
        let s = GraphSpec {
            family: GraphFamily::ErdosRenyi,
            n: 40,
            degree: None,
            edge_prob: Some(1e-6),
            attachment: None,
            seed: 0,
        };
        assert!(matches!(generate(&s), Err(GraphError::ConnectivityFailure(_))));
    }

    #[test]
    fn single_neighbor_always_chosen() {
        let g = Graph {
            adjacency: vec![vec![1], vec![0]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(uniform_neighbor(&g, 0, &mut rng), 1);
        }
    }

    #[test]
    fn k3_neighbor_frequency() {
        let g = generate(&spec(GraphFamily::Complete, 3, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let ones = (0..n)
            .filter(|_| uniform_neighbor(&g, 0, &mut rng) == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((0.498..=0.502).contains(&freq), "freq {freq}");
    }

    #[test]
    fn star_leaf_frequencies() {
        // star: center 0, leaves 1..=5
        let mut adjacency = vec![vec![1, 2, 3, 4, 5]];
        for _ in 0..5 {
            adjacency.push(vec![0]);
        }
        let g = Graph { adjacency };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000usize;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[uniform_neighbor(&g, 0, &mut rng) as usize] += 1;
        }
        for leaf in 1..=5 {
            let freq = counts[leaf] as f64 / n as f64;
            assert!((freq - 0.2).abs() < 0.005, "leaf {leaf} freq {freq}");
        }
    }

    #[test]
    fn uniform_neighbor_binomial_tolerance() {
        // max deviation over neighbors within 4 sigma of Binomial(N, 1/d)
        let g = generate(&spec(GraphFamily::RandomRegular, 20, 5)).unwrap();
        let node = 0u32;
        let d = g.degree(node) as usize;
        let n = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0usize; d];
        for _ in 0..n {
            let pick = uniform_neighbor(&g, node, &mut rng);
            let idx = g.neighbors(node).iter().position(|&x| x == pick).unwrap();
            counts[idx] += 1;
        }
        let p = 1.0 / d as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn edge_csv_roundtrip() {
        let g = generate(&spec(GraphFamily::Complete, 4, 0)).unwrap();
        let mut buf = Vec::new();
        g.write_edge_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(text.starts_with("src,dst\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn generated_graphs_satisfy_invariants(
            n in 4u32..40,
            seed in any::<u64>(),
            fam in 0usize..3,
        ) {
            let family = [GraphFamily::Complete, GraphFamily::ErdosRenyi, GraphFamily::PowerLaw][fam];
            let s = GraphSpec {
                family,
                n,
                degree: None,
                edge_prob: Some(0.4),
                attachment: Some(2.min(n - 1)),
                seed,
            };
            if let Ok(g) = generate(&s) {
                prop_assert!(is_connected(&g));
                prop_assert!(is_simple_symmetric(&g));
                prop_assert!((0..n).all(|i| g.degree(i) >= 1));
            }
        }
    }
}
