//! Independent oracles shared by integration and acceptance tests.

#![allow(dead_code)]

use cohortforge::dag::{CausalDag, Node, NodeKind};
use rand::Rng;

/// Random DAG on `n` nodes named v0..: a random order with each forward
/// pair joined with probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> CausalDag {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let nodes = (0..n).map(|i| Node::new(format!("v{i}"), NodeKind::Auxiliary, true, "")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((format!("v{}", order[i]), format!("v{}", order[j])));
            }
        }
    }
    CausalDag { nodes, edges, conditioned: Default::default() }
}

pub struct Adjacency {
    pub n: usize,
    pub edge: Vec<Vec<bool>>,
}

impl Adjacency {
    pub fn new(dag: &CausalDag) -> Self {
        let n = dag.nodes.len();
        let at = |id: &str| dag.nodes.iter().position(|x| x.id == id).unwrap();
        let mut edge = vec![vec![false; n]; n];
        for (a, b) in &dag.edges {
            edge[at(a)][at(b)] = true;
        }
        Adjacency { n, edge }
    }

    /// Nodes reachable from `v` along directed edges, `v` included.
    pub fn descendants(&self, v: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if !seen[u] {
                seen[u] = true;
                stack.extend((0..self.n).filter(|&w| self.edge[u][w]));
            }
        }
        seen
    }

    /// All simple paths from `a` to `b` in the skeleton.
    pub fn simple_paths(&self, a: usize, b: usize) -> Vec<Vec<usize>> {
        fn go(adj: &Adjacency, cur: &mut Vec<usize>, b: usize, out: &mut Vec<Vec<usize>>) {
            let v = *cur.last().unwrap();
            if v == b {
                out.push(cur.clone());
                return;
            }
            for w in 0..adj.n {
                if (adj.edge[v][w] || adj.edge[w][v]) && !cur.contains(&w) {
                    cur.push(w);
                    go(adj, cur, b, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut vec![a], b, &mut out);
        out
    }

    /// A path is blocked when a non-collider is conditioned on, or a collider
    /// has neither itself nor any descendant conditioned on.
    pub fn path_blocked(&self, path: &[usize], z: &[bool]) -> bool {
        for k in 1..path.len().saturating_sub(1) {
            let (prev, v, next) = (path[k - 1], path[k], path[k + 1]);
            let collider = self.edge[prev][v] && self.edge[next][v];
            if collider {
                let desc = self.descendants(v);
                if !(0..self.n).any(|u| desc[u] && z[u]) {
                    return true;
                }
            } else if z[v] {
                return true;
            }
        }
        false
    }

    pub fn d_separated(&self, a: usize, b: usize, z: &[bool]) -> bool {
        self.simple_paths(a, b).iter().all(|p| self.path_blocked(p, z))
    }
}

/// Compares the library's d-separation against the path oracle on
/// `count` random DAGs, over every ordered pair and every conditioning
/// subset of the remaining nodes. Returns (queries, disagreements).
pub fn dsep_agreement<R: Rng>(rng: &mut R, count: usize, max_nodes: usize, p: f64) -> (usize, usize) {
    let (mut queries, mut bad) = (0, 0);
    for _ in 0..count {
        let n = rng.gen_range(2..=max_nodes);
        let dag = random_dag(rng, n, p);
        let adj = Adjacency::new(&dag);
        let name = |i: usize| format!("v{i}");
        for a in 0..n {
            for b in a + 1..n {
                let rest: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
                for mask in 0u32..(1 << rest.len()) {
                    let mut z = vec![false; n];
                    let mut given = Vec::new();
                    for (k, &v) in rest.iter().enumerate() {
                        if mask >> k & 1 == 1 {
                            z[v] = true;
                            given.push(name(v));
                        }
                    }
                    let lib = cohortforge::dag::d_separated(&dag, &[name(a)], &[name(b)], &given).unwrap();
                    queries += 1;
                    if lib != adj.d_separated(a, b, &z) {
                        bad += 1;
                    }
                }
            }
        }
    }
    (queries, bad)
}

/// Hand-written expectations in `golden/fixture_paths.txt`, by fixture name.
pub fn expected_fixture_paths() -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for line in include_str!("../golden/fixture_paths.txt").lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            out.push((name.to_string(), Vec::new()));
        } else {
            out.last_mut().expect("section header first").1.push(line.to_string());
        }
    }
    out
}

/// The report's open paths in the `<class>/<scope>: <path>` form.
pub fn report_lines(report: &cohortforge::dag::BiasAuditReport) -> Vec<String> {
    report
        .groups
        .iter()
        .flat_map(|g| {
            let head = format!("{:?}/{:?}", g.classification, g.scope).to_lowercase();
            g.paths.iter().map(move |p| format!("{head}: {}", p.notation))
        })
        .collect()
}

/// Direct evaluation of the two-step formulas: (fixed, Q, tau2, I2, random).
pub fn meta_oracle(t: &[f64], s: &[f64]) -> (f64, f64, f64, f64, f64) {
    let w: Vec<f64> = s.iter().map(|s| s.powi(-2)).collect();
    let sw: f64 = w.iter().sum();
    let fixed = t.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / sw;
    let q: f64 = t.iter().zip(&w).map(|(t, w)| w * (t - fixed) * (t - fixed)).sum();
    let k = t.len() as f64;
    let c = sw - w.iter().map(|w| w * w).sum::<f64>() / sw;
    let tau2 = f64::max(0.0, (q - (k - 1.0)) / c);
    let i2 = if q > 0.0 { f64::max(0.0, (q - (k - 1.0)) / q) * 100.0 } else { 0.0 };
    let wr: Vec<f64> = s.iter().map(|s| 1.0 / (s * s + tau2)).collect();
    let random = t.iter().zip(&wr).map(|(t, w)| t * w).sum::<f64>() / wr.iter().sum::<f64>();
    (fixed, q, tau2, i2, random)
}
