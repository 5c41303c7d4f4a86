use std::collections::HashSet;

use super::{CausalDag, DagError, Graph};

/// True iff `given` d-separates every node of `a` from every node of `b`.
pub fn d_separated(
    dag: &CausalDag,
    a: &[String],
    b: &[String],
    given: &[String],
) -> Result<bool, DagError> {
    let g = dag.graph()?;
    let (a, b, z) = (g.indices(a)?, g.indices(b)?, g.indices(given)?);
    let mut seen = HashSet::new();
    for &v in a.iter().chain(&b).chain(&z) {
        if !seen.insert(v) {
            return Err(DagError::NotDisjoint(g.id(v).to_string()));
        }
    }
    Ok(separated(&g, &a, &b, &z))
}

/// Reachability over (node, direction) states: an active trail reaches `v`
/// either travelling up (entered from a child) or down (entered from a parent).
pub(crate) fn separated(g: &Graph, a: &[usize], b: &[usize], z: &[usize]) -> bool {
    let n = g.len();
    let mut in_z = vec![false; n];
    for &v in z {
        in_z[v] = true;
    }
    // A collider is open when it or one of its descendants is conditioned on.
    let mut opens_collider = vec![false; n];
    for &v in z {
        for (u, anc) in g.ancestors(v).into_iter().enumerate() {
            opens_collider[u] |= anc;
        }
    }
    let mut target = vec![false; n];
    for &v in b {
        target[v] = true;
    }

    const UP: usize = 0;
    const DOWN: usize = 1;
    let mut visited = vec![[false; 2]; n];
    let mut stack: Vec<(usize, usize)> = a.iter().map(|&v| (v, UP)).collect();
    while let Some((v, dir)) = stack.pop() {
        if visited[v][dir] {
            continue;
        }
        visited[v][dir] = true;
        if target[v] && !in_z[v] {
            return false;
        }
        if dir == UP && !in_z[v] {
            stack.extend(g.parents(v).iter().map(|&p| (p, UP)));
            stack.extend(g.children(v).iter().map(|&c| (c, DOWN)));
        } else if dir == DOWN {
            if !in_z[v] {
                stack.extend(g.children(v).iter().map(|&c| (c, DOWN)));
            }
            if opens_collider[v] {
                stack.extend(g.parents(v).iter().map(|&p| (p, UP)));
            }
        }
    }
    true
}
