//! Agent placement and proximity communication graphs.

use dbf_core::{check_assumption1, local_degree_weights, AdjacencySchedule, Digraph};
use rand::Rng;

use crate::SimError;

/// Draws `n` positions uniformly in `[-half, half]²`.
pub fn uniform_positions<R: Rng + ?Sized>(n: usize, half: f64, rng: &mut R) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.random_range(-half..half), rng.random_range(-half..half)])
        .collect()
}

/// Undirected graph linking agents closer than `radius`.
pub fn proximity_graph(positions: &[[f64; 2]], radius: f64) -> Digraph {
    let n = positions.len();
    let mut g = Digraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let d = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            if d <= radius {
                g.add_edge(i, j).expect("indices in range");
                g.add_edge(j, i).expect("indices in range");
            }
        }
    }
    g
}

/// Proximity graph whose radius grows by 10% until the graph is connected.
/// Returns the graph and the radius actually used.
pub fn connected_proximity_graph(positions: &[[f64; 2]], radius: f64) -> (Digraph, f64) {
    let mut r = radius;
    loop {
        let g = proximity_graph(positions, r);
        if g.is_strongly_connected() {
            return (g, r);
        }
        r *= 1.1;
    }
}

/// Static local-degree schedule on `g`; fails unless every connectivity
/// clause holds.
pub fn static_schedule(g: &Digraph) -> Result<AdjacencySchedule, SimError> {
    let a = local_degree_weights(g)?;
    let s = AdjacencySchedule::constant(a);
    let report = check_assumption1(&s);
    if !report.ok {
        let failed: Vec<String> = report.violations.iter().map(|c| c.to_string()).collect();
        return Err(SimError::ConfigInvalid(format!(
            "communication graph fails clauses {}",
            failed.join(", ")
        )));
    }
    Ok(s)
}

/// Builds a graph from an explicit undirected edge list.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Digraph, SimError> {
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(SimError::ConfigInvalid(format!(
                "edge ({i}, {j}) references an agent outside 0..{n}"
            )));
        }
    }
    Ok(Digraph::undirected(n, edges.iter().copied())?)
}
