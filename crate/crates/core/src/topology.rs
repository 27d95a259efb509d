//! Communication graphs, doubly stochastic weights and the connectivity /
//! contraction quantities the convergence analysis consumes.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{DbfError, Result};

/// Row and column sums must hit 1 within this tolerance.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Directed graph on `n` agents; edge `(i, j)` means agent `i` receives from `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph from directed edges. Self-edges are ignored.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Builds a graph containing both directions of every listed pair.
    pub fn undirected(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (i, j) in pairs {
            g.add_edge(i, j)?;
            g.add_edge(j, i)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self { n, edges }
    }

    pub fn path(n: usize) -> Self {
        Self::undirected(n, (1..n).map(|i| (i - 1, i))).expect("indices in range")
    }

    pub fn cycle(n: usize) -> Self {
        Self::undirected(n, (0..n).map(|i| (i, (i + 1) % n))).expect("indices in range")
    }

    /// Random connected undirected graph: a random spanning tree plus each
    /// remaining pair with probability `extra`.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra: f64, rng: &mut R) -> Self {
        let mut g = Self::new(n);
        for i in 1..n {
            let j = rng.random_range(0..i);
            g.add_edge(i, j).expect("in range");
            g.add_edge(j, i).expect("in range");
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < extra {
                    g.add_edge(i, j).expect("in range");
                    g.add_edge(j, i).expect("in range");
                }
            }
        }
        g
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(DbfError::InvalidGraph(format!(
                "edge ({i}, {j}) out of range for {} agents",
                self.n
            )));
        }
        if i != j {
            self.edges.insert((i, j));
        }
        Ok(())
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// Agents `i` receives from, excluding itself.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((i, 0)..(i + 1, 0)).map(|&(_, j)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.in_neighbors(i).count()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.edges.contains(&(j, i)))
    }

    pub fn is_strongly_connected(&self) -> bool {
        strongly_connected(self.n, |i, j| self.has_edge(i, j))
    }
}

/// Reachability from agent 0 along both edge directions covers every agent.
fn strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for (v, s) in seen.iter_mut().enumerate() {
                let linked = if forward { edge(v, u) } else { edge(u, v) };
                if linked && !*s {
                    *s = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    };
    reach(true) && reach(false)
}

/// Doubly stochastic, nonnegative N×N weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(DMatrix<f64>);

impl AdjacencyMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(DbfError::Dimension(format!(
                "adjacency must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DbfError::NotDoublyStochastic(f64::INFINITY));
        }
        let r = stochastic_residual(&m);
        if r > STOCHASTIC_TOLERANCE {
            return Err(DbfError::NotDoublyStochastic(r));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix without validation; [`check_assumption1`] reports on it later.
    pub fn new_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// All entries `1/n`.
    pub fn averaging(n: usize) -> Self {
        Self(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Nonzero entries of row `i` as `(j, weight)`, self included.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.size())
            .filter_map(|j| {
                let w = self.0[(i, j)];
                (w > 0.0).then_some((j, w))
            })
            .collect()
    }

    pub fn graph(&self) -> Digraph {
        let n = self.size();
        let edges = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.0[(i, j)] > 0.0)
            .collect();
        Digraph { n, edges }
    }
}

/// Largest deviation of any row or column sum from 1.
pub fn stochastic_residual(m: &DMatrix<f64>) -> f64 {
    let rows = m.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = m.column_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Local-degree weights `A[i,j] = 1/max(dᵢ, dⱼ)` on a connected undirected graph.
pub fn local_degree_weights(g: &Digraph) -> Result<AdjacencyMatrix> {
    if !g.is_symmetric() {
        return Err(DbfError::NotSymmetric);
    }
    if !g.is_strongly_connected() {
        return Err(DbfError::Disconnected);
    }
    local_degree_matrix(g)
}

/// Local-degree weights without the connectivity requirement; isolated agents
/// keep all weight on themselves.
pub fn local_degree_matrix(g: &Digraph) -> Result<AdjacencyMatrix> {
    if !g.is_symmetric() {
        return Err(DbfError::NotSymmetric);
    }
    let n = g.agent_count();
    let deg: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, j) in g.edges() {
        m[(i, j)] = 1.0 / deg[i].max(deg[j]) as f64;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = (1.0 - off).max(0.0);
    }
    Ok(AdjacencyMatrix(m))
}

/// Periodic sequence of adjacency matrices; time `k` uses entry `k mod period`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySchedule {
    matrices: Vec<AdjacencyMatrix>,
}

impl AdjacencySchedule {
    pub fn new(matrices: Vec<AdjacencyMatrix>) -> Result<Self> {
        let n = matrices.first().ok_or(DbfError::Empty("schedule"))?.size();
        if matrices.iter().any(|m| m.size() != n) {
            return Err(DbfError::Dimension("schedule matrices differ in size".into()));
        }
        Ok(Self { matrices })
    }

    pub fn constant(a: AdjacencyMatrix) -> Self {
        Self { matrices: vec![a] }
    }

    /// Random periodic schedule: the edges of a random connected graph are
    /// spread over `period` matrices, each weighted by local degrees.
    pub fn random<R: Rng + ?Sized>(n: usize, period: usize, extra: f64, rng: &mut R) -> Self {
        let g = Digraph::random_connected(n, extra, rng);
        let pairs: Vec<_> = g.edges().filter(|(i, j)| i < j).collect();
        let mut parts = vec![Digraph::new(n); period.max(1)];
        for (i, j) in pairs {
            let p = rng.random_range(0..parts.len());
            parts[p].add_edge(i, j).expect("in range");
            parts[p].add_edge(j, i).expect("in range");
        }
        let matrices = parts
            .iter()
            .map(|p| local_degree_matrix(p).expect("symmetric by construction"))
            .collect();
        Self { matrices }
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    pub fn agent_count(&self) -> usize {
        self.matrices[0].size()
    }

    pub fn at(&self, k: usize) -> &AdjacencyMatrix {
        &self.matrices[k % self.matrices.len()]
    }

    pub fn matrices(&self) -> &[AdjacencyMatrix] {
        &self.matrices
    }
}

/// `A_{k+len−1} ⋯ A_{k+1} A_k` (later matrices multiply on the left).
pub fn window_product(s: &AdjacencySchedule, k: usize, len: usize) -> Result<AdjacencyMatrix> {
    if len == 0 {
        return Err(DbfError::Domain("window length must be at least 1".into()));
    }
    let mut p = s.at(k).matrix().clone();
    for t in 1..len {
        p = s.at(k + t).matrix() * p;
    }
    Ok(AdjacencyMatrix(p))
}

/// Clauses of the connectivity assumption that a schedule can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// Some window union is not strongly connected for any window length.
    Connectivity,
    /// Some matrix is negative or has a row/column sum away from 1.
    DoublyStochastic,
    /// No positive entry could be extracted from the window products.
    Gamma,
    /// Some `b(N−1)`-window product has a zero entry.
    Primitivity,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::Connectivity => "(i) periodic strong connectivity",
            Clause::DoublyStochastic => "(ii) doubly stochastic weights",
            Clause::Gamma => "(iii) positive lower bound on window products",
            Clause::Primitivity => "(iv) strictly positive b(N-1)-window products",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assumption1Report {
    /// Smallest window length whose every union graph is strongly connected.
    pub b: Option<usize>,
    /// Smallest positive entry over all `b`-window products.
    pub gamma: Option<f64>,
    pub stochastic_residual: f64,
    pub ok: bool,
    pub violations: Vec<Clause>,
    pub warnings: Vec<String>,
}

/// Checks connectivity, double stochasticity and the γ extraction for every
/// window of one schedule period.
pub fn check_assumption1(s: &AdjacencySchedule) -> Assumption1Report {
    let n = s.agent_count();
    let period = s.period();
    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    let residual = s
        .matrices()
        .iter()
        .map(|m| {
            if m.matrix().iter().any(|v| !v.is_finite() || *v < 0.0) {
                f64::INFINITY
            } else {
                stochastic_residual(m.matrix())
            }
        })
        .fold(0.0, f64::max);
    if residual > STOCHASTIC_TOLERANCE {
        violations.push(Clause::DoublyStochastic);
    }

    let union_connected = |k: usize, len: usize| {
        strongly_connected(n, |i, j| {
            (0..len).any(|t| s.at(k + t).get(i, j) > 0.0)
        })
    };
    let b = (1..=period).find(|&len| (0..period).all(|k| union_connected(k, len)));

    let gamma = b.and_then(|b| {
        (0..period)
            .map(|k| window_product(s, k, b).expect("b >= 1"))
            .flat_map(|p| p.matrix().iter().copied().collect::<Vec<_>>())
            .filter(|v| *v > 0.0)
            .reduce(f64::min)
    });

    match (b, gamma) {
        (None, _) => violations.push(Clause::Connectivity),
        (Some(_), None) => violations.push(Clause::Gamma),
        (Some(b), Some(g)) => {
            if g >= 0.5 {
                warnings.push(format!("gamma = {g} is not below 1/2"));
            }
            let len = b * n.saturating_sub(1).max(1);
            let primitive = (0..period).all(|k| {
                window_product(s, k, len)
                    .expect("len >= 1")
                    .matrix()
                    .iter()
                    .all(|v| *v > 0.0)
            });
            if !primitive {
                violations.push(Clause::Primitivity);
            }
        }
    }

    Assumption1Report {
        b,
        gamma,
        stochastic_residual: residual,
        ok: violations.is_empty(),
        violations,
        warnings,
    }
}

/// Second-largest singular value via a full SVD; 0 for a 1×1 matrix.
pub fn second_singular_value(a: &AdjacencyMatrix) -> f64 {
    if a.size() < 2 {
        return 0.0;
    }
    let mut sv: Vec<f64> = a.matrix().clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv[1].clamp(0.0, 1.0)
}

/// Upper bound on the contraction rate in terms of `N` and `γ ∈ (0, ½)`.
pub fn sigma_m_bound(n: usize, gamma: f64) -> Result<f64> {
    if n < 2 {
        return Err(DbfError::Domain(format!("need at least 2 agents, got {n}")));
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(DbfError::Domain(format!("gamma must lie in (0, 1/2), got {gamma}")));
    }
    let s = (PI / (2.0 * n as f64)).sin();
    let inner = 1.0 - 4.0 * (gamma - gamma.powi(n as i32)) / (1.0 - gamma) * s * s;
    Ok(inner.max(0.0).sqrt())
}

/// Worst second singular value of `b(N−1)`-window products over one period,
/// with `b` taken from [`check_assumption1`].
pub fn sigma_m(s: &AdjacencySchedule) -> Result<f64> {
    let report = check_assumption1(s);
    let b = report.b.ok_or(DbfError::Disconnected)?;
    sigma_m_with_window(s, b)
}

/// Same as [`sigma_m`] with the connectivity period supplied.
pub fn sigma_m_with_window(s: &AdjacencySchedule, b: usize) -> Result<f64> {
    let len = b * s.agent_count().saturating_sub(1).max(1);
    let mut worst: f64 = 0.0;
    for k in 0..s.period() {
        worst = worst.max(second_singular_value(&window_product(s, k, len)?));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eigen_oracle(a: &AdjacencyMatrix) -> f64 {
        let ata = a.matrix().transpose() * a.matrix();
        let mut ev: Vec<f64> = ata.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev[1].max(0.0).sqrt()
    }

    #[test]
    fn path_graph_weights() {
        let a = local_degree_weights(&Digraph::path(3)).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.5]);
        assert_eq!(a.matrix(), &expected);
        assert_abs_diff_eq!(second_singular_value(&a), eigen_oracle(&a), epsilon = 1e-12);
    }

    #[test]
    fn complete_graph_weights() {
        for n in 2..7 {
            let a = local_degree_weights(&Digraph::complete(n)).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { 0.0 } else { 1.0 / (n - 1) as f64 };
                    assert_abs_diff_eq!(a.get(i, j), e, epsilon = 1e-15);
                }
            }
        }
        let one = local_degree_weights(&Digraph::new(1)).unwrap();
        assert_eq!(one.matrix(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn weight_errors() {
        let directed = Digraph::from_edges(3, [(0, 1), (1, 2), (2, 1), (1, 0), (0, 2)]).unwrap();
        assert_eq!(local_degree_weights(&directed), Err(DbfError::NotSymmetric));
        let split = Digraph::undirected(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(local_degree_weights(&split), Err(DbfError::Disconnected));
        assert!(Digraph::from_edges(2, [(0, 2)]).is_err());
        assert!(AdjacencyMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.6, 0.4])).is_err());
    }

    #[test]
    fn window_products() {
        let lazy = |i, j| {
            let m = local_degree_matrix(&Digraph::undirected(3, [(i, j)]).unwrap()).unwrap();
            AdjacencyMatrix::new((m.matrix() + DMatrix::identity(3, 3)) * 0.5).unwrap()
        };
        let (a1, a2) = (lazy(0, 1), lazy(1, 2));
        let s = AdjacencySchedule::new(vec![a1.clone(), a2.clone()]).unwrap();
        assert_eq!(window_product(&s, 0, 1).unwrap(), a1);
        // A2 A1 by hand
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.5, 0.0, 0.25, 0.25, 0.5, 0.25, 0.25, 0.5],
        );
        let p = window_product(&s, 0, 2).unwrap();
        assert!((p.matrix() - expected).abs().max() < 1e-15);
        let st = AdjacencySchedule::constant(a1.clone());
        let cube = a1.matrix() * a1.matrix() * a1.matrix();
        assert!((window_product(&st, 4, 3).unwrap().matrix() - cube).abs().max() < 1e-15);
        assert!(window_product(&s, 0, 0).is_err());
    }

    #[test]
    fn assumption_checks() {
        let a = local_degree_weights(&Digraph::path(3)).unwrap();
        let r = check_assumption1(&AdjacencySchedule::constant(a));
        assert!(r.ok, "{r:?}");
        assert_eq!(r.b, Some(1));
        assert_abs_diff_eq!(r.gamma.unwrap(), 0.5);
        assert!(!r.warnings.is_empty());

        let a1 = local_degree_matrix(&Digraph::undirected(4, [(0, 1), (2, 3)]).unwrap()).unwrap();
        let a2 = local_degree_matrix(&Digraph::undirected(4, [(1, 2), (3, 0)]).unwrap()).unwrap();
        let alt = AdjacencySchedule::new(vec![a1.clone(), a2]).unwrap();
        let r = check_assumption1(&alt);
        assert_eq!(r.b, Some(2));
        assert_eq!(r.violations, vec![Clause::Primitivity]);

        // halves with self-weight stay aperiodic
        let lazy = |pairs: &[(usize, usize)]| {
            let m = local_degree_matrix(&Digraph::undirected(4, pairs.iter().copied()).unwrap())
                .unwrap();
            AdjacencyMatrix::new(
                (m.matrix() + DMatrix::identity(4, 4)) * 0.5,
            )
            .unwrap()
        };
        let alt = AdjacencySchedule::new(vec![lazy(&[(0, 1), (2, 3)]), lazy(&[(1, 2)])]).unwrap();
        let r = check_assumption1(&alt);
        assert!(r.ok, "{r:?}");
        assert_eq!(r.b, Some(2));

        let stuck = AdjacencySchedule::constant(a1);
        let r = check_assumption1(&stuck);
        assert!(!r.ok);
        assert_eq!(r.violations, vec![Clause::Connectivity]);

        let bad = AdjacencySchedule::constant(AdjacencyMatrix::new_unchecked(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.6, 0.4]),
        ));
        assert!(check_assumption1(&bad).violations.contains(&Clause::DoublyStochastic));
    }

    #[test]
    fn two_agent_swap_is_not_primitive() {
        let a = local_degree_weights(&Digraph::complete(2)).unwrap();
        let r = check_assumption1(&AdjacencySchedule::constant(a.clone()));
        assert_eq!(r.violations, vec![Clause::Primitivity]);
        assert_abs_diff_eq!(second_singular_value(&a), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_value_examples() {
        assert_abs_diff_eq!(second_singular_value(&AdjacencyMatrix::identity(4)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(second_singular_value(&AdjacencyMatrix::averaging(5)), 0.0, epsilon = 1e-12);
        assert_eq!(second_singular_value(&AdjacencyMatrix::identity(1)), 0.0);
    }

    #[test]
    fn bound_examples() {
        assert_abs_diff_eq!(sigma_m_bound(2, 0.4).unwrap(), 0.2f64.sqrt(), epsilon = 1e-12);
        assert!(sigma_m_bound(1, 0.3).is_err());
        assert!(sigma_m_bound(3, 0.5).is_err());
        assert!(sigma_m_bound(3, 0.0).is_err());
        let tiny = sigma_m_bound(6, 1e-9).unwrap();
        assert!(tiny < 1.0 && tiny > 1.0 - 1e-8);
        for n in 2..20 {
            for g in [0.01, 0.1, 0.25, 0.49] {
                assert!(sigma_m_bound(n, g).unwrap() < 1.0);
            }
        }
    }

    #[test]
    fn sigma_m_examples() {
        let a = local_degree_weights(&Digraph::path(4)).unwrap();
        let s = AdjacencySchedule::constant(a.clone());
        let cube = AdjacencyMatrix::new_unchecked(a.matrix() * a.matrix() * a.matrix());
        assert_abs_diff_eq!(sigma_m(&s).unwrap(), second_singular_value(&cube), epsilon = 1e-12);
        let avg = AdjacencySchedule::constant(AdjacencyMatrix::averaging(4));
        assert_abs_diff_eq!(sigma_m(&avg).unwrap(), 0.0, epsilon = 1e-12);
        let split = local_degree_matrix(&Digraph::undirected(4, [(0, 1)]).unwrap()).unwrap();
        assert_eq!(sigma_m(&AdjacencySchedule::constant(split)), Err(DbfError::Disconnected));
    }

    fn regular_bipartite(g: &Digraph) -> bool {
        let n = g.agent_count();
        let d0 = g.degree(0);
        if (0..n).any(|i| g.degree(i) != d0) {
            return false;
        }
        let mut color = vec![usize::MAX; n];
        color[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for v in g.in_neighbors(u).collect::<Vec<_>>() {
                if color[v] == usize::MAX {
                    color[v] = 1 - color[u];
                    queue.push_back(v);
                } else if color[v] == color[u] {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn local_degree_weights_pass_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tested = 0;
        for _ in 0..200 {
            let n = rng.random_range(2..12);
            let g = Digraph::random_connected(n, rng.random_range(0.0..0.6), &mut rng);
            let a = local_degree_weights(&g).unwrap();
            let r = check_assumption1(&AdjacencySchedule::constant(a));
            if regular_bipartite(&g) {
                assert_eq!(r.violations, vec![Clause::Primitivity]);
                continue;
            }
            tested += 1;
            assert!(r.ok, "{g:?} {r:?}");
            assert_eq!(r.b, Some(1));
        }
        assert!(tested > 150);
    }

    #[test]
    fn random_schedules_respect_bound_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut accepted = 0;
        while accepted < 50 {
            let n = rng.random_range(3..9);
            let period = rng.random_range(1..4);
            let s = AdjacencySchedule::random(n, period, 0.3, &mut rng);
            let r = check_assumption1(&s);
            if !r.ok || r.gamma.unwrap() >= 0.5 {
                continue;
            }
            accepted += 1;
            let b = r.b.unwrap();
            for k in 0..s.period() {
                let p = window_product(&s, k, b * (n - 1)).unwrap();
                assert!(p.matrix().iter().all(|v| *v > 0.0));
                assert!(stochastic_residual(p.matrix()) < 1e-10);
                assert_abs_diff_eq!(second_singular_value(&p), eigen_oracle(&p), epsilon = 1e-9);
            }
            let sm = sigma_m(&s).unwrap();
            assert!(sm <= sigma_m_bound(n, r.gamma.unwrap()).unwrap());
        }
    }
}
