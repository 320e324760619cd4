//! Weighted directed communication graphs, Laplacians and the reduced
//! Laplacian taken relative to the last agent.
//!
//! Convention: `a_ij > 0` means agent `i` receives information from agent `j`,
//! i.e. information flows along the edge `j → i`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, eigenvalues_clustered, norm2, Mat};

/// A weighted digraph over `N ≥ 2` agents, stored as a dense adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    adjacency: Mat,
}

/// Laplacian `L`, reduced Laplacian `L̄` (`ℓ̄_ij = ℓ_ij - ℓ_Nj`) and
/// `Π = [I, -1]`.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub l: Mat,
    pub l_reduced: Mat,
    pub pi: Mat,
}

/// Agents from which every other agent can be reached (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub roots: Vec<usize>,
}

impl SpanningTree {
    pub fn exists(&self) -> bool {
        !self.roots.is_empty()
    }
}

impl CommGraph {
    pub fn new(adjacency: Mat) -> Result<Self> {
        let n = adjacency.nrows();
        if !adjacency.is_square() {
            return Err(Error::InvalidGraph(format!(
                "adjacency must be square, got {:?}",
                adjacency.shape()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 agents, got {n}")));
        }
        for i in 0..n {
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "weight a[{},{}] = {w} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                if i == j && w != 0.0 {
                    return Err(Error::InvalidGraph(format!("self-loop at agent {}", i + 1)));
                }
            }
        }
        Ok(Self { adjacency })
    }

    /// Builds a graph from 0-based `(i, j, a_ij)` triples. Repeated pairs
    /// keep the last weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = Mat::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range for N = {n}",
                    i + 1,
                    j + 1
                )));
            }
            adj[(i, j)] = w;
        }
        Self::new(adj)
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    /// In-neighbours of each agent as `(j, a_ij)`.
    pub fn in_neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let n = self.n_agents();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| self.adjacency[(i, j)] > 0.0)
                    .map(|j| (j, self.adjacency[(i, j)]))
                    .collect()
            })
            .collect()
    }

    pub fn laplacian(&self) -> LaplacianPair {
        let n = self.n_agents();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            l[(i, i)] = self.adjacency.row(i).sum();
        }
        let m = n - 1;
        let mut l_reduced = Mat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                l_reduced[(i, j)] = l[(i, j)] - l[(m, j)];
            }
        }
        let mut pi = Mat::zeros(m, n);
        for i in 0..m {
            pi[(i, i)] = 1.0;
            pi[(i, m)] = -1.0;
        }
        LaplacianPair { l, l_reduced, pi }
    }

    /// All agents that reach every agent along directed edges.
    pub fn spanning_tree(&self) -> SpanningTree {
        let n = self.n_agents();
        // out[j] lists agents i with a_ij > 0, i.e. edges j → i.
        let mut out = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if self.adjacency[(i, j)] > 0.0 {
                    out[j].push(i);
                }
            }
        }
        let roots = (0..n)
            .filter(|&root| {
                let mut seen = vec![false; n];
                seen[root] = true;
                let mut queue = VecDeque::from([root]);
                let mut count = 1;
                while let Some(u) = queue.pop_front() {
                    for &v in &out[u] {
                        if !seen[v] {
                            seen[v] = true;
                            count += 1;
                            queue.push_back(v);
                        }
                    }
                }
                count == n
            })
            .collect();
        SpanningTree { roots }
    }

    pub fn has_spanning_tree(&self) -> bool {
        self.spanning_tree().exists()
    }

    /// Relabels agents: new agent `k` is old agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_agents();
        let mut adj = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                adj[(i, j)] = self.adjacency[(perm[i], perm[j])];
            }
        }
        Self::new(adj)
    }

    /// Parses the text format: `N` on the first line, then either edge lines
    /// `i j w` (1-based, `a_ij = w`) or `N` rows of `N` weights. Blank lines
    /// and `#` comments are ignored. A dense matrix is recognised by its first
    /// entry, which is the diagonal `a_11 = 0`; edge lines never start with 0.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = data_lines(text);
        let (line_no, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty graph file".into(),
        })?;
        let n: usize = header
            .split_whitespace()
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected agent count, got '{header}'"),
            })?;
        let rows: Vec<(usize, Vec<f64>)> = lines
            .map(|(ln, l)| {
                l.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| Error::Parse {
                            line: ln,
                            message: format!("invalid number '{t}'"),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
                    .map(|v| (ln, v))
            })
            .collect::<Result<_>>()?;

        let dense = rows.first().map(|(_, r)| r[0] == 0.0).unwrap_or(false);
        if dense {
            if rows.len() != n {
                return Err(Error::Parse {
                    line: rows.last().map(|r| r.0).unwrap_or(line_no),
                    message: format!("dense adjacency needs {n} rows, found {}", rows.len()),
                });
            }
            let mut adj = Mat::zeros(n, n);
            for (i, (ln, r)) in rows.iter().enumerate() {
                if r.len() != n {
                    return Err(Error::Parse {
                        line: *ln,
                        message: format!("expected {n} weights, found {}", r.len()),
                    });
                }
                for (j, &w) in r.iter().enumerate() {
                    adj[(i, j)] = w;
                }
            }
            return Self::new(adj);
        }
        let mut edges = Vec::with_capacity(rows.len());
        for (ln, r) in rows {
            if r.len() != 3 {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("edge line needs 'i j w', found {} fields", r.len()),
                });
            }
            let idx = |x: f64| -> Result<usize> {
                if x.fract() == 0.0 && x >= 1.0 && (x as usize) <= n {
                    Ok(x as usize - 1)
                } else {
                    Err(Error::Parse {
                        line: ln,
                        message: format!("agent index {x} outside 1..={n}"),
                    })
                }
            };
            edges.push((idx(r[0])?, idx(r[1])?, r[2]));
        }
        Self::from_edges(n, &edges).map_err(|e| match e {
            Error::InvalidGraph(m) => Error::Parse { line: line_no, message: m },
            other => other,
        })
    }

    /// Edge-list text (1-based), readable by [`CommGraph::parse`].
    pub fn to_edge_list(&self) -> String {
        let n = self.n_agents();
        let mut s = format!("{n}\n");
        for i in 0..n {
            for j in 0..n {
                let w = self.adjacency[(i, j)];
                if w > 0.0 {
                    let _ = writeln!(s, "{} {} {}", i + 1, j + 1, w);
                }
            }
        }
        s
    }
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

/// Pairs every eigenvalue of `L̄` with a nonzero eigenvalue of `L` by an
/// optimal assignment on complex distance. Fails when any matched pair is
/// farther apart than `tol`.
///
/// Returns `(eig(L̄), eig(L))` pairs.
pub fn reduced_spectrum_check(lp: &LaplacianPair, tol: f64) -> Result<Vec<(Complex64, Complex64)>> {
    let scale = 1.0 + norm2(&lp.l);
    let radius = 1e-6 * scale;
    let mut eig_l = eigenvalues_clustered(&lp.l, radius)?;
    let eig_r = eigenvalues_clustered(&lp.l_reduced, radius)?;
    // drop the eigenvalue closest to the origin (the one belonging to 1)
    let (zero_idx, _) = eig_l
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .ok_or_else(|| Error::SpectrumMismatch("empty Laplacian".into()))?;
    eig_l.remove(zero_idx);
    if eig_l.len() != eig_r.len() {
        return Err(Error::SpectrumMismatch("dimension mismatch".into()));
    }
    let cost: Vec<Vec<f64>> = eig_r
        .iter()
        .map(|a| eig_l.iter().map(|b| (a - b).norm()).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let pairs: Vec<(Complex64, Complex64)> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| (eig_r[i], eig_l[j]))
        .collect();
    let worst = pairs.iter().map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if worst > tol {
        return Err(Error::SpectrumMismatch(format!(
            "largest matched distance {worst:e} exceeds {tol:e}"
        )));
    }
    Ok(pairs)
}

/// Number of Laplacian eigenvalues within `1e-8·(1+‖L‖₂)` of the origin.
pub fn zero_eigenvalue_count(lp: &LaplacianPair) -> Result<usize> {
    let thresh = 1e-8 * (1.0 + norm2(&lp.l));
    Ok(eigenvalues(&lp.l)?.iter().filter(|z| z.norm() < thresh).count())
}

/// Hungarian algorithm on a square cost matrix; `result[row] = column`.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // potentials and matching are 1-based with a sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            result[p[j] - 1] = j - 1;
        }
    }
    result
}

/// Random weighted digraph on `n` agents containing a directed spanning tree:
/// a random arborescence plus `extra` random edges, weights in `[0.1, 2)`.
pub fn random_spanning_tree_graph<R: Rng>(rng: &mut R, n: usize, extra: usize) -> CommGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let mut adj = Mat::zeros(n, n);
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        adj[(order[k], parent)] = rng.random_range(0.1..2.0);
    }
    for _ in 0..extra {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            adj[(i, j)] = rng.random_range(0.1..2.0);
        }
    }
    CommGraph::new(adj).expect("generated graph is valid")
}
