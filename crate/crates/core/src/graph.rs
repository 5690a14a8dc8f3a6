//! Weighted digraphs, their Laplacians, and the spectral quantities the
//! dynamics and the parameter design depend on.
//!
//! Graphs are dense and immutable: [`WeightedDigraph::new`] validates the edge
//! list once and caches the adjacency matrix `A`, the out-degree matrix
//! `D_out` and the Laplacian `L = D_out - A`. Edge `(i, j, w)` means
//! `a_ij = w > 0`, so row `i` of `L` carries the out-edges of vertex `i` and
//! `L * 1 = 0` holds by construction.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold below which an eigenvalue is classified as zero.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-9;

const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({tail}, {head}) references a vertex outside 0..{n}")]
    IndexOutOfRange { tail: usize, head: usize, n: usize },
    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoop(usize),
    #[error("duplicate edge ({tail}, {head})")]
    DuplicateEdge { tail: usize, head: usize },
    #[error("edge ({tail}, {head}) has nonpositive weight {weight}")]
    NonpositiveWeight { tail: usize, head: usize, weight: f64 },
    #[error("eigen-solver failed to converge on a {0}x{0} matrix")]
    EigenSolverFailure(usize),
}

/// One directed, weighted edge `tail -> head`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// Immutable weighted digraph with cached adjacency, degree and Laplacian matrices.
#[derive(Debug, Clone)]
pub struct WeightedDigraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: DMatrix<f64>,
    out_degree: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

impl WeightedDigraph {
    /// Builds a graph on `n` vertices from `(tail, head, weight)` triples.
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut adjacency = DMatrix::<f64>::zeros(n, n);
        let mut list = Vec::with_capacity(edges.len());
        for &(tail, head, weight) in edges {
            if tail >= n || head >= n {
                return Err(GraphError::IndexOutOfRange { tail, head, n });
            }
            if tail == head {
                return Err(GraphError::SelfLoop(tail));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(GraphError::NonpositiveWeight { tail, head, weight });
            }
            if adjacency[(tail, head)] != 0.0 {
                return Err(GraphError::DuplicateEdge { tail, head });
            }
            adjacency[(tail, head)] = weight;
            list.push(Edge { tail, head, weight });
        }

        let mut out_degree = DMatrix::<f64>::zeros(n, n);
        let mut laplacian = -adjacency.clone();
        for i in 0..n {
            let d: f64 = adjacency.row(i).iter().sum();
            out_degree[(i, i)] = d;
            laplacian[(i, i)] = d;
        }
        Ok(Self {
            n,
            edges: list,
            adjacency,
            out_degree,
            laplacian,
        })
    }

    /// Builds an undirected graph: every `(i, j, w)` is mirrored to `(j, i, w)`.
    pub fn undirected(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut all = Vec::with_capacity(edges.len() * 2);
        for &(i, j, w) in edges {
            all.push((i, j, w));
            all.push((j, i, w));
        }
        Self::new(n, &all)
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0` with unit weights.
    pub fn directed_cycle(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::new(n, &edges)
    }

    /// Cycle with both orientations of every edge, unit weights.
    pub fn bidirected_cycle(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::undirected(n, &edges)
    }

    /// Complete graph with unit weights in both directions.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    edges.push((i, j, 1.0));
                }
            }
        }
        Self::new(n, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn out_degree(&self) -> &DMatrix<f64> {
        &self.out_degree
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// True iff `||1^T L||_inf <= tol`, i.e. weighted in-degree equals
    /// out-degree at every vertex.
    pub fn is_weight_balanced(&self, tol: f64) -> bool {
        (0..self.n).all(|j| self.laplacian.column(j).iter().sum::<f64>().abs() <= tol)
    }

    /// True iff the graph has exactly one strongly connected component.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut g = DiGraph::<(), ()>::with_capacity(self.n, self.edges.len());
        let nodes: Vec<_> = (0..self.n).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(nodes[e.tail], nodes[e.head], ());
        }
        petgraph::algo::tarjan_scc(&g).len() == 1
    }

    /// `L + L^T`.
    pub fn symmetrized_laplacian(&self) -> DMatrix<f64> {
        &self.laplacian + self.laplacian.transpose()
    }

    /// Lifted Laplacian `L ⊗ I_d`.
    pub fn kron_lift(&self, d: usize) -> DMatrix<f64> {
        self.laplacian.kronecker(&DMatrix::<f64>::identity(d, d))
    }

    /// Writes `(L ⊗ I_d) v` into `out` without forming the Kronecker product.
    ///
    /// `v` is a stack of `n` blocks of length `d`.
    pub fn apply_lifted(&self, d: usize, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n * d);
        debug_assert_eq!(out.len(), self.n * d);
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.edges {
            let (i, j, w) = (e.tail, e.head, e.weight);
            for k in 0..d {
                out[i * d + k] += w * (v[i * d + k] - v[j * d + k]);
            }
        }
    }

    /// Eigenvalues of `L`, unordered.
    pub fn laplacian_eigenvalues(&self) -> Result<Vec<Complex<f64>>, GraphError> {
        complex_eigenvalues(&self.laplacian)
    }

    /// Dense spectral summary of `L` and `L + L^T`.
    pub fn spectral_summary(&self, tol: f64) -> Result<SpectralSummary, GraphError> {
        let laplacian = self.laplacian_eigenvalues()?;
        let symmetric = symmetric_eigenvalues(&self.symmetrized_laplacian())?;
        let lambda_star = symmetric.iter().copied().find(|&l| l > tol);
        Ok(SpectralSummary {
            laplacian,
            symmetric,
            lambda_star,
        })
    }

    /// Stability criterion of the zero-payoff saddle dynamics on this graph:
    /// every nonzero Laplacian eigenvalue must satisfy `√3 |Im λ| <= Re λ`.
    pub fn laplacian_stability_condition(&self, tol: f64) -> Result<bool, GraphError> {
        let sqrt3 = 3f64.sqrt();
        Ok(self
            .laplacian_eigenvalues()?
            .iter()
            .filter(|l| l.norm() > tol)
            .all(|l| sqrt3 * l.im.abs() <= l.re + tol))
    }
}

/// Eigen-data of `L` and of `L + L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Eigenvalues of `L`.
    pub laplacian: Vec<Complex<f64>>,
    /// Eigenvalues of `L + L^T`, ascending.
    pub symmetric: Vec<f64>,
    /// Smallest eigenvalue of `L + L^T` above the zero tolerance, if any.
    pub lambda_star: Option<f64>,
}

impl SpectralSummary {
    /// Number of eigenvalues of `L + L^T` with magnitude at most `tol`.
    pub fn zero_multiplicity(&self, tol: f64) -> usize {
        self.symmetric.iter().filter(|l| l.abs() <= tol).count()
    }
}

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, GraphError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(GraphError::EigenSolverFailure(n))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>, GraphError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(GraphError::EigenSolverFailure(n))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(values)
}

/// Graph description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub undirected: bool,
}

impl GraphSpec {
    pub fn build(&self) -> Result<WeightedDigraph, GraphError> {
        if self.undirected {
            WeightedDigraph::undirected(self.n, &self.edges)
        } else {
            WeightedDigraph::new(self.n, &self.edges)
        }
    }
}
