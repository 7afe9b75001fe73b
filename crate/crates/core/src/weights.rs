//! Queen first-order contiguity weights and derived spectral quantities.
//!
//! The adjacency structure is built once from polygon contact and is
//! immutable afterwards; binary, row-standardized, and include-self variants
//! all share the same neighbor lists and differ only in how `weight` and
//! `lag` read them.

use crate::geo::PolygonGeom;
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("{0} island units (zero neighbors) present: first ids {1:?}")]
    IslandsPresent(usize, Vec<usize>),
    #[error("need at least 2 units, got {0}")]
    TooFewUnits(usize),
    #[error("row standardization requires binary input")]
    AlreadyStandardized,
    #[error("malformed weights file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Standardization {
    Binary,
    RowStandardized,
}

/// Sparse symmetric contiguity structure.
///
/// Neighbor lists are sorted, deduplicated, and never contain the unit
/// itself; `include_self` adds the diagonal on read instead (the G* variant).
#[derive(Debug, Clone, PartialEq)]
pub struct ContiguityWeights {
    neighbors: Vec<Vec<usize>>,
    standardization: Standardization,
    include_self: bool,
}

impl ContiguityWeights {
    /// Build a binary structure from an explicit undirected edge list.
    /// Each (i, j) edge is stored in both directions; self-loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> ContiguityWeights {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            assert!(i < n && j < n, "edge ({i},{j}) out of range for n={n}");
            if i == j {
                continue;
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        ContiguityWeights {
            neighbors,
            standardization: Standardization::Binary,
            include_self: false,
        }
    }

    /// Queen contiguity: units are neighbors when their polygons touch
    /// (any vertex of one within `tol` of the other's boundary).
    /// Islands are allowed here; callers decide whether they are fatal.
    pub fn build_queen(polygons: &[PolygonGeom], tol: f64) -> Result<ContiguityWeights, WeightsError> {
        let n = polygons.len();
        if n < 2 {
            return Err(WeightsError::TooFewUnits(n));
        }
        let boxes: Vec<_> = polygons.iter().map(|g| g.bbox().expanded(tol)).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if boxes[i].intersects(&polygons[j].bbox()) && polygons[i].touches(&polygons[j], tol) {
                    edges.push((i, j));
                }
            }
        }
        Ok(ContiguityWeights::from_edges(n, &edges))
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn include_self(&self) -> bool {
        self.include_self
    }

    /// Neighbor list of unit `i` (never includes `i` itself).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighbor count, counting the unit itself when `include_self` is set.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() + usize::from(self.include_self)
    }

    /// w_ij under the current standardization.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let adjacent = (i == j && self.include_self) || self.neighbors[i].binary_search(&j).is_ok();
        if !adjacent {
            return 0.0;
        }
        match self.standardization {
            Standardization::Binary => 1.0,
            Standardization::RowStandardized => 1.0 / self.degree(i) as f64,
        }
    }

    /// Sum of all weights.
    pub fn s0(&self) -> f64 {
        match self.standardization {
            Standardization::Binary => {
                self.neighbors.iter().map(|l| l.len()).sum::<usize>() as f64
                    + if self.include_self { self.n() as f64 } else { 0.0 }
            }
            Standardization::RowStandardized => {
                (0..self.n()).filter(|&i| self.degree(i) > 0).count() as f64
            }
        }
    }

    /// Indices of units with no neighbors (ignoring include_self).
    pub fn islands(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.neighbors[i].is_empty()).collect()
    }

    pub fn island_error(&self) -> Result<(), WeightsError> {
        let islands = self.islands();
        if islands.is_empty() {
            Ok(())
        } else {
            let head: Vec<usize> = islands.iter().copied().take(8).collect();
            Err(WeightsError::IslandsPresent(islands.len(), head))
        }
    }

    /// Spatial lag (Wx)_i = Σ_j w_ij x_j. Island rows lag to 0.
    pub fn lag(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n(), "value vector length must match unit count");
        (0..self.n())
            .map(|i| {
                let mut sum: f64 = self.neighbors[i].iter().map(|&j| x[j]).sum();
                if self.include_self {
                    sum += x[i];
                }
                match self.standardization {
                    Standardization::Binary => sum,
                    Standardization::RowStandardized => {
                        let d = self.degree(i);
                        if d == 0 {
                            0.0
                        } else {
                            sum / d as f64
                        }
                    }
                }
            })
            .collect()
    }

    /// Row-standardized copy; island rows stay all zero.
    pub fn row_standardized(&self) -> Result<ContiguityWeights, WeightsError> {
        if self.standardization != Standardization::Binary {
            return Err(WeightsError::AlreadyStandardized);
        }
        Ok(ContiguityWeights { standardization: Standardization::RowStandardized, ..self.clone() })
    }

    /// Copy with the diagonal included (binary G* variant).
    pub fn with_self(&self) -> ContiguityWeights {
        ContiguityWeights { include_self: true, ..self.clone() }
    }

    /// Restriction to the units in `keep` (indices into the current
    /// structure, strictly increasing). Edges to dropped units disappear;
    /// the result is binary without self.
    pub fn subset(&self, keep: &[usize]) -> ContiguityWeights {
        debug_assert!(keep.windows(2).all(|w| w[0] < w[1]), "keep must be strictly increasing");
        let mut remap = vec![usize::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let neighbors = keep
            .iter()
            .map(|&old| {
                self.neighbors[old]
                    .iter()
                    .filter_map(|&j| (remap[j] != usize::MAX).then_some(remap[j]))
                    .collect()
            })
            .collect();
        ContiguityWeights {
            neighbors,
            standardization: Standardization::Binary,
            include_self: false,
        }
    }

    /// Dense matrix under the current standardization. Test and
    /// small-problem aid; quadratic in n.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.weight(i, j))
    }

    /// Eigenvalues of the row-standardized matrix W = D⁻¹A, computed on the
    /// symmetric similar matrix D^(−1/2) A D^(−1/2), sorted ascending.
    /// A is the binary adjacency (plus I when include_self). All eigenvalues
    /// are real; λ_max ≤ 1 because W is row-stochastic.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, WeightsError> {
        self.island_error()?;
        let n = self.n();
        let mut sym = DMatrix::zeros(n, n);
        let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / (self.degree(i) as f64).sqrt()).collect();
        for i in 0..n {
            if self.include_self {
                sym[(i, i)] = inv_sqrt_deg[i] * inv_sqrt_deg[i];
            }
            for &j in &self.neighbors[i] {
                sym[(i, j)] = inv_sqrt_deg[i] * inv_sqrt_deg[j];
            }
        }
        let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(eigs)
    }

    /// (λ_min, λ_max) of the row-standardized matrix.
    pub fn eigen_range(&self) -> Result<(f64, f64), WeightsError> {
        let eigs = self.eigenvalues()?;
        Ok((eigs[0], eigs[eigs.len() - 1]))
    }

    /// Sparse text form: a header line with the unit count, then one
    /// "id_i id_j w" line per nonzero weight, both directions, in row order.
    pub fn to_text(&self, labels: &[String]) -> String {
        assert_eq!(labels.len(), self.n(), "one label per unit");
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n());
        for i in 0..self.n() {
            if self.include_self {
                let _ = writeln!(out, "{} {} {}", labels[i], labels[i], self.weight(i, i));
            }
            for &j in &self.neighbors[i] {
                let _ = writeln!(out, "{} {} {}", labels[i], labels[j], self.weight(i, j));
            }
        }
        out
    }

    /// Parse the sparse text form. Weights must be positive; the structure
    /// is taken as binary adjacency (diagonal entries set include_self) and
    /// is symmetrized. Returns the structure and the labels in first-seen
    /// order for ids without an entry in `labels`.
    pub fn from_text(text: &str, labels: &[String]) -> Result<ContiguityWeights, WeightsError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| WeightsError::Parse("empty file".into()))?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|_| WeightsError::Parse(format!("bad unit count {header:?}")))?;
        if n != labels.len() {
            return Err(WeightsError::Parse(format!(
                "file declares {n} units but {} labels were supplied",
                labels.len()
            )));
        }
        let index: BTreeMap<&str, usize> =
            labels.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut edges = Vec::new();
        let mut include_self = false;
        for (lineno, line) in lines.enumerate() {
            let mut it = line.split_whitespace();
            let (a, b, w) = match (it.next(), it.next(), it.next(), it.next()) {
                (Some(a), Some(b), Some(w), None) => (a, b, w),
                _ => {
                    return Err(WeightsError::Parse(format!(
                        "line {}: expected \"i j w\"",
                        lineno + 2
                    )))
                }
            };
            let w: f64 = w
                .parse()
                .map_err(|_| WeightsError::Parse(format!("line {}: bad weight {w:?}", lineno + 2)))?;
            if !(w > 0.0) {
                return Err(WeightsError::Parse(format!("line {}: weight must be positive", lineno + 2)));
            }
            let &i = index
                .get(a)
                .ok_or_else(|| WeightsError::Parse(format!("line {}: unknown id {a:?}", lineno + 2)))?;
            let &j = index
                .get(b)
                .ok_or_else(|| WeightsError::Parse(format!("line {}: unknown id {b:?}", lineno + 2)))?;
            if i == j {
                include_self = true;
            } else {
                edges.push((i, j));
            }
        }
        let mut w = ContiguityWeights::from_edges(n, &edges);
        w.include_self = include_self;
        Ok(w)
    }
}
