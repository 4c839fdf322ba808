//! Uniform-grid finite-difference system: central fourth differences in the
//! interior, one-sided second differences carrying the moment data at the
//! ends.
//!
//! With `W = (w_1, ..., w_N)` the discrete problem reads
//!
//! ```text
//! A W = B̄ + h⁴ (M + F_M(W)),    [F_M(W)]_i = f(x_i, W_i) - M
//! ```
//!
//! where `A` is the pentadiagonal matrix with rows `(5, -4, 1)`,
//! `(-4, 6, -4, 1)`, `(1, -4, 6, -4, 1)`, ... and `B̄` collects the boundary
//! data.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{usage, Result};
use crate::linalg::BandedSpd;
use crate::model::{BvpSpec, RightHandSide};

/// Smallest interior node count for which all five stencil rows exist.
pub const MIN_INTERIOR_NODES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    interior: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    /// Number of interior nodes `N`.
    pub fn interior(&self) -> usize {
        self.interior
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// All `N + 2` nodes, `x_0 = a` through `x_{N+1} = b`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..=self.interior]
    }
}

pub fn build_grid(spec: &BvpSpec, n: usize) -> Result<Grid> {
    if n < MIN_INTERIOR_NODES {
        return Err(usage(format!(
            "need at least {MIN_INTERIOR_NODES} interior nodes, got {n}"
        )));
    }
    let h = spec.length() / (n + 1) as f64;
    let mut nodes: Vec<f64> = (0..=n + 1).map(|i| spec.a + i as f64 * h).collect();
    nodes[0] = spec.a;
    nodes[n + 1] = spec.b;
    Ok(Grid {
        interior: n,
        h,
        nodes,
    })
}

/// The fourth-difference matrix `A` of order `n`.
pub fn assemble_a(n: usize) -> Result<BandedSpd> {
    if n < MIN_INTERIOR_NODES {
        return Err(usage(format!(
            "need at least {MIN_INTERIOR_NODES} interior nodes, got {n}"
        )));
    }
    let mut diag = vec![6.0; n];
    diag[0] = 5.0;
    diag[n - 1] = 5.0;
    BandedSpd::from_bands(diag, vec![-4.0; n - 1], vec![1.0; n - 2])
}

/// `λ_i = 16 sin⁴(iπ / (2(N+1)))`, `i = 1..=N`, ascending.
pub fn eigenvalues_a(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(usage("eigenvalues_a needs N >= 1"));
    }
    Ok((1..=n)
        .map(|i| 16.0 * (i as f64 * PI / (2.0 * (n + 1) as f64)).sin().powi(4))
        .collect())
}

/// Boundary load vector `B̄`. The `h⁴/12` corrections use `f` at the
/// boundary values, not at unknowns.
pub fn assemble_bbar(spec: &BvpSpec, rhs: &RightHandSide, grid: &Grid) -> Vec<f64> {
    let n = grid.interior();
    let h = grid.h();
    let h2 = h * h;
    let h4 = h2 * h2;
    let x = grid.nodes();
    let mut bbar = vec![0.0; n];
    bbar[0] = -spec.beta1 * h2 + 2.0 * spec.alpha1 - h4 * rhs.value(x[0], spec.alpha1) / 12.0;
    bbar[1] = -spec.alpha1;
    bbar[n - 2] = -spec.alpha2;
    bbar[n - 1] =
        -spec.beta2 * h2 + 2.0 * spec.alpha2 - h4 * rhs.value(x[n + 1], spec.alpha2) / 12.0;
    bbar
}

/// Everything needed to evaluate the discrete equations on one grid.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub spec: BvpSpec,
    pub grid: Grid,
    pub a: BandedSpd,
    pub bbar: Vec<f64>,
    /// Contact surface sampled at interior nodes; empty unless the right-hand
    /// side is the contact family.
    pub surface: Vec<f64>,
    /// `M` repeated `N` times.
    pub bound: Vec<f64>,
}

impl DiscreteSystem {
    pub fn new(spec: &BvpSpec, rhs: &RightHandSide, grid: &Grid) -> Result<Self> {
        check_grid(spec, grid)?;
        let n = grid.interior();
        let surface = match rhs.as_contact() {
            Some(c) => grid
                .interior_nodes()
                .iter()
                .map(|&x| c.surface(x))
                .collect(),
            None => Vec::new(),
        };
        Ok(DiscreteSystem {
            spec: *spec,
            grid: grid.clone(),
            a: assemble_a(n)?,
            bbar: assemble_bbar(spec, rhs, grid),
            surface,
            bound: vec![rhs.bound(); n],
        })
    }

    pub fn h4(&self) -> f64 {
        self.grid.h().powi(4)
    }

    /// Pads interior values with the two boundary displacements.
    pub fn with_boundary(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(interior.len() + 2);
        full.push(self.spec.alpha1);
        full.extend_from_slice(interior);
        full.push(self.spec.alpha2);
        full
    }
}

pub(crate) fn check_grid(spec: &BvpSpec, grid: &Grid) -> Result<()> {
    let nodes = grid.nodes();
    if nodes[0] != spec.a || nodes[nodes.len() - 1] != spec.b {
        return Err(usage("grid was not built on this interval"));
    }
    Ok(())
}

/// `A W - B̄ - h⁴ (M + F_M(W))`; zero at the exact discrete solution.
pub fn residual_discrete(sys: &DiscreteSystem, rhs: &RightHandSide, w: &[f64]) -> Result<Vec<f64>> {
    let n = sys.grid.interior();
    if w.len() != n {
        return Err(usage(format!("iterate length {} != N = {n}", w.len())));
    }
    let h4 = sys.h4();
    let aw = sys.a.mul_vec(w)?;
    Ok(aw
        .iter()
        .zip(&sys.bbar)
        .zip(sys.grid.interior_nodes().iter().zip(w))
        .map(|((aw, b), (&x, &wi))| aw - b - h4 * rhs.value(x, wi))
        .collect())
}
