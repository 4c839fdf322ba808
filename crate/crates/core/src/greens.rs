//! Continuous-space reference: the integral form
//!
//! ```text
//! w(x) = w̄_M(x) + ∫ G(x, s) (f(s, w(s)) - M) ds,
//! G(x, s) = ∫ G̃(x, t) G̃(t, s) dt,
//! ```
//!
//! where `G̃` is the Green's function of `y'' = h`, `y(a) = y(b) = 0`.
//! Integrals use composite Simpson on a uniform grid, and `G` is tabulated
//! once per grid. The Picard iteration on this operator is an oracle for the
//! discrete solvers at small stiffness, where it contracts.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{usage, Result};
use crate::model::{BvpSpec, ReferenceQuartic, RightHandSide};

/// Green's function of `y'' = h` with homogeneous Dirichlet data.
pub fn green_tilde(spec: &BvpSpec, x: f64, s: f64) -> Result<f64> {
    spec.check_point(x)?;
    spec.check_point(s)?;
    Ok(green_tilde_unchecked(spec.a, spec.b, x, s))
}

fn green_tilde_unchecked(a: f64, b: f64, x: f64, s: f64) -> f64 {
    if s <= x {
        -(b - x) * (s - a) / (b - a)
    } else {
        -(b - s) * (x - a) / (b - a)
    }
}

/// Uniform composite-Simpson grid with `m` panels on `[a, b]`.
#[derive(Debug, Clone)]
pub struct QuadGrid {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    table: Arc<OnceLock<Vec<f64>>>,
}

impl PartialEq for QuadGrid {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b && self.nodes.len() == other.nodes.len()
    }
}

impl QuadGrid {
    pub fn new(spec: &BvpSpec, m: usize) -> Result<Self> {
        if m < 4 || !m.is_multiple_of(2) {
            return Err(usage(format!(
                "Simpson grid needs an even panel count >= 4, got {m}"
            )));
        }
        let h = spec.length() / m as f64;
        let mut nodes: Vec<f64> = (0..=m).map(|i| spec.a + i as f64 * h).collect();
        nodes[m] = spec.b;
        let weights = (0..=m)
            .map(|i| {
                let c = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        Ok(QuadGrid {
            a: spec.a,
            b: spec.b,
            nodes,
            weights,
            table: Arc::new(OnceLock::new()),
        })
    }

    pub fn panels(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_spec(&self, spec: &BvpSpec) -> Result<()> {
        if self.a != spec.a || self.b != spec.b {
            return Err(usage("quadrature grid was built on a different interval"));
        }
        Ok(())
    }

    fn kernel(&self, x: f64, s: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, w)| {
                w * green_tilde_unchecked(self.a, self.b, x, t)
                    * green_tilde_unchecked(self.a, self.b, t, s)
            })
            .sum()
    }

    /// Row-major `(m+1) x (m+1)` table of `G` at node pairs, built on first use.
    pub fn green_table(&self) -> &[f64] {
        self.table.get_or_init(|| {
            let n = self.nodes.len();
            let mut table = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let g = self.kernel(self.nodes[i], self.nodes[j]);
                    table[i * n + j] = g;
                    table[j * n + i] = g;
                }
            }
            table
        })
    }

    /// `Σ_j w_j G(x_i, s_j) ≈ ∫ G(x_i, s) ds` for every node.
    pub fn kernel_mass(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let table = self.green_table();
        (0..n)
            .map(|i| {
                table[i * n..(i + 1) * n]
                    .iter()
                    .zip(&self.weights)
                    .map(|(g, w)| g * w)
                    .sum()
            })
            .collect()
    }
}

/// A function sampled on the nodes of a [`QuadGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub grid: QuadGrid,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: &QuadGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes.len() {
            return Err(usage(format!(
                "{} samples for a grid with {} nodes",
                values.len(),
                grid.nodes.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(usage("sampled values must be finite"));
        }
        Ok(SampledFunction {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &QuadGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes.iter().map(|&x| f(x)).collect())
    }
}

/// `G(x, s)` by Simpson quadrature of `∫ G̃(x, t) G̃(t, s) dt`.
pub fn green_g(spec: &BvpSpec, quad: &QuadGrid, x: f64, s: f64) -> Result<f64> {
    quad.check_spec(spec)?;
    spec.check_point(x)?;
    spec.check_point(s)?;
    Ok(quad.kernel(x, s))
}

/// `L[v](x_i) = w̄_M(x_i) + Σ_j w_j G(x_i, s_j) (f(s_j, v_j) - M)`.
pub fn apply_l(
    spec: &BvpSpec,
    rhs: &RightHandSide,
    m_bound: f64,
    quad: &QuadGrid,
    v: &SampledFunction,
) -> Result<SampledFunction> {
    quad.check_spec(spec)?;
    if v.grid != *quad {
        return Err(usage(
            "sampled function lives on a different quadrature grid",
        ));
    }
    let quartic = ReferenceQuartic::new(spec, m_bound);
    let weighted_load: Vec<f64> = quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .zip(&v.values)
        .map(|((&s, w), &vs)| w * (rhs.value(s, vs) - m_bound))
        .collect();
    let n = quad.nodes.len();
    let table = quad.green_table();
    let values = quad
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let integral: f64 = table[i * n..(i + 1) * n]
                .iter()
                .zip(&weighted_load)
                .map(|(g, l)| g * l)
                .sum();
            quartic.eval(x) + integral
        })
        .collect();
    SampledFunction::new(quad, values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub iterations: usize,
    /// Sup-norm step per iteration.
    pub step_norms: Vec<f64>,
    pub converged: bool,
    /// `K · max_i Σ_j w_j G(x_i, s_j)` for the contact family: a Lipschitz
    /// bound for the operator in the sup norm.
    pub kernel_bound: Option<f64>,
    /// Largest ratio of consecutive step norms observed.
    pub observed_rate: Option<f64>,
    /// Whether `L[w̄_M] <= v <= w̄_M` held at every iterate.
    pub bracket_held: bool,
    /// `‖v - L[v]‖_∞` at the returned iterate.
    pub fixed_point_residual: f64,
}

/// Consecutive non-decreasing steps that count as non-contraction.
const NON_CONTRACTION_WINDOW: usize = 10;

/// Picard iteration `v ← L[v]` from `v⁰ = w̄_M`, stopped when the sup-norm
/// step drops below `tol`. Non-contraction returns the best iterate seen,
/// flagged unconverged.
pub fn picard_reference_solve(
    spec: &BvpSpec,
    rhs: &RightHandSide,
    m_bound: f64,
    quad: &QuadGrid,
    tol: f64,
    max_iter: usize,
) -> Result<(SampledFunction, OracleReport)> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(usage(format!("tolerance must be positive, got {tol}")));
    }
    quad.check_spec(spec)?;
    let quartic = ReferenceQuartic::new(spec, m_bound);
    let upper = SampledFunction::from_fn(quad, |x| quartic.eval(x))?;
    let lower = apply_l(spec, rhs, m_bound, quad, &upper)?;
    let slack = 1e-12 * (1.0 + upper.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    let inside = |v: &SampledFunction| {
        v.values
            .iter()
            .zip(&lower.values)
            .zip(&upper.values)
            .all(|((x, lo), hi)| *x >= lo - slack && *x <= hi + slack)
    };

    let kernel_bound = rhs
        .as_contact()
        .map(|c| c.stiffness() * quad.kernel_mass().into_iter().fold(0.0, f64::max));

    let mut v = upper.clone();
    let mut bracket_held = inside(&v);
    let mut step_norms: Vec<f64> = Vec::new();
    let mut best: Option<(f64, SampledFunction)> = None;
    let mut rising = 0usize;
    let mut converged = false;
    for _ in 0..max_iter {
        let next = apply_l(spec, rhs, m_bound, quad, &v)?;
        let step = next
            .values
            .iter()
            .zip(&v.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        bracket_held &= inside(&next);
        if let Some(&prev) = step_norms.last() {
            rising = if step >= prev { rising + 1 } else { 0 };
        }
        step_norms.push(step);
        v = next;
        if best.as_ref().is_none_or(|(s, _)| step < *s) {
            best = Some((step, v.clone()));
        }
        if step < tol {
            converged = true;
            break;
        }
        if rising >= NON_CONTRACTION_WINDOW {
            break;
        }
    }
    if !converged {
        if let Some((_, b)) = best {
            v = b;
        }
    }
    let observed_rate = step_norms
        .windows(2)
        .filter(|p| p[0] > 0.0)
        .map(|p| p[1] / p[0])
        .reduce(f64::max);
    let check = apply_l(spec, rhs, m_bound, quad, &v)?;
    let fixed_point_residual = check
        .values
        .iter()
        .zip(&v.values)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((
        v,
        OracleReport {
            iterations: step_norms.len(),
            step_norms,
            converged,
            kernel_bound,
            observed_rate,
            bracket_held,
            fixed_point_residual,
        },
    ))
}
