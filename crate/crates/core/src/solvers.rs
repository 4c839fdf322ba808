//! Fixed-point solvers for the discrete system.
//!
//! For the contact right-hand side the discrete equations become the
//! absolute value equation
//!
//! ```text
//! (A + c I) W = B̄ + c G - c |W - G|,    c = h⁴ K / 2
//! ```
//!
//! whose fixed-point map `T(X) = (A + cI)⁻¹(B̄ + cG) - c (A + cI)⁻¹ |X - G|`
//! contracts in the 2-norm with constant at most
//! `C = (b-a)⁴ K / ((b-a)⁴ K + 32)`. General monotone right-hand sides use a
//! damped iteration on `R(V) = A⁻¹ B̄ + A⁻¹ h⁴ (M + F_M(V))`.

use serde::Serialize;

use crate::discretize::{check_grid, eigenvalues_a, residual_discrete, DiscreteSystem, Grid};
use crate::error::{usage, Error, Result};
use crate::linalg::BandedSpd;
use crate::model::{BvpSpec, PiecewiseLinearContact, RightHandSide};

pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_DAMPING: f64 = 0.5;
/// Iterations without a new best step before the damping is halved.
pub const STALL_WINDOW: usize = 50;
pub const MIN_DAMPING: f64 = 1.0 / 1024.0;

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖a - b‖₂`.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `1e-10 (1 + ‖B̄‖₂)`.
pub fn default_tolerance(bbar: &[f64]) -> f64 {
    1e-10 * (1.0 + norm2(bbar))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub iterations: usize,
    /// `‖W^j - W^{j-1}‖₂` for `j = 1..=iterations`.
    pub step_norms: Vec<f64>,
    /// `‖A W - B̄ - h⁴(M + F_M(W))‖_∞` at the returned iterate.
    pub residual_inf: f64,
    pub contraction_c: Option<f64>,
    /// `C^j ‖W¹ - W⁰‖₂ / (1 - C)` for `j = 1..=iterations`.
    pub apriori_bounds: Vec<f64>,
    pub converged: bool,
    /// Final damping factor of the general solver.
    pub damping: Option<f64>,
}

/// `(b-a)⁴ K / ((b-a)⁴ K + 32)`.
pub fn contraction_constant(spec: &BvpSpec, k: f64) -> Result<f64> {
    if !k.is_finite() || k < 0.0 {
        return Err(usage(format!("stiffness must be finite and >= 0, got {k}")));
    }
    let scaled = spec.length().powi(4) * k;
    Ok(scaled / (scaled + 32.0))
}

/// `C^j ‖W¹ - W⁰‖₂ / (1 - C)`.
pub fn apriori_bound(c: f64, w1: &[f64], w0: &[f64], j: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(usage(format!(
            "contraction constant must lie in [0, 1), got {c}"
        )));
    }
    if w1.len() != w0.len() {
        return Err(usage("iterate lengths differ"));
    }
    let first = dist2(w1, w0);
    Ok(c.powi(j as i32) * first / (1.0 - c))
}

/// The contraction `T` for one contact problem on one grid. The shifted
/// matrix is factored once and the affine part is precomputed.
#[derive(Debug, Clone)]
pub struct ContactMap {
    system: DiscreteSystem,
    contact: PiecewiseLinearContact,
    shift: f64,
    shifted: BandedSpd,
    affine: Vec<f64>,
}

impl ContactMap {
    pub fn new(spec: &BvpSpec, contact: &PiecewiseLinearContact, grid: &Grid) -> Result<Self> {
        let rhs = RightHandSide::Contact(contact.clone());
        let system = DiscreteSystem::new(spec, &rhs, grid)?;
        let shift = 0.5 * system.h4() * contact.stiffness();
        let shifted = system.a.shifted(shift);
        let load: Vec<f64> = system
            .bbar
            .iter()
            .zip(&system.surface)
            .map(|(b, g)| b + shift * g)
            .collect();
        let affine = shifted.solve(&load)?;
        Ok(ContactMap {
            system,
            contact: contact.clone(),
            shift,
            shifted,
            affine,
        })
    }

    pub fn system(&self) -> &DiscreteSystem {
        &self.system
    }

    pub fn contact(&self) -> &PiecewiseLinearContact {
        &self.contact
    }

    /// `c = h⁴ K / 2`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn shifted_matrix(&self) -> &BandedSpd {
        &self.shifted
    }

    /// Largest eigenvalue of `c (A + cI)⁻¹`, i.e. `c / (c + λ_min(A))`.
    pub fn spectral_contraction(&self) -> f64 {
        let lambda_min = eigenvalues_a(self.system.grid.interior()).expect("N >= 5")[0];
        self.shift / (self.shift + lambda_min)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.affine.len();
        if x.len() != n || out.len() != n {
            return Err(usage(format!("iterate length {} != N = {n}", x.len())));
        }
        for ((o, xi), g) in out.iter_mut().zip(x).zip(&self.system.surface) {
            *o = (xi - g).abs();
        }
        self.shifted.solve_in_place(out)?;
        for (o, a) in out.iter_mut().zip(&self.affine) {
            *o = a - self.shift * *o;
        }
        Ok(())
    }

    /// `W¹, W², ...` starting from `w0`.
    pub fn iterates(&self, w0: Vec<f64>) -> impl Iterator<Item = Vec<f64>> + '_ {
        std::iter::successors(Some(w0), move |w| self.apply(w).ok()).skip(1)
    }

    pub fn residual(&self, w: &[f64]) -> Result<Vec<f64>> {
        residual_discrete(
            &self.system,
            &RightHandSide::Contact(self.contact.clone()),
            w,
        )
    }
}

struct FixedPointRun {
    x: Vec<f64>,
    step_norms: Vec<f64>,
    converged: bool,
}

fn iterate_to_tolerance<F>(
    mut x: Vec<f64>,
    tol: f64,
    max_iter: usize,
    mut step: F,
) -> Result<FixedPointRun>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut next = vec![0.0; x.len()];
    let mut step_norms = Vec::new();
    let mut converged = false;
    for iteration in 1..=max_iter {
        step(&x, &mut next)?;
        let s = dist2(&next, &x);
        if !s.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration });
        }
        std::mem::swap(&mut x, &mut next);
        step_norms.push(s);
        if s <= tol {
            converged = true;
            break;
        }
    }
    Ok(FixedPointRun {
        x,
        step_norms,
        converged,
    })
}

fn check_tolerance(tol: f64) -> Result<()> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(usage(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    Ok(())
}

fn contact_report(map: &ContactMap, run: &FixedPointRun, w: &[f64]) -> Result<IterationReport> {
    let c = contraction_constant(&map.system.spec, map.contact.stiffness())?;
    let first = run.step_norms.first().copied().unwrap_or(0.0);
    let apriori_bounds = (1..=run.step_norms.len())
        .map(|j| c.powi(j as i32) * first / (1.0 - c))
        .collect();
    Ok(IterationReport {
        iterations: run.step_norms.len(),
        step_norms: run.step_norms.clone(),
        residual_inf: norm_inf(&map.residual(w)?),
        contraction_c: Some(c),
        apriori_bounds,
        converged: run.converged,
        damping: None,
    })
}

/// Iterates `W^j = T(W^{j-1})` until `‖W^j - W^{j-1}‖₂ <= tol`. `w0`
/// defaults to zero. Running out of iterations is reported through
/// `converged = false`, not as an error.
pub fn ave_solve(
    spec: &BvpSpec,
    contact: &PiecewiseLinearContact,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
    w0: Option<&[f64]>,
) -> Result<(Vec<f64>, IterationReport)> {
    check_tolerance(tol)?;
    check_grid(spec, grid)?;
    let map = ContactMap::new(spec, contact, grid)?;
    ave_solve_with(&map, tol, max_iter, w0)
}

/// [`ave_solve`] against a prebuilt map.
pub fn ave_solve_with(
    map: &ContactMap,
    tol: f64,
    max_iter: usize,
    w0: Option<&[f64]>,
) -> Result<(Vec<f64>, IterationReport)> {
    check_tolerance(tol)?;
    let n = map.system.grid.interior();
    let start = match w0 {
        Some(w) if w.len() != n => {
            return Err(usage(format!(
                "initial guess length {} != N = {n}",
                w.len()
            )))
        }
        Some(w) => w.to_vec(),
        None => vec![0.0; n],
    };
    let run = iterate_to_tolerance(start, tol, max_iter, |x, out| map.apply_into(x, out))?;
    let report = contact_report(map, &run, &run.x)?;
    Ok((run.x, report))
}

/// The same iteration in the shifted unknown `Z = W - G`:
/// `(A + cI) Z = B̄ - A G - c |Z|`. Starts from `Z⁰ = -G` (i.e. `W⁰ = 0`).
pub fn ave_solve_z(
    spec: &BvpSpec,
    contact: &PiecewiseLinearContact,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterationReport)> {
    check_tolerance(tol)?;
    check_grid(spec, grid)?;
    let map = ContactMap::new(spec, contact, grid)?;
    let sys = &map.system;
    let ag = sys.a.mul_vec(&sys.surface)?;
    let load: Vec<f64> = sys.bbar.iter().zip(&ag).map(|(b, a)| b - a).collect();
    let affine_z = map.shifted.solve(&load)?;
    let start: Vec<f64> = sys.surface.iter().map(|g| -g).collect();
    let run = iterate_to_tolerance(start, tol, max_iter, |z, out| {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = zi.abs();
        }
        map.shifted.solve_in_place(out)?;
        for (o, a) in out.iter_mut().zip(&affine_z) {
            *o = a - map.shift * *o;
        }
        Ok(())
    })?;
    let w: Vec<f64> = run.x.iter().zip(&sys.surface).map(|(z, g)| z + g).collect();
    let report = contact_report(&map, &run, &w)?;
    Ok((run.x, report))
}

/// `R(V) = A⁻¹ (B̄ + h⁴ f(x, V))` for a general monotone right-hand side.
#[derive(Debug, Clone)]
pub struct MonotoneMap {
    system: DiscreteSystem,
    rhs: RightHandSide,
}

impl MonotoneMap {
    pub fn new(spec: &BvpSpec, rhs: &RightHandSide, grid: &Grid) -> Result<Self> {
        Ok(MonotoneMap {
            system: DiscreteSystem::new(spec, rhs, grid)?,
            rhs: rhs.clone(),
        })
    }

    pub fn system(&self) -> &DiscreteSystem {
        &self.system
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let h4 = self.system.h4();
        let load: Vec<f64> = self
            .system
            .bbar
            .iter()
            .zip(self.system.grid.interior_nodes().iter().zip(v))
            .map(|(b, (&x, &vi))| b + h4 * self.rhs.value(x, vi))
            .collect();
        self.system.a.solve(&load)
    }

    /// `A⁻¹ (B̄ + h⁴ M)`, the upper end of the bracket containing the
    /// solution. The lower end is `R` applied to it.
    pub fn upper_bracket(&self) -> Result<Vec<f64>> {
        let h4 = self.system.h4();
        let load: Vec<f64> = self
            .system
            .bbar
            .iter()
            .zip(&self.system.bound)
            .map(|(b, m)| b + h4 * m)
            .collect();
        self.system.a.solve(&load)
    }

    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        residual_discrete(&self.system, &self.rhs, v)
    }
}

/// Damped iteration `V ← (1-θ) V + θ R(V)` from the upper bracket.
///
/// Stops once `‖R(V) - V‖₂ <= tol`. When that quantity has not reached a new
/// minimum for [`STALL_WINDOW`] iterations, θ is halved and the iteration
/// restarts from the best iterate seen; below [`MIN_DAMPING`] the result is
/// returned unconverged.
pub fn general_solve(
    spec: &BvpSpec,
    rhs: &RightHandSide,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
    damping: f64,
) -> Result<(Vec<f64>, IterationReport)> {
    check_tolerance(tol)?;
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(usage(format!("damping must lie in (0, 1], got {damping}")));
    }
    let map = MonotoneMap::new(spec, rhs, grid)?;
    let mut theta = damping;
    let mut v = map.upper_bracket()?;
    let mut best = (f64::INFINITY, v.clone());
    let mut since_best = 0usize;
    let mut step_norms = Vec::new();
    let mut converged = false;
    let mut attempts = 0usize;

    while attempts < max_iter {
        attempts += 1;
        let r = map.apply(&v)?;
        let gap = dist2(&r, &v);
        if !gap.is_finite() {
            theta *= 0.5;
            if theta < MIN_DAMPING {
                break;
            }
            v = best.1.clone();
            best.0 = f64::INFINITY;
            since_best = 0;
            continue;
        }
        if gap <= tol {
            // V is already a fixed point to tolerance; count this as the
            // final (tiny) step
            step_norms.push(theta * gap);
            v.iter_mut()
                .zip(&r)
                .for_each(|(vi, ri)| *vi += theta * (ri - *vi));
            converged = true;
            break;
        }
        v.iter_mut()
            .zip(&r)
            .for_each(|(vi, ri)| *vi += theta * (ri - *vi));
        step_norms.push(theta * gap);
        if gap < best.0 {
            best = (gap, v.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= STALL_WINDOW {
            theta *= 0.5;
            if theta < MIN_DAMPING {
                break;
            }
            v = best.1.clone();
            best.0 = f64::INFINITY;
            since_best = 0;
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            iteration: step_norms.len(),
        });
    }
    let report = IterationReport {
        iterations: step_norms.len(),
        step_norms,
        residual_inf: norm_inf(&map.residual(&v)?),
        contraction_c: None,
        apriori_bounds: Vec::new(),
        converged,
        damping: Some(theta),
    };
    Ok((v, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::build_grid;
    use crate::model::GeneralMonotone;

    fn vocal_spec() -> BvpSpec {
        BvpSpec::new(0.0, 1.0, 0.0, 0.0, -20.0, -20.0).unwrap()
    }

    fn plane(k: f64) -> PiecewiseLinearContact {
        PiecewiseLinearContact::new(k, |x| x / 2.0, |_| 0.5).unwrap()
    }

    #[test]
    fn contraction_constant_examples() {
        let unit = vocal_spec();
        assert_eq!(contraction_constant(&unit, 0.0).unwrap(), 0.0);
        let c = contraction_constant(&unit, 1e4).unwrap();
        assert!((c - 10000.0 / 10032.0).abs() < 1e-15);
        assert!((c - 0.9968102).abs() < 1e-7);
        let wide = BvpSpec::new(0.0, 2.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!((contraction_constant(&wide, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(contraction_constant(&unit, -1.0).is_err());
    }

    #[test]
    fn apriori_bound_examples() {
        let w1 = [3.0, 4.0];
        let w0 = [0.0, 0.0];
        assert_eq!(apriori_bound(0.0, &w1, &w0, 1).unwrap(), 0.0);
        assert_eq!(apriori_bound(0.0, &w1, &w0, 5).unwrap(), 0.0);
        assert!((apriori_bound(0.5, &w1, &w0, 0).unwrap() - 10.0).abs() < 1e-14);
        assert!((apriori_bound(0.5, &w1, &w0, 2).unwrap() - 2.5).abs() < 1e-14);
        assert!(apriori_bound(1.0, &w1, &w0, 1).is_err());
    }

    #[test]
    fn zero_stiffness_is_one_linear_solve() {
        let spec = vocal_spec();
        let grid = build_grid(&spec, 30).unwrap();
        let (w, report) = ave_solve(&spec, &plane(0.0), &grid, 1e-12, 10, None).unwrap();
        let sys = DiscreteSystem::new(&spec, &plane(0.0).into(), &grid).unwrap();
        let linear = sys.a.solve(&sys.bbar).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2);
        assert_eq!(report.step_norms[report.iterations - 1], 0.0);
        assert!(dist2(&w, &linear) < 1e-14);
        assert_eq!(report.contraction_c, Some(0.0));
    }

    #[test]
    fn high_surface_never_touched() {
        let spec = vocal_spec();
        let grid = build_grid(&spec, 40).unwrap();
        let contact = PiecewiseLinearContact::new(1e4, |_| 1e6, |_| 0.0).unwrap();
        // g ~ 1e6 cancels inside T, so the attainable step size is ~1e-9
        let (w, report) = ave_solve(&spec, &contact, &grid, 1e-8, 100_000, None).unwrap();
        assert!(report.converged);
        let linear_rhs: RightHandSide = plane(0.0).into();
        let sys = DiscreteSystem::new(&spec, &linear_rhs, &grid).unwrap();
        let linear = sys.a.solve(&sys.bbar).unwrap();
        assert!(
            norm_inf(
                &w.iter()
                    .zip(&linear)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>()
            ) < 1e-6
        );
        for (&x, &wi) in grid.interior_nodes().iter().zip(&w) {
            assert_eq!(contact.force(x, wi), 0.0);
        }
    }

    #[test]
    fn converged_residual_is_small() {
        let spec = vocal_spec();
        let grid = build_grid(&spec, 50).unwrap();
        let tol = 1e-10;
        let (w, report) = ave_solve(&spec, &plane(1e4), &grid, tol, 100_000, None).unwrap();
        assert!(report.converged);
        assert_eq!(report.step_norms.len(), report.iterations);
        assert!(report.residual_inf <= 10.0 * tol * 16.0);
        assert!(report.apriori_bounds.windows(2).all(|p| p[1] <= p[0]));
        let contact = plane(1e4);
        for (&x, &wi) in grid.interior_nodes().iter().zip(&w) {
            assert!(contact.force(x, wi) <= 0.0);
        }
    }

    #[test]
    fn unconverged_is_flagged_not_raised() {
        let spec = vocal_spec();
        let grid = build_grid(&spec, 25).unwrap();
        let (_, report) = ave_solve(&spec, &plane(1e4), &grid, 1e-14, 5, None).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 5);
    }

    #[test]
    fn bad_arguments() {
        let spec = vocal_spec();
        let grid = build_grid(&spec, 25).unwrap();
        assert!(ave_solve(&spec, &plane(1.0), &grid, 0.0, 5, None).is_err());
        assert!(ave_solve(&spec, &plane(1.0), &grid, 1e-8, 5, Some(&[0.0; 3])).is_err());
        let other = BvpSpec::new(0.0, 2.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(ave_solve(&other, &plane(1.0), &grid, 1e-8, 5, None).is_err());
        let rhs: RightHandSide = plane(1.0).into();
        assert!(general_solve(&spec, &rhs, &grid, 1e-8, 5, 0.0).is_err());
        assert!(general_solve(&spec, &rhs, &grid, 1e-8, 5, 1.5).is_err());
    }

    #[test]
    fn z_form_special_cases() {
        let spec = vocal_spec();
        let grid = build_grid(&spec, 20).unwrap();
        let flat = PiecewiseLinearContact::new(300.0, |_| 0.0, |_| 0.0).unwrap();
        let (z, _) = ave_solve_z(&spec, &flat, &grid, 1e-12, 10_000).unwrap();
        let (w, _) = ave_solve(&spec, &flat, &grid, 1e-12, 10_000, None).unwrap();
        assert_eq!(z, w);

        let (z, report) = ave_solve_z(&spec, &plane(0.0), &grid, 1e-12, 10).unwrap();
        assert!(report.converged);
        let sys = DiscreteSystem::new(&spec, &plane(0.0).into(), &grid).unwrap();
        let linear = sys.a.solve(&sys.bbar).unwrap();
        for ((zi, li), g) in z.iter().zip(&linear).zip(&sys.surface) {
            assert!((zi - (li - g)).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_rhs_converges_in_one_step() {
        let spec = vocal_spec();
        let grid = build_grid(&spec, 25).unwrap();
        let rhs: RightHandSide = GeneralMonotone::new(|_, _| 3.0, 3.0).unwrap().into();
        let (w, report) = general_solve(&spec, &rhs, &grid, 1e-10, 100, 0.5).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert!(report.residual_inf < 1e-12);
        let map = MonotoneMap::new(&spec, &rhs, &grid).unwrap();
        assert!(dist2(&w, &map.upper_bracket().unwrap()) < 1e-14);
    }
}
