// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Bounded Levenberg–Marquardt least squares and the calibration fits built on
//! it: cavity spectra, Ramsey intensity, visibility against gate power and
//! contrast decay.
//!
//! Reported covariances are the Gauss–Newton approximation `(JᵀWJ)⁻¹` at the
//! optimum. When the data carry no uncertainties the covariance is rescaled by
//! the reduced chi-square.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::evolve::Simulator;
use crate::model::PulseSpec;
use crate::protocol::{contrast_decay_model, coupled_photon_number, spin_populations, Curve};
use crate::steady::{reflection_spectrum, Polarization, SpectrumParams};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Smallest eigenvalue ratio of `JᵀWJ` accepted as well conditioned.
const DEGENERACY_RATIO: f64 = 1e-12;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

/// A bounded nonlinear least-squares problem. `model(p, x)` returns the
/// prediction at every abscissa. Setting `lo == hi` holds a parameter fixed.
pub struct FitProblem<F> {
    pub model: F,
    pub data: Curve,
    pub init: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub names: Vec<String>,
    pub max_iter: usize,
    /// Relative cost change below which an accepted step ends the descent.
    pub tolerance: f64,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step: f64,
}

impl<F> FitProblem<F>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    pub fn new(model: F, data: Curve, init: Vec<f64>, bounds: Vec<(f64, f64)>) -> Self {
        let names = (0..init.len()).map(|k| format!("p{k}")).collect();
        Self {
            model,
            data,
            init,
            bounds,
            names,
            max_iter: DEFAULT_MAX_ITER,
            tolerance: DEFAULT_TOLERANCE,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_names(mut self, names: &[&str]) -> Self {
        self.names = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.data.is_empty() {
            return Err(invalid("fit data is empty"));
        }
        if self.init.is_empty() || self.init.len() != self.bounds.len() || self.names.len() != self.init.len() {
            return Err(invalid("init, bounds and names must have the same nonzero length"));
        }
        for (k, (&p, &(lo, hi))) in self.init.iter().zip(&self.bounds).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(invalid(format!("bounds for {} are not an interval", self.names[k])));
            }
            if !(p.is_finite() && p >= lo && p <= hi) {
                return Err(invalid(format!("initial {} = {p} lies outside [{lo}, {hi}]", self.names[k])));
            }
        }
        if !(self.tolerance > 0.0 && self.fd_step > 0.0 && self.max_iter > 0) {
            return Err(invalid("tolerance, fd_step and max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    /// The damped normal equations needed extra regularization.
    pub singular_jacobian: bool,
    /// `JᵀWJ` is singular or nearly so: some parameter combination is not
    /// determined by the data.
    pub degenerate_covariance: bool,
    pub condition_number: f64,
    pub at_bound: Vec<bool>,
    /// The damping grew without finding a lower cost.
    pub stalled: bool,
    pub model_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Weighted sum of squared residuals.
    pub cost: f64,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len()).map(|k| self.covariance[k][k].max(0.0).sqrt()).collect()
    }

    /// Converged with a well-conditioned covariance and no free parameter
    /// pinned at a bound.
    pub fn identifiable(&self) -> bool {
        self.converged && !self.diagnostics.degenerate_covariance && !self.diagnostics.at_bound.iter().any(|b| *b)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.params[k])
    }
}

struct Evaluator<'a, F> {
    problem: &'a FitProblem<F>,
    weights: Vec<f64>,
}

impl<F> Evaluator<'_, F>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    fn predict(&self, p: &[f64]) -> Result<Vec<f64>> {
        let m = (self.problem.model)(p, &self.problem.data.x)?;
        if m.len() != self.problem.data.len() {
            return Err(invalid(format!("model returned {} values for {} points", m.len(), self.problem.data.len())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelSanity(format!("model produced non-finite values at {p:?}")));
        }
        Ok(m)
    }

    fn residuals(&self, p: &[f64]) -> Result<DVector<f64>> {
        let m = self.predict(p)?;
        let y = &self.problem.data.y;
        Ok(DVector::from_iterator(m.len(), (0..m.len()).map(|i| (y[i] - m[i]) * self.weights[i])))
    }

    /// Weighted model Jacobian `∂m_i/∂p_j / σ_i`; fixed parameters get zero columns.
    fn jacobian(&self, p: &[f64], base: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = base.len();
        let cols: Vec<DVector<f64>> = (0..p.len())
            .into_par_iter()
            .map(|j| -> Result<DVector<f64>> {
                let (lo, hi) = self.problem.bounds[j];
                if lo == hi {
                    return Ok(DVector::zeros(n));
                }
                let mut h = self.problem.fd_step * p[j].abs().max(1e-3);
                if p[j] + h > hi {
                    h = -h;
                }
                let mut q = p.to_vec();
                q[j] += h;
                let h = q[j] - p[j];
                let r = self.residuals(&q)?;
                // residuals are (y − m)·w, so ∂m·w = −∂r
                Ok((base - r) / h)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&cols))
    }
}

fn clamp(p: f64, (lo, hi): (f64, f64)) -> f64 {
    p.max(lo).min(hi)
}

/// Damped Gauss–Newton descent with bound projection. Deterministic: the same
/// problem always yields bit-identical results.
pub fn least_squares<F>(problem: &FitProblem<F>) -> Result<FitResult>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    problem.validate()?;
    let weights = match &problem.data.sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; problem.data.len()],
    };
    let ev = Evaluator { problem, weights };
    let k = problem.init.len();
    let bounds = &problem.bounds;

    let mut p: Vec<f64> = problem.init.clone();
    let mut r = ev.residuals(&p)?;
    let mut cost = r.norm_squared();
    let mut evaluations = 1usize;
    let mut lambda = LAMBDA_INIT;
    let (mut converged, mut singular, mut stalled) = (false, false, false);
    let mut iterations = 0;

    'outer: while iterations < problem.max_iter {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = ev.jacobian(&p, &r)?;
        evaluations += k;
        let grad = jac.transpose() * &r;
        // Parameters pinned at a bound with the descent direction pointing out
        // of the box are held for this iteration.
        let free: Vec<usize> = (0..k)
            .filter(|&j| {
                let (lo, hi) = bounds[j];
                lo < hi && !(p[j] <= lo && grad[j] < 0.0) && !(p[j] >= hi && grad[j] > 0.0)
            })
            .collect();
        if free.is_empty() || free.iter().all(|&j| grad[j] == 0.0) {
            converged = true;
            break;
        }
        let jf = jac.select_columns(&free);
        let jtj = jf.transpose() * &jf;
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&j| grad[j]));
        let diag_max = jtj.diagonal().max();
        loop {
            let mut a = jtj.clone();
            for d in 0..free.len() {
                let scale = if jtj[(d, d)] > 0.0 { jtj[(d, d)] } else { singular = true; 1e-12 * diag_max.max(1e-300) };
                a[(d, d)] += lambda * scale;
            }
            let Some(chol) = a.cholesky() else {
                singular = true;
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    stalled = true;
                    converged = true;
                    break 'outer;
                }
                continue;
            };
            let delta = chol.solve(&gf);
            let mut trial = p.clone();
            for (d, &j) in free.iter().enumerate() {
                trial[j] = clamp(p[j] + delta[d], bounds[j]);
            }
            if trial == p {
                converged = true;
                break 'outer;
            }
            let r_trial = ev.residuals(&trial)?;
            evaluations += 1;
            let c_trial = r_trial.norm_squared();
            if c_trial < cost {
                let rel = (cost - c_trial) / cost;
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-15);
                if rel <= problem.tolerance {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                stalled = true;
                converged = true;
                break 'outer;
            }
        }
    }

    let jac = ev.jacobian(&p, &r)?;
    evaluations += k;
    let (covariance, condition_number, degenerate) = covariance(&jac, bounds, cost, problem.data.sigma.is_none())?;
    let at_bound = (0..k)
        .map(|j| {
            let (lo, hi) = bounds[j];
            let tol = |b: f64| 1e-9 * b.abs().max(1.0);
            lo < hi && ((lo.is_finite() && p[j] - lo <= tol(lo)) || (hi.is_finite() && hi - p[j] <= tol(hi)))
        })
        .collect();
    Ok(FitResult {
        names: problem.names.clone(),
        params: p,
        cost,
        covariance,
        converged,
        iterations,
        diagnostics: FitDiagnostics {
            singular_jacobian: singular,
            degenerate_covariance: degenerate,
            condition_number,
            at_bound,
            stalled,
            model_evaluations: evaluations,
        },
    })
}

/// Pseudo-inverse of `JᵀWJ` over the non-fixed parameters.
fn covariance(jac: &DMatrix<f64>, bounds: &[(f64, f64)], cost: f64, rescale: bool) -> Result<(Vec<Vec<f64>>, f64, bool)> {
    let k = bounds.len();
    let active: Vec<usize> = (0..k).filter(|&j| bounds[j].0 < bounds[j].1).collect();
    let mut cov = vec![vec![0.0; k]; k];
    if active.is_empty() {
        return Ok((cov, 1.0, false));
    }
    let ja = jac.select_columns(&active);
    let m = ja.transpose() * &ja;
    let eig = m.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let degenerate = !(max > 0.0) || min <= DEGENERACY_RATIO * max;
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let dof = (jac.nrows() as f64 - active.len() as f64).max(1.0);
    let s2 = if rescale { cost / dof } else { 1.0 };
    let inv = DMatrix::from_fn(active.len(), active.len(), |a, b| {
        (0..active.len())
            .filter(|&l| eig.eigenvalues[l] > DEGENERACY_RATIO * max)
            .map(|l| eig.eigenvectors[(a, l)] * eig.eigenvectors[(b, l)] / eig.eigenvalues[l])
            .sum::<f64>()
    });
    for (a, &ja_) in active.iter().enumerate() {
        for (b, &jb) in active.iter().enumerate() {
            cov[ja_][jb] = 0.5 * (inv[(a, b)] + inv[(b, a)]) * s2;
        }
    }
    Ok((cov, condition, degenerate))
}

/// Seeded synthetic data `y = f(x) + σ·ξ` with `σ = level·max(|f(x)|, 1e-3·max|f|)`
/// and `ξ` standard normal drawn from ChaCha8 seeded with `seed`. A zero level
/// returns exact values without uncertainties.
pub fn synth(x: &[f64], f: impl Fn(f64) -> f64, level: f64, seed: u64) -> Result<Curve> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(invalid("noise level must be >= 0"));
    }
    let clean: Vec<f64> = x.iter().map(|&v| f(v)).collect();
    if level == 0.0 {
        return Curve::new(x.to_vec(), clean, None);
    }
    let peak = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return Err(invalid("cannot scale noise to an identically zero signal"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma: Vec<f64> = clean.iter().map(|v| level * v.abs().max(1e-3 * peak)).collect();
    let y = clean
        .iter()
        .zip(&sigma)
        .map(|(v, s)| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            v + s * xi
        })
        .collect();
    Curve::new(x.to_vec(), y, Some(sigma))
}

// ---------------------------------------------------------------------------
// Cavity spectra

/// Whether the spectrum's background is a fit parameter or held at a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Offset {
    Free,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CavityFit {
    pub kappa: f64,
    pub omega_c: f64,
    pub scale: f64,
    pub offset: f64,
    pub alpha: Option<f64>,
    pub fit: FitResult,
}

/// Parameter order: `[κ, ω_c, scale, offset]` plus `α` for the co-polarized curve.
pub fn spectrum_model(p: &[f64], pol: Polarization) -> impl Fn(f64) -> f64 {
    let sp = SpectrumParams {
        kappa: p[0],
        omega_c: p[1],
        scale: p[2],
        offset: p[3],
        alpha: if pol == Polarization::Co { p[4] } else { 0.0 },
    };
    move |w| reflection_spectrum(w, &sp, pol)
}

/// Fits the cross- or co-polarized reflection spectrum. In the co-polarized
/// curve the background and `α` enter only through `A′ + B` and `A′α(2 − α)`,
/// so `α` is determined only when the offset is held fixed.
pub fn fit_cavity_spectrum(data: &Curve, pol: Polarization, offset: Offset) -> Result<CavityFit> {
    data.validate()?;
    if data.len() < 5 {
        return Err(invalid("spectrum fit needs at least 5 points"));
    }
    let (x, y) = (&data.x, &data.y);
    let span = x[x.len() - 1] - x[0];
    let (imin, imax) = extrema(y);
    let (ymin, ymax) = (y[imin], y[imax]);
    let b0 = match offset {
        Offset::Fixed(b) => b,
        Offset::Free if pol == Polarization::Cross => ymin,
        Offset::Free => 0.0,
    };
    let ob = match offset {
        Offset::Fixed(b) => (b, b),
        Offset::Free => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let kappa_bounds = (1e-6 * span, 10.0 * span);
    let (init, bounds, names): (Vec<f64>, Vec<(f64, f64)>, &[&str]) = match pol {
        Polarization::Cross => {
            let scale = (ymax - b0).max(1e-12);
            let kappa = half_width(x, y, imax, b0 + 0.5 * scale).unwrap_or(span / 4.0);
            (
                vec![clamp(kappa, kappa_bounds), x[imax], scale, b0],
                vec![kappa_bounds, (x[0], x[x.len() - 1]), (0.0, f64::INFINITY), ob],
                &["kappa", "omega_c", "scale", "offset"],
            )
        }
        Polarization::Co => {
            let scale = (ymax - b0).max(1e-12);
            let depth = ((ymin - b0) / scale).clamp(0.0, 1.0);
            let alpha = (1.0 - depth.sqrt()).clamp(0.05, 1.0);
            let kappa = half_width(x, y, imin, 0.5 * (ymax + ymin)).unwrap_or(span / 4.0);
            (
                vec![clamp(kappa, kappa_bounds), x[imin], scale, b0, alpha],
                vec![kappa_bounds, (x[0], x[x.len() - 1]), (0.0, f64::INFINITY), ob, (1e-6, 1.0)],
                &["kappa", "omega_c", "scale", "offset", "alpha"],
            )
        }
    };
    let problem = FitProblem::new(
        move |p: &[f64], x: &[f64]| Ok(x.iter().copied().map(spectrum_model(p, pol)).collect()),
        data.clone(),
        init,
        bounds,
    )
    .with_names(names);
    let fit = least_squares(&problem)?;
    let p = &fit.params;
    Ok(CavityFit {
        kappa: p[0],
        omega_c: p[1],
        scale: p[2],
        offset: p[3],
        alpha: (pol == Polarization::Co).then(|| p[4]),
        fit,
    })
}

fn extrema(y: &[f64]) -> (usize, usize) {
    let imin = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let imax = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    (imin, imax)
}

/// Full width at `level` around the extremum at `center`, from the first
/// crossings on either side.
fn half_width(x: &[f64], y: &[f64], center: usize, level: f64) -> Option<f64> {
    let above = y[center] > level;
    let crosses = |i: usize| (y[i] > level) != above;
    let right = (center..x.len()).find(|&i| crosses(i))?;
    let left = (0..=center).rev().find(|&i| crosses(i))?;
    Some(x[right] - x[left]).filter(|w| *w > 0.0)
}

// ---------------------------------------------------------------------------
// Ramsey intensity

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamseyFit {
    pub scale: f64,
    pub fidelity: f64,
    pub fit: FitResult,
}

/// `I(τ) = A·T(τ)` with parameters `[A, F]`.
pub fn ramsey_model(p: &[f64], t_up: f64, t_down: f64, delta_e_ghz: f64, conditioned: bool) -> impl Fn(f64) -> f64 {
    let (a, f) = (p[0], p[1]);
    move |tau| {
        let (pu, pd) = spin_populations(tau, f, delta_e_ghz, conditioned);
        a * (pu * t_up + pd * t_down)
    }
}

/// Fits scale and spin fidelity with `T↑`, `T↓` held at the simulated values.
/// The fidelity is bounded to `[0.5, 1]`; a fringe-free curve ends at the
/// lower bound and is reported as not identifiable.
pub fn fit_ramsey_intensity(data: &Curve, t_up: f64, t_down: f64, delta_e_ghz: f64, conditioned: bool) -> Result<RamseyFit> {
    data.validate()?;
    if data.len() < 3 {
        return Err(invalid("Ramsey fit needs at least 3 points"));
    }
    if !(t_up + t_down > 0.0) {
        return Err(invalid("spin transmittances must not both vanish"));
    }
    let mean = data.y.iter().sum::<f64>() / data.len() as f64;
    let a0 = (mean / (0.5 * (t_up + t_down))).max(1e-12);
    let problem = FitProblem::new(
        move |p: &[f64], x: &[f64]| Ok(x.iter().copied().map(ramsey_model(p, t_up, t_down, delta_e_ghz, conditioned)).collect()),
        data.clone(),
        vec![a0, 0.75],
        vec![(0.0, f64::INFINITY), (0.5, 1.0)],
    )
    .with_names(&["scale", if conditioned { "fidelity_fprime" } else { "fidelity_f" }]);
    let fit = least_squares(&problem)?;
    Ok(RamseyFit { scale: fit.params[0], fidelity: fit.params[1], fit })
}

// ---------------------------------------------------------------------------
// Visibility calibration

/// Gate pulse and optics used to turn a measured power into photons per pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSetup {
    pub gate_fwhm_ns: f64,
    pub wavelength_nm: f64,
    pub rep_rate_mhz: f64,
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        Self { gate_fwhm_ns: 0.063, wavelength_nm: 927.0, rep_rate_mhz: 76.0 }
    }
}

/// Upper bound on the coupling efficiency explored by the fit.
pub const ETA_MAX: f64 = 0.1;
/// Forward-difference step for fits whose model is an integration.
pub const SIMULATOR_FD_STEP: f64 = 1e-4;

/// Simulated Ramsey visibility as a function of photons per gate pulse,
/// memoized on `ln n` quantized to 1e-6.
pub struct VisibilityCurve<'a> {
    sim: &'a Simulator,
    setup: CalibrationSetup,
    cache: Mutex<HashMap<i64, f64>>,
}

impl<'a> VisibilityCurve<'a> {
    pub fn new(sim: &'a Simulator, setup: CalibrationSetup) -> Self {
        Self { sim, setup, cache: Mutex::new(HashMap::new()) }
    }

    pub fn setup(&self) -> CalibrationSetup {
        self.setup
    }

    /// `V(n)`, exactly 1 with no gate photons.
    pub fn visibility(&self, n: f64) -> Result<f64> {
        if n == 0.0 {
            return Ok(1.0);
        }
        let key = (n.ln() * 1e6).round() as i64;
        if let Some(v) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(*v);
        }
        let spec = PulseSpec::gaussian(self.setup.gate_fwhm_ns, (key as f64 * 1e-6).exp())?;
        let v = self.sim.ramsey_visibility(&spec)?;
        self.cache.lock().expect("cache poisoned").insert(key, v);
        Ok(v)
    }

    pub fn photons(&self, power_pw: f64, eta: f64) -> Result<f64> {
        coupled_photon_number(power_pw, eta, self.setup.wavelength_nm, self.setup.rep_rate_mhz)
    }

    /// `V̄ = (2F − 1)·V(n(P))` over ascending powers. Fails if the simulated
    /// visibility increases with power.
    pub fn predict(&self, powers: &[f64], fidelity: f64, eta: f64) -> Result<Vec<f64>> {
        let v: Vec<f64> = powers.iter().map(|&p| self.visibility(self.photons(p, eta)?)).collect::<Result<_>>()?;
        if v.windows(2).any(|w| w[1] > w[0] + 1e-9) {
            return Err(Error::ModelSanity(format!("simulated visibility is not monotone in power: {v:?}")));
        }
        Ok(v.into_iter().map(|v| (2.0 * fidelity - 1.0) * v).collect())
    }

    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityFit {
    pub fidelity: f64,
    pub eta: f64,
    pub fit: FitResult,
}

pub fn fit_visibility_calibration(data: &Curve, curve: &VisibilityCurve<'_>) -> Result<VisibilityFit> {
    data.validate()?;
    if data.len() < 2 || data.x[0] < 0.0 {
        return Err(invalid("calibration needs at least 2 non-negative power points"));
    }
    let f0 = ((1.0 + data.y[0]) / 2.0).clamp(0.5, 1.0);
    let mut problem = FitProblem::new(
        |p: &[f64], x: &[f64]| curve.predict(x, p[0], p[1]),
        data.clone(),
        vec![f0, 0.02],
        vec![(0.5, 1.0), (0.0, ETA_MAX)],
    )
    .with_names(&["fidelity_f", "eta"]);
    problem.fd_step = SIMULATOR_FD_STEP;
    problem.tolerance = 1e-8;
    let fit = least_squares(&problem)?;
    Ok(VisibilityFit { fidelity: fit.params[0], eta: fit.params[1], fit })
}

// ---------------------------------------------------------------------------
// Contrast decay

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub delta0: f64,
    pub n_avg: f64,
    pub fit: FitResult,
}

pub const N_AVG_MAX: f64 = 1e6;

/// Fits `δ0·exp(−N_s/N_avg)`. Growing contrast drives `N_avg` to its upper
/// bound, which is reported as not identifiable.
pub fn fit_contrast_decay(data: &Curve) -> Result<DecayFit> {
    data.validate()?;
    if data.len() < 3 {
        return Err(invalid("contrast decay fit needs at least 3 points"));
    }
    let (x, y) = (&data.x, &data.y);
    // log-linear start when every point is positive
    let (d0, navg) = if y.iter().all(|v| *v > 0.0) {
        let n = x.len() as f64;
        let (mx, ml) = (x.iter().sum::<f64>() / n, y.iter().map(|v| v.ln()).sum::<f64>() / n);
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxl: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b.ln() - ml)).sum();
        let slope = sxl / sxx;
        let navg = if slope < 0.0 { -1.0 / slope } else { N_AVG_MAX / 10.0 };
        ((ml - slope * mx).exp(), navg)
    } else {
        (y.iter().fold(0.0f64, |m, v| m.max(*v)), x[x.len() - 1])
    };
    let bounds = vec![(0.0, f64::INFINITY), (1e-6, N_AVG_MAX)];
    let init = vec![clamp(d0, bounds[0]), clamp(navg, bounds[1])];
    let problem = FitProblem::new(
        |p: &[f64], x: &[f64]| Ok(x.iter().map(|&n| contrast_decay_model(n, p[0], p[1])).collect()),
        data.clone(),
        init,
        bounds,
    )
    .with_names(&["delta0", "n_avg"]);
    let fit = least_squares(&problem)?;
    Ok(DecayFit { delta0: fit.params[0], n_avg: fit.params[1], fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn linear() -> FitProblem<impl Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync> {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y = x.iter().map(|v| 2.5 * v).collect();
        FitProblem::new(
            |p: &[f64], x: &[f64]| Ok(x.iter().map(|v| p[0] * v).collect()),
            Curve::new(x, y, None).unwrap(),
            vec![1.0],
            vec![(-10.0, 10.0)],
        )
    }

    #[test]
    fn linear_exact() {
        let r = least_squares(&linear()).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.params[0], 2.5, epsilon = 1e-10);
        assert!(r.cost < 1e-18);
    }

    #[test]
    fn clamped_optimum() {
        let mut p = linear();
        p.bounds = vec![(0.0, 1.0)];
        p.init = vec![1.0];
        let r = least_squares(&p).unwrap();
        assert!(r.converged);
        assert_eq!(r.params[0], 1.0);
        assert_eq!(r.diagnostics.at_bound, vec![true]);
        assert!(!r.identifiable());
    }

    #[test]
    fn fixed_parameter_is_held() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let p = FitProblem::new(
            |p: &[f64], x: &[f64]| Ok(x.iter().map(|v| p[0] * v + p[1]).collect()),
            Curve::new(x, y, None).unwrap(),
            vec![1.0, 0.0],
            vec![(-10.0, 10.0), (0.0, 0.0)],
        );
        let r = least_squares(&p).unwrap();
        assert_eq!(r.params[1], 0.0);
        assert_eq!(r.covariance[1], vec![0.0, 0.0]);
        assert!(r.params[0] > 3.0);
    }

    #[test]
    fn rejects_bad_problems() {
        let mut p = linear();
        p.init = vec![11.0];
        assert!(least_squares(&p).is_err());
        let mut p = linear();
        p.bounds = vec![(1.0, -1.0)];
        assert!(least_squares(&p).is_err());
    }

    #[test]
    fn gaussian_peak_with_noise() {
        let x: Vec<f64> = (0..121).map(|k| -6.0 + 0.1 * k as f64).collect();
        let truth = [2.0, 0.3, 1.1];
        let g = |p: &[f64], v: f64| p[0] * (-(v - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp();
        let data = synth(&x, |v| g(&truth, v) + 0.5, 0.01, 11).unwrap();
        let p = FitProblem::new(
            move |p: &[f64], x: &[f64]| Ok(x.iter().map(|v| g(p, *v) + 0.5).collect()),
            data,
            vec![1.0, 0.0, 2.0],
            vec![(0.0, 10.0), (-6.0, 6.0), (0.01, 10.0)],
        );
        let r = least_squares(&p).unwrap();
        assert!(r.identifiable());
        let se = r.std_errors();
        assert!((r.params[1] - truth[1]).abs() < 3.0 * se[1], "{} ± {}", r.params[1], se[1]);
    }

    #[test]
    fn synth_is_seeded() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let a = synth(&x, |v| 1.0 + v, 0.02, 3).unwrap();
        let b = synth(&x, |v| 1.0 + v, 0.02, 3).unwrap();
        let c = synth(&x, |v| 1.0 + v, 0.02, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
        assert_eq!(synth(&x, |v| v, 0.0, 1).unwrap().y, x.to_vec());
    }

    #[test]
    fn half_width_estimate() {
        let x: Vec<f64> = (0..201).map(|k| -100.0 + k as f64).collect();
        let p = SpectrumParams { kappa: 30.0, omega_c: 0.0, alpha: 0.0, scale: 1.0, offset: 0.0 };
        let y: Vec<f64> = x.iter().map(|w| reflection_spectrum(*w, &p, Polarization::Cross)).collect();
        let w = half_width(&x, &y, 100, 0.5).unwrap();
        assert!((w - 30.0).abs() <= 2.0);
    }
}
