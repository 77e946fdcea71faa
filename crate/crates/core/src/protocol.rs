// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment-level analysis: Ramsey transmittance curves, contrast, switching
//! contrast with multi-photon correction, transistor gain and the photon-number
//! calibration arithmetic.
//!
//! Delays `τ` are in ps and splittings in GHz (ν = ω/2π), so the precession
//! phase is `Δe·τ = 2π·ν·τ·1e-3`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evolve::{converge_fock_dim, IntegrationStats, Observable, Simulator, Tolerances};
use crate::model::{DeviceParams, PulseSpec, TWO_PI};
use crate::qspace::{hermiticity_error, CMatrix};
use crate::steady::constants;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    /// Spin fidelity after the two rotation pulses.
    pub fidelity_f: f64,
    /// Spin fidelity conditioned on a detected gate photon.
    pub fidelity_fprime: f64,
    /// Bloch-vector shrinkage caused by the weak coherent gate.
    pub beta: f64,
    #[serde(rename = "delta_e_over_2pi_ghz")]
    pub delta_e: f64,
    pub t_up: f64,
    pub t_down: f64,
    /// Mean signal photons per pulse.
    pub n_s: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self { fidelity_f: 0.783, fidelity_fprime: 0.709, beta: 0.78, delta_e: 39.2, t_up: 0.79, t_down: 0.37, n_s: 0.42 }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        check_fidelity(self.fidelity_f)?;
        check_fidelity(self.fidelity_fprime)?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.delta_e > 0.0 && self.delta_e.is_finite()) {
            return Err(invalid("delta_e must be > 0"));
        }
        for (name, t) in [("t_up", self.t_up), ("t_down", self.t_down)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {t}")));
            }
        }
        if !(self.n_s >= 0.0 && self.n_s.is_finite()) {
            return Err(invalid("n_s must be >= 0"));
        }
        Ok(())
    }
}

fn check_fidelity(f: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&f) {
        return Err(invalid(format!("fidelity must lie in [0.5, 1], got {f}")));
    }
    Ok(())
}

/// A sampled curve with optional per-point uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Curve {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        let c = Self { x, y, sigma };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(invalid(format!("curve has {} abscissae but {} values", self.x.len(), self.y.len())));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(invalid("curve contains non-finite values"));
        }
        if self.x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("curve abscissae must be strictly increasing"));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() {
                return Err(invalid("sigma length differs from curve length"));
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(invalid("sigma entries must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Index of the maximum if it is interior and the curve rises strictly up
    /// to it and falls strictly after it.
    pub fn single_interior_maximum(&self) -> Option<usize> {
        let n = self.y.len();
        if n < 3 {
            return None;
        }
        let k = (0..n).max_by(|&a, &b| self.y[a].total_cmp(&self.y[b]))?;
        if k == 0 || k == n - 1 {
            return None;
        }
        let rises = self.y[..=k].windows(2).all(|w| w[1] > w[0]);
        let falls = self.y[k..].windows(2).all(|w| w[1] < w[0]);
        (rises && falls).then_some(k)
    }
}

/// Spin precession period `1/ν_e` in ps.
pub fn precession_period_ps(delta_e_ghz: f64) -> f64 {
    1e3 / delta_e_ghz
}

fn precession_phase(tau_ps: f64, delta_e_ghz: f64) -> f64 {
    TWO_PI * delta_e_ghz * tau_ps * 1e-3
}

/// `(P↑, P↓)` after the second rotation pulse. The conditioned populations
/// carry the gate photon's π phase shift (cos² and sin² swapped).
pub fn spin_populations(tau_ps: f64, fidelity: f64, delta_e_ghz: f64, conditioned: bool) -> (f64, f64) {
    let half = 0.5 * precession_phase(tau_ps, delta_e_ghz);
    let (mut c2, mut s2) = (half.cos().powi(2), half.sin().powi(2));
    if conditioned {
        std::mem::swap(&mut c2, &mut s2);
    }
    let up = fidelity * c2 + (1.0 - fidelity) * s2;
    (up, 1.0 - up)
}

/// `T(τ) = P↑(τ)·T↑ + P↓(τ)·T↓` on the given delay grid.
pub fn transmittance_curve(
    tau_grid: &[f64],
    fidelity: f64,
    delta_e_ghz: f64,
    t_up: f64,
    t_down: f64,
    conditioned: bool,
) -> Result<Curve> {
    check_fidelity(fidelity)?;
    let y = tau_grid
        .iter()
        .map(|&tau| {
            let (pu, pd) = spin_populations(tau, fidelity, delta_e_ghz, conditioned);
            pu * t_up + pd * t_down
        })
        .collect();
    Curve::new(tau_grid.to_vec(), y, None)
}

/// Oscillation amplitude `δ = (2F − 1)(T↑ − T↓)`.
pub fn transmittance_contrast(fidelity: f64, t_up: f64, t_down: f64) -> f64 {
    (2.0 * fidelity - 1.0) * (t_up - t_down)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchingContrast {
    /// Transmittance of a fully mixed spin, `(T̄g(a) + T̄g(b))/2`.
    pub t0: f64,
    pub tg_a_corrected: f64,
    pub tg_b_corrected: f64,
    /// `Tg(a)′ − Tng(a)`.
    pub xi_a: f64,
    /// `|Tng(b) − Tg(b)′|`.
    pub xi_b: f64,
    /// Gate-induced change before correction at condition a.
    pub raw_a: f64,
    pub raw_b: f64,
}

/// Switching contrast with the multi-photon correction
/// `Tg = (T̄g − T0)/β + T0`.
pub fn switching_contrast(tg_a: f64, tg_b: f64, tng_a: f64, tng_b: f64, beta: f64) -> Result<SwitchingContrast> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!("beta must lie in (0, 1], got {beta}")));
    }
    let t0 = 0.5 * (tg_a + tg_b);
    let correct = |tg: f64| (tg - t0) / beta + t0;
    let (a, b) = (correct(tg_a), correct(tg_b));
    Ok(SwitchingContrast {
        t0,
        tg_a_corrected: a,
        tg_b_corrected: b,
        xi_a: a - tng_a,
        xi_b: (tng_b - b).abs(),
        raw_a: tg_a - tng_a,
        raw_b: (tng_b - tg_b).abs(),
    })
}

/// Delays for the two operating points: `a` at `(k + ½)` and `b` at `k + 1`
/// precession periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayConditions {
    pub a_ps: f64,
    pub b_ps: f64,
}

pub fn delay_conditions(delta_e_ghz: f64, cycles: u32) -> DelayConditions {
    let period = precession_period_ps(delta_e_ghz);
    DelayConditions { a_ps: (cycles as f64 + 0.5) * period, b_ps: (cycles as f64 + 1.0) * period }
}

/// The gate measurement at conditions a and b, reconstructed from the
/// protocol parameters: ungated transmittance from `F`, gated from `F′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchReport {
    pub delays: DelayConditions,
    pub tng_a: f64,
    pub tng_b: f64,
    pub tg_a: f64,
    pub tg_b: f64,
    pub contrast: SwitchingContrast,
    pub delta: f64,
}

pub fn switch_report(p: &ProtocolParams, cycles: u32) -> Result<SwitchReport> {
    p.validate()?;
    let delays = delay_conditions(p.delta_e, cycles);
    let at = |tau: f64, f: f64, conditioned: bool| {
        let (pu, pd) = spin_populations(tau, f, p.delta_e, conditioned);
        pu * p.t_up + pd * p.t_down
    };
    let tng_a = at(delays.a_ps, p.fidelity_f, false);
    let tng_b = at(delays.b_ps, p.fidelity_f, false);
    let tg_a = at(delays.a_ps, p.fidelity_fprime, true);
    let tg_b = at(delays.b_ps, p.fidelity_fprime, true);
    Ok(SwitchReport {
        delays,
        tng_a,
        tng_b,
        tg_a,
        tg_b,
        contrast: switching_contrast(tg_a, tg_b, tng_a, tng_b, p.beta)?,
        delta: transmittance_contrast(p.fidelity_f, p.t_up, p.t_down),
    })
}

/// `G = N_s·δ`.
pub fn transistor_gain(n_s: f64, delta: f64) -> f64 {
    n_s * delta
}

/// `δ0·exp(−N_s/N_avg)`.
pub fn contrast_decay_model(n_s: f64, delta0: f64, n_avg: f64) -> f64 {
    delta0 * (-n_s / n_avg).exp()
}

/// Photons per pulse coupled to the cavity, `η·P/((hc/λ)·R)`.
pub fn coupled_photon_number(power_pw: f64, eta: f64, wavelength_nm: f64, rep_rate_mhz: f64) -> Result<f64> {
    if !(power_pw >= 0.0 && eta >= 0.0 && wavelength_nm > 0.0 && rep_rate_mhz > 0.0) {
        return Err(invalid("power and efficiency must be >= 0, wavelength and repetition rate > 0"));
    }
    let photon_energy = constants::H * constants::C / (wavelength_nm * 1e-9);
    Ok(eta * power_pw * 1e-12 / (photon_energy * rep_rate_mhz * 1e6))
}

/// Overlap `⟨φ(τ)|ρ|φ(τ)⟩` with `φ(τ) = cos(Δeτ/2)|↑⟩ − sin(Δeτ/2)|↓⟩`.
/// `rho_spin` is ordered (↑, ↓).
pub fn spin_fidelity(rho_spin: &CMatrix, tau_ps: f64, delta_e_ghz: f64) -> Result<f64> {
    if rho_spin.shape() != (2, 2) {
        return Err(invalid("spin state must be 2x2"));
    }
    if hermiticity_error(rho_spin) > 1e-10 {
        return Err(invalid("spin state must be Hermitian"));
    }
    let half = 0.5 * precession_phase(tau_ps, delta_e_ghz);
    let (c, s) = (half.cos(), -half.sin());
    let f = c * c * rho_spin[(0, 0)].re + s * s * rho_spin[(1, 1)].re + 2.0 * c * s * rho_spin[(0, 1)].re;
    Ok(f.clamp(0.0, 1.0))
}

/// `V̄ = (2F − 1)·V`.
pub fn ramsey_visibility_bar(visibility: f64, fidelity: f64) -> f64 {
    (2.0 * fidelity - 1.0) * visibility
}

/// How the photon-number truncation is chosen for each simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FockPolicy {
    Fixed(usize),
    /// Smallest converged truncation per point (see [`converge_fock_dim`]).
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainPoint {
    pub n_s: f64,
    pub fock_dim: usize,
    pub t_up: f64,
    pub t_down: f64,
    pub flip_up: f64,
    pub flip_down: f64,
    pub delta: f64,
    pub gain: f64,
    pub stats: IntegrationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCurve {
    pub points: Vec<GainPoint>,
}

impl GainCurve {
    pub fn contrast(&self) -> Result<Curve> {
        Curve::new(self.points.iter().map(|p| p.n_s).collect(), self.points.iter().map(|p| p.delta).collect(), None)
    }

    pub fn gain(&self) -> Result<Curve> {
        Curve::new(self.points.iter().map(|p| p.n_s).collect(), self.points.iter().map(|p| p.gain).collect(), None)
    }

    /// `(N_s, G)` at the single interior maximum, if the curve has one.
    pub fn maximum(&self) -> Option<(f64, f64)> {
        let g = self.gain().ok()?;
        g.single_interior_maximum().map(|k| (g.x[k], g.y[k]))
    }
}

/// Simulated contrast and gain over a signal-photon grid, one pair of
/// spin-resolved integrations per point. Points are returned sorted by `N_s`.
pub fn gain_curve(
    params: &DeviceParams,
    tol: Tolerances,
    fock: FockPolicy,
    t_fwhm_ns: f64,
    n_grid: &[f64],
    fidelity: f64,
) -> Result<GainCurve> {
    check_fidelity(fidelity)?;
    let mut grid = n_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|n| !(*n > 0.0)) {
        return Err(invalid("signal photon grid must hold distinct positive values"));
    }
    let points = crate::evolve::sweep(&grid, |&n| -> Result<GainPoint> {
        let spec = PulseSpec::gaussian(t_fwhm_ns, n)?;
        let fock_dim = match fock {
            FockPolicy::Fixed(d) => d,
            FockPolicy::Auto => converge_fock_dim(params, tol, &spec, Observable::Transmittance)?.fock_dim,
        };
        let (up, down) = Simulator::new(params, fock_dim, tol)?.spin_runs(&spec)?;
        let delta = transmittance_contrast(fidelity, up.transmittance, down.transmittance);
        Ok(GainPoint {
            n_s: n,
            fock_dim,
            t_up: up.transmittance,
            t_down: down.transmittance,
            flip_up: up.flip_probability,
            flip_down: down.flip_probability,
            delta,
            gain: transistor_gain(n, delta),
            stats: up.stats.merge(down.stats),
        })
    });
    Ok(GainCurve { points: points.into_iter().collect::<Result<_>>()? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn populations() {
        let (up, down) = spin_populations(0.0, 0.783, 39.2, false);
        assert_abs_diff_eq!(up, 0.783, epsilon = 1e-15);
        assert_abs_diff_eq!(down, 0.217, epsilon = 1e-15);
        let half = precession_period_ps(39.2) / 2.0;
        assert_abs_diff_eq!(spin_populations(half, 0.783, 39.2, false).0, 0.217, epsilon = 1e-12);
        for tau in [0.0, 3.0, 11.7, 40.0] {
            assert_abs_diff_eq!(spin_populations(tau, 0.5, 39.2, false).0, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn ideal_fringe() {
        let taus: Vec<f64> = (0..60).map(|k| k as f64).collect();
        let c = transmittance_curve(&taus, 1.0, 39.2, 1.0, 0.0, false).unwrap();
        for (tau, y) in c.x.iter().zip(&c.y) {
            let want = (0.5 * TWO_PI * 39.2 * tau * 1e-3).cos().powi(2);
            assert_abs_diff_eq!(*y, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn fringe_amplitude_equals_contrast() {
        let taus: Vec<f64> = (0..=5000).map(|k| k as f64 * 0.01).collect();
        let c = transmittance_curve(&taus, 0.783, 39.2, 0.79, 0.37, false).unwrap();
        let (lo, hi) = c.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), y| (l.min(*y), h.max(*y)));
        let delta = transmittance_contrast(0.783, 0.79, 0.37);
        assert_abs_diff_eq!(delta, 0.238, epsilon = 5e-4);
        assert_abs_diff_eq!(hi - lo, delta, epsilon = 1e-6);
        assert_abs_diff_eq!(transmittance_contrast(1.0, 1.0, 0.0), 1.0);
        assert_eq!(transmittance_contrast(0.5, 0.9, 0.1), 0.0);
    }

    #[test]
    fn conditioned_curve_is_half_period_shift() {
        let period = precession_period_ps(39.2);
        let taus: Vec<f64> = (0..100).map(|k| k as f64 * 0.7).collect();
        let shifted: Vec<f64> = taus.iter().map(|t| t + period / 2.0).collect();
        let cond = transmittance_curve(&taus, 0.74, 39.2, 0.8, 0.4, true).unwrap();
        let plain = transmittance_curve(&shifted, 0.74, 39.2, 0.8, 0.4, false).unwrap();
        for (a, b) in cond.y.iter().zip(&plain.y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn switching_correction() {
        let s = switching_contrast(0.5, 0.3, 0.2, 0.6, 0.78).unwrap();
        assert_abs_diff_eq!(s.t0, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.tg_a_corrected, 0.528_205, epsilon = 1e-6);
        let raw = switching_contrast(0.5, 0.3, 0.2, 0.6, 1.0).unwrap();
        assert_abs_diff_eq!(raw.tg_a_corrected, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(raw.tg_b_corrected, 0.3, epsilon = 1e-15);
        assert!(switching_contrast(0.5, 0.3, 0.2, 0.6, 0.0).is_err());
    }

    #[test]
    fn switch_report_matches_measured_change() {
        let r = switch_report(&ProtocolParams::default(), 2).unwrap();
        assert_abs_diff_eq!(r.contrast.raw_a, 0.21, epsilon = 0.02);
        assert_abs_diff_eq!(r.contrast.raw_b, 0.21, epsilon = 0.02);
        assert_abs_diff_eq!(r.contrast.xi_a, 0.24, epsilon = 0.02);
        assert_abs_diff_eq!(r.contrast.xi_a, r.contrast.xi_b, epsilon = 1e-12);
        assert!(r.tng_a < r.tg_a && r.tng_b > r.tg_b);
    }

    #[test]
    fn gain_and_decay_arithmetic() {
        assert_eq!(transistor_gain(0.0, 0.3), 0.0);
        assert_abs_diff_eq!(transistor_gain(29.2, 0.113), 3.3, epsilon = 0.01);
        assert_abs_diff_eq!(transistor_gain(10.0, 0.2), 2.0, epsilon = 1e-15);
        assert_eq!(contrast_decay_model(0.0, 0.24, 27.7), 0.24);
        assert_abs_diff_eq!(contrast_decay_model(27.7, 0.24, 27.7), 0.24 / std::f64::consts::E, epsilon = 1e-15);
        assert_abs_diff_eq!(contrast_decay_model(23.0, 0.24, 27.7), 0.105, epsilon = 5e-4);
    }

    #[test]
    fn paper_transmittance_table_gives_gain_points() {
        let table = [(4.4, 0.81, 0.37), (10.9, 0.80, 0.47), (23.0, 0.78, 0.57)];
        let want = [(0.249, 1.10), (0.187, 2.04), (0.119, 2.74)];
        for ((n, up, down), (d, g)) in table.into_iter().zip(want) {
            let delta = transmittance_contrast(0.783, up, down);
            assert_abs_diff_eq!(delta, d, epsilon = 1e-3);
            assert_abs_diff_eq!(transistor_gain(n, delta), g, epsilon = 0.01);
        }
    }

    #[test]
    fn photon_number_calibration() {
        assert_eq!(coupled_photon_number(0.0, 0.0316, 927.0, 76.0).unwrap(), 0.0);
        let n = coupled_photon_number(217.5, 0.0316, 927.0, 76.0).unwrap();
        assert_abs_diff_eq!(n, 0.42, epsilon = 0.005);
        let n2 = coupled_photon_number(380.6, 0.0316, 927.0, 76.0).unwrap();
        assert_abs_diff_eq!(n2, 0.74, epsilon = 0.005);
        assert_abs_diff_eq!(n2 / n, 380.6 / 217.5, epsilon = 1e-12);
        assert!(coupled_photon_number(1.0, 0.1, 0.0, 76.0).is_err());
    }

    #[test]
    fn fidelity_overlaps() {
        let tau = 7.3;
        let half = 0.5 * TWO_PI * 39.2 * tau * 1e-3;
        let phi = [Complex64::new(half.cos(), 0.0), Complex64::new(-half.sin(), 0.0)];
        let rho = CMatrix::from_fn(2, 2, |i, j| phi[i] * phi[j].conj());
        assert_abs_diff_eq!(spin_fidelity(&rho, tau, 39.2).unwrap(), 1.0, epsilon = 1e-14);
        let mixed = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        assert_abs_diff_eq!(spin_fidelity(&mixed, tau, 39.2).unwrap(), 0.5, epsilon = 1e-14);
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.783, 0.0),
            Complex64::new(0.217, 0.0),
        ]));
        assert_abs_diff_eq!(spin_fidelity(&diag, 0.0, 39.2).unwrap(), 0.783, epsilon = 1e-14);
        assert!(spin_fidelity(&CMatrix::identity(3, 3), 0.0, 39.2).is_err());
    }

    #[test]
    fn visibility_bar() {
        assert_eq!(ramsey_visibility_bar(0.6, 1.0), 0.6);
        assert_eq!(ramsey_visibility_bar(0.6, 0.5), 0.0);
        assert_abs_diff_eq!(ramsey_visibility_bar(0.78, 0.747), 0.385, epsilon = 5e-4);
    }

    #[test]
    fn delays() {
        let d = delay_conditions(39.2, 1);
        let period = 1e3 / 39.2;
        assert_abs_diff_eq!(d.a_ps, 1.5 * period, epsilon = 1e-12);
        assert_abs_diff_eq!(d.b_ps, 2.0 * period, epsilon = 1e-12);
        assert_abs_diff_eq!(spin_populations(d.a_ps, 1.0, 39.2, false).0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spin_populations(d.b_ps, 1.0, 39.2, false).0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn curve_validation_and_maximum() {
        assert!(Curve::new(vec![0.0, 1.0], vec![1.0], None).is_err());
        assert!(Curve::new(vec![1.0, 0.0], vec![1.0, 2.0], None).is_err());
        assert!(Curve::new(vec![0.0, 1.0], vec![1.0, 2.0], Some(vec![1.0, 0.0])).is_err());
        let c = Curve::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 2.0, 1.5, 1.0], None).unwrap();
        assert_eq!(c.single_interior_maximum(), Some(1));
        let mono = Curve::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], None).unwrap();
        assert_eq!(mono.single_interior_maximum(), None);
        let twin = Curve::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0, 2.0, 1.0, 1.9, 0.0], None).unwrap();
        assert_eq!(twin.single_interior_maximum(), None);
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::default().validate().is_ok());
        assert!(ProtocolParams { fidelity_f: 0.4, ..Default::default() }.validate().is_err());
        assert!(ProtocolParams { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(ProtocolParams { t_up: 1.2, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn curve_bounded_by_spin_transmittances(
            f in 0.5f64..=1.0, tu in 0.0f64..=1.0, td in 0.0f64..=1.0, tau in 0.0f64..200.0, cond: bool
        ) {
            let c = transmittance_curve(&[tau], f, 39.2, tu, td, cond).unwrap();
            prop_assert!(c.y[0] >= tu.min(td) - 1e-12 && c.y[0] <= tu.max(td) + 1e-12);
        }

        #[test]
        fn unit_beta_is_identity(a in 0.0f64..1.0, b in 0.0f64..1.0, na in 0.0f64..1.0, nb in 0.0f64..1.0) {
            let s = switching_contrast(a, b, na, nb, 1.0).unwrap();
            prop_assert!((s.tg_a_corrected - a).abs() < 1e-12 && (s.tg_b_corrected - b).abs() < 1e-12);
            prop_assert!((s.xi_a - s.raw_a).abs() < 1e-12);
        }
    }
}
