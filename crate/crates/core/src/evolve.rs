// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Time integration of the master equation `dρ/dt = −i[H(t), ρ] + Σ_k r_k D(O_k)ρ`
//! and the observables extracted from a trajectory.
//!
//! The integrator is an explicit Dormand–Prince 5(4) pair with local error
//! control on the density matrix. The right-hand side is evaluated as
//!
//! ```text
//! X = −i H_eff ρ,   H_eff = H(t) − (i/2) Σ_k r_k O_k† O_k
//! dρ/dt = X + X† + Σ_k r_k O_k ρ O_k†
//! ```
//!
//! which needs a single dense product per evaluation; the jump terms are applied
//! from the nonzero entries of each collapse operator. Trace drift is checked at
//! every accepted step and reported as an error, never renormalized away.
//!
//! The bare Hamiltonian is diagonal, so the state is propagated in its
//! interaction frame, `ρ̃_ij = e^{i(E_i − E_j)(t − t_start)} ρ_ij`. Free spin
//! precession is then exact and the step size is set by the remaining dynamics.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{angular, initial_state, DeviceParams, InitialSpin, PulseSpec, Spin, SystemModel};
use crate::qspace::{
    bloch_length, hermiticity_error, partial_trace_to_spin, CMatrix, DensityOp, HilbertSpace, DEFAULT_LEAK_TOL,
    HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL, ZERO,
};

/// Relative/absolute local error tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step in ns.
    pub max_step: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Keep every `n`-th accepted state in the trajectory (0 keeps none).
    pub retain_every: usize,
    /// Eigenvalue/Hermiticity check every `n` accepted steps (and at the end).
    pub check_every: usize,
}

impl IntegratorConfig {
    /// Window from `t0 − 10 FWHM` to `t0 + 10 FWHM` plus a ring-down margin of
    /// `max(10/κ, 0.5 ns)` so trions and the cavity have emptied.
    pub fn around_pulse(spec: &PulseSpec, params: &DeviceParams, tol: Tolerances) -> Self {
        let (lo, hi) = spec.support();
        let ring_down = (10.0 / angular(params.kappa)).max(0.5);
        Self {
            rel_tol: tol.rel_tol,
            abs_tol: tol.abs_tol,
            max_step: spec.t_fwhm_ns / 20.0,
            t_start: lo,
            t_end: hi + ring_down,
            retain_every: 0,
            check_every: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(invalid("integrator tolerances must be > 0"));
        }
        if !(self.t_end > self.t_start) {
            return Err(invalid(format!("t_end ({}) must exceed t_start ({})", self.t_end, self.t_start)));
        }
        if !(self.max_step > 0.0) {
            return Err(invalid("max_step must be > 0"));
        }
        Ok(())
    }
}

/// Numerical health of one integration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl IntegrationStats {
    /// Combine the worst-case figures of two runs.
    pub fn merge(self, other: Self) -> Self {
        Self {
            accepted: self.accepted + other.accepted,
            rejected: self.rejected + other.rejected,
            rhs_evals: self.rhs_evals + other.rhs_evals,
            max_trace_error: self.max_trace_error.max(other.max_trace_error),
            max_hermiticity_error: self.max_hermiticity_error.max(other.max_hermiticity_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Dense-output grid: accepted step boundaries plus interior samples.
    pub times: Vec<f64>,
    /// `⟨a†a⟩(t)` on `times`.
    pub photon_series: Vec<f64>,
    /// Dot level populations on `times`, ordered as [`crate::qspace::LEVEL_ORDER`].
    pub populations: Vec<[f64; 4]>,
    /// Retained states at accepted step boundaries.
    pub states: Vec<(f64, DensityOp)>,
    pub final_state: DensityOp,
    pub space: HilbertSpace,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one point")
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Continuous extension (Hairer & Wanner's DOPRI5 dense output).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];
const DENSE_SAMPLES: [f64; 3] = [0.25, 0.5, 0.75];
/// Steps keep `h·|λ_max|` below this; the pair is stable on the negative real
/// axis up to about 3.3.
const STABILITY_LIMIT: f64 = 3.0;
const POWER_ITERATIONS: usize = 40;

/// Linear functionals sampled on the dense grid: photon number then level populations.
type Probe = [f64; 5];

/// The master-equation right-hand side for one model and pulse, in the
/// interaction frame of the diagonal part of the static Hamiltonian.
struct Generator<'a> {
    model: &'a SystemModel,
    spec: &'a PulseSpec,
    t_ref: f64,
    energies: Vec<f64>,
    /// Nonzero pattern of `H_eff(t)`: `(row, col, static part, drive part)`.
    heff_nz: Vec<(usize, usize, Complex64, Complex64)>,
    /// Per channel: rate and the nonzero entries `(row, col, value)` of its collapse operator.
    jumps: Vec<(f64, Vec<(usize, usize, Complex64)>)>,
    heff_vals: Vec<Complex64>,
    x: CMatrix,
    rho: CMatrix,
    phase: CMatrix,
}

impl<'a> Generator<'a> {
    fn new(model: &'a SystemModel, spec: &'a PulseSpec, t_ref: f64) -> Self {
        let dim = model.space.total_dim();
        let mut heff_static = model.h_static.clone();
        let energies: Vec<f64> = (0..dim).map(|i| heff_static[(i, i)].re).collect();
        heff_static.fill_diagonal(ZERO);
        let mut jumps = Vec::new();
        for ch in &model.channels {
            if ch.rate == 0.0 {
                continue;
            }
            let n = ch.collapse.adjoint() * &ch.collapse;
            heff_static -= n * Complex64::new(0.0, 0.5 * ch.rate);
            let mut nz = Vec::new();
            for j in 0..dim {
                for i in 0..dim {
                    let v = ch.collapse[(i, j)];
                    if v != ZERO {
                        nz.push((i, j, v));
                    }
                }
            }
            jumps.push((ch.rate, nz));
        }
        let mut heff_nz = Vec::new();
        for k in 0..dim {
            for i in 0..dim {
                let (a, b) = (heff_static[(i, k)], model.h_drive[(i, k)]);
                if a != ZERO || b != ZERO {
                    heff_nz.push((i, k, a, b));
                }
            }
        }
        Self {
            model,
            spec,
            t_ref,
            energies,
            heff_nz,
            heff_vals: Vec::new(),
            jumps,
            x: CMatrix::zeros(dim, dim),
            rho: CMatrix::zeros(dim, dim),
            phase: CMatrix::zeros(dim, dim),
        }
    }

    /// Fill `phase` with `e^{i(E_i − E_j)(t − t_ref)}`, built Hermitian entry by entry.
    fn set_phase(&mut self, t: f64) {
        let tau = t - self.t_ref;
        let u: Vec<Complex64> = self.energies.iter().map(|e| Complex64::from_polar(1.0, e * tau)).collect();
        let dim = u.len();
        for j in 0..dim {
            self.phase[(j, j)] = Complex64::new(1.0, 0.0);
            for i in 0..j {
                let p = u[i] * u[j].conj();
                self.phase[(i, j)] = p;
                self.phase[(j, i)] = p.conj();
            }
        }
    }

    /// Interaction-frame state to lab frame at time `t`.
    fn to_lab(&mut self, t: f64, y: &CMatrix) -> CMatrix {
        self.set_phase(t);
        y.zip_map(&self.phase, |a, p| a * p.conj())
    }

    /// Largest eigenvalue magnitude of the generator at time `t`, by power
    /// iteration on Hermitian matrices.
    fn spectral_radius(&mut self, t: f64) -> f64 {
        let dim = self.energies.len();
        let mut v = CMatrix::from_fn(dim, dim, |i, j| {
            let d = i as f64 - j as f64;
            Complex64::new(1.0 / (1.0 + (i + j) as f64), 0.1 * d / (1.0 + d * d))
        });
        let mut w = CMatrix::zeros(dim, dim);
        let mut radius = 0.0f64;
        for it in 0..POWER_ITERATIONS {
            let norm = v.norm();
            if norm == 0.0 {
                break;
            }
            v /= Complex64::new(norm, 0.0);
            self.eval(t, &v, &mut w);
            let ratio = w.norm();
            if it >= POWER_ITERATIONS / 2 {
                radius = radius.max(ratio);
            }
            std::mem::swap(&mut v, &mut w);
        }
        radius
    }

    fn eval(&mut self, t: f64, y: &CMatrix, out: &mut CMatrix) {
        self.set_phase(t);
        self.rho.zip_zip_apply(y, &self.phase, |r, a, p| *r = a * p.conj());
        let rho = &self.rho;

        let amp = self.model.drive_amplitude(self.spec, t);
        let dim = rho.nrows();
        self.heff_vals.clear();
        self.heff_vals.extend(self.heff_nz.iter().map(|&(_, _, a, b)| a + b * amp));
        self.x.fill(ZERO);
        // X = H_eff ρ, column by column over the sparse pattern
        let (xs, rs) = (self.x.as_mut_slice(), rho.as_slice());
        for j in 0..dim {
            let (xc, rc) = (&mut xs[j * dim..(j + 1) * dim], &rs[j * dim..(j + 1) * dim]);
            for (&(i, k, _, _), v) in self.heff_nz.iter().zip(&self.heff_vals) {
                xc[i] += v * rc[k];
            }
        }
        // out = −iX + (−iX)†
        for j in 0..dim {
            for i in 0..dim {
                let xij = self.x[(i, j)];
                let xji = self.x[(j, i)];
                out[(i, j)] = Complex64::new(xij.im + xji.im, xji.re - xij.re);
            }
        }
        for (rate, nz) in &self.jumps {
            for &(p, i, cpi) in nz {
                for &(q, j, cqj) in nz {
                    let r = rho[(i, j)];
                    if r != ZERO {
                        out[(p, q)] += cpi * r * cqj.conj() * *rate;
                    }
                }
            }
        }

        // back to the frame, mirroring so that every stage is exactly Hermitian
        for j in 0..dim {
            out[(j, j)] = Complex64::new(out[(j, j)].re, 0.0);
            for i in 0..j {
                let v = 0.5 * (out[(i, j)] + out[(j, i)].conj()) * self.phase[(i, j)];
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
    }
}

fn probe(space: &HilbertSpace, m: &CMatrix) -> Probe {
    let pops = space.level_populations(m);
    [space.photon_number(m), pops[0], pops[1], pops[2], pops[3]]
}

fn trace_error(m: &CMatrix) -> f64 {
    (m.trace() - Complex64::new(1.0, 0.0)).norm()
}

/// Integrate from `rho0` over the configured window.
pub fn integrate(model: &SystemModel, spec: &PulseSpec, rho0: &DensityOp, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    spec.validate()?;
    let space = model.space;
    let dim = space.total_dim();
    if rho0.dim() != dim {
        return Err(invalid(format!("initial state dimension {} != space dimension {dim}", rho0.dim())));
    }
    rho0.validate()?;

    let mut gen = Generator::new(model, spec, cfg.t_start);
    let mut y = rho0.matrix().clone();
    let mut k: Vec<CMatrix> = (0..7).map(|_| CMatrix::zeros(dim, dim)).collect();
    let mut stage = CMatrix::zeros(dim, dim);
    let mut y_new = CMatrix::zeros(dim, dim);

    // Below abs_tol the error estimate cannot see a stiff mode growing, so
    // the step is also bounded by the generator's spectral radius at peak drive.
    let radius = gen.spectral_radius(spec.t0_ns.clamp(cfg.t_start, cfg.t_end));
    let max_step = if radius > 0.0 { cfg.max_step.min(STABILITY_LIMIT / radius) } else { cfg.max_step };

    let mut t = cfg.t_start;
    let span = cfg.t_end - cfg.t_start;
    let mut h = max_step.min(span).min(1e-4);
    let mut stats = IntegrationStats { min_eigenvalue: rho0.min_eigenvalue(), ..Default::default() };

    let p0 = probe(&space, &y);
    let mut times = vec![t];
    let mut photon_series = vec![p0[0]];
    let mut populations = vec![[p0[1], p0[2], p0[3], p0[4]]];
    let mut states = Vec::new();
    if cfg.retain_every > 0 {
        states.push((t, rho0.clone()));
    }

    // k[0] always holds f(t, y): first evaluation here, afterwards FSAL
    gen.eval(t, &y, &mut k[0]);
    stats.rhs_evals += 1;

    while t < cfg.t_end {
        let last = t + h >= cfg.t_end;
        if last {
            h = cfg.t_end - t;
        }

        for s in 1..7 {
            combine(&mut stage, &y, h, &A[s][..s], &k[..s]);
            let rest = &mut k[s..];
            gen.eval(t + C[s] * h, &stage, &mut rest[0]);
            stats.rhs_evals += 1;
        }
        // 5th-order solution is the last stage argument (FSAL)
        y_new.copy_from(&stage);

        let err = error_norm(&y, &y_new, &k, h, cfg.rel_tol, cfg.abs_tol);
        if !err.is_finite() {
            return Err(Error::IntegrationFailure { t, reason: "non-finite error estimate".into() });
        }

        if err <= 1.0 {
            // dense samples from the continuous extension
            let pk: Vec<Probe> = k.iter().map(|ki| probe(&space, ki)).collect();
            let py0 = probe(&space, &y);
            let py1 = probe(&space, &y_new);
            for &theta in &DENSE_SAMPLES {
                let s = dense_probe(&py0, &py1, &pk, h, theta);
                times.push(t + theta * h);
                photon_series.push(s[0]);
                populations.push([s[1], s[2], s[3], s[4]]);
            }

            t = if last { cfg.t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            flush_tiny(&mut y);
            k.swap(0, 6);
            stats.accepted += 1;

            let p1 = probe(&space, &y);
            times.push(t);
            photon_series.push(p1[0]);
            populations.push([p1[1], p1[2], p1[3], p1[4]]);

            let tr_err = trace_error(&y);
            stats.max_trace_error = stats.max_trace_error.max(tr_err);
            if tr_err >= TRACE_TOL {
                return Err(Error::IntegrationFailure { t, reason: format!("trace drift {tr_err:.3e}") });
            }
            if p1[0] < -1e-12 {
                return Err(Error::IntegrationFailure { t, reason: format!("negative photon number {:.3e}", p1[0]) });
            }
            let retain = cfg.retain_every > 0 && stats.accepted % cfg.retain_every == 0;
            if retain || t >= cfg.t_end {
                check_state(&y, t, &mut stats)?;
            } else if cfg.check_every > 0 && stats.accepted % cfg.check_every == 0 {
                certify_state(&y, t, &mut stats)?;
            }
            if retain {
                states.push((t, DensityOp::from_matrix_unchecked(gen.to_lab(t, &y))));
            }

            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(max_step);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, step: h });
        }
    }

    Ok(Trajectory {
        times,
        photon_series,
        populations,
        states,
        final_state: DensityOp::from_matrix_unchecked(gen.to_lab(t, &y)),
        space,
        stats,
    })
}

/// Zero components below 1e-150. Nearly pure states otherwise drift into
/// subnormal numbers, where floating-point arithmetic is two orders of
/// magnitude slower; the change is far below round-off on a unit trace.
fn flush_tiny(y: &mut CMatrix) {
    const FLOOR: f64 = 1e-150;
    for z in y.iter_mut() {
        if z.re.abs() < FLOOR {
            z.re = 0.0;
        }
        if z.im.abs() < FLOOR {
            z.im = 0.0;
        }
    }
}

/// Cheap form of [`check_state`]: Hermiticity plus a Cholesky certificate
/// that `ρ + POSITIVITY_TOL·I` is positive definite, i.e. no eigenvalue is at
/// or below `−POSITIVITY_TOL`. Falls back to the eigenvalue check on failure so
/// the error carries the actual value.
fn certify_state(y: &CMatrix, t: f64, stats: &mut IntegrationStats) -> Result<()> {
    let herm = hermiticity_error(y);
    stats.max_hermiticity_error = stats.max_hermiticity_error.max(herm);
    if herm >= HERMITICITY_TOL {
        return Err(Error::IntegrationFailure { t, reason: format!("Hermiticity error {herm:.3e}") });
    }
    let n = y.nrows();
    let shifted = y + CMatrix::identity(n, n) * Complex64::new(POSITIVITY_TOL, 0.0);
    if shifted.cholesky().is_some() {
        Ok(())
    } else {
        check_state(y, t, stats)
    }
}

fn check_state(y: &CMatrix, t: f64, stats: &mut IntegrationStats) -> Result<()> {
    let herm = hermiticity_error(y);
    stats.max_hermiticity_error = stats.max_hermiticity_error.max(herm);
    if herm >= HERMITICITY_TOL {
        return Err(Error::IntegrationFailure { t, reason: format!("Hermiticity error {herm:.3e}") });
    }
    let min_eig = DensityOp::from_matrix_unchecked(y.clone()).min_eigenvalue();
    stats.min_eigenvalue = stats.min_eigenvalue.min(min_eig);
    if !min_eig.is_finite() { std::fs::write("/tmp/bad.txt", format!("{:?}", y.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>())).unwrap(); }
    if min_eig <= -POSITIVITY_TOL {
        return Err(Error::IntegrationFailure { t, reason: format!("negative eigenvalue {min_eig:.3e}") });
    }
    Ok(())
}

/// `out = y + h Σ_j a_j k_j`.
fn combine(out: &mut CMatrix, y: &CMatrix, h: f64, a: &[f64], k: &[CMatrix]) {
    let out_s = out.as_mut_slice();
    out_s.copy_from_slice(y.as_slice());
    for (aj, kj) in a.iter().zip(k) {
        if *aj == 0.0 {
            continue;
        }
        let w = h * aj;
        for (o, kv) in out_s.iter_mut().zip(kj.as_slice()) {
            *o += kv * w;
        }
    }
}

fn error_norm(y: &CMatrix, y_new: &CMatrix, k: &[CMatrix], h: f64, rtol: f64, atol: f64) -> f64 {
    let n = y.len();
    let mut acc = 0.0;
    for idx in 0..n {
        let mut e = ZERO;
        for (ej, kj) in E.iter().zip(k) {
            if *ej != 0.0 {
                e += kj.as_slice()[idx] * *ej;
            }
        }
        let sc = atol + rtol * y.as_slice()[idx].norm().max(y_new.as_slice()[idx].norm());
        acc = f64::max(acc, e.norm() * h / sc);
    }
    acc
}

fn dense_probe(p0: &Probe, p1: &Probe, pk: &[Probe], h: f64, theta: f64) -> Probe {
    let mut out = [0.0; 5];
    for c in 0..5 {
        let r1 = p0[c];
        let r2 = p1[c] - p0[c];
        let r3 = h * pk[0][c] - r2;
        let r4 = r2 - h * pk[6][c] - r3;
        let r5 = h * D.iter().zip(pk).map(|(d, p)| d * p[c]).sum::<f64>();
        let th1 = 1.0 - theta;
        out[c] = r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
    }
    out
}

/// Reflected photon number `m = (κ_ex/2) ∫ ⟨a†a⟩ dt` by trapezoidal
/// quadrature on the dense-output grid.
pub fn reflected_photon_number(traj: &Trajectory, params: &DeviceParams) -> Result<f64> {
    let peak = traj.photon_series.iter().copied().fold(0.0, f64::max);
    let last = *traj.photon_series.last().unwrap_or(&0.0);
    if peak > 0.0 && last > 1e-6 * peak.max(1e-9) {
        return Err(Error::IncompleteTrajectory { last, peak });
    }
    let integral: f64 = traj
        .times
        .windows(2)
        .zip(traj.photon_series.windows(2))
        .map(|(t, n)| 0.5 * (t[1] - t[0]) * (n[0] + n[1]))
        .sum();
    Ok((angular(params.kappa_ex()) / 2.0 * integral).max(0.0))
}

/// Simulation context: a model at fixed truncation plus integrator tolerances.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: SystemModel,
    pub tol: Tolerances,
    /// Threshold passed to [`partial_trace_to_spin`].
    pub leak_tol: f64,
}

/// Observables of one spin-resolved run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinRun {
    pub transmittance: f64,
    pub flip_probability: f64,
    pub stats: IntegrationStats,
}

impl Simulator {
    pub fn new(params: &DeviceParams, fock_dim: usize, tol: Tolerances) -> Result<Self> {
        let space = HilbertSpace::new(fock_dim)?;
        Ok(Self { model: SystemModel::new(params, space)?, tol, leak_tol: DEFAULT_LEAK_TOL })
    }

    pub fn params(&self) -> &DeviceParams {
        &self.model.params
    }

    pub fn space(&self) -> HilbertSpace {
        self.model.space
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn config_for(&self, spec: &PulseSpec) -> IntegratorConfig {
        IntegratorConfig::around_pulse(spec, &self.model.params, self.tol)
    }

    pub fn integrate(&self, spec: &PulseSpec, initial: &InitialSpin) -> Result<Trajectory> {
        let rho0 = initial_state(initial, &self.model.space)?;
        integrate(&self.model, spec, &rho0, &self.config_for(spec))
    }

    /// Transmittance `m/n_in` and spin-flip probability for one initial spin.
    pub fn spin_run(&self, spec: &PulseSpec, spin: Spin) -> Result<SpinRun> {
        if !(spec.n_in > 0.0) {
            return Err(invalid("transmittance needs n_in > 0"));
        }
        let traj = self.integrate(spec, &spin.into())?;
        let m = reflected_photon_number(&traj, &self.model.params)?;
        let pops = self.model.space.level_populations(traj.final_state.matrix());
        Ok(SpinRun {
            transmittance: m / spec.n_in,
            flip_probability: pops[spin.flipped().level().index()].clamp(0.0, 1.0),
            stats: traj.stats,
        })
    }

    /// `(T↑, T↓)`: reflected fraction through the cross polarizer for each
    /// initial spin. The two runs execute concurrently.
    pub fn transmittance_up_down(&self, spec: &PulseSpec) -> Result<(f64, f64)> {
        let (up, down) = self.spin_runs(spec)?;
        Ok((up.transmittance, down.transmittance))
    }

    pub fn spin_runs(&self, spec: &PulseSpec) -> Result<(SpinRun, SpinRun)> {
        let (up, down) = rayon::join(|| self.spin_run(spec, Spin::Up), || self.spin_run(spec, Spin::Down));
        Ok((up?, down?))
    }

    /// Bloch-vector length of the spin after the pulse, starting from the
    /// equal superposition.
    pub fn ramsey_visibility(&self, spec: &PulseSpec) -> Result<f64> {
        Ok(self.ramsey_visibility_run(spec)?.0)
    }

    pub fn ramsey_visibility_run(&self, spec: &PulseSpec) -> Result<(f64, IntegrationStats)> {
        let traj = self.integrate(spec, &InitialSpin::Superposition)?;
        let red = partial_trace_to_spin(&traj.final_state, &self.model.space, self.leak_tol)?;
        Ok((bloch_length(&red.spin), traj.stats))
    }

    /// Population transferred to the opposite ground state by one pulse.
    pub fn spin_flip_probability(&self, spec: &PulseSpec, initial: Spin) -> Result<f64> {
        let traj = self.integrate(spec, &initial.into())?;
        let pops = self.model.space.level_populations(traj.final_state.matrix());
        Ok(pops[initial.flipped().level().index()].clamp(0.0, 1.0))
    }

    /// Mean signal photons per spin flip, `n_in / p̄` with `p̄` the flip
    /// probability averaged over both initial spins.
    pub fn photons_per_flip(&self, spec: &PulseSpec) -> Result<f64> {
        let (up, down) = rayon::join(
            || self.spin_flip_probability(spec, Spin::Up),
            || self.spin_flip_probability(spec, Spin::Down),
        );
        let mean = 0.5 * (up? + down?);
        if mean <= 0.0 {
            return Err(Error::ModelSanity("no spin flips; photons per flip undefined".into()));
        }
        Ok(spec.n_in / mean)
    }
}

/// Observable used by the truncation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// Both `T↑` and `T↓`.
    Transmittance,
    RamseyVisibility,
    SpinFlip(Spin),
}

impl Observable {
    fn evaluate(self, sim: &Simulator, spec: &PulseSpec) -> Result<Vec<f64>> {
        Ok(match self {
            Observable::Transmittance => {
                let (u, d) = sim.transmittance_up_down(spec)?;
                vec![u, d]
            }
            Observable::RamseyVisibility => vec![sim.ramsey_visibility(spec)?],
            Observable::SpinFlip(s) => vec![sim.spin_flip_probability(spec, s)?],
        })
    }
}

pub const MAX_FOCK_DIM: usize = 16;
pub const FOCK_CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FockConvergence {
    pub fock_dim: usize,
    /// Observable values for `fock_dim = 2, 3, ...` as evaluated.
    pub ladder: Vec<(usize, Vec<f64>)>,
}

/// Smallest `fock_dim` for which one more Fock level moves the observable by
/// less than 1e-3.
pub fn converge_fock_dim(
    params: &DeviceParams,
    tol: Tolerances,
    spec: &PulseSpec,
    observable: Observable,
) -> Result<FockConvergence> {
    let mut ladder: Vec<(usize, Vec<f64>)> = Vec::new();
    let eval = |d: usize| -> Result<Vec<f64>> { observable.evaluate(&Simulator::new(params, d, tol)?, spec) };
    ladder.push((2, eval(2)?));
    for d in 3..=MAX_FOCK_DIM {
        let next = eval(d)?;
        let prev = &ladder.last().expect("ladder nonempty").1;
        let diff = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ladder.push((d, next));
        if diff < FOCK_CONVERGENCE_TOL {
            return Ok(FockConvergence { fock_dim: d - 1, ladder });
        }
    }
    Err(Error::TruncationFailure { max_fock_dim: MAX_FOCK_DIM })
}

/// Runs `f` over `items` concurrently, returning results in input order.
pub fn sweep<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::QdLevel;
    use approx::assert_abs_diff_eq;

    fn quiet() -> DeviceParams {
        DeviceParams { g1: 0.0, g2: 0.0, gamma_sp: [0.0; 4], gamma_d1: 0.0, gamma_d2: 0.0, ..DeviceParams::default() }
    }

    #[test]
    fn frozen_dynamics_leave_state_unchanged() {
        // vacuum cavity and ground-state spin: cavity decay has nothing to act on
        let params = DeviceParams { delta_e: 0.0, delta_h: 0.0, ..quiet() };
        let space = HilbertSpace::new(2).unwrap();
        let model = SystemModel::new(&params, space).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let rho0 = initial_state(&InitialSpin::Superposition, &space).unwrap();
        let mut cfg = IntegratorConfig::around_pulse(&spec, &params, Tolerances::default());
        cfg.retain_every = 5;
        let traj = integrate(&model, &spec, &rho0, &cfg).unwrap();
        assert!(traj.states.len() > 2);
        for (_, s) in &traj.states {
            let d = s.matrix() - rho0.matrix();
            assert!(d.iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn free_precession_period() {
        let params = quiet();
        let sim = Simulator::new(&params, 2, Tolerances::default()).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let space = sim.space();
        let rho0 = initial_state(&InitialSpin::Superposition, &space).unwrap();
        let mut cfg = sim.config_for(&spec);
        cfg.retain_every = 1;
        cfg.max_step = 0.0005;
        let traj = integrate(sim.model(), &spec, &rho0, &cfg).unwrap();
        let (up, down) = (space.index(QdLevel::SpinUp, 0), space.index(QdLevel::SpinDown, 0));
        // coherence ρ↑↓(t) = ½ e^{-i(E↑ − E↓)t}, E↑ − E↓ = −Δe
        let omega = angular(params.delta_e);
        let t0 = traj.states[0].0;
        for (t, s) in &traj.states {
            let coh = s.matrix()[(up, down)];
            let want = Complex64::from_polar(0.5, omega * (t - t0));
            assert!((coh - want).norm() < 1e-6, "t = {t}: {coh} vs {want}");
            assert_abs_diff_eq!(s.purity(), 1.0, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(1.0 / params.delta_e * 1e3, 25.51, epsilon = 0.01);
    }

    #[test]
    fn undriven_unitary_evolution_conserves_purity() {
        let params = DeviceParams { gamma_sp: [0.0; 4], gamma_d1: 0.0, gamma_d2: 0.0, ..DeviceParams::default() };
        let sim = Simulator::new(&params, 3, Tolerances::default()).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let traj = sim.integrate(&spec, &InitialSpin::Superposition).unwrap();
        assert_abs_diff_eq!(traj.final_state.purity(), 1.0, epsilon = 1e-8);
        assert!(traj.stats.max_trace_error < 1e-12);
    }

    #[test]
    fn zero_drive_gives_zero_reflection_and_unit_visibility() {
        let sim = Simulator::new(&DeviceParams::default(), 2, Tolerances::default()).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let traj = sim.integrate(&spec, &InitialSpin::Down).unwrap();
        assert_eq!(reflected_photon_number(&traj, sim.params()).unwrap(), 0.0);
        assert_abs_diff_eq!(sim.ramsey_visibility(&spec).unwrap(), 1.0, epsilon = 1e-6);
        assert_eq!(sim.spin_flip_probability(&spec, Spin::Down).unwrap(), 0.0);
        assert!(sim.transmittance_up_down(&spec).is_err());
    }

    #[test]
    fn truncated_trajectory_is_rejected() {
        let params = quiet();
        let sim = Simulator::new(&params, 3, Tolerances::default()).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.1).unwrap();
        let mut cfg = sim.config_for(&spec);
        cfg.t_end = spec.t0_ns;
        let rho0 = initial_state(&InitialSpin::Down, &sim.space()).unwrap();
        let traj = integrate(sim.model(), &spec, &rho0, &cfg).unwrap();
        assert!(matches!(reflected_photon_number(&traj, &params), Err(Error::IncompleteTrajectory { .. })));
    }

    #[test]
    fn empty_cavity_reflects_alpha_squared() {
        // Steady-state input–output: intracavity amplitude 2√(κ_ex/2)√(nG)/κ, so
        // m = (κ_ex/2)∫|α|² = (κ_ex/κ)² n_in.
        let params = quiet();
        let sim = Simulator::new(&params, 3, Tolerances::default()).unwrap();
        let spec = PulseSpec::gaussian(1.34, 0.1).unwrap();
        let traj = sim.integrate(&spec, &InitialSpin::Down).unwrap();
        let m = reflected_photon_number(&traj, &params).unwrap();
        assert!((m - 0.0846).abs() < 0.0846 * 0.01, "m = {m}");
        assert!((m / 0.1 - 0.92f64.powi(2)).abs() < 0.01 * 0.8464);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let sim = Simulator::new(&DeviceParams::default(), 2, Tolerances::default()).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.1).unwrap();
        let rho0 = initial_state(&InitialSpin::Down, &sim.space()).unwrap();
        let mut cfg = sim.config_for(&spec);
        cfg.t_end = cfg.t_start;
        assert!(integrate(sim.model(), &spec, &rho0, &cfg).is_err());
        let mut cfg = sim.config_for(&spec);
        cfg.rel_tol = 0.0;
        assert!(integrate(sim.model(), &spec, &rho0, &cfg).is_err());
        let wrong = initial_state(&InitialSpin::Down, &HilbertSpace::new(3).unwrap()).unwrap();
        assert!(integrate(sim.model(), &spec, &wrong, &sim.config_for(&spec)).is_err());
    }

    #[test]
    fn decoupled_spin_never_flips() {
        // With g2 = 0 the spin-up ground state has no optical coupling at all;
        // with the cross spontaneous channels also off, spin-down cannot reach spin-up.
        let params = DeviceParams { g2: 0.0, gamma_sp: [0.1, 0.0, 0.0, 0.1], ..DeviceParams::default() };
        let sim = Simulator::new(&params, 4, Tolerances::default()).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.42).unwrap();
        assert!(sim.spin_flip_probability(&spec, Spin::Up).unwrap() < 1e-6);
        assert!(sim.spin_flip_probability(&spec, Spin::Down).unwrap() < 1e-6);
    }

    #[test]
    fn dense_output_reproduces_polynomial_exactly() {
        // For a state whose probe is constant, every dense sample equals it.
        let p = [0.3, 0.1, 0.2, 0.3, 0.4];
        let k = vec![[0.0; 5]; 7];
        let s = dense_probe(&p, &p, &k, 0.1, 0.4);
        for (a, b) in s.iter().zip(p) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn vacuum_truncation_converges_immediately() {
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let conv = converge_fock_dim(&DeviceParams::default(), Tolerances::default(), &spec, Observable::RamseyVisibility)
            .unwrap();
        assert_eq!(conv.fock_dim, 2);
        assert_eq!(conv.ladder[0].1[0], 1.0);
    }
}
