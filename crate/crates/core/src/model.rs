// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Device parameters, drive pulses, and the Hamiltonian / Lindblad channels of
//! the driven dot–cavity system.
//!
//! Parameters are stored as ν = ω/2π in GHz, the way device tables quote them.
//! Everything handed to the integrator is angular frequency in rad/ns with
//! ħ = 1, i.e. `2π × ν[GHz]`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::qspace::{
    lowering_operators, CMatrix, DensityOp, HilbertSpace, LoweringOperators, QdLevel, I, ONE, ZERO,
};

pub const TWO_PI: f64 = 2.0 * PI;

/// GHz (ν) → rad/ns (ω).
#[inline]
pub fn angular(nu_ghz: f64) -> f64 {
    TWO_PI * nu_ghz
}

/// Measured constants of the dot–cavity device, all rates and frequencies as
/// ν = ω/2π in GHz.
///
/// `omega_c`, `omega_x` and `omega_drive` only enter through their
/// differences, so any common reference frequency may be used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams {
    #[serde(rename = "omega_c_over_2pi_ghz")]
    pub omega_c: f64,
    #[serde(rename = "omega_x_over_2pi_ghz")]
    pub omega_x: f64,
    #[serde(rename = "omega_drive_over_2pi_ghz")]
    pub omega_drive: f64,
    /// Electron ground-state Zeeman splitting.
    #[serde(rename = "delta_e_over_2pi_ghz")]
    pub delta_e: f64,
    /// Trion Zeeman splitting.
    #[serde(rename = "delta_h_over_2pi_ghz")]
    pub delta_h: f64,
    #[serde(rename = "g1_over_2pi_ghz")]
    pub g1: f64,
    #[serde(rename = "g2_over_2pi_ghz")]
    pub g2: f64,
    /// Cavity energy decay rate.
    #[serde(rename = "kappa_over_2pi_ghz")]
    pub kappa: f64,
    /// Interference contrast κ_ex/κ.
    pub alpha: f64,
    /// Spontaneous emission rates γ1..γ4 of σ1..σ4.
    #[serde(rename = "gamma_sp_over_2pi_ghz")]
    pub gamma_sp: [f64; 4],
    #[serde(rename = "gamma_d1_over_2pi_ghz")]
    pub gamma_d1: f64,
    #[serde(rename = "gamma_d2_over_2pi_ghz")]
    pub gamma_d2: f64,
    #[serde(rename = "b_field_t")]
    pub b_field: f64,
    pub wavelength_nm: f64,
    #[serde(rename = "rep_rate_mhz")]
    pub rep_rate: f64,
}

impl Default for DeviceParams {
    /// The measured device: κ/2π = 33.5 GHz, α = 0.92, g1/2π = 10.7 GHz, ...
    fn default() -> Self {
        Self {
            omega_c: 0.0,
            omega_x: 0.0,
            omega_drive: 0.0,
            delta_e: 39.2,
            delta_h: 19.0,
            g1: 10.7,
            g2: 6.2,
            kappa: 33.5,
            alpha: 0.92,
            gamma_sp: [0.1; 4],
            gamma_d1: 3.5,
            gamma_d2: 6.9,
            b_field: 5.5,
            wavelength_nm: 927.0,
            rep_rate: 76.0,
        }
    }
}

impl DeviceParams {
    /// Decay rate into the collected reflection mode, α·κ (GHz).
    pub fn kappa_ex(&self) -> f64 {
        self.alpha * self.kappa
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega_c,
            self.omega_x,
            self.omega_drive,
            self.delta_e,
            self.delta_h,
            self.g1,
            self.g2,
            self.kappa,
            self.alpha,
            self.gamma_d1,
            self.gamma_d2,
            self.b_field,
            self.wavelength_nm,
            self.rep_rate,
        ]
        .iter()
        .chain(self.gamma_sp.iter())
        .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("device parameters must be finite"));
        }
        if self.kappa <= 0.0 {
            return Err(invalid(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.gamma_sp.iter().chain([&self.gamma_d1, &self.gamma_d2]).any(|&r| r < 0.0) {
            return Err(invalid("decay and dephasing rates must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    #[default]
    Gaussian,
}

/// One drive pulse: envelope and mean number of photons coupled to the cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    #[serde(default)]
    pub shape: PulseShape,
    pub t_fwhm_ns: f64,
    /// Peak time; defaults to 20 FWHM so the pulse is negligible at t = 0.
    pub t0_ns: f64,
    pub n_in: f64,
}

impl PulseSpec {
    pub fn gaussian(t_fwhm_ns: f64, n_in: f64) -> Result<Self> {
        let spec = Self { shape: PulseShape::Gaussian, t_fwhm_ns, t0_ns: 20.0 * t_fwhm_ns, n_in };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_photons(&self, n_in: f64) -> Self {
        Self { n_in, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_fwhm_ns > 0.0 && self.t_fwhm_ns.is_finite()) {
            return Err(invalid(format!("t_fwhm must be > 0, got {}", self.t_fwhm_ns)));
        }
        if !(self.n_in >= 0.0 && self.n_in.is_finite()) {
            return Err(invalid(format!("n_in must be >= 0, got {}", self.n_in)));
        }
        if !self.t0_ns.is_finite() {
            return Err(invalid("t0 must be finite"));
        }
        Ok(())
    }

    /// Window `[t0 - 10 FWHM, t0 + 10 FWHM]` outside of which the envelope is
    /// below 1e-9 of its peak (it is e^{-400 ln 2} ≈ 1e-120 there).
    pub fn support(&self) -> (f64, f64) {
        (self.t0_ns - 10.0 * self.t_fwhm_ns, self.t0_ns + 10.0 * self.t_fwhm_ns)
    }
}

/// Normalized Gaussian intensity envelope G(t) in 1/ns.
pub fn gaussian_envelope(t: f64, spec: &PulseSpec) -> f64 {
    let peak = 2.0 * (2.0 * LN_2).sqrt() / ((2.0 * PI).sqrt() * spec.t_fwhm_ns);
    let x = (t - spec.t0_ns) / spec.t_fwhm_ns;
    peak * (-4.0 * LN_2 * x * x).exp()
}

/// A dissipative channel `rate · D(O)` with
/// `D(O)ρ = OρO† − ½O†Oρ − ½ρO†O`.
#[derive(Debug, Clone)]
pub struct LindbladChannel {
    pub label: &'static str,
    pub collapse: CMatrix,
    /// Prefactor of `D(O)` in rad/ns.
    pub rate: f64,
}

/// `D(O)ρ` without the rate prefactor.
pub fn dissipator(op: &CMatrix, rho: &CMatrix) -> CMatrix {
    let op_dag = op.adjoint();
    let n = &op_dag * op;
    let half = Complex64::new(0.5, 0.0);
    op * rho * &op_dag - (&n * rho) * half - (rho * &n) * half
}

/// Time-independent pieces of the generator for one space and parameter set.
///
/// `H(t) = H_static + √(n_in G(t)) · H_drive`.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub params: DeviceParams,
    pub space: HilbertSpace,
    pub ops: LoweringOperators,
    pub h_static: CMatrix,
    /// `i √(κ_ex/2) (a† − a)`, to be scaled by `√(n_in G(t))`.
    pub h_drive: CMatrix,
    pub channels: Vec<LindbladChannel>,
}

impl SystemModel {
    pub fn new(params: &DeviceParams, space: HilbertSpace) -> Result<Self> {
        params.validate()?;
        let ops = lowering_operators(&space);
        let h_static = static_hamiltonian(params, &ops);
        let a = &ops.a;
        let h_drive = (a.adjoint() - a) * (I * angular(params.kappa_ex() / 2.0).sqrt());
        let channels = channels(params, &ops);
        Ok(Self { params: params.clone(), space, ops, h_static, h_drive, channels })
    }

    /// Scalar multiplying `h_drive` at time `t`.
    pub fn drive_amplitude(&self, spec: &PulseSpec, t: f64) -> f64 {
        (spec.n_in * gaussian_envelope(t, spec)).sqrt()
    }

    pub fn hamiltonian(&self, spec: &PulseSpec, t: f64) -> CMatrix {
        let amp = self.drive_amplitude(spec, t);
        if amp == 0.0 {
            return self.h_static.clone();
        }
        &self.h_static + &self.h_drive * Complex64::new(amp, 0.0)
    }
}

fn static_hamiltonian(p: &DeviceParams, ops: &LoweringOperators) -> CMatrix {
    let a = &ops.a;
    let ad = a.adjoint();
    let [s1, s2, s3, s4] = &ops.sigma;
    let re = |x: f64| Complex64::new(x, 0.0);

    let h0 = &ad * a * re(angular(p.omega_c - p.omega_drive))
        + s1.adjoint() * s1 * re(angular(p.omega_x - p.omega_drive))
        + s2.adjoint() * s2 * re(angular(p.omega_x - p.omega_drive + p.delta_h))
        - s2 * s2.adjoint() * re(angular(p.delta_e));

    let g1 = re(angular(p.g1));
    let g2 = I * angular(p.g2);
    let hint = (a * s1.adjoint() + s1 * &ad) * g1
        + (a * s4.adjoint() + s4 * &ad) * g1
        + (a * s2.adjoint() - s2 * &ad) * g2
        + (a * s3.adjoint() - s3 * &ad) * g2;

    h0 + hint
}

fn channels(p: &DeviceParams, ops: &LoweringOperators) -> Vec<LindbladChannel> {
    let [s1, s2, s3, s4] = &ops.sigma;
    vec![
        LindbladChannel { label: "cavity", collapse: ops.a.clone(), rate: angular(p.kappa) },
        LindbladChannel { label: "sigma1", collapse: s1.clone(), rate: angular(p.gamma_sp[0]) },
        LindbladChannel { label: "sigma2", collapse: s2.clone(), rate: angular(p.gamma_sp[1]) },
        LindbladChannel { label: "sigma3", collapse: s3.clone(), rate: angular(p.gamma_sp[2]) },
        LindbladChannel { label: "sigma4", collapse: s4.clone(), rate: angular(p.gamma_sp[3]) },
        LindbladChannel { label: "dephasing1", collapse: s1.adjoint() * s1, rate: 2.0 * angular(p.gamma_d1) },
        LindbladChannel { label: "dephasing2", collapse: s2.adjoint() * s2, rate: 2.0 * angular(p.gamma_d2) },
    ]
}

/// `H(t)` in rad/ns (ħ = 1) for the given drive pulse.
pub fn assemble_hamiltonian(params: &DeviceParams, spec: &PulseSpec, space: &HilbertSpace, t: f64) -> Result<CMatrix> {
    spec.validate()?;
    Ok(SystemModel::new(params, *space)?.hamiltonian(spec, t))
}

/// The seven dissipative channels: cavity decay, four spontaneous-emission
/// channels, two trion pure-dephasing channels (rate 2γ_d).
pub fn assemble_liouvillian(params: &DeviceParams, space: &HilbertSpace) -> Result<Vec<LindbladChannel>> {
    params.validate()?;
    Ok(channels(params, &lowering_operators(space)))
}

/// Ground spin state of the dot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn level(self) -> QdLevel {
        match self {
            Spin::Up => QdLevel::SpinUp,
            Spin::Down => QdLevel::SpinDown,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

impl From<Spin> for InitialSpin {
    fn from(s: Spin) -> Self {
        match s {
            Spin::Up => InitialSpin::Up,
            Spin::Down => InitialSpin::Down,
        }
    }
}

/// Initial spin preparation; the cavity always starts in vacuum.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpin {
    Down,
    Up,
    /// `(|↑⟩ + |↓⟩)(⟨↑| + ⟨↓|)/2`.
    Superposition,
    /// 2×2 block in the `{SpinUp, SpinDown}` basis.
    Custom(CMatrix),
}

pub fn initial_state(kind: &InitialSpin, space: &HilbertSpace) -> Result<DensityOp> {
    let block = match kind {
        InitialSpin::Up => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]),
        InitialSpin::Down => CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]),
        InitialSpin::Superposition => CMatrix::from_element(2, 2, Complex64::new(0.5, 0.0)),
        InitialSpin::Custom(m) => {
            if m.shape() != (2, 2) {
                return Err(invalid("custom spin state must be 2x2"));
            }
            DensityOp::new(m.clone())?;
            m.clone()
        }
    };
    let ground = [QdLevel::SpinUp, QdLevel::SpinDown];
    let mut rho = CMatrix::zeros(space.total_dim(), space.total_dim());
    for (bi, &li) in ground.iter().enumerate() {
        for (bj, &lj) in ground.iter().enumerate() {
            rho[(space.index(li, 0), space.index(lj, 0))] = block[(bi, bj)];
        }
    }
    DensityOp::new(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::{bloch_length, hermiticity_error, partial_trace_to_spin, DEFAULT_LEAK_TOL};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Composite Simpson quadrature, independent of the integrator.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn envelope_peak_and_tails() {
        let spec = PulseSpec::gaussian(0.063, 1.0).unwrap();
        let peak = gaussian_envelope(spec.t0_ns, &spec);
        assert_abs_diff_eq!(peak, 14.911_6, epsilon = 1e-3);
        let far = gaussian_envelope(spec.t0_ns + 10.5 * spec.t_fwhm_ns, &spec);
        assert!(far < 1e-9 * peak);
        assert!(gaussian_envelope(0.0, &spec) < 1e-9 * peak);
    }

    #[test]
    fn envelope_normalization() {
        for fwhm in [0.063, 1.34] {
            let spec = PulseSpec::gaussian(fwhm, 1.0).unwrap();
            let (lo, hi) = spec.support();
            let area = simpson(|t| gaussian_envelope(t, &spec), lo, hi, 20_000);
            assert_abs_diff_eq!(area, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_drive_leaves_static_hamiltonian() {
        let space = HilbertSpace::new(3).unwrap();
        let params = DeviceParams::default();
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let model = SystemModel::new(&params, space).unwrap();
        for t in [0.0, spec.t0_ns, 2.0 * spec.t0_ns] {
            assert_eq!(model.hamiltonian(&spec, t), model.h_static);
        }
    }

    #[test]
    fn resonant_uncoupled_free_hamiltonian_vanishes() {
        let params = DeviceParams { g1: 0.0, g2: 0.0, delta_e: 0.0, delta_h: 0.0, ..DeviceParams::default() };
        let space = HilbertSpace::new(3).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let h = assemble_hamiltonian(&params, &spec, &space, spec.t0_ns).unwrap();
        assert_eq!(max_abs(&h), 0.0);
    }

    #[test]
    fn hamiltonian_hermitian_at_peak() {
        let space = HilbertSpace::new(4).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.42).unwrap();
        let h = assemble_hamiltonian(&DeviceParams::default(), &spec, &space, spec.t0_ns).unwrap();
        assert!(hermiticity_error(&h) < 1e-12);
        assert!(max_abs(&model_drive(&spec)) > 0.0);
    }

    fn model_drive(spec: &PulseSpec) -> CMatrix {
        let space = HilbertSpace::new(4).unwrap();
        let m = SystemModel::new(&DeviceParams::default(), space).unwrap();
        m.hamiltonian(spec, spec.t0_ns) - &m.h_static
    }

    #[test]
    fn hamiltonian_terms_match_level_energies() {
        // With g = 0 and no drive, H is diagonal: T2 at Δh, spin-up at -Δe, detuned cavity.
        let params = DeviceParams { g1: 0.0, g2: 0.0, omega_c: 5.0, ..DeviceParams::default() };
        let space = HilbertSpace::new(2).unwrap();
        let spec = PulseSpec::gaussian(0.063, 0.0).unwrap();
        let h = assemble_hamiltonian(&params, &spec, &space, 0.0).unwrap();
        let e = |l, n| h[(space.index(l, n), space.index(l, n))].re / TWO_PI;
        assert_abs_diff_eq!(e(QdLevel::SpinUp, 0), -39.2, epsilon = 1e-12);
        assert_abs_diff_eq!(e(QdLevel::SpinDown, 0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e(QdLevel::Trion1, 0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e(QdLevel::Trion2, 0), 19.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e(QdLevel::SpinDown, 1), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn liouvillian_channel_rates() {
        let space = HilbertSpace::new(3).unwrap();
        let ch = assemble_liouvillian(&DeviceParams::default(), &space).unwrap();
        let rates: Vec<f64> = ch.iter().map(|c| c.rate / TWO_PI).collect();
        let expected = [33.5, 0.1, 0.1, 0.1, 0.1, 7.0, 13.8];
        assert_eq!(rates.len(), 7);
        for (r, e) in rates.iter().zip(expected) {
            assert_abs_diff_eq!(*r, e, epsilon = 1e-12);
        }

        let zero = DeviceParams {
            gamma_sp: [0.0; 4],
            gamma_d1: 0.0,
            gamma_d2: 0.0,
            ..DeviceParams::default()
        };
        let ch = assemble_liouvillian(&zero, &space).unwrap();
        assert_eq!(ch.len(), 7);
        assert!(ch[1..].iter().all(|c| c.rate == 0.0));
    }

    #[test]
    fn cavity_dissipator_feeds_vacuum() {
        // D(a)|1⟩⟨1| = |0⟩⟨0| − |1⟩⟨1|, so κ D(a) moves population at rate κ
        let space = HilbertSpace::new(3).unwrap();
        let mut rho = CMatrix::zeros(12, 12);
        let one = space.index(QdLevel::SpinDown, 1);
        let vac = space.index(QdLevel::SpinDown, 0);
        rho[(one, one)] = ONE;
        let d = dissipator(&space.annihilation(), &rho);
        assert_abs_diff_eq!(d[(vac, vac)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(one, one)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.trace().norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn initial_states() {
        let space = HilbertSpace::new(3).unwrap();
        let sup = initial_state(&InitialSpin::Superposition, &space).unwrap();
        assert_abs_diff_eq!(sup.trace().re, 1.0, epsilon = 1e-15);
        let red = partial_trace_to_spin(&sup, &space, DEFAULT_LEAK_TOL).unwrap();
        assert_abs_diff_eq!(bloch_length(&red.spin), 1.0, epsilon = 1e-12);

        let down = initial_state(&InitialSpin::Down, &space).unwrap();
        let red = partial_trace_to_spin(&down, &space, DEFAULT_LEAK_TOL).unwrap();
        assert_eq!(red.spin.matrix()[(1, 1)], ONE);

        let block = CMatrix::from_row_slice(2, 2, &[Complex64::new(0.3, 0.0), ZERO, ZERO, Complex64::new(0.7, 0.0)]);
        let custom = initial_state(&InitialSpin::Custom(block.clone()), &space).unwrap();
        let red = partial_trace_to_spin(&custom, &space, DEFAULT_LEAK_TOL).unwrap();
        assert!(max_abs(&(red.spin.matrix() - block)) < 1e-15);

        let bad = CMatrix::from_row_slice(2, 2, &[Complex64::new(1.3, 0.0), ZERO, ZERO, Complex64::new(-0.3, 0.0)]);
        assert!(initial_state(&InitialSpin::Custom(bad), &space).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(DeviceParams { kappa: 0.0, ..DeviceParams::default() }.validate().is_err());
        assert!(DeviceParams { alpha: 1.2, ..DeviceParams::default() }.validate().is_err());
        assert!(DeviceParams { gamma_d1: -1.0, ..DeviceParams::default() }.validate().is_err());
        assert_abs_diff_eq!(DeviceParams::default().kappa_ex(), 30.82, epsilon = 1e-12);
        assert!(PulseSpec::gaussian(0.0, 1.0).is_err());
        assert!(PulseSpec::gaussian(1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn hamiltonian_always_hermitian(
            g1 in 0.0f64..30.0, g2 in 0.0f64..30.0, de in -50.0f64..50.0, dh in -50.0f64..50.0,
            wc in -20.0f64..20.0, wx in -20.0f64..20.0, n_in in 0.0f64..30.0, frac in -3.0f64..3.0,
        ) {
            let params = DeviceParams { g1, g2, delta_e: de, delta_h: dh, omega_c: wc, omega_x: wx, ..DeviceParams::default() };
            let space = HilbertSpace::new(3).unwrap();
            let spec = PulseSpec::gaussian(0.063, n_in).unwrap();
            let t = spec.t0_ns + frac * spec.t_fwhm_ns;
            let h = assemble_hamiltonian(&params, &spec, &space, t).unwrap();
            prop_assert!(hermiticity_error(&h) < 1e-12);
        }
    }
}
