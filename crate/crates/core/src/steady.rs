// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Closed-form cavity response: reflection spectra, spin-dependent reflection
//! coefficients, polarizer transmittance, cooperativity and spin constants.
//!
//! Everything here works in ν = ω/2π units (GHz); the formulas are ratios of
//! like quantities, so no angular conversion is needed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Physical constants (CODATA 2018, exact where SI defines them).
pub mod constants {
    /// Bohr magneton, J/T.
    pub const MU_B: f64 = 9.274_010_078_3e-24;
    /// Planck constant, J·s.
    pub const H: f64 = 6.626_070_15e-34;
    /// Speed of light, m/s.
    pub const C: f64 = 299_792_458.0;
}

/// Detection polarization relative to the incident circular polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    Cross,
    Co,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    /// Cavity linewidth κ/2π, GHz.
    pub kappa: f64,
    /// Cavity frequency ω_c/2π, GHz.
    pub omega_c: f64,
    pub alpha: f64,
    /// A for the cross-polarized curve, A′ for the co-polarized one.
    pub scale: f64,
    pub offset: f64,
}

/// Complex Lorentzian response `(κ/2) / (κ/2 + i(ω − ω_c))`.
pub fn cavity_response(omega: f64, kappa: f64, omega_c: f64) -> Complex64 {
    let half = Complex64::new(kappa / 2.0, 0.0);
    half / (half + Complex64::new(0.0, omega - omega_c))
}

pub fn reflection_spectrum(omega: f64, p: &SpectrumParams, pol: Polarization) -> f64 {
    let l = cavity_response(omega, p.kappa, p.omega_c);
    match pol {
        Polarization::Cross => p.scale * l.norm_sqr() + p.offset,
        Polarization::Co => p.scale * (Complex64::new(1.0, 0.0) - l * p.alpha).norm_sqr() + p.offset,
    }
}

/// `(r↑, r↓) = (−(2α − 1), 1 − 2α/(1 + C))`.
pub fn reflection_coefficients(alpha: f64, cooperativity: f64) -> (f64, f64) {
    let r_up = -(2.0 * alpha - 1.0);
    let r_down = if cooperativity.is_infinite() { 1.0 } else { 1.0 - 2.0 * alpha / (1.0 + cooperativity) };
    (r_up, r_down)
}

/// Fraction of the reflected signal passing the cross polarizer, `|1 − r|²/4`.
pub fn polarizer_transmittance(r: Complex64) -> f64 {
    (Complex64::new(1.0, 0.0) - r).norm_sqr() / 4.0
}

/// `C = 2g²/(κγ)`.
pub fn cooperativity(g: f64, kappa: f64, gamma: f64) -> f64 {
    2.0 * g * g / (kappa * gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinConstants {
    pub g_factor: f64,
    pub precession_period_ps: f64,
}

/// Landé factor `h ν_e / (μ_B B)` and precession period `1/ν_e` from the
/// ground-state splitting ν_e = Δe/2π (GHz) at field `b_field` (T).
pub fn spin_constants(delta_e_ghz: f64, b_field: f64) -> SpinConstants {
    use constants::{H, MU_B};
    SpinConstants {
        g_factor: H * delta_e_ghz * 1e9 / (MU_B * b_field),
        precession_period_ps: 1e3 / delta_e_ghz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params() -> SpectrumParams {
        SpectrumParams { kappa: 33.5, omega_c: 0.0, alpha: 0.92, scale: 100.0, offset: 3.0 }
    }

    #[test]
    fn spectrum_limits() {
        let p = params();
        assert_abs_diff_eq!(reflection_spectrum(0.0, &p, Polarization::Cross), 103.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reflection_spectrum(0.0, &p, Polarization::Co), 100.0 * 0.08f64.powi(2) + 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reflection_spectrum(1e9, &p, Polarization::Cross), 3.0, epsilon = 1e-9);
        // half maximum at one half-linewidth detuning
        assert_abs_diff_eq!(reflection_spectrum(16.75, &p, Polarization::Cross), 53.0, epsilon = 1e-12);
    }

    #[test]
    fn reflection_coefficient_values() {
        assert_eq!(reflection_coefficients(1.0, f64::INFINITY), (-1.0, 1.0));
        let (up, down) = reflection_coefficients(0.92, 1.96);
        assert_abs_diff_eq!(up, -0.84, epsilon = 1e-12);
        assert_abs_diff_eq!(down, 0.378_378_378, epsilon = 1e-9);
        assert_eq!(reflection_coefficients(1.0, 0.0), (-1.0, -1.0));
    }

    #[test]
    fn polarizer_values() {
        assert_eq!(polarizer_transmittance(Complex64::new(-1.0, 0.0)), 1.0);
        assert_eq!(polarizer_transmittance(Complex64::new(1.0, 0.0)), 0.0);
        assert_abs_diff_eq!(polarizer_transmittance(Complex64::new(0.3784, 0.0)), 0.096_596_64, epsilon = 1e-8);
    }

    #[test]
    fn cooperativity_values() {
        let c = cooperativity(10.7, 33.5, 3.5);
        assert_abs_diff_eq!(c, 1.95, epsilon = 0.02);
        assert_abs_diff_eq!(cooperativity(21.4, 33.5, 3.5), 4.0 * c, epsilon = 1e-12);
        assert_abs_diff_eq!(cooperativity(10.7, 35.5, 3.5), 1.84, epsilon = 0.005);
    }

    #[test]
    fn spin_constant_values() {
        let s = spin_constants(39.2, 5.5);
        assert_abs_diff_eq!(s.g_factor, 0.51, epsilon = 0.005);
        assert_abs_diff_eq!(s.precession_period_ps, 25.5, epsilon = 0.1);
        let doubled = spin_constants(39.2, 11.0);
        assert_abs_diff_eq!(doubled.g_factor, s.g_factor / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(doubled.g_factor, 0.255, epsilon = 0.003);
    }

    proptest! {
        #[test]
        fn bare_cavity_transmittance_is_alpha_squared(alpha in 0.01f64..=1.0, c in 0.0f64..100.0) {
            let (up, _) = reflection_coefficients(alpha, c);
            prop_assert!((polarizer_transmittance(Complex64::new(up, 0.0)) - alpha * alpha).abs() < 1e-14);
        }

        #[test]
        fn r_down_increases_with_cooperativity(alpha in 0.01f64..=1.0, c in 0.0f64..100.0, dc in 0.001f64..10.0) {
            let (_, a) = reflection_coefficients(alpha, c);
            let (_, b) = reflection_coefficients(alpha, c + dc);
            prop_assert!(b > a);
            prop_assert!(b < 1.0);
        }

        #[test]
        fn spectra_shape(detuning in 0.0f64..200.0, alpha in 0.01f64..=1.0, kappa in 1.0f64..100.0) {
            let p = SpectrumParams { kappa, omega_c: 5.0, alpha, scale: 1.0, offset: 0.0 };
            let plus = reflection_spectrum(5.0 + detuning, &p, Polarization::Cross);
            let minus = reflection_spectrum(5.0 - detuning, &p, Polarization::Cross);
            prop_assert!((plus - minus).abs() < 1e-12);
            let center = reflection_spectrum(5.0, &p, Polarization::Co);
            prop_assert!(reflection_spectrum(5.0 + detuning, &p, Polarization::Co) >= center - 1e-15);
        }
    }
}
