// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration. JSON keys follow the physical symbols
//! (`kappa_over_2pi_ghz`, `delta_e_over_2pi_ghz`, ...); every section is
//! optional and defaults to the measured device.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use qdswitch::evolve::Tolerances;
use qdswitch::fitshop::CalibrationSetup;
use qdswitch::model::{DeviceParams, PulseSpec};
use qdswitch::protocol::{FockPolicy, ProtocolParams};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::output::Format;

/// A fixed photon-number truncation or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSetting(pub FockPolicy);

impl FromStr for FockSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Self(FockPolicy::Auto));
        }
        s.parse::<usize>()
            .map(|d| Self(FockPolicy::Fixed(d)))
            .map_err(|_| format!("expected a Fock dimension or \"auto\", got {s:?}"))
    }
}

impl fmt::Display for FockSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            FockPolicy::Fixed(d) => write!(f, "{d}"),
            FockPolicy::Auto => f.write_str("auto"),
        }
    }
}

impl Serialize for FockSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            FockPolicy::Fixed(d) => s.serialize_u64(d as u64),
            FockPolicy::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for FockSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Dim(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Dim(n) => Ok(Self(FockPolicy::Fixed(n))),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: Format,
    pub path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { format: Format::Csv, path: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// Detuning grid is `ω_c ± span`, GHz.
    pub span_ghz: f64,
    pub points: usize,
    pub scale: f64,
    pub offset: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { span_ghz: 120.0, points: 241, scale: 1.0, offset: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyConfig {
    pub pulse: String,
    pub tau_max_ps: f64,
    pub tau_step_ps: f64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        Self { pulse: "signal_short".into(), tau_max_ps: 100.0, tau_step_ps: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchConfig {
    pub pulse: String,
    pub gate_pulse: String,
    /// Condition a sits at `cycles + ½` precession periods, b at `cycles + 1`.
    pub cycles: u32,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        Self { pulse: "signal_short".into(), gate_pulse: "gate".into(), cycles: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainConfig {
    pub pulse: String,
    /// Short-pulse point at `protocol.n_s` added to the decay fit.
    pub short_pulse: String,
    pub n_s: Vec<f64>,
    /// Long-pulse points entering the contrast-decay fit; each must be in `n_s`.
    pub fit_n_s: Vec<f64>,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            pulse: "signal_long".into(),
            short_pulse: "signal_short".into(),
            n_s: vec![4.4, 10.9, 15.0, 23.0, 29.2, 35.0, 45.0],
            fit_n_s: vec![4.4, 10.9, 23.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub pulse: String,
    pub powers_pw: Vec<f64>,
    /// Generating values for the synthetic dataset when no data file is given.
    pub fidelity: f64,
    pub eta: f64,
    pub noise: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { pulse: "gate".into(), powers_pw: vec![0.0, 217.5, 380.6], fidelity: 0.747, eta: 0.0316, noise: 0.02 }
    }
}

/// Ground truth for `synth` beyond the device and protocol sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub noise: f64,
    pub ramsey_scale: f64,
    pub delta0: f64,
    pub n_avg: f64,
    pub decay_n_s: Vec<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            noise: 0.02,
            ramsey_scale: 1.0,
            delta0: 0.24,
            n_avg: 27.7,
            decay_n_s: vec![0.42, 4.4, 10.9, 23.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub pulses: BTreeMap<String, PulseSpec>,
    pub protocol: ProtocolParams,
    pub integrator: Tolerances,
    pub fock_dim: FockSetting,
    pub seed: u64,
    pub output: OutputConfig,
    pub spectrum: SpectrumConfig,
    pub ramsey: RamseyConfig,
    pub switch: SwitchConfig,
    pub gain: GainConfig,
    pub calibration: CalibrationConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pulse = |fwhm: f64, n: f64| PulseSpec::gaussian(fwhm, n).expect("valid default pulse");
        let pulses = [("gate", pulse(0.063, 0.422)), ("signal_short", pulse(0.063, 0.42)), ("signal_long", pulse(1.34, 4.4))]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self {
            device: DeviceParams::default(),
            pulses,
            protocol: ProtocolParams::default(),
            integrator: Tolerances::default(),
            fock_dim: FockSetting(FockPolicy::Fixed(8)),
            seed: 7,
            output: OutputConfig::default(),
            spectrum: SpectrumConfig::default(),
            ramsey: RamseyConfig::default(),
            switch: SwitchConfig::default(),
            gain: GainConfig::default(),
            calibration: CalibrationConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.device.validate()?;
        self.protocol.validate()?;
        for (name, p) in &self.pulses {
            p.validate().with_context(|| format!("pulse {name:?}"))?;
        }
        for name in [
            &self.ramsey.pulse,
            &self.switch.pulse,
            &self.switch.gate_pulse,
            &self.gain.pulse,
            &self.gain.short_pulse,
            &self.calibration.pulse,
        ] {
            self.pulse(name)?;
        }
        if !(self.integrator.rel_tol > 0.0 && self.integrator.abs_tol > 0.0) {
            bail!("integrator tolerances must be > 0");
        }
        if let FockPolicy::Fixed(d) = self.fock_dim.0 {
            if d < 2 {
                bail!("fock_dim must be >= 2 or \"auto\"");
            }
        }
        if let Some(n) = self.gain.fit_n_s.iter().find(|n| !self.gain.n_s.contains(n)) {
            bail!("gain.fit_n_s entry {n} is not in gain.n_s");
        }
        if self.spectrum.points < 5 || !(self.spectrum.span_ghz > 0.0) {
            bail!("spectrum grid needs span > 0 and at least 5 points");
        }
        if !(self.ramsey.tau_step_ps > 0.0 && self.ramsey.tau_max_ps > self.ramsey.tau_step_ps) {
            bail!("ramsey delay grid is empty");
        }
        Ok(())
    }

    pub fn pulse(&self, name: &str) -> anyhow::Result<&PulseSpec> {
        self.pulses.get(name).with_context(|| format!("pulse {name:?} is not defined in the pulse table"))
    }

    pub fn calibration_setup(&self) -> anyhow::Result<CalibrationSetup> {
        Ok(CalibrationSetup {
            gate_fwhm_ns: self.pulse(&self.calibration.pulse)?.t_fwhm_ns,
            wavelength_nm: self.device.wavelength_nm,
            rep_rate_mhz: self.device.rep_rate,
        })
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    /// The output section is left out: where and how results are written does
    /// not change them.
    pub fn hash(&self) -> String {
        let physics = Self { output: OutputConfig::default(), ..self.clone() };
        let canonical = serde_json::to_vec(&physics).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}
