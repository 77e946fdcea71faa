// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! The experiment commands. Each returns a [`Report`]; writing it out is the
//! caller's job.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Subcommand, ValueEnum};
use qdswitch::evolve::{converge_fock_dim, IntegrationStats, Observable, Simulator};
use qdswitch::fitshop::{
    fit_cavity_spectrum, fit_contrast_decay, fit_ramsey_intensity, fit_visibility_calibration, ramsey_model,
    spectrum_model, synth, FitResult, Offset, VisibilityCurve,
};
use qdswitch::model::PulseSpec;
use qdswitch::protocol::{
    contrast_decay_model, gain_curve, precession_period_ps, switch_report, transmittance_contrast,
    transmittance_curve, Curve, FockPolicy, ProtocolParams,
};
use qdswitch::steady::{
    cooperativity, polarizer_transmittance, reflection_coefficients, spin_constants, Polarization,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Pol {
    Cross,
    Co,
}

impl From<Pol> for Polarization {
    fn from(p: Pol) -> Self {
        match p {
            Pol::Cross => Polarization::Cross,
            Pol::Co => Polarization::Co,
        }
    }
}

/// Models shared by `fit` and `synth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum Workflow {
    CrossSpectrum,
    CoSpectrum,
    Ramsey,
    RamseyConditioned,
    Visibility,
    ContrastDecay,
}

impl Workflow {
    fn name(self) -> &'static str {
        match self {
            Workflow::CrossSpectrum => "cross_spectrum",
            Workflow::CoSpectrum => "co_spectrum",
            Workflow::Ramsey => "ramsey",
            Workflow::RamseyConditioned => "ramsey_conditioned",
            Workflow::Visibility => "visibility",
            Workflow::ContrastDecay => "contrast_decay",
        }
    }

    fn units(self) -> &'static str {
        match self {
            Workflow::CrossSpectrum | Workflow::CoSpectrum => "x: detuning GHz, y: reflected intensity (arb.)",
            Workflow::Ramsey | Workflow::RamseyConditioned => "x: delay ps, y: intensity (arb.)",
            Workflow::Visibility => "x: gate power pW, y: visibility",
            Workflow::ContrastDecay => "x: signal photons per pulse, y: contrast",
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Cross- and co-polarized reflection spectra; fits a measured spectrum if given.
    Spectrum {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "cross")]
        pol: Pol,
    },
    /// Spin-resolved transmittances and the Ramsey curves T(τ), T′(τ).
    Ramsey,
    /// Switching contrast at the two delay conditions with the multi-photon correction.
    Switch,
    /// Contrast and transistor gain against signal photon number, with the decay fit.
    Gain,
    /// Visibility against gate power and the (F, η) calibration fit.
    Calibrate {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Runs one fitting workflow on a dataset.
    Fit {
        #[arg(long, value_enum)]
        workflow: Workflow,
        #[arg(long)]
        data: PathBuf,
    },
    /// Seeded synthetic dataset for one model.
    Synth {
        #[arg(long, value_enum)]
        model: Workflow,
        /// Relative Gaussian noise level; overrides `synth.noise`.
        #[arg(long)]
        noise: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum { .. } => "spectrum",
            Command::Ramsey => "ramsey",
            Command::Switch => "switch",
            Command::Gain => "gain",
            Command::Calibrate { .. } => "calibrate",
            Command::Fit { .. } => "fit",
            Command::Synth { .. } => "synth",
        }
    }
}

pub fn run(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<Report> {
    cfg.validate()?;
    let mut ctx = Ctx { cfg, report: Report::default(), health: None, fock_dims: Vec::new() };
    device_scalars(&mut ctx);
    match cmd {
        Command::Spectrum { data, pol } => spectrum(&mut ctx, data.as_ref(), *pol)?,
        Command::Ramsey => ramsey(&mut ctx)?,
        Command::Switch => switch(&mut ctx)?,
        Command::Gain => gain(&mut ctx)?,
        Command::Calibrate { data } => calibrate(&mut ctx, data.as_ref())?,
        Command::Fit { workflow, data } => fit(&mut ctx, *workflow, data)?,
        Command::Synth { model, noise } => synthesize(&mut ctx, *model, noise.unwrap_or(cfg.synth.noise))?,
    }
    if let Some(h) = ctx.health {
        ctx.report.detail("numerical_health", h);
    }
    if let Some(d) = ctx.fock_dims.iter().max() {
        ctx.report.scalar("fock_dim", *d as f64, "");
        ctx.report.detail("fock_dims", &ctx.fock_dims);
    }
    Ok(ctx.report)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    report: Report,
    health: Option<IntegrationStats>,
    fock_dims: Vec<usize>,
}

impl Ctx<'_> {
    fn record(&mut self, stats: IntegrationStats) {
        self.health = Some(match self.health {
            Some(h) => h.merge(stats),
            None => stats,
        });
    }

    fn simulator(&mut self, spec: &PulseSpec, observable: Observable) -> anyhow::Result<Simulator> {
        let d = match self.cfg.fock_dim.0 {
            FockPolicy::Fixed(d) => d,
            FockPolicy::Auto => converge_fock_dim(&self.cfg.device, self.cfg.integrator, spec, observable)?.fock_dim,
        };
        self.fock_dims.push(d);
        Ok(Simulator::new(&self.cfg.device, d, self.cfg.integrator)?)
    }

    /// `(T↑, T↓)` for the named pulse carrying `n` photons.
    fn transmittances(&mut self, pulse: &str, n: f64) -> anyhow::Result<(f64, f64)> {
        let spec = self.cfg.pulse(pulse)?.with_photons(n);
        let sim = self.simulator(&spec, Observable::Transmittance)?;
        let (up, down) = sim.spin_runs(&spec)?;
        self.record(up.stats.merge(down.stats));
        Ok((up.transmittance, down.transmittance))
    }

    fn fit_scalars(&mut self, fit: &FitResult, units: &[&str]) {
        let se = fit.std_errors();
        for (k, name) in fit.names.iter().enumerate() {
            self.report.fitted(name, fit.params[k], se[k], units.get(k).copied().unwrap_or(""));
        }
        self.report.scalar("fit_cost", fit.cost, "");
        self.report.scalar("fit_identifiable", if fit.identifiable() { 1.0 } else { 0.0 }, "");
        if !fit.identifiable() {
            self.report.notes.push("fit is not identifiable: see details.fit.diagnostics".into());
        }
        self.report.detail("fit", fit);
    }
}

fn device_scalars(ctx: &mut Ctx<'_>) {
    let d = &ctx.cfg.device;
    let s = spin_constants(d.delta_e, d.b_field);
    ctx.report.scalar("cooperativity", cooperativity(d.g1, d.kappa, d.gamma_d1), "");
    ctx.report.scalar("g_factor", s.g_factor, "");
    ctx.report.scalar("precession_period", s.precession_period_ps, "ps");
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

fn spectrum_grid(cfg: &RunConfig) -> Vec<f64> {
    let c = cfg.device.omega_c;
    grid(c - cfg.spectrum.span_ghz, c + cfg.spectrum.span_ghz, cfg.spectrum.points)
}

fn tau_grid(cfg: &RunConfig) -> Vec<f64> {
    let n = (cfg.ramsey.tau_max_ps / cfg.ramsey.tau_step_ps).floor() as usize;
    (0..=n).map(|k| k as f64 * cfg.ramsey.tau_step_ps).collect()
}

fn spectrum_params(cfg: &RunConfig) -> Vec<f64> {
    let d = &cfg.device;
    vec![d.kappa, d.omega_c, cfg.spectrum.scale, cfg.spectrum.offset, d.alpha]
}

fn curve_of(x: &[f64], f: impl Fn(f64) -> f64) -> anyhow::Result<Curve> {
    Ok(Curve::new(x.to_vec(), x.iter().map(|&v| f(v)).collect(), None)?)
}

fn spectrum(ctx: &mut Ctx<'_>, data: Option<&PathBuf>, pol: Pol) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let d = &cfg.device;
    let c = cooperativity(d.g1, d.kappa, d.gamma_d1);
    let (r_up, r_down) = reflection_coefficients(d.alpha, c);
    let r = &mut ctx.report;
    r.scalar("r_up", r_up, "");
    r.scalar("r_down", r_down, "");
    r.scalar("t_up_closed_form", polarizer_transmittance(r_up.into()), "");
    r.scalar("t_down_closed_form", polarizer_transmittance(r_down.into()), "");
    let x = spectrum_grid(cfg);
    let p = spectrum_params(cfg);
    r.curve("cross_spectrum", Workflow::CrossSpectrum.units(), curve_of(&x, spectrum_model(&p, Polarization::Cross))?);
    r.curve("co_spectrum", Workflow::CoSpectrum.units(), curve_of(&x, spectrum_model(&p, Polarization::Co))?);
    if let Some(path) = data {
        let wf = match pol {
            Pol::Cross => Workflow::CrossSpectrum,
            Pol::Co => Workflow::CoSpectrum,
        };
        fit(ctx, wf, path)?;
    }
    Ok(())
}

fn ramsey(ctx: &mut Ctx<'_>) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let p = &cfg.protocol;
    let (t_up, t_down) = ctx.transmittances(&cfg.ramsey.pulse, p.n_s)?;
    let taus = tau_grid(cfg);
    let plain = transmittance_curve(&taus, p.fidelity_f, p.delta_e, t_up, t_down, false)?;
    let cond = transmittance_curve(&taus, p.fidelity_fprime, p.delta_e, t_up, t_down, true)?;
    let swing = |c: &Curve| {
        let (lo, hi) = c.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        hi - lo
    };
    let r = &mut ctx.report;
    r.scalar("n_s", p.n_s, "photons");
    r.scalar("t_up", t_up, "");
    r.scalar("t_down", t_down, "");
    r.scalar("delta", transmittance_contrast(p.fidelity_f, t_up, t_down), "");
    r.scalar("delta_conditioned", transmittance_contrast(p.fidelity_fprime, t_up, t_down), "");
    r.scalar("fringe_amplitude", swing(&plain), "");
    r.scalar("fringe_amplitude_conditioned", swing(&cond), "");
    r.scalar("fringe_period", precession_period_ps(p.delta_e), "ps");
    r.curve("ramsey", "x: delay ps, y: transmittance", plain);
    r.curve("ramsey_conditioned", "x: delay ps, y: transmittance", cond);
    Ok(())
}

fn switch(ctx: &mut Ctx<'_>) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let (t_up, t_down) = ctx.transmittances(&cfg.switch.pulse, cfg.protocol.n_s)?;
    let params = ProtocolParams { t_up, t_down, ..cfg.protocol };
    let s = switch_report(&params, cfg.switch.cycles)?;

    let gate = cfg.pulse(&cfg.switch.gate_pulse)?.clone();
    let sim = ctx.simulator(&gate, Observable::RamseyVisibility)?;
    let beta_sim = if gate.n_in > 0.0 {
        let (v, stats) = sim.ramsey_visibility_run(&gate)?;
        ctx.record(stats);
        v
    } else {
        1.0
    };

    let r = &mut ctx.report;
    r.scalar("t_up", t_up, "");
    r.scalar("t_down", t_down, "");
    r.scalar("delta", s.delta, "");
    r.scalar("tau_a", s.delays.a_ps, "ps");
    r.scalar("tau_b", s.delays.b_ps, "ps");
    r.scalar("t_ng_a", s.tng_a, "");
    r.scalar("t_ng_b", s.tng_b, "");
    r.scalar("t_g_a", s.tg_a, "");
    r.scalar("t_g_b", s.tg_b, "");
    r.scalar("t0", s.contrast.t0, "");
    r.scalar("t_g_a_corrected", s.contrast.tg_a_corrected, "");
    r.scalar("t_g_b_corrected", s.contrast.tg_b_corrected, "");
    r.scalar("raw_change_a", s.contrast.raw_a, "");
    r.scalar("raw_change_b", s.contrast.raw_b, "");
    r.scalar("xi_a", s.contrast.xi_a, "");
    r.scalar("xi_b", s.contrast.xi_b, "");
    r.scalar("beta", cfg.protocol.beta, "");
    r.scalar("beta_simulated", beta_sim, "");
    r.scalar("gate_photons", gate.n_in, "photons");
    Ok(())
}

fn gain(ctx: &mut Ctx<'_>) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let p = &cfg.protocol;
    let (su, sd) = ctx.transmittances(&cfg.gain.short_pulse, p.n_s)?;
    let delta_short = transmittance_contrast(p.fidelity_f, su, sd);

    let long = cfg.pulse(&cfg.gain.pulse)?;
    let g = gain_curve(&cfg.device, cfg.integrator, cfg.fock_dim.0, long.t_fwhm_ns, &cfg.gain.n_s, p.fidelity_f)?;
    for pt in &g.points {
        ctx.record(pt.stats);
    }

    let mut decay: Vec<(f64, f64)> = vec![(p.n_s, delta_short)];
    decay.extend(g.points.iter().filter(|pt| cfg.gain.fit_n_s.contains(&pt.n_s)).map(|pt| (pt.n_s, pt.delta)));
    decay.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decay = Curve::new(decay.iter().map(|v| v.0).collect(), decay.iter().map(|v| v.1).collect(), None)
        .context("decay-fit points must have distinct photon numbers")?;
    let fit = fit_contrast_decay(&decay)?;

    let r = &mut ctx.report;
    r.scalar("delta_short", delta_short, "");
    ctx.fit_scalars(&fit.fit, &["", "photons"]);
    let r2 = &mut ctx.report;
    match g.maximum() {
        Some((n, gmax)) => {
            r2.scalar("g_max", gmax, "");
            r2.scalar("n_s_at_g_max", n, "photons");
        }
        None => {
            let best = g.points.iter().max_by(|a, b| a.gain.total_cmp(&b.gain)).context("empty gain grid")?;
            r2.scalar("g_max", best.gain, "");
            r2.scalar("n_s_at_g_max", best.n_s, "photons");
            r2.notes.push("gain curve has no single interior maximum on this grid".into());
        }
    }
    r2.scalar("single_interior_maximum", if g.maximum().is_some() { 1.0 } else { 0.0 }, "");
    let model: Vec<f64> = g.points.iter().map(|pt| contrast_decay_model(pt.n_s, fit.delta0, fit.n_avg)).collect();
    r2.curve("contrast", "x: signal photons per pulse, y: contrast", g.contrast()?);
    r2.curve("gain", "x: signal photons per pulse, y: transistor gain", g.gain()?);
    r2.curve("contrast_fit_points", "x: signal photons per pulse, y: contrast", decay);
    r2.curve(
        "contrast_fit",
        "x: signal photons per pulse, y: contrast",
        Curve::new(g.points.iter().map(|pt| pt.n_s).collect(), model, None)?,
    );
    r2.detail("gain_points", &g.points);
    Ok(())
}

fn calibration_sim(ctx: &mut Ctx<'_>) -> anyhow::Result<Simulator> {
    let cfg = ctx.cfg;
    let setup = cfg.calibration_setup()?;
    let top = cfg.calibration.powers_pw.iter().fold(0.0f64, |m, v| m.max(*v));
    let n = qdswitch::protocol::coupled_photon_number(top, cfg.calibration.eta, setup.wavelength_nm, setup.rep_rate_mhz)?;
    let spec = PulseSpec::gaussian(setup.gate_fwhm_ns, n.max(1e-3))?;
    ctx.simulator(&spec, Observable::RamseyVisibility)
}

fn calibrate(ctx: &mut Ctx<'_>, data: Option<&PathBuf>) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let sim = calibration_sim(ctx)?;
    let curve = VisibilityCurve::new(&sim, cfg.calibration_setup()?);
    let c = &cfg.calibration;
    let data = match data {
        Some(path) => crate::output::read_curve(path)?,
        None => {
            let clean = curve.predict(&c.powers_pw, c.fidelity, c.eta)?;
            synth(&c.powers_pw, |p| lookup(&c.powers_pw, &clean, p), c.noise, cfg.seed)?
        }
    };
    let fit = fit_visibility_calibration(&data, &curve)?;
    ctx.fit_scalars(&fit.fit, &["", ""]);
    for &p in &data.x {
        let n = curve.photons(p, fit.eta)?;
        let v = curve.visibility(n)?;
        let r = &mut ctx.report;
        r.scalar(&format!("n_in_at_{p}pw"), n, "photons");
        r.scalar(&format!("visibility_ratio_at_{p}pw"), v, "");
    }
    let fitted = curve.predict(&data.x, fit.fidelity, fit.eta)?;
    let r = &mut ctx.report;
    r.detail("visibility_cache_points", curve.cached_points());
    r.curve("visibility_fit", Workflow::Visibility.units(), Curve::new(data.x.clone(), fitted, None)?);
    r.curve("visibility_data", Workflow::Visibility.units(), data);
    Ok(())
}

fn lookup(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    ys[xs.iter().position(|v| *v == x).expect("abscissa from the same grid")]
}

fn fit(ctx: &mut Ctx<'_>, wf: Workflow, path: &PathBuf) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let data = crate::output::read_curve(path)?;
    let p = &cfg.protocol;
    let (fitted, fit): (Vec<f64>, FitResult) = match wf {
        Workflow::CrossSpectrum | Workflow::CoSpectrum => {
            let pol = if wf == Workflow::CrossSpectrum { Polarization::Cross } else { Polarization::Co };
            let offset = if pol == Polarization::Co { Offset::Fixed(cfg.spectrum.offset) } else { Offset::Free };
            let f = fit_cavity_spectrum(&data, pol, offset)?;
            let m = spectrum_model(&f.fit.params, pol);
            (data.x.iter().map(|&w| m(w)).collect(), f.fit)
        }
        Workflow::Ramsey | Workflow::RamseyConditioned => {
            let cond = wf == Workflow::RamseyConditioned;
            let f = fit_ramsey_intensity(&data, p.t_up, p.t_down, p.delta_e, cond)?;
            let m = ramsey_model(&f.fit.params, p.t_up, p.t_down, p.delta_e, cond);
            (data.x.iter().map(|&t| m(t)).collect(), f.fit)
        }
        Workflow::Visibility => {
            let sim = calibration_sim(ctx)?;
            let curve = VisibilityCurve::new(&sim, cfg.calibration_setup()?);
            let f = fit_visibility_calibration(&data, &curve)?;
            (curve.predict(&data.x, f.fidelity, f.eta)?, f.fit)
        }
        Workflow::ContrastDecay => {
            let f = fit_contrast_decay(&data)?;
            (data.x.iter().map(|&n| contrast_decay_model(n, f.delta0, f.n_avg)).collect(), f.fit)
        }
    };
    let units: &[&str] = match wf {
        Workflow::CrossSpectrum | Workflow::CoSpectrum => &["GHz", "GHz", "", "", ""],
        Workflow::ContrastDecay => &["", "photons"],
        _ => &["", ""],
    };
    ctx.fit_scalars(&fit, units);
    ctx.report.detail("workflow", wf);
    ctx.report.curve(&format!("{}_fit", wf.name()), wf.units(), Curve::new(data.x.clone(), fitted, None)?);
    Ok(())
}

fn synthesize(ctx: &mut Ctx<'_>, wf: Workflow, noise: f64) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let (p, s, seed) = (&cfg.protocol, &cfg.synth, cfg.seed);
    let curve = match wf {
        Workflow::CrossSpectrum | Workflow::CoSpectrum => {
            let pol = if wf == Workflow::CrossSpectrum { Polarization::Cross } else { Polarization::Co };
            synth(&spectrum_grid(cfg), spectrum_model(&spectrum_params(cfg), pol), noise, seed)?
        }
        Workflow::Ramsey | Workflow::RamseyConditioned => {
            let cond = wf == Workflow::RamseyConditioned;
            let f = if cond { p.fidelity_fprime } else { p.fidelity_f };
            synth(&tau_grid(cfg), ramsey_model(&[s.ramsey_scale, f], p.t_up, p.t_down, p.delta_e, cond), noise, seed)?
        }
        Workflow::Visibility => {
            let sim = calibration_sim(ctx)?;
            let vc = VisibilityCurve::new(&sim, cfg.calibration_setup()?);
            let c = &cfg.calibration;
            let clean = vc.predict(&c.powers_pw, c.fidelity, c.eta)?;
            synth(&c.powers_pw, |x| lookup(&c.powers_pw, &clean, x), noise, seed)?
        }
        Workflow::ContrastDecay => {
            if s.decay_n_s.len() < 2 {
                bail!("synth.decay_n_s needs at least two points");
            }
            synth(&s.decay_n_s, |n| contrast_decay_model(n, s.delta0, s.n_avg), noise, seed)?
        }
    };
    let r = &mut ctx.report;
    r.scalar("noise_level", noise, "");
    r.detail("seed", seed);
    r.scalar("points", curve.len() as f64, "");
    r.detail("model", wf);
    r.curve(&format!("synth_{}", wf.name()), wf.units(), curve);
    Ok(())
}
