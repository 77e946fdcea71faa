// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: configuration, experiment commands and output files.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::Parser;

use crate::commands::Command;
use crate::config::{FockSetting, RunConfig};
use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "qdswitch", version, about = "Quantum-dot spin single-photon switch simulator")]
pub struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.path`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Curve file format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Photon-number truncation: a dimension or `auto`.
    #[arg(long, global = true)]
    pub fock_dim: Option<FockSetting>,
    /// Integrator relative tolerance.
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    /// Seed for synthetic noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    /// The configuration file (or defaults) with command-line overrides applied.
    pub fn effective_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.path = out.clone();
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        if let Some(d) = self.fock_dim {
            cfg.fock_dim = d;
        }
        if let Some(t) = self.rel_tol {
            cfg.integrator.rel_tol = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the command and writes its files. Returns the written paths.
pub fn execute(cli: &Cli) -> anyhow::Result<Vec<PathBuf>> {
    let cfg = cli.effective_config()?;
    let report = commands::run(&cli.command, &cfg)?;
    output::write_report(&report, &cfg.output.path, cfg.output.format, cli.command.name(), &cfg.hash())
}
