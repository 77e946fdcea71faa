// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

use clap::Parser;
use qdswitch_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let chain: Vec<String> = err.chain().map(|c| c.to_string()).collect();
            let doc = serde_json::json!({ "error": { "command": cli.command.name(), "message": chain[0], "causes": &chain[1..] } });
            eprintln!("{doc}");
            ExitCode::FAILURE
        }
    }
}
