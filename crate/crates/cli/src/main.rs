// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use relrank::runner::{self, DiagPart, RunManifest, SuiteConfig};

/// Relation-rank geometry suites: prompt banks, rank diagnostics, steering
/// assays and run manifests.
#[derive(Parser)]
#[command(name = "relrank", version)]
struct Cli {
    /// Suite config (TOML), or a run manifest to rerun from its snapshot.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Derive every seed in the config from this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Group,
}

#[derive(Subcommand)]
enum Group {
    /// Generate prompt banks.
    #[command(subcommand)]
    Bank(BankCmd),
    /// Controlled-arity rank diagnostics.
    #[command(subcommand)]
    Diag(DiagCmd),
    /// Relation-frame steering on the glass box.
    #[command(subcommand)]
    Steer(SteerCmd),
    /// Externally captured activations.
    #[command(subcommand)]
    Capture(CaptureCmd),
    /// Plot data from finished runs.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Run manifests.
    #[command(subcommand)]
    Manifest(ManifestCmd),
}

#[derive(clap::Args)]
struct Out {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Out {
    fn dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| Path::new("runs").join(default))
    }
}

#[derive(Subcommand)]
enum BankCmd {
    GenArity(Out),
    GenEdgegrid(Out),
}

#[derive(Subcommand)]
enum DiagCmd {
    Run(Out),
    Heldout(Out),
    Multitemplate(Out),
}

#[derive(Subcommand)]
enum SteerCmd {
    Run(Out),
    SiteOrder(Out),
}

#[derive(Subcommand)]
enum CaptureCmd {
    Ingest {
        /// Capture manifest (`capture.json`).
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        out: Out,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    Plots {
        /// Directory of a steering run.
        #[arg(long = "from")]
        from: PathBuf,
        #[command(flatten)]
        out: Out,
    },
}

#[derive(Subcommand)]
enum ManifestCmd {
    Verify {
        /// Manifest file, or the run directory holding it.
        path: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<SuiteConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SuiteConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => SuiteConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.apply_seed(s);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<PathBuf> {
    if let Group::Manifest(ManifestCmd::Verify { path }) = &cli.cmd {
        let file = if path.is_dir() { path.join(runner::MANIFEST_FILE) } else { path.clone() };
        let m = RunManifest::verify(&file)?;
        eprintln!("verified {} outputs", m.outputs.len());
        return Ok(file);
    }
    let cfg = load_config(cli)?;
    let path = match &cli.cmd {
        Group::Bank(BankCmd::GenArity(o)) => runner::write_arity_bank(&cfg, &o.dir("bank-arity"))?,
        Group::Bank(BankCmd::GenEdgegrid(o)) => runner::write_edge_grid_bank(&cfg, &o.dir("bank-edgegrid"))?,
        Group::Diag(DiagCmd::Run(o)) => runner::run_diagnostic_suite(&cfg, &o.dir("diag-run"), DiagPart::Sweep)?,
        Group::Diag(DiagCmd::Heldout(o)) => {
            runner::run_diagnostic_suite(&cfg, &o.dir("diag-heldout"), DiagPart::HeldOut)?
        }
        Group::Diag(DiagCmd::Multitemplate(o)) => {
            runner::run_diagnostic_suite(&cfg, &o.dir("diag-multitemplate"), DiagPart::MultiTemplate)?
        }
        Group::Steer(SteerCmd::Run(o)) => {
            let (p, run) = runner::run_steering_suite(&cfg, &o.dir("steer-run"))?;
            if !run.gate.pass {
                eprintln!("competence gate failed; outputs are flagged as a boundary run");
            }
            p
        }
        Group::Steer(SteerCmd::SiteOrder(o)) => runner::run_site_order_audit(&cfg, &o.dir("steer-site-order"))?.0,
        Group::Capture(CaptureCmd::Ingest { manifest, out }) => {
            runner::run_capture_ingest(&cfg, manifest, &out.dir("capture-ingest"))?
        }
        Group::Report(ReportCmd::Plots { from, out }) => runner::emit_plot_data(from, &out.dir("report-plots"))?,
        Group::Manifest(_) => unreachable!(),
    };
    Ok(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
