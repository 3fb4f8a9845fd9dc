//! `orvicon` — scenario runner, output verifier, and provider store admin.
//!
//! Exit codes: 0 success, 2 configuration error, 3 verification failure,
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orvicon_core::frost::zone_map_text;
use orvicon_core::harness::{
    audit_from_jsonl, run_scenario, verify_outputs, write_outputs, ConfigError, HarnessError,
    RunMode, ScenarioConfig,
};
use orvicon_core::provider::{Provider, SensorRegistration};

#[derive(Parser)]
#[command(
    name = "orvicon",
    about = "Temperature-monitoring data space testbed",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the report and audit log.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Route gateway and consumer traffic over loopback TCP.
        #[arg(long)]
        net: bool,
        /// Report output path.
        #[arg(long)]
        out: PathBuf,
        /// Audit log output path (default: <out>.audit.jsonl).
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Write the last analyzed field snapshot as CSV.
        #[arg(long)]
        snapshot_csv: Option<PathBuf>,
        /// Print the zone character map of the last analysis.
        #[arg(long)]
        print_zones: bool,
    },
    /// Re-verify a report and audit log: digest, hash chain, sovereignty.
    Verify {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        audit: PathBuf,
    },
    /// Summarize a provider store directory.
    InspectStore { dir: PathBuf },
    /// Register a sensor in a provider store (admin).
    RegisterSensor {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        device_id: u64,
        #[arg(long)]
        lat: f64,
        #[arg(long)]
        lon: f64,
        #[arg(long)]
        elevation_m: f64,
        #[arg(long)]
        label: String,
        #[arg(long)]
        field_id: String,
    },
    /// List dataset descriptors of a provider store.
    ListDatasets {
        #[arg(long)]
        store: PathBuf,
    },
    /// Move quarantined readings of now-registered devices into their
    /// datasets (admin).
    ReconcileQuarantine {
        #[arg(long)]
        store: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            net,
            out,
            audit,
            snapshot_csv,
            print_zones,
        } => {
            let text = std::fs::read_to_string(&scenario)
                .map_err(|e| format!("cannot read {}: {e}", scenario.display()))?;
            let mut config = match ScenarioConfig::from_toml(&text) {
                Ok(config) => config,
                Err(e) => return config_failure(e),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let mode = if net {
                RunMode::Net
            } else {
                RunMode::InProcess
            };
            let output = match run_scenario(&config, mode) {
                Ok(output) => output,
                Err(HarnessError::Config(e)) => return config_failure(e),
                Err(e) => return Err(e.into()),
            };
            let audit_path = audit.unwrap_or_else(|| append_extension(&out, "audit.jsonl"));
            write_outputs(&output, &out, &audit_path)?;

            let report = &output.report;
            println!(
                "run complete: {} frames stored, {} transfers ({} records), {} alerts, audit {} ({} records)",
                report.ingest.stored,
                report.transfers.count,
                report.transfers.records_delivered,
                report.alerts.len(),
                if report.audit.chain_ok { "ok" } else { "BROKEN" },
                report.audit.records,
            );
            println!("report: {}", out.display());
            println!("audit:  {}", audit_path.display());

            if let Some(analysis) = &output.last_analysis {
                if let Some(path) = snapshot_csv {
                    std::fs::write(&path, analysis.snapshot.to_csv())?;
                    println!("snapshot: {}", path.display());
                }
                if print_zones {
                    print!("{}", zone_map_text(&analysis.snapshot, &analysis.zones));
                }
            } else if snapshot_csv.is_some() || print_zones {
                eprintln!("note: no data pull was analyzed; nothing to export");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { report, audit } => {
            let report_text = std::fs::read_to_string(&report)
                .map_err(|e| format!("cannot read {}: {e}", report.display()))?;
            let audit_text = std::fs::read_to_string(&audit)
                .map_err(|e| format!("cannot read {}: {e}", audit.display()))?;
            let outcome = verify_outputs(&report_text, &audit_text);
            if outcome.ok {
                let records = audit_from_jsonl(&audit_text).map(|a| a.len()).unwrap_or(0);
                println!(
                    "ok: digest, audit chain ({records} records), and sovereignty checks all pass"
                );
                Ok(ExitCode::SUCCESS)
            } else {
                for diagnostic in &outcome.diagnostics {
                    eprintln!("FAIL {diagnostic}");
                }
                Ok(ExitCode::from(3))
            }
        }
        Command::InspectStore { dir } => {
            let provider = Provider::open(&dir)?;
            println!("store: {}", dir.display());
            println!("registrations: {}", provider.registration_count());
            println!("quarantined readings: {}", provider.quarantine_len());
            print_datasets(&provider);
            Ok(ExitCode::SUCCESS)
        }
        Command::RegisterSensor {
            store,
            device_id,
            lat,
            lon,
            elevation_m,
            label,
            field_id,
        } => {
            let mut provider = Provider::open(&store)?;
            provider.register_sensor(SensorRegistration {
                device_id,
                lat,
                lon,
                elevation_m,
                label,
                field_id,
            })?;
            println!("registered device {device_id}");
            Ok(ExitCode::SUCCESS)
        }
        Command::ListDatasets { store } => {
            let provider = Provider::open(&store)?;
            print_datasets(&provider);
            Ok(ExitCode::SUCCESS)
        }
        Command::ReconcileQuarantine { store } => {
            let mut provider = Provider::open(&store)?;
            let summary = provider.reconcile_quarantine()?;
            println!(
                "reconciled: {} moved into datasets, {} still quarantined",
                summary.moved, summary.remaining
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn config_failure(e: ConfigError) -> Result<ExitCode, Box<dyn std::error::Error>> {
    eprintln!("configuration error: {e}");
    Ok(ExitCode::from(2))
}

fn print_datasets(provider: &Provider) {
    let descriptors = provider.descriptors();
    if descriptors.is_empty() {
        println!("datasets: none");
        return;
    }
    println!("datasets:");
    for d in descriptors {
        match d.coverage {
            Some((min, max)) => println!(
                "  {} (field {}): {} records, coverage [{min}, {max}]",
                d.dataset_id, d.field_id, d.record_count
            ),
            None => println!("  {} (field {}): empty", d.dataset_id, d.field_id),
        }
    }
}

fn append_extension(path: &Path, ext: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".");
    name.push(ext);
    path.with_file_name(name)
}
