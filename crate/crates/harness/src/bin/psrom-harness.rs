use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use psrom_core::surface::{FallbackLaw, GradientConvention};
use psrom_core::{fit_ideal, load_tree, ExecutionMode, IdealFitProblem};
use psrom_harness::report::{self, RunMetadata};
use psrom_harness::stats::{compute_stats, Stratifier};
use psrom_harness::{export_report, generate, run_batch, BatchResult, SynthConfig, ValidationConfig};

#[derive(Parser)]
#[command(name = "psrom-harness", version, about = "Synthetic validation of the reduced model against the oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct BatchArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "cases", default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value = "harness-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic patients and their lesion labels.
    Generate {
        #[command(flatten)]
        batch: BatchArgs,
    },
    /// Run the validation protocol and write every report file.
    Run {
        #[command(flatten)]
        batch: BatchArgs,
        #[arg(long, default_value_t = 0.7)]
        oracle_kappa: f64,
        #[arg(long, default_value_t = 0.02)]
        tol2: f64,
        #[arg(long, default_value = "none")]
        stratify: Stratifier,
        /// Direction in which an area gradient counts as negative for the recovery rule.
        #[arg(long)]
        recovery_gradient: Option<GradientConvention>,
        /// Length of the pressure-recovery zone, cm.
        #[arg(long, default_value_t = psrom_core::RECOVERY_ZONE_LENGTH)]
        recovery_zone: f64,
        /// Coefficients of flow-limited edges: analytic or anchor-consistent.
        #[arg(long)]
        fallback: Option<FallbackLaw>,
        /// Run cases one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute one summary table from an existing records file.
    Stats {
        #[arg(long, default_value = "harness-out")]
        out: PathBuf,
        #[arg(long, default_value = "none")]
        stratify: Stratifier,
    },
    /// Rebuild summaries, the text report and runtime tables from a run directory.
    Report {
        #[arg(long, default_value = "harness-out")]
        out: PathBuf,
    },
    /// Fit the healthy radius profile of one tree.
    FitIdeal {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const META_FILE: &str = "run.json";

fn print_table(records: &[psrom_harness::ComparisonRecord], stratifier: Stratifier) {
    let (summaries, notes) = compute_stats(records, stratifier);
    for s in &summaries {
        println!(
            "{:<14} n={:<5} bias={:+.4} sd={:.4} r={:.4} tost_p={:.3e} chisq_p={:.3e} {}",
            s.stratum,
            s.n,
            s.bias,
            s.standard_deviation,
            s.pearson_r,
            s.tost_p,
            s.chisq_p,
            if s.equivalent() { "equivalent" } else { "NOT equivalent" }
        );
    }
    for note in notes {
        println!("note: {note}");
    }
}

fn read_dropped(dir: &Path) -> psrom_harness::Result<Vec<(usize, String)>> {
    let path = dir.join(report::DROPPED_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate { batch } => {
            let cases_dir = batch.out.join("cases");
            fs::create_dir_all(&cases_dir)?;
            let config = SynthConfig::default();
            let mut labels = csv::Writer::from_path(batch.out.join("labels.csv"))?;
            labels.write_record(["case_id", "kind", "outlet", "center_arc", "length", "severity"])?;
            for case_id in 0..batch.cases {
                let patient = generate(batch.seed, case_id, &config);
                let mut file = fs::File::create(cases_dir.join(format!("case_{case_id:04}.json")))?;
                psrom_core::save_tree(&patient.tree, &mut file)?;
                fs::write(
                    cases_dir.join(format!("case_{case_id:04}.bc.json")),
                    serde_json::to_string_pretty(&patient.bc)?,
                )?;
                for l in &patient.labels {
                    labels.write_record([
                        case_id.to_string(),
                        l.kind.to_string(),
                        l.outlet.to_string(),
                        l.center_arc.to_string(),
                        l.length.to_string(),
                        l.severity.to_string(),
                    ])?;
                }
            }
            labels.flush()?;
            log::info!("wrote {} cases to {}", batch.cases, cases_dir.display());
        }
        Command::Run {
            batch,
            oracle_kappa,
            tol2,
            stratify,
            recovery_gradient,
            recovery_zone,
            fallback,
            sequential,
        } => {
            let mut config = ValidationConfig::default();
            config.oracle.recovery_efficiency = oracle_kappa;
            config.solver.tol2 = tol2;
            config.surface.recovery_zone_length = recovery_zone;
            if let Some(g) = recovery_gradient {
                config.surface.gradient_convention = g;
            }
            if let Some(f) = fallback {
                config.surface.fallback = f;
            }
            config.solver.validate()?;
            let mode = if sequential { ExecutionMode::Sequential } else { ExecutionMode::Parallel };
            let result = run_batch(batch.seed, batch.cases, &SynthConfig::default(), &config, mode);
            let meta = RunMetadata { seed: batch.seed, cases: batch.cases, oracle_kappa, tol2 };
            let written = export_report(&batch.out, &meta, &result)?;
            fs::write(batch.out.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
            print_table(&result.records, stratify);
            for path in written {
                log::info!("wrote {}", path.display());
            }
        }
        Command::Stats { out, stratify } => {
            let records = report::read_records(&out)?;
            let (summaries, _) = compute_stats(&records, stratify);
            report::write_summaries(&out, stratify, &summaries)?;
            print_table(&records, stratify);
        }
        Command::Report { out } => {
            let meta: RunMetadata = serde_json::from_str(&fs::read_to_string(out.join(META_FILE))?)?;
            let batch =
                BatchResult { records: report::read_records(&out)?, dropped: read_dropped(&out)?, cases: meta.cases };
            for stratifier in Stratifier::ALL {
                let (summaries, _) = compute_stats(&batch.records, stratifier);
                report::write_summaries(&out, stratifier, &summaries)?;
            }
            fs::write(out.join(report::REPORT_FILE), report::render_report(&meta, &batch))?;
            if batch.records.iter().all(|r| r.psrom_runtime.is_finite()) {
                report::write_timing(&out, &batch.records)?;
            }
            print!("{}", fs::read_to_string(out.join(report::REPORT_FILE))?);
        }
        Command::FitIdeal { input, out } => {
            let tree = load_tree(fs::File::open(input)?)?;
            let profile = fit_ideal(&IdealFitProblem::new(&tree))?;
            fs::write(out, serde_json::to_string_pretty(&profile)?)?;
        }
    }
    Ok(())
}
