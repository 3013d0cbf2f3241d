//! Command line front end. `derive` writes the symbolic derivation report
//! for a scenario's representation and potentials, `simulate` integrates the
//! scenario and emits the conserved-charge series as CSV, and `verify` runs
//! the acceptance criteria. Scenario arguments accept either a JSON file
//! path or the name of a bundled scenario.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _};
use clap::{Parser, Subcommand};

use cartanfield_core::derivation::derive;
use cartanfield_core::model::Model;
use cartanfield_core::scenario::{bundled, bundled_names, ScenarioConfig};
use cartanfield_core::verify::run_all;
use cartanfield_core::{charges, simulate};

#[derive(Parser)]
#[command(
    name = "cartanfield",
    version,
    about = "Derive spinor field equations and conserved currents from a \
             variational 4-form, and integrate the derived equations on \
             periodic grids"
)]
struct Cli {
    /// Directory for generated files (reports, CSV series, snapshots).
    /// Without it, reports and series go to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Reject undeclared identifiers in configured field expressions. This
    /// is already the default posture; the flag states it explicitly.
    #[arg(long, global = true)]
    strict_idents: bool,

    /// Suppress diagnostic tables; errors and check failures still print.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive the field equations, the two-component reduction where it
    /// applies, and one conserved current per generator, as a text report.
    Derive {
        /// Scenario JSON file, or the name of a bundled scenario.
        config: String,
    },
    /// Integrate the scenario and write the conserved-charge time series.
    Simulate {
        /// Scenario JSON file, or the name of a bundled scenario.
        config: String,
    },
    /// Run the acceptance criteria, one verdict line each.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Field expressions are always parsed strictly by the CLI; the flag only
    // makes that explicit on the command line.
    let _ = cli.strict_idents;
    let result = match &cli.cmd {
        Cmd::Derive { config } => cmd_derive(&cli, config),
        Cmd::Simulate { config } => cmd_simulate(&cli, config),
        Cmd::Verify => Ok(cmd_verify(&cli)),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Loads a scenario from a file path, falling back to the bundled pack.
fn load_config(arg: &str) -> anyhow::Result<(String, ScenarioConfig)> {
    let path = Path::new(arg);
    let (stem, text) = if path.exists() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        (stem, fs::read_to_string(path).with_context(|| format!("reading {arg}"))?)
    } else if let Some(text) = bundled(arg) {
        (arg.to_string(), text.to_string())
    } else {
        bail!(
            "`{arg}` is neither a readable file nor a bundled scenario \
             (bundled: {})",
            bundled_names().join(", ")
        );
    };
    let config = ScenarioConfig::from_str(&text).map_err(|e| anyhow!("{arg}: {e}"))?;
    Ok((stem, config))
}

fn ensure_out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_derive(cli: &Cli, config: &str) -> anyhow::Result<ExitCode> {
    let (stem, cfg) = load_config(config)?;
    let potentials = cfg.field_exprs(true).map_err(|e| anyhow!("{e}"))?;
    let model = Model::with_potentials(cfg.rep_kind(), potentials);
    let derivation = derive(model).map_err(|e| anyhow!("{e}"))?;

    let filter = &cfg.derive.generators;
    for wanted in filter {
        if !derivation.blocks.iter().any(|b| &b.generator.label == wanted) {
            let known: Vec<&str> =
                derivation.blocks.iter().map(|b| b.generator.label.as_str()).collect();
            bail!("unknown generator `{wanted}` (known: {})", known.join(", "));
        }
    }
    let report = derivation.report_filtered(filter);

    if let Some(dir) = &cli.out {
        ensure_out_dir(dir)?;
        let path = dir.join(format!("{stem}_derivation.txt"));
        fs::write(&path, &report).with_context(|| format!("writing {}", path.display()))?;
        if !cli.quiet {
            println!("wrote {}", path.display());
        }
    } else {
        print!("{report}");
    }

    let mut ok = derivation.heisenberg.ok;
    for block in &derivation.blocks {
        if !filter.is_empty() && !filter.contains(&block.generator.label) {
            continue;
        }
        if !block.divergence_residual.is_zero() {
            eprintln!(
                "generator {}: on-shell divergence residual is nonzero",
                block.generator.label
            );
            ok = false;
        }
    }
    if !derivation.heisenberg.ok {
        eprintln!("canonical commutator check failed");
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_simulate(cli: &Cli, config: &str) -> anyhow::Result<ExitCode> {
    let (stem, cfg) = load_config(config)?;
    // Strict parse first so identifier typos fail before any time stepping.
    cfg.field_exprs(true).map_err(|e| anyhow!("{e}"))?;
    let output = simulate::run(&cfg).map_err(|e| anyhow!("{e}"))?;

    let csv = charges::series_to_csv(&output.series);
    if let Some(dir) = &cli.out {
        ensure_out_dir(dir)?;
        if cfg.output.csv {
            let path = dir.join(format!("{stem}.csv"));
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            if !cli.quiet {
                println!("wrote {}", path.display());
            }
        }
        if cfg.output.snapshots {
            write_snapshot(dir, &stem, &output.state, cli.quiet)?;
        }
    } else if cfg.output.csv {
        print!("{csv}");
    }

    if !cli.quiet {
        println!("charge drift relative to the initial sample:");
        for (name, drift) in output.series.drift_report() {
            println!("  {name:>6}: {drift:.3e}");
        }
    }

    let outcomes = cfg.evaluate_checks(&output.series).map_err(|e| anyhow!("{e}"))?;
    let mut ok = true;
    for outcome in &outcomes {
        if !outcome.passed {
            ok = false;
        }
        if !outcome.passed || !cli.quiet {
            println!(
                "check {} [{}]: {}",
                outcome.label,
                if outcome.passed { "pass" } else { "FAIL" },
                outcome.detail
            );
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// Final-state dump: little-endian f64 re/im pairs, component-major with
/// row-major grid order inside each component, plus a JSON sidecar with the
/// layout parameters.
fn write_snapshot(
    dir: &Path,
    stem: &str,
    state: &cartanfield_core::SpinorField,
    quiet: bool,
) -> anyhow::Result<()> {
    let mut bytes = Vec::with_capacity(state.comp.len() * state.grid.points() * 16);
    for comp in &state.comp {
        for v in comp {
            bytes.extend_from_slice(&v.re.to_le_bytes());
            bytes.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    let bin = dir.join(format!("{stem}_state.bin"));
    fs::write(&bin, &bytes).with_context(|| format!("writing {}", bin.display()))?;

    let dim = state.grid.dim;
    let sidecar = serde_json::json!({
        "n": state.grid.n[..dim],
        "length": state.grid.length[..dim],
        "components": state.comp.len(),
        "layout": "component-major; row-major grid order per component; \
                   little-endian f64 pairs (re, im)",
    });
    let meta = dir.join(format!("{stem}_state.json"));
    fs::write(&meta, serde_json::to_string_pretty(&sidecar)?)
        .with_context(|| format!("writing {}", meta.display()))?;
    if !quiet {
        println!("wrote {} and {}", bin.display(), meta.display());
    }
    Ok(())
}

fn cmd_verify(cli: &Cli) -> ExitCode {
    let results = run_all();
    let mut failed = 0usize;
    for r in &results {
        if !r.passed {
            failed += 1;
        }
        if !r.passed || !cli.quiet {
            println!(
                "[{}] {} ({:.2}s): {}",
                if r.passed { "pass" } else { "FAIL" },
                r.name,
                r.elapsed.as_secs_f64(),
                r.details
            );
        }
    }
    println!("{}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
