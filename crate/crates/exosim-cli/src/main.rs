//! Batch front end: run scenarios, compare controller variants, validate
//! configuration files, and emit CSV traces plus SVG plots.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exosim::scenario::{
    check_physical, load_scenario, resolved_parameters, scenario_with_override, Scenario,
    ScenarioError,
};
use exosim::sim::{
    run, write_trace_csv, write_weights_csv, ControllerKind, Metrics, SimConfig, SimOutput,
    TraceRecord,
};

const EXIT_OK: u8 = 0;
const EXIT_SCHEMA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

const AFTER_HELP: &str = "\
EXIT CODES:
  0  success
  2  scenario schema/validation error (unreadable syntax, invalid values,
     unknown plot column, unknown variant, bad sweep path, --seed given)
  3  numeric abort (non-finite state or diverged estimate; the partial trace
     collected so far is still written)
  4  I/O error (missing scenario file, unwritable output directory)

SCENARIO FILE KEYS (TOML):
  name, controller (cascade|cascade_no_xi|pd), dt, duration, transient_skip,
  plots (list of trace columns), log_weights,
  sweep.path, sweep.values,
  reference.amplitude, reference.frequency,
  plant.{mass, inertia, com_distance, gravity, coulomb, viscous, k_p, k_d,
         area_1, area_2, bulk_modulus, chamber_volume, flow_gain,
         flow_pressure, leak_internal, leak_external, valve_tau, valve_gain,
         cyl_length_0, piston_pos_0, s1_x, s1_y, s2_x, s2_y, r_d1, r_d2,
         u_min, u_max},
  accumulator.{adiabatic_exponent, gas_volume_high, flow, p_high, p_low,
               recharge_time},
  hl_gains.{k1, k2, rho1, rho2, q_j, q_m, q_c, q_b, flip_e1_term},
  initial_estimates.{inertia, mass, coulomb, viscous},
  ll_gains.{k3, rho3, k_xi, mu, epsilon0},
  net.{grid_points, grid_min, grid_max, width, literal_quadratic,
       jump_orders, gamma, sigma, ps_norm_center, ps_norm_halfwidth},
  pd.{kp, kd}

TRACE COLUMNS (plot selections):
  t, phi, phi_d, e1, e1_dot, tau_hm, F_L, F_L_d, e3, u_raw, u_applied,
  delta, xi, J_hat, m_hat, F_C_hat, b_hat, W_norm, f4_ref, f4_est, P_s, mode";

/// Joint-simulator batch front end.
#[derive(Parser)]
#[command(name = "exosim", version, about, after_help = AFTER_HELP)]
struct Cli {
    /// Not supported: every run is deterministic by construction, so there
    /// is no randomness to seed. Passing this flag is an error.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (or its sweep) and write trace.csv, metrics.txt,
    /// and one SVG per selected plot into the output directory.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Trace columns to plot, overriding the scenario's selection.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        plots: Vec<String>,
        /// Also dump the full weight vector per step to weights.csv.
        #[arg(long)]
        log_weights: bool,
    },
    /// Run the scenario once per controller variant, write per-variant
    /// outputs, overlay plots, and a metric comparison table.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Controller variant (repeat at least twice):
        /// cascade, cascade_no_xi, or pd.
        #[arg(long = "variant", value_name = "NAME")]
        variants: Vec<String>,
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Trace columns to overlay, overriding the scenario's selection.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        plots: Vec<String>,
    },
    /// Validate a scenario (schema + physical invariants) without running,
    /// and print the resolved parameter set with provenance tags.
    Check {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(seed) = &cli.seed {
        eprintln!(
            "error: --seed {seed} rejected: the simulator is deterministic (no random number \
generator anywhere in the loop), so a seed has nothing to influence. Identical scenarios \
produce bit-identical outputs."
        );
        return ExitCode::from(EXIT_SCHEMA);
    }
    let code = match cli.command {
        Command::Run {
            scenario,
            out,
            plots,
            log_weights,
        } => cmd_run(&scenario.scenario, &out, &plots, log_weights),
        Command::Compare {
            scenario,
            variants,
            out,
            plots,
        } => cmd_compare(&scenario.scenario, &variants, &out, &plots),
        Command::Check { scenario } => cmd_check(&scenario.scenario),
    };
    ExitCode::from(code)
}

fn scenario_exit(err: &ScenarioError) -> u8 {
    match err {
        ScenarioError::Io(_) => EXIT_IO,
        ScenarioError::Parse(_) | ScenarioError::Invalid(_) => EXIT_SCHEMA,
    }
}

fn report_scenario_error(err: &ScenarioError) -> u8 {
    match err {
        ScenarioError::Invalid(config) => {
            eprintln!("error: scenario validation failed:");
            for issue in &config.issues {
                eprintln!("  - {issue}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    scenario_exit(err)
}

fn effective_plots<'a>(flag: &'a [String], scenario: &'a Scenario) -> Vec<&'a str> {
    let source = if flag.is_empty() { &scenario.plots } else {
        // Flag-supplied names are validated here; scenario names were
        // validated on load.
        flag
    };
    source.iter().map(String::as_str).collect()
}

fn validate_plot_names(names: &[&str]) -> Result<(), String> {
    let known = TraceRecord::column_names();
    for name in names {
        if !known.contains(name) {
            return Err(format!(
                "unknown trace column `{name}` (known: {})",
                known.join(", ")
            ));
        }
    }
    Ok(())
}

struct RunArtifacts {
    output: SimOutput,
}

fn execute(cfg: SimConfig, dir: &Path, plots: &[&str], log_weights: bool) -> Result<RunArtifacts, u8> {
    let mut cfg = cfg;
    cfg.log_weights = cfg.log_weights || log_weights;
    std::fs::create_dir_all(dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", dir.display());
        EXIT_IO
    })?;
    let write_trace = |trace: &[TraceRecord]| -> Result<(), u8> {
        let path = dir.join("trace.csv");
        let mut buf = Vec::new();
        write_trace_csv(trace, &mut buf).expect("in-memory write");
        std::fs::write(&path, buf).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            EXIT_IO
        })
    };
    match run(cfg) {
        Ok(output) => {
            write_trace(&output.trace)?;
            write_file(dir.join("metrics.txt"), output.metrics.summary_text().as_bytes())?;
            if !output.weights_log.is_empty() {
                let mut buf = Vec::new();
                write_weights_csv(&output.weights_log, &mut buf).expect("in-memory write");
                write_file(dir.join("weights.csv"), &buf)?;
            }
            for name in plots {
                let svg = trace_plot(&output.trace, name);
                write_file(dir.join(format!("{name}.svg")), svg.as_bytes())?;
            }
            Ok(RunArtifacts { output })
        }
        Err(abort) => {
            eprintln!("error: {abort}");
            // Flush whatever was collected before the failure.
            let _ = write_trace(&abort.trace);
            Err(EXIT_NUMERIC)
        }
    }
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<(), u8> {
    std::fs::write(&path, bytes).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_IO
    })
}

fn trace_plot(trace: &[TraceRecord], column: &str) -> String {
    let points: Vec<(f64, f64)> = trace
        .iter()
        .map(|r| (r.t, r.column(column).unwrap_or(f64::NAN)))
        .collect();
    plot::line_chart(
        column,
        "t [s]",
        column,
        &[plot::Series {
            name: column,
            points,
        }],
    )
}

fn cmd_run(scenario_path: &Path, out: &Path, plots_flag: &[String], log_weights: bool) -> u8 {
    let text = match std::fs::read_to_string(scenario_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", scenario_path.display());
            return EXIT_IO;
        }
    };
    let scenario = match exosim::scenario::parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => return report_scenario_error(&e),
    };
    let plots = effective_plots(plots_flag, &scenario);
    if let Err(msg) = validate_plot_names(&plots) {
        eprintln!("error: {msg}");
        return EXIT_SCHEMA;
    }

    match &scenario.sweep {
        None => match execute(scenario.sim.clone(), out, &plots, log_weights) {
            Ok(art) => {
                print!("{}", art.output.metrics.summary_text());
                EXIT_OK
            }
            Err(code) => code,
        },
        Some(sweep) => {
            for value in &sweep.values {
                let variant = match scenario_with_override(&text, &sweep.path, *value) {
                    Ok(s) => s,
                    Err(e) => return report_scenario_error(&e),
                };
                let dir = out.join(format!("{}={}", sweep.path.replace('.', "_"), value));
                match execute(variant.sim, &dir, &plots, log_weights) {
                    Ok(art) => {
                        println!("{} = {}:", sweep.path, value);
                        print!("{}", art.output.metrics.summary_text());
                    }
                    Err(code) => return code,
                }
            }
            EXIT_OK
        }
    }
}

fn parse_variant(name: &str) -> Option<ControllerKind> {
    match name {
        "cascade" => Some(ControllerKind::Cascade),
        "cascade_no_xi" => Some(ControllerKind::CascadeNoXi),
        "pd" => Some(ControllerKind::Pd),
        _ => None,
    }
}

fn metric_rows(m: &Metrics) -> [(&'static str, f64, bool); 6] {
    // (name, value, lower-is-better)
    [
        ("rms_e1", m.rms_e1, true),
        ("max_abs_e1", m.max_abs_e1, true),
        ("rms_tau_hm", m.rms_tau_hm, true),
        ("rms_e3", m.rms_e3, true),
        ("control_effort", m.control_effort, true),
        ("saturation_fraction", m.saturation_fraction, true),
    ]
}

fn cmd_compare(scenario_path: &Path, variants: &[String], out: &Path, plots_flag: &[String]) -> u8 {
    if variants.len() < 2 {
        eprintln!("error: compare needs at least two --variant flags");
        return EXIT_SCHEMA;
    }
    let mut kinds = Vec::new();
    for v in variants {
        match parse_variant(v) {
            Some(k) => kinds.push(k),
            None => {
                eprintln!("error: unknown variant `{v}` (expected cascade, cascade_no_xi, or pd)");
                return EXIT_SCHEMA;
            }
        }
    }
    let scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(e) => return report_scenario_error(&e),
    };
    let plots = effective_plots(plots_flag, &scenario);
    if let Err(msg) = validate_plot_names(&plots) {
        eprintln!("error: {msg}");
        return EXIT_SCHEMA;
    }

    // Run unique variants in parallel; duplicates reuse the same result.
    let mut unique: Vec<ControllerKind> = Vec::new();
    for k in &kinds {
        if !unique.contains(k) {
            unique.push(*k);
        }
    }
    let results: Vec<(ControllerKind, Result<RunArtifacts, u8>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = unique
            .iter()
            .map(|kind| {
                let mut cfg = scenario.sim.clone();
                cfg.controller = *kind;
                let dir = out.join(kind.name());
                let plots = plots.clone();
                scope.spawn(move || (*kind, execute(cfg, &dir, &plots, false)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant thread")).collect()
    });
    let mut outputs: Vec<(ControllerKind, SimOutput)> = Vec::new();
    for (kind, result) in results {
        match result {
            Ok(art) => outputs.push((kind, art.output)),
            Err(code) => return code,
        }
    }
    let output_for = |kind: ControllerKind| {
        &outputs.iter().find(|(k, _)| *k == kind).expect("variant ran").1
    };

    // Comparison table: metric x variant, plus the winner of each metric.
    let mut table = String::new();
    table.push_str(&format!("{:22}", "metric"));
    for v in variants {
        table.push_str(&format!(" {v:>16}"));
    }
    table.push_str(&format!(" {:>16}\n", "winner"));
    for row in 0..metric_rows(&outputs[0].1.metrics).len() {
        let name = metric_rows(&outputs[0].1.metrics)[row].0;
        table.push_str(&format!("{name:22}"));
        let mut best: Option<(usize, f64)> = None;
        for (i, kind) in kinds.iter().enumerate() {
            let value = metric_rows(&output_for(*kind).metrics)[row].1;
            table.push_str(&format!(" {value:>16.6e}"));
            if best.is_none() || value < best.unwrap().1 {
                best = Some((i, value));
            }
        }
        table.push_str(&format!(" {:>16}\n", variants[best.unwrap().0]));
    }
    print!("{table}");
    if write_file(out.join("comparison.txt"), table.as_bytes()).is_err() {
        return EXIT_IO;
    }

    // Overlay plots across variants.
    for name in &plots {
        let series: Vec<plot::Series> = unique
            .iter()
            .map(|kind| plot::Series {
                name: kind.name(),
                points: output_for(*kind)
                    .trace
                    .iter()
                    .map(|r| (r.t, r.column(name).unwrap_or(f64::NAN)))
                    .collect(),
            })
            .collect();
        let svg = plot::line_chart(name, "t [s]", name, &series);
        if write_file(out.join(format!("compare_{name}.svg")), svg.as_bytes()).is_err() {
            return EXIT_IO;
        }
    }
    EXIT_OK
}

fn cmd_check(scenario_path: &Path) -> u8 {
    let scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(e) => return report_scenario_error(&e),
    };
    let physical = check_physical(&scenario.sim);
    println!("scenario `{}`", scenario.name);
    println!("resolved parameters:");
    for (path, value, provenance) in resolved_parameters(&scenario.sim) {
        println!("  {path:32} = {value:>24}  {}", provenance.tag());
    }
    if physical.is_empty() {
        println!("physical checks: ok (linkage, moment arm, chamber volume over the reference range)");
        EXIT_OK
    } else {
        eprintln!("error: physical checks failed:");
        for issue in &physical {
            eprintln!("  - {issue}");
        }
        EXIT_SCHEMA
    }
}
