//! `fptm`: reference tables, moment summaries, counter distributions and
//! Monte Carlo checks from the command line.
//!
//! Exit status: 0 on success, 1 when a comparison fails, 2 on any error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fpt_moments::config::{describe_model, moment_rows, RunConfig};
use fpt_moments::deadtime::{output_distribution, CounterParams};
use fpt_moments::montecarlo::{
    calibration_gate, refractory_richardson, simulate_counter, simulate_fet_elastic, simulate_fpt, SampleStats,
};
use fpt_moments::moments::{fet_moment, fpt_moment, refractory_moment};
use fpt_moments::report::{format_full, format_sig7, ComparisonReport, OutputFormat};
use fpt_moments::tables::{compare_table, parse_reference, table_report};
use fpt_moments::{ElasticThreshold, Error};

#[derive(Parser)]
#[command(name = "fptm", version, about = "First-passage and refractoriness moments for diffusion neuron models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Text => OutputFormat::Text,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides applied after the file, e.g. `sigma2=10,20`.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Quadrature tolerance (overrides `tol`).
    #[arg(long)]
    tol: Option<f64>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CounterArgs {
    /// Input rate.
    #[arg(long, allow_hyphen_values = true)]
    lambda: f64,
    /// Observation window.
    #[arg(long = "T", alias = "window", allow_hyphen_values = true)]
    t: f64,
    /// Dead time.
    #[arg(long, allow_hyphen_values = true)]
    tau: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Recompute a reference table (1-6) and compare it cell by cell.
    Table {
        id: u8,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Moment summary for every (model, p_R) combination of a configuration.
    Moments {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Output-count distribution of the dead-time counter.
    Counter {
        #[command(flatten)]
        params: CounterArgs,
        /// Also simulate this many windows.
        #[arg(long)]
        simulate: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo oracles.
    Simulate {
        #[command(subcommand)]
        what: Simulation,
    },
    /// Compare against a reference CSV in the shipped table layout.
    Compare {
        reference: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum Simulation {
    /// Euler–Maruyama first-passage times.
    Fpt {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Elastic-threshold random walk for first-exit and refractoriness times.
    Fet {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        dx: f64,
        /// Estimate E(Tr) from excursions at dx and dx/2 and extrapolate.
        #[arg(long)]
        richardson: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Dead-time counter windows.
    Counter {
        #[command(flatten)]
        params: CounterArgs,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })?
        }
        None => RunConfig::default(),
    };
    for pair in &args.set {
        cfg.set_pair(pair)
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("override '{pair}': {m}")),
                other => other,
            })?;
    }
    if let Some(t) = args.tol {
        cfg.set("tol", &t.to_string())?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Renders rows with a header; text format pads columns.
fn table_text(header: &[&str], rows: &[Vec<String>], format: OutputFormat) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        OutputFormat::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(out, "{}", line(header.to_vec()));
            for r in rows {
                let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
            }
        }
    }
    out
}

fn report_exit(report: &ComparisonReport, output: &Output) -> Result<ExitCode, Error> {
    let format = output.format.map(Into::into).unwrap_or(OutputFormat::Text);
    emit(&report.render(format), output.out.as_deref())?;
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_moments(cfg: &RunConfig, output: &Output) -> Result<ExitCode, Error> {
    let format = output.format.map(Into::into).unwrap_or(cfg.format);
    let rows = moment_rows(cfg)?;
    let header = [
        "model", "params", "S", "x", "p_R", "t1", "V", "fet_t1", "fet_V", "E_Tr", "V_Tr", "t1_7sf", "V_7sf",
        "fet_t1_7sf", "fet_V_7sf", "E_Tr_7sf", "V_Tr_7sf", "max_residual",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let s = &r.summary;
            let vals = [s.t1, s.fpt_variance, s.fet_t1, s.fet_variance, s.refractory_mean, s.refractory_variance];
            let mut row = vec![
                r.model.name().to_string(),
                describe_model(&r.model),
                r.s.to_string(),
                r.x.to_string(),
                r.reflecting_probability.to_string(),
            ];
            row.extend(vals.iter().map(|v| format_full(*v)));
            row.extend(vals.iter().map(|v| format_sig7(*v)));
            row.push(format_full(s.max_residual()));
            row
        })
        .collect();
    emit(&table_text(&header, &body, format), output.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_counter(params: &CounterArgs, simulate: Option<usize>, seed: u64, output: &Output) -> Result<ExitCode, Error> {
    let p = CounterParams::new(params.lambda, params.t, params.tau)?;
    let dist = output_distribution(&p)?;
    let sim = simulate.map(|n| simulate_counter(&p, n, seed)).transpose()?;
    let cumulative = dist.cumulative();
    let mut header = vec!["n", "pmf", "cumulative"];
    if sim.is_some() {
        header.extend(["empirical", "std_error", "z"]);
    }
    let len = dist.pmf.len().max(sim.as_ref().map_or(0, |s| s.pmf.len()));
    let body: Vec<Vec<String>> = (0..len)
        .map(|n| {
            let pmf = dist.pmf.get(n).copied().unwrap_or(0.0);
            let mut row = vec![
                n.to_string(),
                format_full(pmf),
                format_full(cumulative.get(n).copied().unwrap_or(1.0)),
            ];
            if let Some(s) = &sim {
                let f = s.pmf.get(n).copied().unwrap_or(0.0);
                let se = s.std_error.get(n).copied().unwrap_or(0.0);
                // z against the analytic standard error, defined even for empty bins
                let se_exact = (pmf * (1.0 - pmf) / s.n_windows as f64).sqrt();
                let z = if se_exact > 0.0 { (f - pmf) / se_exact } else { 0.0 };
                row.extend([format_full(f), format_full(se), format!("{z:.3}")]);
            }
            row
        })
        .collect();
    let format = output.format.map(Into::into).unwrap_or(OutputFormat::Csv);
    let mut text = table_text(&header, &body, format);
    let _ = writeln!(
        text,
        "# mean {} variance {} normalization_defect {:e}",
        format_full(dist.mean),
        format_full(dist.variance),
        dist.normalization_defect
    );
    emit(&text, output.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn stats_row(label: &str, s: &SampleStats, reference: Option<f64>) -> Vec<String> {
    vec![
        label.to_string(),
        s.n_samples.to_string(),
        format_full(s.mean),
        format_full(s.std_error),
        format_full(s.variance),
        s.seed.to_string(),
        reference.map(format_full).unwrap_or_default(),
        reference.map(|r| format!("{:.3}", s.z_score(r))).unwrap_or_default(),
    ]
}

const STATS_HEADER: [&str; 8] = ["quantity", "n", "mean", "std_error", "variance", "seed", "reference", "z"];

fn single_model(cfg: &RunConfig) -> Result<fpt_moments::Model, Error> {
    let models = cfg.models()?;
    match models.as_slice() {
        [m] => Ok(*m),
        _ => Err(Error::Config(format!("simulation needs one model, found {}", models.len()))),
    }
}

fn single_p(cfg: &RunConfig) -> Result<f64, Error> {
    match cfg.reflecting_probabilities.as_slice() {
        [p] => Ok(*p),
        ps => Err(Error::Config(format!("simulation needs one p_R, found {}", ps.len()))),
    }
}

fn cmd_simulate(what: &Simulation) -> Result<ExitCode, Error> {
    match what {
        Simulation::Fpt { cfg, n, dt, output } => {
            let cfg = load_config(cfg)?;
            let spec = single_model(&cfg)?.spec();
            let (s, x) = (cfg.threshold()?, cfg.start()?);
            let stats = simulate_fpt(&spec, s, x, *n, *dt, cfg.seed)?;
            let reference = fpt_moment(&spec, s, x, 1, cfg.tol)?;
            let format = output.format.map(Into::into).unwrap_or(cfg.format);
            let text = table_text(&STATS_HEADER, &[stats_row("fpt", &stats, Some(reference))], format);
            emit(&text, output.out.as_deref())?;
        }
        Simulation::Fet {
            cfg,
            n,
            dx,
            richardson,
            output,
        } => {
            let cfg = load_config(cfg)?;
            let spec = single_model(&cfg)?.spec();
            let (s, x) = (cfg.threshold()?, cfg.start()?);
            let t = ElasticThreshold::from_reflecting_probability(s, single_p(&cfg)?)?;
            let e_tr = refractory_moment(&spec, &t, 1, cfg.tol)?;
            let format = output.format.map(Into::into).unwrap_or(cfg.format);
            let gate = calibration_gate()?;
            let mut rows = Vec::new();
            if *richardson {
                let r = refractory_richardson(&spec, &t, *dx, *n, 2 * n, cfg.seed)?;
                rows.push(stats_row(&format!("refractory dx={}", r.coarse.dx), &r.coarse.refractory, Some(e_tr)));
                rows.push(stats_row(&format!("refractory dx={}", r.fine.dx), &r.fine.refractory, Some(e_tr)));
                let mut extrap = r.fine.refractory.clone();
                extrap.mean = r.extrapolated;
                extrap.std_error = r.std_error;
                extrap.n_samples += r.coarse.refractory.n_samples;
                rows.push(stats_row("refractory extrapolated", &extrap, Some(e_tr)));
            } else {
                let (fet, refr) = simulate_fet_elastic(&spec, &t, x, *n, *dx, cfg.seed)?;
                let fet_ref = fet_moment(&spec, &t, x, 1, cfg.tol)?;
                rows.push(stats_row("fet", &fet, Some(fet_ref)));
                rows.push(stats_row("refractory", &refr, Some(e_tr)));
            }
            let mut text = table_text(&STATS_HEADER, &rows, format);
            let _ = writeln!(
                text,
                "# calibration: E(Tr) = {} reproduced within {:.2}% (dx=1) and {:.2}% (dx=0.5)",
                gate.target,
                100.0 * gate.coarse_rel_error,
                100.0 * gate.fine_rel_error
            );
            emit(&text, output.out.as_deref())?;
        }
        Simulation::Counter {
            params,
            n,
            seed,
            output,
        } => return cmd_counter(params, Some(*n), *seed, output),
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Table { id, tol, output } => report_exit(&table_report(id, tol)?, &output),
        Command::Moments { cfg, output } => cmd_moments(&load_config(&cfg)?, &output),
        Command::Counter {
            params,
            simulate,
            seed,
            output,
        } => cmd_counter(&params, simulate, seed, &output),
        Command::Simulate { what } => cmd_simulate(&what),
        Command::Compare { reference, tol, output } => {
            let text = std::fs::read_to_string(&reference)
                .map_err(|e| Error::Reference(format!("{}: {e}", reference.display())))?;
            let table = parse_reference(&text)?;
            report_exit(&compare_table(&table, tol)?, &output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
