use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use mapfluct::cumulant::{perron, phi_inverse, Cumulant};
use mapfluct::ladder::{inf_factor, sup_factor, Conditioning};
use mapfluct::linalg::RMatrix;
use mapfluct::model::{self, ValidatedModel};
use mapfluct::simulate::{killed_stats, StartLaw};
use mapfluct::verify::{matrix_json, run_suite, Check, Suite, VerifyOptions};
use mapfluct::Error;

#[derive(Parser)]
#[command(
    name = "mapfluct",
    version,
    about = "Wiener-Hopf factors of Markov additive processes, checked by simulation"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Print flat CSV tables instead of the JSON report.
    #[arg(long, global = true)]
    csv: bool,
    /// Worker threads for the simulator. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Matrix exponent F(alpha), its Perron triple, and Phi(q).
    Cumulant {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
        alpha: Vec<f64>,
        #[arg(long, num_args = 1..)]
        q: Vec<f64>,
    },
    /// One Wiener-Hopf factor matrix.
    Whfactor {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        xi: f64,
        #[arg(long, value_enum)]
        side: Side,
        #[arg(long, value_enum, default_value_t = Cond::AtEq)]
        cond: Cond,
    },
    /// Run a verification suite.
    Verify {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, env = "MAPFLUCT_SEED", default_value_t = 1)]
        seed: u64,
        /// Threshold for every deterministic check in the suite.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Dump killed-path extremes as CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, env = "MAPFLUCT_SEED", default_value_t = 1)]
        seed: u64,
        /// Start state; the stationary law when absent.
        #[arg(long)]
        start: Option<usize>,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Model JSON file, or a built-in name such as MODEL-A.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Sup,
    Inf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cond {
    #[value(name = "at_G")]
    AtG,
    #[value(name = "at_eq")]
    AtEq,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Serialize)]
struct RunReport {
    command: String,
    model: String,
    parameters: Value,
    results: Value,
    tolerances: Value,
    checks: Vec<Check>,
    pass: bool,
    wall_clock_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

enum Output {
    Report(RunReport, String),
    Raw(String),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::Parse(_) | Error::UnknownModel(_) => 2,
        _ => 3,
    }
}

fn load_model(arg: &ModelArg, fallback: &str) -> Result<(String, ValidatedModel), Error> {
    let name = arg.model.as_deref().unwrap_or(fallback);
    let spec = if name.to_ascii_uppercase().starts_with("MODEL-") && !Path::new(name).exists() {
        model::builtin(name)?
    } else {
        model::load(Path::new(name))?
    };
    Ok((name.to_string(), model::validate(spec)?))
}

fn state_header(n: usize) -> String {
    (0..n).map(|j| format!(",s{j}")).collect()
}

fn matrix_csv(out: &mut String, m: &RMatrix) {
    writeln!(out, "state{}", state_header(m.ncols())).unwrap();
    for i in 0..m.nrows() {
        let row: String = m.row(i).iter().map(|x| format!(",{x}")).collect();
        writeln!(out, "s{i}{row}").unwrap();
    }
}

fn run(cmd: &Command, start: Instant) -> Result<Output, Error> {
    let report = |command: &str, model: String, parameters, results, checks: Vec<Check>, seed| RunReport {
        command: command.into(),
        model,
        parameters,
        results,
        tolerances: json!({}),
        pass: checks.iter().all(|c| c.pass),
        checks,
        wall_clock_s: start.elapsed().as_secs_f64(),
        seed,
    };
    match cmd {
        Command::Cumulant { model, alpha, q } => {
            let (name, m) = load_model(model, "MODEL-A")?;
            let n = m.n_states();
            let mut rows = Vec::new();
            let mut csv = String::new();
            for &a in alpha {
                let f = m.eval_real(a)?;
                let t = perron(&m, a)?;
                writeln!(csv, "# F(alpha={a})").unwrap();
                matrix_csv(&mut csv, &f);
                rows.push(json!({ "alpha": a, "F": matrix_json(&f), "kappa": t.kappa, "h": t.h, "v": t.v }));
            }
            let phis = q
                .iter()
                .map(|&x| Ok(json!({ "q": x, "phi": phi_inverse(&m, x)? })))
                .collect::<Result<Vec<_>, Error>>()?;
            writeln!(csv, "# kappa").unwrap();
            let hv: String = (0..n).map(|j| format!(",h_s{j}")).chain((0..n).map(|j| format!(",v_s{j}"))).collect();
            writeln!(csv, "alpha,kappa{hv}").unwrap();
            for r in &rows {
                let vals: String =
                    ["h", "v"].iter().flat_map(|k| r[k].as_array().unwrap().iter()).map(|x| format!(",{x}")).collect();
                writeln!(csv, "{},{}{vals}", r["alpha"], r["kappa"]).unwrap();
            }
            if !phis.is_empty() {
                writeln!(csv, "# Phi\nq,phi").unwrap();
                for p in &phis {
                    writeln!(csv, "{},{}", p["q"], p["phi"]).unwrap();
                }
            }
            let results = json!({ "cumulant": rows, "phi": phis });
            Ok(Output::Report(report("cumulant", name, json!({ "alpha": alpha, "q": q }), results, vec![], None), csv))
        }
        Command::Whfactor { model, q, alpha, xi, side, cond } => {
            let (name, m) = load_model(model, "MODEL-A")?;
            let c = match cond {
                Cond::AtG => Conditioning::AtG,
                Cond::AtEq => Conditioning::AtEq,
            };
            let (label, mat) = match side {
                Side::Sup => ("sup", sup_factor(&m, *q, *alpha, *xi, c)?),
                Side::Inf => ("inf", inf_factor(&m, *q, *alpha, *xi, c)?),
            };
            let cond_name = match cond {
                Cond::AtG => "at_G",
                Cond::AtEq => "at_eq",
            };
            let mut csv = String::new();
            matrix_csv(&mut csv, &mat);
            let params = json!({ "q": q, "alpha": alpha, "xi": xi, "side": label, "cond": cond_name });
            let results = json!({ "factor": matrix_json(&mat) });
            Ok(Output::Report(report("whfactor", name, params, results, vec![], None), csv))
        }
        Command::Verify { model, suite, paths, seed, tol } => {
            let (name, m) = load_model(model, suite.default_model())?;
            let opts = VerifyOptions { paths: *paths, seed: *seed, tol: *tol, ..VerifyOptions::default() };
            let r = run_suite(&m, *suite, &opts)?;
            let mut csv = String::from("check,residual,threshold,pass\n");
            for c in &r.checks {
                writeln!(csv, "\"{}\",{:e},{:e},{}", c.name.replace('"', "\"\""), c.residual, c.threshold, c.pass)
                    .unwrap();
            }
            let params = json!({ "suite": suite.name(), "paths": r.paths, "tol": tol });
            let mut rep = report("verify", name, params, json!({}), r.checks, Some(*seed));
            rep.tolerances = json!({ "se_mult": opts.se_mult, "tol_override": tol, "quadrature": opts.quad });
            Ok(Output::Report(rep, csv))
        }
        Command::Simulate { model, q, paths, seed, start } => {
            let (_, m) = load_model(model, "MODEL-A")?;
            if q.is_nan() || *q <= 0.0 {
                return Err(Error::Domain(format!("killing rate must be positive, got {q}")));
            }
            let law = match start {
                Some(i) if *i < m.n_states() => StartLaw::State(*i),
                Some(i) => return Err(Error::Domain(format!("start state {i} out of range"))),
                None => StartLaw::Stationary,
            };
            let stats = killed_stats(&m, *q, *paths, *seed, law);
            let mut buf = Vec::new();
            stats.write_csv(&mut buf).map_err(|e| Error::Domain(e.to_string()))?;
            Ok(Output::Raw(String::from_utf8(buf).expect("csv is utf-8")))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let start = Instant::now();
    let out = match run(&cli.command, start) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let mut stdout = std::io::stdout().lock();
    match out {
        Output::Raw(text) => {
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Output::Report(rep, csv) => {
            if cli.global.csv {
                let _ = stdout.write_all(csv.as_bytes());
            } else {
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
            }
            for c in rep.checks.iter().filter(|c| !c.pass) {
                eprintln!("{c}");
            }
            if rep.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
