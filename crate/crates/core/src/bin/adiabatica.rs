use adiabatica::harness::{
    self, expected_slope, fit_slope, plot_svg, read_csv, resolve_jobs, with_jobs, write_csv, write_profiles, ExperimentConfig, MIN_FIT_POINTS,
};
use adiabatica::opfamily::{example, manifest, manifest_json, Params};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_INVARIANT: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "adiabatica", version, about = "Adiabatic-theorem laboratory: epsilon sweeps, invariants and plots")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "ADIABATICA_JOBS")]
        jobs: Option<usize>,
        /// Allow epsilon below the example's truncation floor.
        #[arg(long)]
        force: bool,
        /// Record wall-clock time per epsilon (makes the CSV non-reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// List registry examples.
    ListExamples {
        #[arg(long)]
        json: bool,
    },
    /// Invariant suite for one example at one epsilon.
    Verify {
        #[arg(long)]
        example: String,
        #[arg(long)]
        eps: f64,
        /// Parameter override, `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
    },
    /// Log-log plot of a report CSV.
    Plot {
        csv: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{v}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Failure with its exit code.
struct Fail(u8, String);

impl From<adiabatica::Error> for Fail {
    fn from(e: adiabatica::Error) -> Self {
        let code = match e {
            adiabatica::Error::Io(_) | adiabatica::Error::Parse(_) | adiabatica::Error::UnknownExample(_) | adiabatica::Error::InvalidParam { .. } => {
                EXIT_USAGE
            }
            _ => EXIT_INVARIANT,
        };
        Fail(code, e.to_string())
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Fail {
    Fail(EXIT_USAGE, format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, Fail> {
    std::fs::File::create(path).map(std::io::BufWriter::new).map_err(|e| io_fail(path, e))
}

fn run(config: &Path, out: Option<PathBuf>, jobs: Option<usize>, force: bool, timings: bool) -> Result<u8, Fail> {
    let text = std::fs::read_to_string(config).map_err(|e| io_fail(config, e))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    cfg.force |= force;
    cfg.timings |= timings;
    let out = out.or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let report = harness::run(&cfg, resolve_jobs(jobs.or(cfg.jobs)))?;
    std::fs::create_dir_all(&out).map_err(|e| io_fail(&out, e))?;
    let csv_path = out.join(format!("{}.csv", report.example));
    write_csv(&report, create(&csv_path)?)?;
    write_profiles(&report, create(&out.join(format!("{}_profiles.csv", report.example)))?)?;
    let points: Vec<(f64, f64)> = report.records.iter().map(|r| (r.eps, r.sup_dev)).collect();
    let svg = plot_svg(&report.example, &points, report.fit.as_ref(), expected_slope(report.expectation))?;
    let svg_path = out.join(format!("{}.svg", report.example));
    std::fs::write(&svg_path, svg).map_err(|e| io_fail(&svg_path, e))?;

    for note in &report.notes {
        eprintln!("note: {note}");
    }
    for f in &report.invariant_failures {
        eprintln!("invariant: {f}");
    }
    if let Some(f) = &report.fit {
        println!("slope {:.4} (95% interval [{:.4}, {:.4}])", f.slope, f.lo, f.hi);
    }
    println!(
        "verdict {}: {} ({})",
        report.verdict.label,
        if report.verdict.pass { "pass" } else { "fail" },
        report.verdict.detail
    );
    println!("wrote {}", csv_path.display());
    Ok(report.exit_code() as u8)
}

fn list(json: bool) {
    if json {
        print!("{}", manifest_json());
        return;
    }
    for spec in manifest() {
        println!("{}  {}", spec.name, spec.summary);
        for p in spec.params {
            println!("    {} = {} in [{}, {}]  {}", p.name, p.default, p.min, p.max, p.doc);
        }
    }
}

fn verify(name: &str, eps: f64, params: Vec<(String, f64)>) -> Result<u8, Fail> {
    let params: Params = params.into_iter().collect();
    let ex = example(name, &params)?;
    let mut cfg = ExperimentConfig::new(name);
    cfg.params = params;
    cfg.epsilon.values = Some(vec![eps]);
    cfg.validate()?;
    ex.projection.check(&cfg_grid(&cfg))?;
    let metric = if ex.projected {
        harness::MetricKind::Projected
    } else {
        harness::MetricKind::SupNorm
    };
    let rec = with_jobs(resolve_jobs(None), || harness::measure(&ex, &cfg, eps, metric, None))??;
    let smooth = harness::enforces_adiabaticity(&ex.name);
    let checks = [
        ("adiabaticity residual", rec.adiab_resid, harness::ADIABATIC_TOL, smooth),
        ("commutator residual", rec.comm_resid, harness::COMMUTATOR_TOL, true),
    ];
    let mut ok = true;
    for (label, value, tol, enforced) in checks {
        let pass = !enforced || value <= tol;
        ok &= pass;
        println!(
            "{label}: {value:.3e} (limit {tol:e}{}) {}",
            if enforced { "" } else { ", not enforced" },
            if pass { "ok" } else { "FAIL" }
        );
    }
    println!("deviation: {:.6e}", rec.sup_dev);
    Ok(if ok { 0 } else { EXIT_INVARIANT })
}

fn cfg_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    adiabatica::opfamily::uniform_grid(0.0, 1.0, cfg.grid_points)
}

fn plot(csv: &Path, output: &Path) -> Result<u8, Fail> {
    let file = std::fs::File::open(csv).map_err(|e| io_fail(csv, e))?;
    let rows = read_csv(file)?;
    let name = rows[0].example.clone();
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, r.sup_dev)).collect();
    let fit = if points.len() >= MIN_FIT_POINTS { fit_slope(&points).ok() } else { None };
    let expected = example(&name, &Params::new()).ok().and_then(|e| expected_slope(e.expectation));
    let svg = plot_svg(&name, &points, fit.as_ref(), expected)?;
    std::fs::write(output, svg).map_err(|e| io_fail(output, e))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Run {
            config,
            out,
            jobs,
            force,
            timings,
        } => run(&config, out, jobs, force, timings),
        Cmd::ListExamples { json } => {
            list(json);
            Ok(0)
        }
        Cmd::Verify { example, eps, params } => verify(&example, eps, params),
        Cmd::Plot { csv, output } => plot(&csv, &output),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
