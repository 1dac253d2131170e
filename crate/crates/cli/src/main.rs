use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dirichlet_w2::harness::{self, ExperimentConfig, McSettings, MethodChoice, NuSpec};
use dirichlet_w2::limit::limit_for;
use dirichlet_w2::spectral::export_basis;
use dirichlet_w2::{project, Boundary, Domain, Error, ModeCoefficients};

/// Spectral and transport experiments for conditional empirical measures of
/// killed diffusions.
#[derive(Parser, Debug)]
#[command(name = "dw2", version)]
struct Cli {
    /// Experiment config (JSON). Without it: Dirichlet [0, 1], ν = μ.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output` or `./out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the number of modes.
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// Overrides the truncation tolerance (the limit tolerance for `limit`,
    /// the series tolerance otherwise).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenbasis export and eigenvalue table.
    Basis,
    /// Mode coefficients of ν and μ.
    Project,
    /// Conditional density h_t on the quadrature grid.
    Density {
        #[arg(long)]
        t: f64,
    },
    /// Limit constant I with tail bound.
    Limit,
    /// W2(μ_t^ν, μ_0) at one time.
    W2 {
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// t²W2² against I over the time grid.
    Converge {
        /// Comma-separated times, overriding the config.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Dual lower bound, W2² and H⁻¹ upper bound at one time.
    Sandwich {
        #[arg(long)]
        t: f64,
    },
    /// Monte Carlo cross-check against the spectral laws.
    Mc {
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Quantile1d,
    ExactDiscrete,
    Entropic,
}

impl From<Method> for MethodChoice {
    fn from(m: Method) -> Self {
        match m {
            Method::Quantile1d => MethodChoice::Quantile1d,
            Method::ExactDiscrete => MethodChoice::ExactDiscrete,
            Method::Entropic => MethodChoice::Entropic,
        }
    }
}

/// Outcome of a run: files written and whether its built-in check passed.
struct Outcome {
    files: Vec<PathBuf>,
    ok: bool,
}

fn config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(
            Domain::unit_interval(Boundary::Dirichlet),
            NuSpec::Reference,
        ),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(m) = cli.modes {
        c.truncation.modes = m;
    }
    if let Some(t) = cli.tol {
        if matches!(cli.command, Command::Limit) {
            c.truncation.limit_tol = t;
        } else {
            c.truncation.series_tol = t;
        }
    }
    Ok(c)
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let mut cfg = config(cli)?;
    let out: PathBuf = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone().map(|o| cfg.base_dir.join(o)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let dir = out.as_path();
    match &cli.command {
        Command::Basis => {
            cfg.validate()?;
            let b = cfg.basis()?;
            let mut csv = String::from("m,lambda,sup_norm,ratio_sup_norm\n");
            for m in 0..b.mode_count() {
                csv.push_str(&csv_line(&[
                    m.to_string(),
                    format!("{:.17e}", b.eigenvalues()[m]),
                    format!("{:.17e}", b.sup_norms()[m]),
                    format!("{:.17e}", b.ratio_sup_norms()[m]),
                ]));
            }
            println!(
                "{} modes, lambda_0 = {:.12e}, orthonormality residual {:.3e}",
                b.mode_count(),
                b.eigenvalues()[0],
                b.orthonormality_residual()
            );
            let mut files = harness::write_report(dir, "basis", &export_basis(&b), None)?;
            files.push(write(dir, "eigenvalues.csv", &csv)?);
            Ok(Outcome { files, ok: true })
        }
        Command::Project => {
            cfg.validate()?;
            let b = cfg.basis()?;
            let nu = project(&cfg.initial(&b)?, &b)?;
            let mu = ModeCoefficients::reference(&b);
            let mut csv = String::from("m,lambda,nu_coefficient,mu_coefficient\n");
            for m in 0..b.mode_count() {
                csv.push_str(&csv_line(&[
                    m.to_string(),
                    format!("{:.17e}", b.eigenvalues()[m]),
                    format!("{:.17e}", nu.values[m]),
                    format!("{:.17e}", mu.values[m]),
                ]));
            }
            println!("nu(phi_0) = {:.12e}", nu.values[0]);
            Ok(Outcome {
                files: vec![write(dir, "coefficients.csv", &csv)?],
                ok: true,
            })
        }
        Command::Density { t } => {
            let (b, h) = harness::density_at(&cfg, *t)?;
            println!(
                "t = {t}: mass {:.12}, series tail {:.3e}",
                h.mass(&b),
                h.truncation.tail_estimate
            );
            Ok(Outcome {
                files: vec![write(dir, &format!("density_t{t}.csv"), &h.to_csv(&b))?],
                ok: true,
            })
        }
        Command::Limit => {
            cfg.validate()?;
            let b = cfg.basis()?;
            let nu = cfg.initial(&b)?;
            let r = limit_for(&b, &nu, cfg.truncation.limit_tol)?;
            let mut csv = String::from("m,partial_sum\n");
            for (m, v) in r.partial_sums.iter().enumerate() {
                csv.push_str(&csv_line(&[(m + 1).to_string(), format!("{v:.17e}")]));
            }
            println!("I = {:.15e} (tail bound {:.3e})", r.value, r.tail_bound);
            let mut files = harness::write_report(dir, "limit", &r, None)?;
            files.push(write(dir, "limit_partial_sums.csv", &csv)?);
            Ok(Outcome { files, ok: true })
        }
        Command::W2 { t, method } => {
            if let Some(m) = method {
                cfg.transport.method = (*m).into();
            }
            let r = harness::run_w2(&cfg, *t)?;
            println!(
                "t = {t}: W2 = {:.12e}, t^2 W2^2 = {:.12e} ({} ± {:.3e})",
                r.w2, r.scaled, r.provenance.method, r.provenance.method_error
            );
            Ok(Outcome {
                files: harness::write_report(dir, "w2", &r, None)?,
                ok: true,
            })
        }
        Command::Converge { times } => {
            if let Some(ts) = times {
                cfg.times = ts.clone();
            }
            let r = harness::run_convergence(&cfg)?;
            for row in &r.rows {
                println!(
                    "t = {:>6}: t^2 W2^2 = {:.9e}, gap {:+.3e}",
                    row.t, row.scaled, row.relative_gap
                );
            }
            println!(
                "I = {:.9e}; exponent {}; passed {}",
                r.limit.value,
                r.fit
                    .map(|f| format!("{:.3}", f.exponent))
                    .unwrap_or_else(|| "n/a".into()),
                r.passed
            );
            Ok(Outcome {
                files: harness::write_report(dir, "convergence", &r, Some(&r.to_csv()))?,
                ok: r.passed,
            })
        }
        Command::Sandwich { t } => {
            let r = harness::run_sandwich(&cfg, *t)?;
            println!(
                "t = {t}: {:.9e} <= {:.9e} <= {:.9e} (ordered {})",
                r.lower, r.w2_squared, r.upper, r.ordered
            );
            Ok(Outcome {
                files: harness::write_report(dir, "sandwich", &r, Some(&r.to_csv()))?,
                ok: r.ordered,
            })
        }
        Command::Mc { paths, horizon, dt } => {
            let mut ms = cfg.mc.clone().unwrap_or_else(McSettings::default);
            if let Some(p) = paths {
                ms.n_paths = *p;
            }
            if let Some(h) = horizon {
                ms.horizon = *h;
            }
            if let Some(d) = dt {
                ms.dt = *d;
            }
            cfg.mc = Some(ms);
            let r = harness::run_mc_crosscheck(&cfg)?;
            println!(
                "t = {}: {} survivors; W1 occupation {:.3e} (tol {:.3e}); agree {}",
                r.t,
                r.survival_count,
                r.occupation_w1.value,
                r.occupation_w1.tolerance(),
                r.agree
            );
            Ok(Outcome {
                files: harness::write_report(dir, "mc", &r, Some(&r.to_csv()))?,
                ok: r.agree,
            })
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, text)?;
    Ok(p)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if o.ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("check failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
