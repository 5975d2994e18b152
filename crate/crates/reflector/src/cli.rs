//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use reflector_core::geometry::{ReflectorProfile, TabulatedProfile};
use reflector_core::limitcase::{point_source_design, scaling_convergence, trace_point_source};
use reflector_core::raytrace::{nmae_against, trace};
use serde::{Deserialize, Serialize};

use crate::bench::{self, derive_target, materialize, Problem};
use crate::config::{Config, Example, Method};
use crate::io::{self, Table};
use crate::solve::WallClock;
use crate::svg::{histogram_points, Plot, Series};
use crate::CliError;

/// Samples written for every profile file.
pub const PROFILE_SAMPLES: usize = 1025;

#[derive(Debug, Parser)]
#[command(name = "reflector", version, about = "Finite-source reflector design and benchmarks")]
pub struct Cli {
    /// Worker threads for height sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML run configuration; overrides the example preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Benchmark preset used when no configuration file is given.
    #[arg(long, value_enum, ignore_case = true, default_value = "a")]
    pub example: Example,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl Common {
    pub fn load(&self) -> Result<Config, CliError> {
        match &self.config {
            Some(p) => Config::load(p),
            None => Ok(Config::example(self.example)),
        }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::Io(format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the ground-truth reflector and write its profile.
    GenTruth {
        #[command(flatten)]
        common: Common,
        /// Overrides `target.truth_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Trace the ground truth at high resolution and write the target.
    DeriveTarget {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the configured problem.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Method,
        /// Minimum height; the network adds the height penalty.
        #[arg(long)]
        h_min: Option<f64>,
        /// Target CSV replacing the derived one (same interval).
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Ray-trace a profile CSV or a network checkpoint.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        profile: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        rays: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// NMAE of a histogram CSV against a target CSV.
    Nmae {
        #[arg(long)]
        histogram: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Both solvers over the configured minimum-height factors.
    SweepHeight {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "direct")]
        method: Method,
    },
    /// Scaling-limit convergence and the point-source design.
    LimitCheck {
        #[command(flatten)]
        common: Common,
    },
}

/// Written next to every solve; fully determines the run through `config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub h_min: Option<f64>,
    pub nmae: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub stop: String,
    pub files: Vec<String>,
    pub config: Config,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn profile_points<P: ReflectorProfile + ?Sized>(prof: &P) -> Vec<(f64, f64)> {
    let d = prof.domain();
    (0..PROFILE_SAMPLES)
        .map(|i| {
            let s = d.l_min + d.omega_len() * i as f64 / (PROFILE_SAMPLES - 1) as f64;
            (s, prof.height(s))
        })
        .collect()
}

fn problem_for(cfg: &Config, target: Option<&Path>) -> Result<Problem, CliError> {
    let mut problem = materialize(cfg)?;
    if let Some(path) = target {
        let t = io::target_from_table(&Table::load(path)?)?;
        let (lo, hi) = t.bounds();
        problem.domain = problem.domain.with_sigma(lo, hi)?;
        problem.source = problem.source.with_domain(problem.domain);
        problem.truth = problem.truth.clone().with_domain(problem.domain);
        problem.target = t;
    }
    Ok(problem)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenTruth { common, seed } => {
            let mut cfg = common.load()?;
            if let Some(s) = seed {
                cfg.target.truth_seed = s;
            }
            let out = common.out_dir()?;
            let (truth, _) = bench::truth_and_domain(&cfg)?;
            io::profile_table(&truth, PROFILE_SAMPLES).save(&out.join("truth_profile.csv"))?;
            Plot {
                title: "ground-truth reflector",
                x_label: "s",
                y_label: "u",
                log_y: false,
                series: vec![Series { label: "truth", points: profile_points(&truth) }],
            }
            .save(&out.join("truth_profile.svg"))?;
            let t = &truth;
            println!("offset {}", t.offset);
            for (c, w) in t.centers.iter().zip(&t.weights) {
                println!("center {c} weight {w}");
            }
            println!("min height {}", t.min_height(crate::truth::CHECK_GRID));
            Ok(())
        }
        Command::DeriveTarget { common } => {
            let cfg = common.load()?;
            let out = common.out_dir()?;
            let (truth, domain) = bench::truth_and_domain(&cfg)?;
            let target = derive_target(&truth, &cfg.source_spec()?.with_domain(domain), cfg.target.bins, cfg.target.rays)?;
            io::target_table(&target).save(&out.join("target.csv"))?;
            let pts = target.centers().into_iter().zip(target.samples().iter().copied()).collect();
            Plot {
                title: "derived far-field target",
                x_label: "sigma",
                y_label: "density",
                log_y: false,
                series: vec![Series { label: "target", points: pts }],
            }
            .save(&out.join("target.svg"))?;
            println!("target flux {} on [{}, {}]", target.total_flux(), target.bounds().0, target.bounds().1);
            Ok(())
        }
        Command::Solve { common, method, h_min, target } => {
            let cfg = common.load()?;
            let out = common.out_dir()?.to_path_buf();
            let problem = problem_for(&cfg, target.as_deref())?;
            let report = solve(&problem, &cfg, method, h_min, &out)?;
            println!("{method:?}: NMAE {} after {} iterations ({:.1} s)", report.nmae, report.iterations, report.seconds);
            Ok(())
        }
        Command::Trace { common, profile, checkpoint, rays, bins } => {
            let cfg = common.load()?;
            let out = common.out_dir()?;
            let source = cfg.source_spec()?;
            let prof: TabulatedProfile = match (profile, checkpoint) {
                (Some(p), _) => io::profile_from_table(&Table::load(&p)?)?,
                (None, Some(c)) => {
                    let net = io::load_checkpoint(&c)?;
                    let (_, domain) = bench::truth_and_domain(&cfg)?;
                    bench::tabulate_network(&net, domain)?
                }
                (None, None) => return Err(CliError::Config("trace needs --profile or --checkpoint".into())),
            };
            let d = *prof.domain();
            let hist = trace(&prof, &source.with_domain(d), rays.unwrap_or(cfg.trace.rays), bins.unwrap_or(cfg.trace.bins))?;
            io::histogram_table(&hist, &d).save(&out.join("histogram.csv"))?;
            Plot {
                title: "traced far field",
                x_label: "sigma",
                y_label: "density",
                log_y: false,
                series: vec![Series { label: "trace", points: histogram_points(&hist) }],
            }
            .save(&out.join("histogram.svg"))?;
            println!("traced flux {} binned {} misses {}", hist.total, hist.binned_flux(), hist.misses);
            Ok(())
        }
        Command::Nmae { histogram, target } => {
            let (h, _) = io::histogram_from_table(&Table::load(&histogram)?)?;
            let t = io::target_from_table(&Table::load(&target)?)?;
            println!("{}", nmae_against(&h, &t)?);
            Ok(())
        }
        Command::SweepHeight { common, method } => {
            if method == Method::Deconv {
                return Err(CliError::Config("sweep-height runs deconvolution alongside a network method".into()));
            }
            let cfg = common.load()?;
            let out = common.out_dir()?;
            let problem = materialize(&cfg)?;
            let rows = bench::sweep_height(&problem, &cfg, method, cli.jobs)?;
            io::sweep_table(&rows).save(&out.join("sweep.csv"))?;
            Plot {
                title: "NMAE against minimum height",
                x_label: "h_min",
                y_label: "NMAE",
                log_y: true,
                series: vec![
                    Series { label: "network", points: rows.iter().map(|r| (r.h_min, r.nn_nmae)).collect() },
                    Series { label: "deconvolution", points: rows.iter().map(|r| (r.h_min, r.deconv_nmae)).collect() },
                ],
            }
            .save(&out.join("sweep.svg"))?;
            for r in &rows {
                println!("h_min {:.4}: network {:.4e} deconvolution {:.4e}", r.h_min, r.nn_nmae, r.deconv_nmae);
            }
            Ok(())
        }
        Command::LimitCheck { common } => {
            let cfg = common.load()?;
            let out = common.out_dir()?;
            let problem = materialize(&cfg)?;
            let rows = scaling_convergence(&problem.truth, &cfg.limit.lambdas, cfg.limit.grid)?;
            io::scaling_table(&rows).save(&out.join("scaling.csv"))?;
            let (_, polar) = point_source_design(&problem.source, &problem.target, cfg.limit.h)?;
            io::polar_table(&polar).save(&out.join("polar.csv"))?;
            let hist = trace_point_source(
                &polar,
                |a| problem.source.angular_marginal(a),
                cfg.limit.rays,
                problem.target.len(),
                problem.target.bounds(),
            )?;
            io::histogram_table(&hist, &problem.domain).save(&out.join("point_source_histogram.csv"))?;
            Plot {
                title: "scaling-limit error",
                x_label: "log10 lambda",
                y_label: "max error",
                log_y: true,
                series: vec![Series { label: "max error", points: rows.iter().map(|r| (r.lambda.log10(), r.max_error)).collect() }],
            }
            .save(&out.join("scaling.svg"))?;
            for r in &rows {
                println!("lambda {:e}: max error {:.3e} s-spread {:.3e}", r.lambda, r.max_error, r.s_spread);
            }
            println!("point-source design NMAE {:.4e}, min rho {:.4}", nmae_against(&hist, &problem.target)?, polar.min_rho());
            Ok(())
        }
    }
}

/// Runs one solver and writes its artifacts into `out`.
pub fn solve(problem: &Problem, cfg: &Config, method: Method, h_min: Option<f64>, out: &Path) -> Result<RunReport, CliError> {
    let mut files = Vec::new();
    let save_table = |t: Table, name: &str, files: &mut Vec<String>| -> Result<(), CliError> {
        t.save(&out.join(name))?;
        files.push(name.to_string());
        Ok(())
    };
    let (nmae, iterations, seconds, stop, hist, points) = match method {
        Method::Deconv => {
            let run = bench::run_deconv(problem, cfg, h_min)?;
            save_table(io::deconv_trace_table(&run.result.trace), "deconv_trace.csv", &mut files)?;
            save_table(io::profile_table(&run.best.profile, PROFILE_SAMPLES), "profile.csv", &mut files)?;
            Plot {
                title: "deconvolution convergence",
                x_label: "iteration",
                y_label: "NMAE",
                log_y: true,
                series: vec![Series {
                    label: "deconvolution",
                    points: run.result.trace.iter().map(|r| (r.iteration as f64, r.nmae)).collect(),
                }],
            }
            .save(&out.join("convergence.svg"))?;
            let vt = io::target_table(&reflector_core::density::TargetSpec::from_samples(
                problem.target.bounds().0,
                problem.target.bounds().1,
                run.result.best_target.clone(),
            )?);
            save_table(vt, "virtual_target.csv", &mut files)?;
            let pts = profile_points(&run.best.profile);
            let stop = format!("best iterate {}", run.result.best);
            (run.best_nmae(), cfg.deconv.iterations, run.seconds, stop, run.best.histogram, pts)
        }
        Method::Direct | Method::Mesh => {
            let run = bench::run_network(problem, cfg, method, h_min, &WallClock::start())?;
            save_table(io::optim_trace_table(&run.minimum.trace), "optim_trace.csv", &mut files)?;
            io::save_checkpoint(&run.net, &out.join("network.bin"))?;
            files.push("network.bin".into());
            let prof = bench::tabulate_network(&run.net, problem.domain)?;
            save_table(io::profile_table(&prof, PROFILE_SAMPLES), "profile.csv", &mut files)?;
            Plot {
                title: "optimizer convergence",
                x_label: "iteration",
                y_label: "loss",
                log_y: true,
                series: vec![Series {
                    label: "loss",
                    points: run.minimum.trace.iter().map(|r| (r.iteration as f64, r.loss)).collect(),
                }],
            }
            .save(&out.join("convergence.svg"))?;
            let stop = match run.stopped {
                Some(e) => e.to_string(),
                None => format!("{:?}", run.minimum.stop),
            };
            (run.nmae, run.minimum.iterations, run.seconds, stop, run.histogram, profile_points(&prof))
        }
    };
    save_table(io::histogram_table(&hist, &problem.domain), "histogram.csv", &mut files)?;
    save_table(io::target_table(&problem.target), "target.csv", &mut files)?;
    Plot {
        title: "reflector profiles",
        x_label: "s",
        y_label: "u",
        log_y: false,
        series: vec![
            Series { label: "design", points },
            Series { label: "truth", points: profile_points(&problem.truth) },
        ],
    }
    .save(&out.join("profile.svg"))?;
    let target_pts = problem.target.centers().into_iter().zip(problem.target.samples().iter().copied()).collect();
    Plot {
        title: "far field",
        x_label: "sigma",
        y_label: "density",
        log_y: false,
        series: vec![Series { label: "traced", points: histogram_points(&hist) }, Series { label: "target", points: target_pts }],
    }
    .save(&out.join("histogram.svg"))?;
    let report = RunReport { method, h_min, nmae, iterations, seconds, stop, files, config: cfg.clone() };
    write_text(&out.join("report.toml"), &toml::to_string(&report).map_err(|e| CliError::Io(e.to_string()))?)?;
    Ok(report)
}
