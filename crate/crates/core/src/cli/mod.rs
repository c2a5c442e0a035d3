//! The `dirdistill` command line.
//!
//! Every subcommand reads one JSON config (`--config`, defaults when
//! omitted for commands that have them) and writes its outputs into `--out`.
//! Primary outputs depend only on the config; the wall-clock start time and
//! duration go to `run.log` in the same directory.
//!
//! Exit codes: 0 on success, 1 for usage, config and I/O errors, 2 for a
//! numerical abort or a failed self-test.

pub mod config;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::classify::{self, checkpoint::write_checkpoint, ClassifyConfig};
use crate::dirichlet::DirichletParams;
use crate::error::{Error, Result};
use crate::grad_ratio::sweep;
use crate::proxy::fit_proxy_detailed;
use crate::selftest::{report_csv, run_selftest};
use crate::sequence::{self, SeqConfig};
use crate::BUILD_ID;
use config::{
    load_config, load_required, FitProxyConfig, GradRatioConfig, SelftestConfig, UncertaintyConfig,
};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "DIRDISTILL_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "dirdistill",
    version,
    about = "Ensemble distribution distillation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: $DIRDISTILL_THREADS, else one per core).
    #[arg(long)]
    threads: Option<usize>,
    /// Do not list written files on stdout.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gradient-ratio sweep to grad_ratio.csv.
    GradRatio {
        #[command(flatten)]
        common: Common,
        /// Also write every logit gradient to grad_ratio_grads.json.
        #[arg(long)]
        dump_grads: bool,
    },
    /// Proxy-Dirichlet for an ensemble slice, to proxy.json.
    FitProxy {
        #[command(flatten)]
        common: Common,
    },
    /// Uncertainty measures of a slice or a Dirichlet, to uncertainty.json.
    Uncertainty {
        #[command(flatten)]
        common: Common,
    },
    /// Classification pipeline: metrics.json, loss_trace.csv, models.ddml.
    DistillClassify {
        #[command(flatten)]
        common: Common,
    },
    /// Sequence pipeline: metrics.json, uncertainty.csv, transfer.ndjson,
    /// loss_trace.csv.
    DistillSeq {
        #[command(flatten)]
        common: Common,
    },
    /// Invariant suite, to selftest.csv.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GradRatio { common, .. }
            | Command::FitProxy { common }
            | Command::Uncertainty { common }
            | Command::DistillClassify { common }
            | Command::DistillSeq { common }
            | Command::Selftest { common } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::GradRatio { .. } => "grad-ratio",
            Command::FitProxy { .. } => "fit-proxy",
            Command::Uncertainty { .. } => "uncertainty",
            Command::DistillClassify { .. } => "distill-classify",
            Command::DistillSeq { .. } => "distill-seq",
            Command::Selftest { .. } => "selftest",
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    build: &'a str,
    config: &'a C,
    report: &'a R,
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn with_file<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(fs::File::create(&path)?);
        f(&mut w)?;
        std::io::Write::flush(&mut w)?;
        self.written.push(path);
        Ok(())
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn execute(cmd: &Command, out: &mut Outputs<'_>) -> Result<()> {
    let config = cmd.common().config.as_deref();
    match cmd {
        Command::GradRatio { dump_grads, .. } => {
            let cfg: GradRatioConfig = load_config(config)?;
            let table = sweep(
                &cfg.losses,
                &cfg.k_values,
                &cfg.scenarios,
                &cfg.sweep,
                *dump_grads,
            )?;
            out.write("grad_ratio.csv", table.to_csv().as_bytes())?;
            if *dump_grads {
                out.json(
                    "grad_ratio_grads.json",
                    &Envelope {
                        build: BUILD_ID,
                        config: &cfg,
                        report: &table,
                    },
                )?;
            }
        }
        Command::FitProxy { .. } => {
            let cfg: FitProxyConfig = load_required(required(config)?)?;
            let fit = fit_proxy_detailed(&cfg.members, &cfg.proxy)?;
            out.json(
                "proxy.json",
                &Envelope {
                    build: BUILD_ID,
                    config: &cfg,
                    report: &fit,
                },
            )?;
        }
        Command::Uncertainty { .. } => {
            let cfg: UncertaintyConfig = load_required(required(config)?)?;
            let report = match (&cfg.members, &cfg.alpha) {
                (Some(slice), None) => slice.report()?,
                (None, Some(alpha)) => DirichletParams::new(alpha.clone())?.report(),
                _ => {
                    return Err(Error::Config {
                        path: ".".into(),
                        message: "give exactly one of `members` or `alpha`".into(),
                    })
                }
            };
            out.json(
                "uncertainty.json",
                &Envelope {
                    build: BUILD_ID,
                    config: &cfg,
                    report: &report,
                },
            )?;
        }
        Command::DistillClassify { .. } => {
            let cfg: ClassifyConfig = load_config(config)?;
            let (report, models) = classify::run_pipeline(&cfg)?;
            out.json(
                "metrics.json",
                &Envelope {
                    build: BUILD_ID,
                    config: &cfg,
                    report: &report,
                },
            )?;
            out.write(
                "loss_trace.csv",
                classify::pipeline::loss_trace_csv(&report).as_bytes(),
            )?;
            let mut labelled: Vec<(String, &crate::nn::Mlp)> = models
                .members
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("member{i}"), m))
                .collect();
            labelled.extend(
                models
                    .students
                    .iter()
                    .map(|(mode, m)| (mode.name().to_string(), m)),
            );
            out.with_file("models.ddml", |w| write_checkpoint(w, &labelled))?;
        }
        Command::DistillSeq { .. } => {
            let cfg: SeqConfig = load_config(config)?;
            let (report, models) = sequence::run_seq_pipeline(&cfg)?;
            out.json(
                "metrics.json",
                &Envelope {
                    build: BUILD_ID,
                    config: &cfg,
                    report: &report,
                },
            )?;
            out.write(
                "uncertainty.csv",
                sequence::uncertainty_csv(&report.uncertainty).as_bytes(),
            )?;
            out.write(
                "loss_trace.csv",
                sequence::seq_loss_trace_csv(&report).as_bytes(),
            )?;
            out.with_file("transfer.ndjson", |w| models.transfer.write_ndjson(w))?;
        }
        Command::Selftest { .. } => {
            let cfg: SelftestConfig = load_config(config)?;
            let checks = run_selftest(cfg.seed)?;
            out.write("selftest.csv", report_csv(&checks).as_bytes())?;
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| c.name)
                .collect();
            if !failed.is_empty() {
                return Err(Error::Numerical(format!(
                    "self-test checks failed: {}",
                    failed.join(", ")
                )));
            }
        }
    }
    Ok(())
}

fn required(config: Option<&Path>) -> Result<&Path> {
    config.ok_or_else(|| Error::InvalidArgument("this command needs --config".into()))
}

fn write_run_log(
    dir: &Path,
    cmd: &Command,
    threads: usize,
    started: SystemTime,
    elapsed: f64,
    status: &str,
) {
    let unix = started
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let config = cmd
        .common()
        .config
        .as_ref()
        .map_or("(defaults)".to_string(), |p| p.display().to_string());
    let text = format!(
        "build: {BUILD_ID}\ncommand: {}\nconfig: {config}\nthreads: {threads}\nstarted_unix: {unix}\nelapsed_s: {elapsed:.3}\nstatus: {status}\n",
        cmd.name()
    );
    if let Err(e) = fs::write(dir.join("run.log"), text) {
        eprintln!("warning: could not write run.log: {e}");
    }
}

fn run_command(cmd: &Command) -> Result<Vec<PathBuf>> {
    let common = cmd.common();
    let threads = thread_count(common.threads)?;
    fs::create_dir_all(&common.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut out = Outputs {
        dir: &common.out,
        written: Vec::new(),
    };
    let result = pool.install(|| execute(cmd, &mut out));
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error (exit {}): {e}", e.exit_code()),
    };
    write_run_log(
        &common.out,
        cmd,
        pool.current_num_threads(),
        started,
        clock.elapsed().as_secs_f64(),
        &status,
    );
    result.map(|()| out.written)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(&cli.command) {
        Ok(written) => {
            if !cli.command.common().quiet {
                for p in written {
                    println!("wrote {}", p.display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
