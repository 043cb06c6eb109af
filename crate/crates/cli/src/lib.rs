//! The `llgas` command line.
//!
//! Exit codes: 0 when every requested check passes, 1 when a check fails,
//! 2 on usage errors or unusable input.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use llgas_core::cadlag::{skorokhod_distance, CadlagPath};
use llgas_core::engine::{
    bundle, run_bundle, simulate_trajectory, threads_from_env, BundleReport, ExperimentConfig, Report,
    Settings, BUNDLES,
};
use llgas_core::renewal::tau_moment_report;
use llgas_core::{Error, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "llgas", version, about = "Lévy–Lorentz gas simulation and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Overrides {
    /// Replace the seed of every experiment.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the replica count of every experiment.
    #[arg(long)]
    replicas: Option<usize>,
    /// Replace the horizon (steps or time scale) of every experiment.
    #[arg(long)]
    horizon: Option<f64>,
}

impl Overrides {
    fn apply(&self, settings: &mut Settings) {
        settings.seed = self.seed.or(settings.seed);
        settings.replicas = self.replicas.or(settings.replicas);
        settings.horizon = self.horizon.or(settings.horizon);
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trajectory and export it as CSV.
    Simulate {
        /// Experiment config (JSON); defaults to the standard configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Replica index whose stream drives the trajectory.
        #[arg(long, default_value_t = 0)]
        replica: u64,
        /// Trajectory CSV (k,S_k,X_k,T_k); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the interpolated track (t,x) here.
        #[arg(long)]
        track: Option<PathBuf>,
        /// Grid step of the interpolated track.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
    },
    /// Run a check bundle, or an experiment file, and report pass/fail.
    Verify {
        /// One of the built-in bundles, or a JSON file holding an
        /// experiment config or a list of them.
        bundle: String,
        /// Settings file overriding the standard configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Report JSON destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report CSV destination.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Scaled moments of the first regeneration time.
    RenewalDiag {
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 3, 4, 5])]
        lengths: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, 2.0])]
        moments: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        replicas: usize,
        #[arg(long, default_value_t = llgas_core::engine::STANDARD_SEED)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Skorokhod distance between two paths stored as CSV.
    Skorokhod {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Number of series terms; defaults to the largest the windows allow.
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Re-emit a report JSON as CSV.
    Export {
        /// Report or bundle report JSON.
        report: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv` (program name first) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Simulate { config, overrides, replica, out, track, dt } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::from_json(&read(&p)?)?,
                None => {
                    let mut c = bundle("clt-discrete", &Settings::default())?.remove(0);
                    c.name = "simulate".into();
                    c.horizon = 1000.0;
                    c.replicas = 1;
                    c
                }
            };
            let mut settings = Settings::default();
            overrides.apply(&mut settings);
            settings.apply(&mut cfg);
            let traj = simulate_trajectory(&cfg, replica)?;
            traj.write_csv(sink(&out)?)?;
            if let Some(path) = track {
                traj.write_track_csv(io::BufWriter::new(create(&path)?), dt)?;
            }
            Ok(EXIT_PASS)
        }
        Command::Verify { bundle: name, config, overrides, out, csv } => {
            let mut settings = match config {
                Some(p) => Settings::from_json(&read(&p)?)?,
                None => Settings::default(),
            };
            overrides.apply(&mut settings);
            let (label, experiments) = experiments_for(&name, &settings)?;
            let report = run_bundle(&label, &experiments, threads_from_env())?;
            print_summary(&report);
            if let Some(path) = out {
                fs::write(&path, report.to_json()?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            }
            if let Some(path) = csv {
                report.write_csv(io::BufWriter::new(create(&path)?))?;
            }
            Ok(if report.pass { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::RenewalDiag { lengths, moments, replicas, seed, out } => {
            let report = tau_moment_report(&lengths, &moments, replicas, seed)?;
            report.write_csv(sink(&out)?)?;
            for b in &report.bands {
                eprintln!(
                    "{} p={} min={} max={} ratio={}",
                    if b.ok { "PASS" } else { "FAIL" },
                    b.p,
                    b.min,
                    b.max,
                    b.ratio
                );
            }
            Ok(if report.all_bands_ok() { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Skorokhod { a, b, n_max } => {
            let pa = CadlagPath::read_csv(BufReader::new(fs::File::open(&a)?))?;
            let pb = CadlagPath::read_csv(BufReader::new(fs::File::open(&b)?))?;
            let n_max = match n_max {
                Some(n) => n,
                None => {
                    let half = [-pa.lo(), pa.hi(), -pb.lo(), pb.hi()]
                        .into_iter()
                        .fold(f64::INFINITY, f64::min);
                    let n = (half - 1.0).floor();
                    if n < 1.0 {
                        return Err(Error::InvalidWindow("paths must cover at least [-2, 2]".into()));
                    }
                    n as u32
                }
            };
            let d = skorokhod_distance(&pa, &pb, n_max)?;
            println!("{:?}", d.value);
            Ok(EXIT_PASS)
        }
        Command::Export { report, out } => {
            let text = read(&report)?;
            let mut w = sink(&out)?;
            if let Ok(bundle) = serde_json::from_str::<BundleReport>(&text) {
                bundle.write_csv(&mut w)?;
            } else {
                let single: Report = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: not a report: {e}", report.display())))?;
                single.write_csv(&mut w)?;
            }
            Ok(EXIT_PASS)
        }
    }
}

/// A built-in bundle, or experiments read from a JSON file.
fn experiments_for(name: &str, settings: &Settings) -> Result<(String, Vec<ExperimentConfig>)> {
    if BUNDLES.contains(&name) {
        return Ok((name.to_string(), bundle(name, settings)?));
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{name:?} is neither a bundle ({}) nor a config file",
            BUNDLES.join(", ")
        )));
    }
    let text = read(path)?;
    let mut experiments: Vec<ExperimentConfig> = match serde_json::from_str::<Vec<ExperimentConfig>>(&text) {
        Ok(list) => list,
        Err(_) => vec![ExperimentConfig::from_json(&text)?],
    };
    for cfg in &mut experiments {
        settings.apply(cfg);
    }
    let label = path.file_stem().map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned());
    Ok((label, experiments))
}

fn print_summary(report: &BundleReport) {
    for r in &report.experiments {
        for c in &r.checks {
            println!(
                "{} {} {} estimate={} target={} tolerance={} stderr={}",
                if c.pass { "PASS" } else { "FAIL" },
                r.config.name,
                c.stat,
                c.estimate,
                c.target,
                c.tolerance,
                c.stderr
            );
        }
    }
    println!("{} {}", if report.pass { "PASS" } else { "FAIL" }, report.bundle);
}
