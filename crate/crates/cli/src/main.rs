//! `idtool`: scans, counterfactual intervals, reduction reports and data
//! simulation driven by one JSON config.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use idbounds::augment::{augment, check_nonempty, theta_tilde_interval};
use idbounds::error::{Error, Result};
use idbounds::io::{scan_summary, write_distribution_csv, write_json, write_verdicts_csv, Metadata};
use idbounds::lp::{min_violation, BoundsResult};
use idbounds::model::{DiscreteDistribution, ModelSpec};
use idbounds::models::entry::build_entry_model;
use idbounds::reduce::{irreducibility_report, reduce_model, IrreducibilityReport, ReductionCertificate};
use idbounds::scan::{scan, ScanOptions};
use rayon::prelude::*;
use serde::Serialize;

use config::{DataSource, Loaded};

#[derive(Parser)]
#[command(name = "idtool", version, about = "Identified sets and counterfactual bounds for incomplete models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Membership verdicts over the parameter grid.
    Scan(Args),
    /// Counterfactual parameter intervals over the baseline member set.
    Counterfactual(Args),
    /// Search for reducing directions and compare the reduced model.
    Reduce(Args),
    /// Write the configured simulated distribution as CSV.
    Simulate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(short, long)]
    quiet: bool,
}

/// Numerical incompleteness, as opposed to a failure.
struct Incomplete;

struct Ctx {
    loaded: Loaded,
    meta: Metadata,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        write_json(&mut w, value)?;
        w.flush()?;
        Ok(())
    }

    fn data(&self) -> Result<DiscreteDistribution> {
        self.loaded.config.load_data(&self.loaded.base_dir)
    }

    fn truncation(&self, model: &ModelSpec) -> f64 {
        let t = &self.loaded.config.truncations;
        t.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
            .unwrap_or_else(|| model.latent.default_truncation())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, args) = match &cli.command {
        Command::Scan(a) => ("scan", a),
        Command::Counterfactual(a) => ("counterfactual", a),
        Command::Reduce(a) => ("reduce", a),
        Command::Simulate(a) => ("simulate", a),
    };

    let mut out_dir = args.out.clone();
    let mut meta = None;
    let result = prepare(args).and_then(|ctx| {
        out_dir = Some(ctx.out.clone());
        meta = Some(ctx.meta.clone());
        let _ = std::fs::remove_file(ctx.out.join("diagnostics.json"));
        match &cli.command {
            Command::Scan(_) => cmd_scan(&ctx),
            Command::Counterfactual(_) => cmd_counterfactual(&ctx),
            Command::Reduce(_) => cmd_reduce(&ctx),
            Command::Simulate(_) => cmd_simulate(&ctx),
        }
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Incomplete)) => ExitCode::from(2),
        Err(e) => {
            let code = exit_code(&e);
            let diag = Diagnostic {
                metadata: meta,
                command: name,
                error: ErrorInfo {
                    kind: error_kind(&e),
                    message: e.to_string(),
                },
            };
            let text = serde_json::to_string_pretty(&diag).unwrap_or_else(|_| e.to_string());
            eprintln!("{text}");
            if let Some(dir) = out_dir {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("diagnostics.json"), format!("{text}\n"));
                }
            }
            ExitCode::from(code)
        }
    }
}

fn prepare(args: &Args) -> Result<Ctx> {
    set_threads()?;
    let loaded = config::load(&args.config)?;
    let meta = Metadata::new(loaded.hash.clone(), loaded.config.seed());
    let out = match &args.out {
        Some(o) => o.clone(),
        None if loaded.config.output_dir.is_absolute() => loaded.config.output_dir.clone(),
        None => loaded.base_dir.join(&loaded.config.output_dir),
    };
    std::fs::create_dir_all(&out)?;
    Ok(Ctx {
        loaded,
        meta,
        out,
        quiet: args.quiet,
    })
}

fn set_threads() -> Result<()> {
    let Ok(v) = std::env::var("IDTOOL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("IDTOOL_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Serialize)]
struct Diagnostic {
    metadata: Option<Metadata>,
    command: &'static str,
    error: ErrorInfo,
}

#[derive(Serialize)]
struct ErrorInfo {
    kind: &'static str,
    message: String,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Dimension(_) => "dimension",
        Error::EmptySection { .. } => "empty_section",
        Error::NonFiniteMoment { .. } => "non_finite_moment",
        Error::NumericalInstability(_) => "numerical_instability",
        Error::IterationLimit(_) => "iteration_limit",
        Error::EmptyInterval(_) => "empty_interval",
        Error::RatioDegenerate { .. } => "ratio_degenerate",
        Error::NonemptyCorrespondenceViolated { .. } => "nonempty_correspondence_violated",
        Error::NotSupported(_) => "not_supported",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

/// Input problems exit 1, numerical ones 2.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Dimension(_) | Error::NotSupported(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        _ => 2,
    }
}

type Outcome = Result<std::result::Result<(), Incomplete>>;

fn finish(complete: bool) -> Outcome {
    Ok(if complete { Ok(()) } else { Err(Incomplete) })
}

fn cmd_scan(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.loaded.config;
    let model = cfg.build_model()?;
    let data = ctx.data()?;
    let thetas = cfg.thetas.clone().unwrap_or_else(|| model.params.grid());
    let names = cfg.theta_names(model.params.dim());
    let opts = ScanOptions {
        truncations: cfg.truncations.clone(),
        criterion: cfg.criterion.clone(),
        sweep: true,
    };
    ctx.note(format!("scanning {} points of {}", thetas.len(), model.label));
    let report = scan(&model, &data, &thetas, &opts)?;
    let mut w = ctx.create("verdicts.csv")?;
    write_verdicts_csv(&mut w, &ctx.meta, &report, &names)?;
    w.flush()?;
    let summary = scan_summary(&ctx.meta, &model.label, &report, &names);
    ctx.write_json("summary.json", &summary)?;
    ctx.note(format!(
        "{} lp members, {} sf members, {} disagreements, {} errors, {:.1}s on {} threads",
        summary.members_lp,
        summary.members_sf,
        summary.disagreements.len(),
        summary.errors.len(),
        report.timing.total_secs,
        report.timing.threads
    ));
    finish(report.complete)
}

#[derive(Serialize)]
#[serde(untagged)]
enum IntervalAt {
    Bounds(BoundsResult),
    Failed { truncation: f64, error: String },
}

impl IntervalAt {
    fn bounds(&self) -> Option<&BoundsResult> {
        match self {
            IntervalAt::Bounds(b) => Some(b),
            IntervalAt::Failed { .. } => None,
        }
    }
}

#[derive(Serialize)]
struct IntervalEntry {
    theta: Vec<f64>,
    intervals: Vec<IntervalAt>,
}

#[derive(Serialize)]
struct UnionInterval {
    truncation: f64,
    lower: Option<f64>,
    upper: Option<f64>,
    lower_growing: bool,
    upper_growing: bool,
    thetas: usize,
}

#[derive(Serialize)]
struct IntervalsReport {
    metadata: Metadata,
    model: String,
    counterfactual: String,
    baseline_source: &'static str,
    entries: Vec<IntervalEntry>,
    /// Per truncation, the union over baseline points that returned an interval.
    union: Vec<UnionInterval>,
    complete: bool,
}

fn cmd_counterfactual(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.loaded.config;
    let entry = cfg.entry_config()?;
    let cf = cfg
        .counterfactual
        .as_ref()
        .ok_or_else(|| Error::Config("missing `counterfactual` block".into()))?;
    let base = build_entry_model(entry)?;
    let data = ctx.data()?;
    let spec = idbounds::models::entry::build_entry_counterfactual(entry, &cf.case, cf.target)?;
    let aug = augment(&base, &spec)?;
    let m0 = ctx.truncation(&base);
    let mut radii = cfg.truncations.clone();
    if radii.is_empty() {
        radii.push(m0);
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let (mut thetas, source) = match &cf.thetas {
        Some(t) => (t.clone(), "config"),
        None => {
            let grid = base.grid(m0)?;
            let all = base.params.grid();
            let member: Vec<bool> = all
                .par_iter()
                .map(|t| min_violation(&base, &grid, &data, t).map(|v| v.is_member()))
                .collect::<Result<_>>()?;
            (all.into_iter().zip(member).filter(|(_, m)| *m).map(|(t, _)| t).collect(), "lp_members")
        }
    };
    if let Some(k) = cf.max_thetas {
        thetas.truncate(k);
    }
    ctx.note(format!("{} baseline points for {}", thetas.len(), spec.label));
    check_nonempty(&aug, &base, &data, &thetas, m0)?;

    let entries: Vec<IntervalEntry> = thetas
        .par_iter()
        .map(|t| IntervalEntry {
            theta: t.clone(),
            intervals: radii
                .iter()
                .map(|&m| match theta_tilde_interval(&aug, &data, t, Some(m)) {
                    Ok(b) => IntervalAt::Bounds(b),
                    Err(e) => IntervalAt::Failed {
                        truncation: m,
                        error: e.to_string(),
                    },
                })
                .collect(),
        })
        .collect();

    let union = radii
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let ok: Vec<&BoundsResult> = entries.iter().filter_map(|e| e.intervals[k].bounds()).collect();
            UnionInterval {
                truncation: m,
                lower: ok.iter().map(|b| b.lower).reduce(f64::min),
                upper: ok.iter().map(|b| b.upper).reduce(f64::max),
                lower_growing: ok.iter().any(|b| b.lower_growing),
                upper_growing: ok.iter().any(|b| b.upper_growing),
                thetas: ok.len(),
            }
        })
        .collect();
    let complete = !thetas.is_empty() && entries.iter().all(|e| e.intervals.iter().all(|i| i.bounds().is_some()));
    let report = IntervalsReport {
        metadata: ctx.meta.clone(),
        model: base.label.clone(),
        counterfactual: spec.label.clone(),
        baseline_source: source,
        entries,
        union,
        complete,
    };
    ctx.write_json("intervals.json", &report)?;
    finish(complete)
}

#[derive(Serialize)]
struct DoubleScan {
    distribution: String,
    certificate: ReductionCertificate,
    points: usize,
    agree: usize,
    disagreements: Vec<usize>,
}

#[derive(Serialize)]
struct ReductionOutput {
    metadata: Metadata,
    model: String,
    truncation: f64,
    report: IrreducibilityReport,
    double_scan: Option<DoubleScan>,
}

fn cmd_reduce(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.loaded.config;
    let model = cfg.build_model()?;
    let m = ctx.truncation(&model);
    let mut family = vec![("config".to_string(), ctx.data()?)];
    if !cfg.reduce.family_seeds.is_empty() {
        let DataSource::Simulate(s) = &cfg.data else {
            return Err(Error::Config("`reduce.family_seeds` needs a simulated data source".into()));
        };
        for &seed in &cfg.reduce.family_seeds {
            family.push((format!("seed={seed}"), cfg.simulate(s, seed)?));
        }
    }
    let report = irreducibility_report(&model, m, &family, &cfg.criterion)?;
    ctx.note(format!("{} reducible, {} not reducible", report.reducible, report.not_reducible));

    let found = report
        .entries
        .iter()
        .find_map(|e| e.certificate.clone().map(|c| (e.distribution.clone(), c)));
    let double_scan = match found {
        Some((label, cert)) => {
            let data = &family.iter().find(|(l, _)| *l == label).expect("label from family").1;
            Some(double_scan(ctx, &model, data, label, cert)?)
        }
        None => None,
    };
    let complete = report.entries.iter().all(|e| e.error.is_none());
    let out = ReductionOutput {
        metadata: ctx.meta.clone(),
        model: model.label.clone(),
        truncation: m,
        report,
        double_scan,
    };
    ctx.write_json("reduction.json", &out)?;
    finish(complete)
}

/// LP membership of the original and reduced models over the parameter grid.
fn double_scan(
    ctx: &Ctx,
    model: &ModelSpec,
    data: &DiscreteDistribution,
    distribution: String,
    cert: ReductionCertificate,
) -> Result<DoubleScan> {
    let reduced = reduce_model(model, &cert)?;
    let grid = model.grid(cert.truncation)?;
    let thetas = model.params.grid();
    let rows: Vec<[(f64, bool); 2]> = thetas
        .par_iter()
        .map(|t| {
            let a = min_violation(model, &grid, data, t)?;
            let b = min_violation(&reduced, &grid, data, t)?;
            Ok([(a.value, a.is_member()), (b.value, b.is_member())])
        })
        .collect::<Result<_>>()?;
    let mut w = ctx.create("reduction_scan.csv")?;
    writeln!(w, "{}", ctx.meta.header_line())?;
    let mut csv = csv::Writer::from_writer(w);
    let mut header = ctx.loaded.config.theta_names(model.params.dim());
    header.extend(["violation_original", "violation_reduced", "member_original", "member_reduced"].map(String::from));
    csv.write_record(&header)?;
    let mut disagreements = Vec::new();
    for (i, (t, &[(a, ma), (b, mb)])) in thetas.iter().zip(&rows).enumerate() {
        if ma != mb {
            disagreements.push(i);
        }
        let mut rec: Vec<String> = t.iter().map(|x| x.to_string()).collect();
        rec.extend([a.to_string(), b.to_string(), ma.to_string(), mb.to_string()]);
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(DoubleScan {
        distribution,
        certificate: cert,
        points: thetas.len(),
        agree: thetas.len() - disagreements.len(),
        disagreements,
    })
}

fn cmd_simulate(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.loaded.config;
    let DataSource::Simulate(_) = &cfg.data else {
        return Err(Error::Config("`simulate` needs a simulated data source".into()));
    };
    let data = ctx.data()?;
    let mut w = ctx.create("data.csv")?;
    write_distribution_csv(&mut w, Some(&ctx.meta), &data)?;
    w.flush()?;
    ctx.note(format!("{} atoms written to {}", data.len(), display(&ctx.out.join("data.csv"))));
    finish(true)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
