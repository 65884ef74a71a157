//! The `meta-audit` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::combine::{dl_pool, elston_flags, fisher_combine};
use crate::diagnostics::{build_pvalue_plot, classify_plot};
use crate::error::{Error, Result};
use crate::io::{
    parse_counts_csv, parse_studies_csv, render_pvalue_plot_svg, write_json, write_report_json,
    AuditReport, SimulationReport,
};
use crate::io::report::SCHEMA_VERSION;
use crate::robustness::{breakdown_report, leave_one_out, min_flip_pvalue, Method};
use crate::searchspace::{compute_spaces, summarize_spaces};
use crate::simulate::{run_monte_carlo_threads, SimulationConfig};
use crate::study::MetaDataset;

/// Environment variable capping the simulation worker count (0 = automatic).
pub const THREADS_ENV: &str = "META_AUDIT_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "meta-audit", version, about = "Audit meta-analyses for robustness, p-hacking and publication bias")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Combine studies with Fisher's method or DerSimonian-Laird pooling
    Combine {
        #[arg(long, default_value = "fisher")]
        method: Method,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        io: InOut,
    },
    /// P-value plot, two-segment fit and shape classification
    Diagnose {
        #[command(flatten)]
        io: InOut,
        /// Write the p-value plot as SVG
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Leave-one-out influence and the single-study flip threshold
    Robustness {
        #[arg(long, default_value = "fisher")]
        method: Method,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        io: InOut,
    },
    /// What one contaminating study does to identical background p-values
    Breakdown {
        /// Number of background studies
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Background p-value
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analysis search-space sizes from outcome/predictor/covariate counts
    Searchspace {
        #[command(flatten)]
        io: InOut,
    },
    /// Monte Carlo of p-hacked, publication-biased and contaminated literatures
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct InOut {
    /// Input CSV file
    #[arg(long)]
    input: PathBuf,
    /// Write the JSON report here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// key=value file; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Published studies per meta-analysis
    #[arg(long)]
    k: Option<usize>,
    /// Analyses tried per study (1 = no p-hacking)
    #[arg(long = "hack-width")]
    hack_width: Option<u32>,
    /// Publication probability of non-significant studies (1 = no bias)
    #[arg(long)]
    rho: Option<f64>,
    /// Fabricated p-value appended to every meta-analysis
    #[arg(long = "contaminate-p")]
    contaminate_p: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also simulate effects and pool them with DerSimonian-Laird
    #[arg(long)]
    dl: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_DATA
            }
        }
    }
}

enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult = std::result::Result<(), CliError>;

fn check_alpha(alpha: f64) -> CliResult {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--alpha {alpha} must be in (0, 1)")))
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Combine { method, alpha, io } => {
            check_alpha(alpha)?;
            combine(method, alpha, &io)
        }
        Command::Diagnose { io, svg } => diagnose(&io, svg.as_deref()),
        Command::Robustness { method, alpha, io } => {
            check_alpha(alpha)?;
            robustness(method, alpha, &io)
        }
        Command::Breakdown { n, p, alpha, out } => {
            check_alpha(alpha)?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(CliError::Usage(format!("--p {p} must be in (0, 1]")));
            }
            let b = breakdown_report(n, p, alpha)?;
            println!("{b}");
            if let Some(out) = out {
                let mut report = AuditReport::new(format!("{n} x p={p}"));
                report.alpha = Some(alpha);
                report.breakdown = Some(b);
                write_report_json(&report, &out)?;
            }
            Ok(())
        }
        Command::Searchspace { io } => searchspace(&io),
        Command::Simulate(args) => simulate(args),
    }
}

fn finish(report: &AuditReport, out: Option<&Path>) -> CliResult {
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if let Some(out) = out {
        write_report_json(report, out)?;
    }
    Ok(())
}

fn load(io: &InOut) -> Result<MetaDataset<f64>> {
    parse_studies_csv(&io.input)
}

fn combine(method: Method, alpha: f64, io: &InOut) -> CliResult {
    let ds = load(io)?;
    let mut report = AuditReport::new(ds.label.clone());
    report.method = Some(method);
    report.alpha = Some(alpha);
    match method.pool_mode() {
        None => {
            let ps = ds.pvalues()?;
            let f = fisher_combine(&ps)?;
            let ids: Vec<String> = ds.studies.iter().map(|s| s.id.clone()).collect();
            for w in f.warnings(&ids) {
                report.warn(w);
            }
            println!(
                "fisher: k={} X2={:.6} df={} combined_p={:.6e} {} at alpha={alpha}",
                ps.len(),
                f.statistic,
                f.df,
                f.combined_p,
                if f.significant(alpha) { "significant" } else { "not significant" },
            );
            println!(
                "studies with p < 1/e (above-null Fisher contribution): {}",
                elston_flags(&ps).len()
            );
            report.fisher = Some(f);
        }
        Some(mode) => {
            let (e, s) = ds.effects_and_ses()?;
            let r = dl_pool(&e, &s, mode)?;
            println!(
                "dl-{mode}: k={} pooled={:.6} se={:.6} ci95=({:.6}, {:.6}) RR={:.4} ({:.4}, {:.4}) tau2={:.6} Q={:.4}",
                e.len(),
                r.pooled,
                r.se_pooled,
                r.ci95.0,
                r.ci95.1,
                r.pooled.exp(),
                r.ci95.0.exp(),
                r.ci95.1.exp(),
                r.tau2,
                r.q_statistic,
            );
            report.dl = Some(r);
        }
    }
    finish(&report, io.out.as_deref())
}

fn diagnose(io: &InOut, svg: Option<&Path>) -> CliResult {
    let ds = load(io)?;
    let plot = build_pvalue_plot(&ds)?;
    let diag = classify_plot(&plot)?;
    let mut report = AuditReport::new(ds.label.clone());
    println!(
        "n={} classification={} frac_below_0.05={:.4} elston={} definitive(p<=0.001)={} min_p_direction={}",
        diag.n,
        diag.classification,
        diag.frac_below_005,
        diag.elston_count,
        diag.definitive_count,
        diag.min_p_direction
    );
    if let Some(f) = &diag.single_fit {
        println!("single line: slope={:.4} intercept={:.4} sse={:.6}", f.slope, f.intercept, f.sse);
    }
    match &diag.two_segment {
        Some(t) => println!(
            "two segments: breakpoint after rank {} left slope={:.4} right slope={:.4} sse={:.6}",
            t.breakpoint_rank, t.left_fit.slope, t.right_fit.slope, t.combined_sse
        ),
        None => report.warn(format!("{} studies: too few for a two-segment fit", diag.n)),
    }
    if let Some(path) = svg {
        render_pvalue_plot_svg(&plot, &diag, &format!("P-value plot: {}", ds.label), path)?;
        println!("wrote {}", path.display());
    }
    report.diagnostics = Some(diag);
    finish(&report, io.out.as_deref())
}

fn robustness(method: Method, alpha: f64, io: &InOut) -> CliResult {
    let ds = load(io)?;
    let mut report = AuditReport::new(ds.label.clone());
    report.method = Some(method);
    report.alpha = Some(alpha);
    let records = leave_one_out(&ds, method, alpha)?;
    println!("{:<16} {:>14} {:>8} {:>8}", "removed", "delta", "sig w/o", "flip");
    for r in &records {
        println!(
            "{:<16} {:>14.6e} {:>8} {:>8}",
            r.study_id,
            r.delta,
            r.significant_without,
            if r.verdict_flip { "FLIP" } else { "-" }
        );
    }
    let flips = records.iter().filter(|r| r.verdict_flip).count();
    println!("{flips} of {} single-study removals change the verdict", records.len());
    if method == Method::Fisher {
        let ps = ds.pvalues()?;
        if let Ok(f) = fisher_combine(&ps) {
            let ids: Vec<String> = ds.studies.iter().map(|s| s.id.clone()).collect();
            for w in f.warnings(&ids) {
                report.warn(w);
            }
        }
        let p_star = min_flip_pvalue(&ds, alpha)?;
        if p_star < 1.0 {
            println!("one added study with p < {p_star:.4e} makes the Fisher combination significant");
        } else {
            println!("any added study keeps the Fisher combination significant");
        }
        report.min_flip_pvalue = Some(p_star);
    }
    report.influence = Some(records);
    finish(&report, io.out.as_deref())
}

fn fmt_quantile(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x}")
    }
}

fn searchspace(io: &InOut) -> CliResult {
    let rows = parse_counts_csv(&io.input)?;
    let label = io
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut report = AuditReport::new(label);
    let mut records = Vec::with_capacity(rows.len());
    println!(
        "{:<12} {:>8} {:>10} {:>10} {:>5} {:>8} {:>20} {:>20}",
        "id", "outcomes", "predictors", "covariates", "lags", "space1", "space2", "space3"
    );
    for row in &rows {
        let rec = compute_spaces(&row.counts)?;
        if let Some(printed) = row.reported {
            let got = [rec.space1, rec.space2, rec.space3];
            if got != printed {
                report.warn(format!(
                    "study {}: computed spaces {got:?} differ from reported {printed:?}",
                    rec.id
                ));
            }
        }
        println!(
            "{:<12} {:>8} {:>10} {:>10} {:>5} {:>8} {:>20} {:>20}",
            rec.id, rec.outcomes, rec.predictors, rec.covariates, rec.lags, rec.space1, rec.space2, rec.space3
        );
        records.push(rec);
    }
    let summary = summarize_spaces(&records)?;
    println!(
        "space3: n={} median={} q1={} q3={}",
        records.len(),
        fmt_quantile(summary.median),
        fmt_quantile(summary.q1),
        fmt_quantile(summary.q3)
    );
    report.searchspace = Some(records);
    report.searchspace_summary = Some(summary);
    finish(&report, io.out.as_deref())
}

fn threads_from_env() -> std::result::Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count"))),
    }
}

fn simulate(args: SimulateArgs) -> CliResult {
    let mut cfg = SimulationConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        cfg.apply_kv(&text, path)?;
    }
    if let Some(v) = args.k {
        cfg.k_studies = v;
    }
    if let Some(v) = args.hack_width {
        cfg.hack_width = v;
    }
    if let Some(v) = args.rho {
        cfg.pub_bias_rho = v;
    }
    if let Some(v) = args.contaminate_p {
        cfg.contaminate_p = Some(v);
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.reps {
        cfg.replicates = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.dl_arm |= args.dl;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let threads = threads_from_env()?;
    let result = run_monte_carlo_threads(&cfg, threads)?;
    print!(
        "k={} m={} rho={} alpha={} reps={} seed={}: fisher_reject_rate={:.4}",
        cfg.k_studies, cfg.hack_width, cfg.pub_bias_rho, cfg.alpha, cfg.replicates, cfg.seed, result.fisher_reject_rate
    );
    if let Some(r) = result.dl_reject_rate {
        print!(" dl_reject_rate={r:.4}");
    }
    println!(" mean_generated={:.2}", result.mean_k_published);
    if let Some(out) = &args.out {
        let report = SimulationReport {
            schema: SCHEMA_VERSION,
            config: cfg,
            result,
        };
        write_json(&report, out)?;
    }
    Ok(())
}
