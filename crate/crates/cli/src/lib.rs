//! Command-line front end: generate, verify and inspect counterexample
//! artifacts.
//!
//! Exit codes: 0 success, 1 failed verification or runtime error, 2 usage
//! error, 3 no certificate could be produced.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::Zero;
use treeshift::construct::{
    generate, verify_artifact, ConstructError, CounterexampleArtifact, CounterexampleRequest,
    CounterexampleShift, VerifyOptions, DEFAULT_WINDOW,
};
use treeshift::interval::Interval;
use treeshift::measures::{CertConfig, SequenceSpec};
use treeshift::rational::{format_rational, parse_rational, pow2, powi, to_decimal, Rational};
use treeshift::shift::{dense_defined_power, DomainVerdict, ShiftError};
use treeshift::tree::{Extent, TruncationWindow, VertexId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_CERTIFICATE: i32 = 3;

/// Largest `--count` accepted by `partial-sums`.
pub const MAX_PARTIAL_SUMS: u64 = 1_000_000;

#[derive(Parser, Debug)]
#[command(name = "treeshift", version, about = "Certified weighted shifts on directed trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a shift whose n-th power is densely defined and the next is not.
    Generate(Box<GenerateArgs>),
    /// Re-run every check on an artifact.
    Verify(VerifyArgs),
    /// Decide dense definedness of one power.
    DomainCheck(DomainArgs),
    /// Summarise an artifact.
    Report(ReportArgs),
    /// Partial sums of sum_i alpha_i q_i^l as CSV.
    PartialSums(PartialSumArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CertArgs {
    /// Target width of series enclosures.
    #[arg(long, value_parser = parse_positive_rational)]
    pub width: Option<Rational>,
    /// Level a divergence witness must exceed.
    #[arg(long, value_parser = parse_positive_rational)]
    pub threshold: Option<Rational>,
    #[arg(long)]
    pub max_terms: Option<u64>,
    #[arg(long)]
    pub scan_horizon: Option<u64>,
    #[arg(long)]
    pub power_cap: Option<u32>,
}

impl CertArgs {
    fn apply(&self, mut cfg: CertConfig) -> CertConfig {
        if let Some(w) = &self.width {
            cfg.width = w.clone();
        }
        if let Some(t) = &self.threshold {
            cfg.threshold = t.clone();
        }
        if let Some(m) = self.max_terms {
            cfg.max_terms = m;
        }
        if let Some(h) = self.scan_horizon {
            cfg.scan_horizon = h;
        }
        if let Some(p) = self.power_cap {
            cfg.power_cap = p;
        }
        cfg
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct WindowArgs {
    #[arg(long)]
    pub max_trunk: Option<u64>,
    #[arg(long)]
    pub max_branch: Option<u64>,
    #[arg(long)]
    pub max_depth: Option<u64>,
}

impl WindowArgs {
    fn is_empty(&self) -> bool {
        self.max_trunk.is_none() && self.max_branch.is_none() && self.max_depth.is_none()
    }

    fn over(&self, base: TruncationWindow) -> TruncationWindow {
        TruncationWindow {
            max_trunk: self.max_trunk.unwrap_or(base.max_trunk),
            max_branch: self.max_branch.unwrap_or(base.max_branch),
            max_depth: self.max_depth.unwrap_or(base.max_depth),
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: u32,
    /// Trunk length: a nonnegative integer or `inf`.
    #[arg(long)]
    pub kappa: Extent,
    /// linear, mixed, constant:R or table:a,b,..;tail=linear|constant:R
    #[arg(long, default_value = "linear")]
    pub q: SequenceSpec,
    /// Positive factor applied to every alpha_i.
    #[arg(long, value_parser = parse_positive_rational)]
    pub alpha_scale: Option<Rational>,
    #[command(flatten)]
    pub cert: CertArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Output path; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub artifact: PathBuf,
    /// Window overrides; they may only shrink the stored window.
    #[command(flatten)]
    pub window: WindowArgs,
    /// Residual tolerance (defaults to the stored enclosure width).
    #[arg(long, value_parser = parse_positive_rational)]
    pub tolerance: Option<Rational>,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct DomainArgs {
    pub artifact: PathBuf,
    #[arg(long)]
    pub power: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    pub artifact: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct PartialSumArgs {
    pub artifact: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub exponent: i64,
    #[arg(long)]
    pub count: u64,
    /// Output path; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_positive_rational(s: &str) -> Result<Rational, String> {
    let x = parse_rational(s).map_err(|e| e.to_string())?;
    if x <= Rational::zero() {
        return Err(format!("{s} is not positive"));
    }
    Ok(x)
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Construct(e) if e.is_no_certificate() => EXIT_NO_CERTIFICATE,
            CliError::Construct(
                ConstructError::InvalidRequest(_) | ConstructError::Sequence(_),
            ) => EXIT_USAGE,
            CliError::Shift(ShiftError::Cert(_)) => EXIT_NO_CERTIFICATE,
            CliError::Shift(ShiftError::PowerCap { .. }) => EXIT_USAGE,
            _ => EXIT_FAILED,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Generate(a) => cmd_generate(*a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::DomainCheck(a) => cmd_domain(a, out),
        Command::Report(a) => cmd_report(a, out),
        Command::PartialSums(a) => cmd_partial_sums(a, out),
    }
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => out
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

pub fn load_artifact(path: &Path) -> Result<CounterexampleArtifact, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(CounterexampleArtifact::from_json(&text)?)
}

fn cmd_generate(a: GenerateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut req = CounterexampleRequest::new(a.n, a.kappa, a.q);
    req.cert = a.cert.apply(req.cert);
    if !a.window.is_empty() {
        let w = a.window.over(DEFAULT_WINDOW);
        req.window = Some(
            TruncationWindow::new(w.max_trunk, w.max_branch, w.max_depth)
                .map_err(|e| CliError::Usage(e.to_string()))?,
        );
    }
    if let Some(s) = a.alpha_scale {
        req.alpha_scale = s;
    }
    let artifact = generate(&req)?;
    write_or_print(a.out.as_deref(), &artifact.to_json(), out)?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let artifact = match load_artifact(&a.artifact) {
        Ok(x) => x,
        Err(CliError::Construct(ConstructError::Malformed(m))) => {
            writeln!(out, "FAIL: malformed artifact: {m}").map_err(io_err(&a.artifact))?;
            return Ok(EXIT_FAILED);
        }
        Err(e) => return Err(e),
    };
    let window = (!a.window.is_empty()).then(|| a.window.over(artifact.window));
    if let Some(w) = window {
        if !w.within(&artifact.window) {
            return Err(CliError::Usage(format!(
                "window overrides may only shrink the stored window (trunk={} branch={} depth={})",
                artifact.window.max_trunk, artifact.window.max_branch, artifact.window.max_depth
            )));
        }
    }
    let opts = VerifyOptions {
        window,
        tolerance: a.tolerance,
    };
    let report = verify_artifact(&artifact, &opts)?;
    let stdout = io_err(Path::new("<stdout>"));
    let text = if a.json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        let mut s = String::new();
        if report.passed {
            s.push_str(&format!(
                "PASS: all checks hold on window trunk={} branch={} depth={} (tolerance {})\n",
                report.window.max_trunk,
                report.window.max_branch,
                report.window.max_depth,
                format_rational(&report.tolerance)
            ));
        } else {
            s.push_str(&format!("FAIL: {} check(s) failed\n", report.failures.len()));
            for f in &report.failures {
                s.push_str(&format!("  {f}\n"));
            }
        }
        s
    };
    out.write_all(text.as_bytes()).map_err(stdout)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
}

fn shift_of(artifact: &CounterexampleArtifact) -> (treeshift::construct::GeneratedAlpha, treeshift::tree::DirectedTreeSpec) {
    (artifact.request.alpha(), artifact.request.tree())
}

fn cmd_domain(a: DomainArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let artifact = load_artifact(&a.artifact)?;
    let (alpha, tree) = shift_of(&artifact);
    let shift = CounterexampleShift::new(
        &alpha,
        &artifact.c,
        &artifact.request.alpha_scale,
        &artifact.weights,
        &tree,
        artifact.window,
    );
    let report = dense_defined_power(&shift, a.power, &artifact.request.cert)?;
    let verdict = if report.densely_defined {
        "densely defined"
    } else {
        "NOT densely defined"
    };
    let mut s = format!("S^{}: {verdict}\n", a.power);
    for c in &report.certificates {
        match &c.verdict {
            DomainVerdict::InDomain { norm_sq, .. } => s.push_str(&format!(
                "  e_{} in D(S^{}), ||S^{} e||^2 in [{}, {}] (~ {})\n",
                c.vertex,
                a.power,
                a.power,
                format_rational(norm_sq.lo()),
                format_rational(norm_sq.hi()),
                to_decimal(&norm_sq.midpoint(), 12)
            )),
            DomainVerdict::NotInDomain { .. } => {
                s.push_str(&format!("  e_{} not in D(S^{})\n", c.vertex, a.power))
            }
        }
    }
    s.push_str(&serde_json::to_string_pretty(&report.certificates)?);
    s.push('\n');
    out.write_all(s.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(EXIT_OK)
}

/// Named quantities of an artifact, with enclosures.
fn summary_rows(a: &CounterexampleArtifact) -> Vec<(String, Interval)> {
    let mut rows = vec![("c".to_string(), a.c.clone())];
    for t in &a.trunk_sums {
        rows.push((format!("A_{}", t.l), t.scaled.clone()));
    }
    for l in 0..a.request.trunk_weight_count() {
        if let Some(w) = a.weights.get(VertexId::Trunk(l)) {
            rows.push((format!("|lambda_-{l}|^2"), w.clone()));
        }
    }
    if let DomainVerdict::InDomain { norm_sq, .. } = &a.certificates.power_n.verdict {
        rows.push((format!("||S^{} e_0||^2", a.request.n), norm_sq.clone()));
    }
    rows.push((
        "consistency_max_residual".into(),
        Interval::point(a.certificates.consistency_max.sup.clone()),
    ));
    rows.push((
        "cc_max_residual".into(),
        Interval::point(a.certificates.composition.cc_max_residual.sup.clone()),
    ));
    rows
}

fn cmd_report(a: ReportArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let artifact = load_artifact(&a.artifact)?;
    let rows = summary_rows(&artifact);
    let text = match a.format {
        Format::Json => {
            let quantities: serde_json::Map<String, serde_json::Value> = rows
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        serde_json::json!({
                            "enclosure": v,
                            "approx": to_decimal(&v.midpoint(), 15),
                        }),
                    )
                })
                .collect();
            let c = &artifact.certificates;
            let doc = serde_json::json!({
                "n": artifact.request.n,
                "kappa": artifact.request.kappa,
                "q": artifact.request.q.to_string(),
                "window": artifact.window,
                "power_n_densely_defined": c.power_n.in_domain(),
                "power_next_densely_defined": c.power_next.in_domain(),
                "divergence_rechecked": c.divergence_rechecked,
                "quantities": quantities,
                "cc_max_residual": c.composition.cc_max_residual,
                "h_positive_on_support": c.composition.h_positive_on_support,
                "consistency_residuals": c.composition.consistency_residuals,
            });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["quantity", "lo", "hi", "approx"])?;
            for (k, v) in &rows {
                w.write_record([
                    k.as_str(),
                    &format_rational(v.lo()),
                    &format_rational(v.hi()),
                    &to_decimal(&v.midpoint(), 15),
                ])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| io_err(Path::new("<csv>"))(e.into_error()))?)
                .expect("csv output is utf-8")
        }
    };
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(EXIT_OK)
}

/// Fixed-point bits of the running sum; far below the printed precision.
const SUM_BITS: i64 = 256;

fn cmd_partial_sums(a: PartialSumArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if a.count == 0 || a.count > MAX_PARTIAL_SUMS {
        return Err(CliError::Usage(format!(
            "--count must be between 1 and {MAX_PARTIAL_SUMS}"
        )));
    }
    let artifact = load_artifact(&a.artifact)?;
    let alpha = artifact.request.alpha();
    let table = alpha
        .table(a.count)
        .map_err(|e| CliError::Construct(e.into()))?;
    let scale = &artifact.request.alpha_scale;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "term", "partial_sum", "term_exact"])?;
    // running sum rounded down to SUM_BITS fractional bits
    let den = pow2(SUM_BITS);
    let mut fixed = Rational::zero();
    for (i, q, al) in &table {
        let term = al * scale * powi(q, a.exponent);
        fixed += (&term * &den).floor();
        let acc = &fixed / &den;
        w.write_record([
            i.to_string(),
            to_decimal(&term, 15),
            to_decimal(&acc, 15),
            format_rational(&term),
        ])?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| io_err(Path::new("<csv>"))(e.into_error()))?)
        .expect("csv output is utf-8");
    write_or_print(a.out.as_deref(), &text, out)?;
    Ok(EXIT_OK)
}
