//! Command-line front end.
//!
//! Every command writes a JSON report made of a run manifest and a payload.
//! Text tables are rendered from the payload, never recomputed. Exit codes:
//! 0 pass, 1 alignment failure, 2 usage, I/O or schema error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cohort::{build_strata, roles, Cohort, CovariateSchema, LoadOptions, LoadReport, OutOfRangePolicy};
use crate::error::{argument, Error, Result};
use crate::eval::{
    auc_result, compare_auc_paired, scored_outcome, stratified_auc, AucResult, PairedComparison,
    StrataDef, StratifiedTable, TrajectoryResult,
};
use crate::metrics::{AlignmentReport, TestMethod};
use crate::rng;
use crate::sampler::{
    Aligner, AlignmentConfig, Growth, MaxSizeResult, PassRule, SizeAssessment, StratumDraw,
    SweepResult, DEFAULT_SCHEDULE,
};
use crate::synth::{generate_binormal_scores, generate_outcomes, generate_table, PopulationSpec};

#[derive(Debug, Parser)]
#[command(name = "distinct", version, about = "Covariate-targeted subsampling and alignment testing")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, env = "DISTINCT_THREADS", default_value_t = 0, global = true)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a cohort against a schema and report exclusions and strata.
    Validate(ValidateArgs),
    /// Draw one subsample of size N and test its alignment with the target.
    Align(AlignArgs),
    /// Assess alignment over a schedule of sizes.
    Sweep(SweepArgs),
    /// Search for the largest aligned size.
    Maxsize(MaxsizeArgs),
    /// AUC, stratified AUC and AUC trajectories for score columns.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic cohort CSV from a population spec.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Wasserstein,
    Ks,
}

impl From<MethodArg> for TestMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Wasserstein => TestMethod::WassersteinPermutation,
            MethodArg::Ks => TestMethod::KsAsymptotic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PassRuleArg {
    Single,
    All,
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthArg {
    Independent,
    Nested,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRangeArg {
    Exclude,
    Error,
}

impl From<OutOfRangeArg> for LoadOptions {
    fn from(a: OutOfRangeArg) -> Self {
        LoadOptions {
            out_of_range: match a {
                OutOfRangeArg::Exclude => OutOfRangePolicy::Exclude,
                OutOfRangeArg::Error => OutOfRangePolicy::Error,
            },
        }
    }
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("alpha must lie in (0, 1), got {v}"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Covariate schema (JSON).
    #[arg(long)]
    pub schema: PathBuf,
    /// Large cohort to draw from (CSV).
    #[arg(long)]
    pub source: PathBuf,
    /// Reference cohort whose strata proportions are matched (CSV).
    #[arg(long)]
    pub target: PathBuf,
    /// Identifier column, used when present.
    #[arg(long, default_value = "id")]
    pub id_column: String,
    /// Drop rows outside the binned range, or stop with an error.
    #[arg(long, value_enum, default_value_t = OutOfRangeArg::Exclude)]
    pub out_of_range: OutOfRangeArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    /// Significance level per test.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Permutations for the Wasserstein test.
    #[arg(long, default_value_t = 999, value_parser = clap::value_parser!(u64).range(1..))]
    pub permutations: u64,
    /// Two-sample tests applied to every covariate.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Wasserstein, MethodArg::Ks])]
    pub methods: Vec<MethodArg>,
    /// Seed for every random draw (required).
    #[arg(long)]
    pub seed: u64,
    /// Independent subsample draws per size.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub replicates: u32,
    /// How replicate verdicts combine into one verdict per size.
    #[arg(long, value_enum, default_value_t = PassRuleArg::Single)]
    pub pass_rule: PassRuleArg,
    /// Fresh draws at each size, or each draw extending the previous one.
    #[arg(long, value_enum, default_value_t = GrowthArg::Independent)]
    pub growth: GrowthArg,
}

impl TestArgs {
    fn config(&self) -> AlignmentConfig {
        let mut methods: Vec<TestMethod> = Vec::new();
        for &m in &self.methods {
            let m = m.into();
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
        AlignmentConfig {
            alpha: self.alpha,
            permutations: self.permutations,
            methods,
            seed: self.seed,
            replicates: self.replicates,
            pass_rule: match self.pass_rule {
                PassRuleArg::Single => PassRule::SingleDraw,
                PassRuleArg::All => PassRule::AllReplicates,
                PassRuleArg::Majority => PassRule::Majority,
            },
            growth: match self.growth {
                GrowthArg::Independent => Growth::Independent,
                GrowthArg::Nested => Growth::Nested,
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Directory receiving the JSON report and text table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of the text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, default_value = "id")]
    pub id_column: String,
    /// Drop rows outside the binned range, or stop with an error.
    #[arg(long, value_enum, default_value_t = OutOfRangeArg::Exclude)]
    pub out_of_range: OutOfRangeArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AlignArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Requested subsample size.
    #[arg(long, value_parser = parse_positive)]
    pub n: usize,
    #[command(flatten)]
    pub test: TestArgs,
    /// Write the ids of the first replicate draw to this CSV.
    #[arg(long)]
    pub export_ids: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated requested sizes, strictly increasing.
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    pub schedule: Option<Vec<usize>>,
    #[command(flatten)]
    pub test: TestArgs,
    /// Write the ids of the draw at the largest aligned size to this CSV.
    #[arg(long)]
    pub export_ids: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MaxsizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub test: TestArgs,
    /// Write the ids of the draw at the largest aligned size to this CSV.
    #[arg(long)]
    pub export_ids: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Cohort holding the score and outcome columns.
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Comma-separated score columns.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scores: Vec<String>,
    #[arg(long)]
    pub outcome: String,
    /// Covariates to stratify by.
    #[arg(long, value_delimiter = ',')]
    pub strata: Vec<String>,
    /// Restrict to the ids listed in this CSV (an `id` column).
    #[arg(long)]
    pub subsample: Option<PathBuf>,
    /// Target cohort for a trajectory over aligned subsamples.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Sizes for the trajectory; requires --target and --seed.
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    pub schedule: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub replicates: u32,
    #[arg(long, default_value = "id")]
    pub id_column: String,
    /// Drop rows outside the binned range, or stop with an error.
    #[arg(long, value_enum, default_value_t = OutOfRangeArg::Exclude)]
    pub out_of_range: OutOfRangeArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Population spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score columns as NAME=AUC, e.g. `psfr=0.91`.
    #[arg(long = "score", value_parser = parse_score_spec)]
    pub scores: Vec<(String, f64)>,
    #[arg(long, default_value = "outcome")]
    pub outcome: String,
    /// Probability of a positive outcome.
    #[arg(long, default_value_t = 0.04)]
    pub prevalence: f64,
}

fn parse_score_spec(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, auc) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=AUC, got `{s}`"))?;
    let auc: f64 = auc.parse().map_err(|_| format!("`{auc}` is not a number"))?;
    if name.is_empty() {
        return Err("score name is empty".into());
    }
    Ok((name.to_string(), auc))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub threads: usize,
    /// SHA-256 of the compact payload JSON.
    pub payload_sha256: String,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

/// Manifest plus payload; only the payload is expected to be reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub manifest: RunManifest,
    pub payload: &'a T,
}

fn digest_file(role: &str, path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path)?;
    Ok(InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

struct Run {
    command: &'static str,
    started: Instant,
    started_unix_ms: u128,
    inputs: Vec<InputDigest>,
    seeds: BTreeMap<String, u64>,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(digest_file(role, path)?);
        Ok(())
    }

    /// Writes `<command>.json` and `<command>.txt` under `--out` and prints
    /// either the text or the JSON to stdout.
    fn finish<P: Serialize, T: Serialize>(
        self,
        params: &P,
        payload: &T,
        text: &str,
        output: &OutputArgs,
    ) -> Result<()> {
        let payload_json = serde_json::to_vec(payload)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            parameters: serde_json::to_value(params)?,
            seeds: self.seeds,
            inputs: self.inputs,
            threads: rayon::current_num_threads(),
            payload_sha256: hex::encode(Sha256::digest(&payload_json)),
            started_unix_ms: self.started_unix_ms,
            elapsed_ms: self.started.elapsed().as_millis(),
        };
        let report = serde_json::to_string_pretty(&Report { manifest, payload })?;
        if let Some(dir) = &output.out {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.json", self.command)), format!("{report}\n"))?;
            fs::write(dir.join(format!("{}.txt", self.command)), text)?;
        }
        if output.json {
            println!("{report}");
        } else {
            print!("{text}");
        }
        Ok(())
    }
}

fn load_schema(path: &Path) -> Result<CovariateSchema> {
    CovariateSchema::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Schema(format!("cannot read {}: {io}", path.display())),
        Error::Json(j) => Error::Schema(format!("{}: {j}", path.display())),
        other => other,
    })
}

fn load_cohort(
    path: &Path,
    schema: &CovariateSchema,
    id_column: &str,
    scores: &[&str],
    outcome: Option<&str>,
    out_of_range: OutOfRangeArg,
) -> Result<Cohort> {
    Cohort::load(path, schema, &roles(Some(id_column), scores, outcome), out_of_range.into())
        .map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
            other => other,
        })
}

/// `<1e-3` below a thousandth, three decimals otherwise.
pub fn format_p(p: f64) -> String {
    if p < 1e-3 {
        "<1e-3".to_string()
    } else {
        format!("{p:.3}")
    }
}

fn method_label(m: TestMethod) -> &'static str {
    match m {
        TestMethod::WassersteinPermutation => "Wasserstein",
        TestMethod::KsAsymptotic => "K-S",
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Serialize)]
pub struct Occupancy {
    pub key_space: u128,
    pub occupied: usize,
    pub singletons: usize,
    pub largest: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidatePayload {
    pub load: LoadReport,
    pub strata: Occupancy,
}

/// Drops numeric tokens so `age 52.1 outside binned range` and
/// `age 49 outside binned range` count as one kind.
fn reason_kind(reason: &str) -> String {
    reason
        .split_whitespace()
        .filter(|w| w.parse::<f64>().is_err())
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_validate(p: &ValidatePayload) -> String {
    let mut out = String::new();
    let load = &p.load;
    let _ = writeln!(out, "{} read, {} included", plural(load.total_rows, "row"), load.included_rows);
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for e in &load.excluded {
        *reasons.entry(reason_kind(&e.reason)).or_default() += 1;
    }
    let head = format!("{} excluded", plural(load.excluded.len(), "row"));
    if reasons.len() == 1 {
        let (reason, _) = reasons.iter().next().expect("one reason");
        let _ = writeln!(out, "{head}: {reason}");
    } else {
        let _ = writeln!(out, "{head}");
        for (reason, count) in &reasons {
            let _ = writeln!(out, "  {count:>6}  {reason}");
        }
    }
    for e in load.excluded.iter().take(20) {
        let _ = writeln!(out, "  line {}: {}", e.line, e.reason);
    }
    if load.excluded.len() > 20 {
        let _ = writeln!(out, "  ... {} more in the JSON report", load.excluded.len() - 20);
    }
    let s = &p.strata;
    let _ = writeln!(
        out,
        "strata: {} occupied of {} ({} singletons, largest {})",
        s.occupied, s.key_space, s.singletons, s.largest
    );
    out
}

fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode> {
    let mut run = Run::new("validate");
    run.input("schema", &args.schema)?;
    run.input("cohort", &args.cohort)?;
    let schema = load_schema(&args.schema)?;
    let cohort = load_cohort(&args.cohort, &schema, &args.id_column, &[], None, args.out_of_range)?;
    let strata = build_strata(&cohort, &schema)?;
    let sizes: Vec<usize> = strata.iter().map(|(_, m)| m.len()).collect();
    let payload = ValidatePayload {
        load: cohort.load_report().clone(),
        strata: Occupancy {
            key_space: schema.key_space_size(),
            occupied: strata.len(),
            singletons: sizes.iter().filter(|&&n| n == 1).count(),
            largest: sizes.iter().copied().max().unwrap_or(0),
        },
    };
    let text = render_validate(&payload);
    run.finish(args, &payload, &text, &args.output)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- align

#[derive(Debug, Clone, Serialize)]
pub struct AlignPayload {
    pub assessment: SizeAssessment,
    /// Per-stratum quotas of the first replicate draw.
    pub strata: Vec<StratumDraw>,
}

/// One row per (variable, method): statistic, p-value and verdict.
pub fn render_alignment(report: &AlignmentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<12} {:>12} {:>8}  verdict",
        "variable", "method", "statistic", "p"
    );
    for v in &report.variables {
        for t in &v.tests {
            let _ = writeln!(
                out,
                "{:<12} {:<12} {:>12.6} {:>8}  {}",
                v.variable,
                method_label(t.method),
                t.statistic,
                format_p(t.p_value),
                verdict(t.p_value > report.alpha)
            );
        }
    }
    out
}

fn render_assessment(a: &SizeAssessment) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "requested n {}, realized n {}, deficient strata {}",
        a.requested_n, a.realized_n, a.deficient_strata
    );
    for r in &a.replicates {
        if a.replicates.len() > 1 {
            let _ = writeln!(out, "\nreplicate {} (seed {})", r.replicate, r.seed);
        } else {
            out.push('\n');
        }
        out.push_str(&render_alignment(&r.report));
    }
    let _ = writeln!(
        out,
        "\nalignment: {}{}",
        verdict(a.pass),
        if a.failing_variables.is_empty() {
            String::new()
        } else {
            format!(" (failing: {})", a.failing_variables.join(", "))
        }
    );
    out
}

fn export_ids(aligner: &Aligner<'_>, config: &AlignmentConfig, n: usize, path: &Path) -> Result<()> {
    let draw = aligner.draw(n, Aligner::replicate_seed(config, n, 0))?;
    draw.write_ids_csv(fs::File::create(path)?, aligner.source())
}

struct Loaded {
    schema: CovariateSchema,
    source: Cohort,
    target: Cohort,
}

fn load_pair(run: &mut Run, input: &InputArgs) -> Result<Loaded> {
    run.input("schema", &input.schema)?;
    run.input("source", &input.source)?;
    run.input("target", &input.target)?;
    let schema = load_schema(&input.schema)?;
    let source = load_cohort(&input.source, &schema, &input.id_column, &[], None, input.out_of_range)?;
    let target = load_cohort(&input.target, &schema, &input.id_column, &[], None, input.out_of_range)?;
    Ok(Loaded { schema, source, target })
}

fn exit_for(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_align(args: &AlignArgs) -> Result<ExitCode> {
    let mut run = Run::new("align");
    let l = load_pair(&mut run, &args.input)?;
    let config = args.test.config();
    run.seeds.insert("seed".into(), config.seed);
    let aligner = Aligner::new(&l.source, &l.target, &l.schema)?;
    let assessment = aligner.assess(args.n, &config)?;
    let strata = aligner
        .draw(args.n, Aligner::replicate_seed(&config, args.n, 0))?
        .per_stratum;
    if let Some(path) = &args.export_ids {
        export_ids(&aligner, &config, args.n, path)?;
    }
    let payload = AlignPayload { assessment, strata };
    let text = render_assessment(&payload.assessment);
    run.finish(args, &payload, &text, &args.output)?;
    Ok(exit_for(payload.assessment.pass))
}

// ---------------------------------------------------------------- sweep

/// Size × variable p-values, one block per method.
pub fn render_sweep(sweep: &SweepResult) -> String {
    let mut out = String::new();
    let Some(first) = sweep.entries.first() else {
        return out;
    };
    let report = first.first_report();
    let names: Vec<&str> = report.variables.iter().map(|v| v.variable.as_str()).collect();
    let methods: Vec<TestMethod> = report.variables[0].tests.iter().map(|t| t.method).collect();
    let _ = write!(out, "{:<12} {:>9} {:>9}", "test", "size", "realized");
    for n in &names {
        let _ = write!(out, " {n:>10}");
    }
    out.push_str("  verdict\n");
    for m in methods {
        for e in &sweep.entries {
            let r = e.first_report();
            let _ = write!(out, "{:<12} {:>9} {:>9}", method_label(m), e.requested_n, e.realized_n);
            for v in &r.variables {
                let p = v.test(m).map(|t| format_p(t.p_value)).unwrap_or_default();
                let _ = write!(out, " {p:>10}");
            }
            let _ = writeln!(out, "  {}", verdict(e.pass));
        }
    }
    match (sweep.max_aligned_requested_n, sweep.max_aligned_realized_n) {
        (Some(n), Some(r)) => {
            let _ = writeln!(out, "\nlargest aligned size: {n} (realized {r})");
        }
        _ => out.push_str("\nno size in the schedule is aligned\n"),
    }
    if let Some(f) = &sweep.first_failure {
        let _ = writeln!(
            out,
            "first failure: {} (realized {}): {}",
            f.requested_n,
            f.realized_n,
            f.variables.join(", ")
        );
    }
    out
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let mut run = Run::new("sweep");
    let l = load_pair(&mut run, &args.input)?;
    let config = args.test.config();
    run.seeds.insert("seed".into(), config.seed);
    let schedule = args.schedule.clone().unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
    let aligner = Aligner::new(&l.source, &l.target, &l.schema)?;
    let sweep = aligner.sweep(&schedule, &config)?;
    if let (Some(path), Some(n)) = (&args.export_ids, sweep.max_aligned_requested_n) {
        export_ids(&aligner, &config, n, path)?;
    }
    let text = render_sweep(&sweep);
    run.finish(args, &sweep, &text, &args.output)?;
    Ok(exit_for(sweep.entries.iter().all(|e| e.pass)))
}

// ---------------------------------------------------------------- maxsize

fn render_maxsize(m: &MaxSizeResult) -> String {
    let mut out = String::new();
    match (m.n_star, m.realized_n) {
        (Some(n), Some(r)) => {
            let _ = writeln!(out, "largest aligned size: {n} (realized {r})");
        }
        _ => {
            let _ = writeln!(
                out,
                "no aligned size: the starting size {} already fails",
                m.assessment.requested_n
            );
        }
    }
    let _ = writeln!(
        out,
        "availability cap: {}{}",
        m.availability_cap,
        if m.capped { " (reached; every stratum exhausted)" } else { "" }
    );
    let _ = writeln!(out, "\n{:>9} {:>9}  verdict", "size", "realized");
    for p in &m.probes {
        let _ = writeln!(out, "{:>9} {:>9}  {}", p.requested_n, p.realized_n, verdict(p.pass));
    }
    out.push('\n');
    out.push_str(&render_assessment(&m.assessment));
    out
}

fn cmd_maxsize(args: &MaxsizeArgs) -> Result<ExitCode> {
    let mut run = Run::new("maxsize");
    let l = load_pair(&mut run, &args.input)?;
    let config = args.test.config();
    run.seeds.insert("seed".into(), config.seed);
    let aligner = Aligner::new(&l.source, &l.target, &l.schema)?;
    let result = aligner.max_aligned_size(&config)?;
    if let (Some(path), Some(n)) = (&args.export_ids, result.n_star) {
        export_ids(&aligner, &config, n, path)?;
    }
    let text = render_maxsize(&result);
    run.finish(args, &result, &text, &args.output)?;
    Ok(exit_for(result.n_star.is_some()))
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Serialize)]
pub struct ScoreAuc {
    pub score: String,
    pub result: AucResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairedAuc {
    pub score_a: String,
    pub score_b: String,
    pub comparison: PairedComparison,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluatePayload {
    pub n: usize,
    pub aucs: Vec<ScoreAuc>,
    pub paired: Vec<PairedAuc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified: Option<StratifiedTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryResult>,
}

fn render_evaluate(p: &EvaluatePayload) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} evaluated", plural(p.n, "row"));
    let _ = writeln!(out, "{:<12} {:>7} {:>7} {:>17} {:>7} {:>9}", "score", "auc", "se", "95% CI", "cases", "controls");
    for a in &p.aucs {
        let r = &a.result;
        let _ = writeln!(
            out,
            "{:<12} {:>7.4} {:>7.4} {:>17} {:>7} {:>9}",
            a.score,
            r.auc,
            r.se(),
            format!("[{:.4}, {:.4}]", r.ci95.0, r.ci95.1),
            r.n_cases,
            r.n_controls
        );
    }
    for c in &p.paired {
        let _ = writeln!(
            out,
            "{} vs {}: difference {:+.4}, z {:.3}, p {}",
            c.score_a,
            c.score_b,
            c.comparison.auc_a - c.comparison.auc_b,
            c.comparison.z,
            format_p(c.comparison.p_value)
        );
    }
    if let Some(t) = &p.stratified {
        out.push('\n');
        out.push_str(&t.render());
    }
    if let Some(t) = &p.trajectory {
        let _ = writeln!(out, "\n{:>9} {:>9} {:<12} {:>7} {:>17}", "size", "realized", "score", "auc", "95% CI");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        for e in &t.entries {
            for s in &e.scores {
                let _ = writeln!(
                    out,
                    "{:>9} {:>9} {:<12} {:>7} {:>17}",
                    e.requested_n,
                    e.realized_n,
                    s.score,
                    fmt(s.auc),
                    format!("[{}, {}]", fmt(s.lo), fmt(s.hi))
                );
            }
        }
    }
    out
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| Error::MissingColumn { column: "id".into() })?;
    let mut ids = Vec::new();
    for rec in rdr.records() {
        ids.push(rec?.get(col).unwrap_or("").to_string());
    }
    Ok(ids)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<ExitCode> {
    let mut run = Run::new("evaluate");
    run.input("schema", &args.schema)?;
    run.input("cohort", &args.cohort)?;
    let schema = load_schema(&args.schema)?;
    let scores: Vec<&str> = args.scores.iter().map(String::as_str).collect();
    let mut cohort = load_cohort(
        &args.cohort,
        &schema,
        &args.id_column,
        &scores,
        Some(&args.outcome),
        args.out_of_range,
    )?;
    if let Some(path) = &args.subsample {
        run.input("subsample", path)?;
        let wanted: std::collections::HashSet<String> = read_ids(path)?.into_iter().collect();
        if cohort.ids().is_none() {
            return Err(argument(format!("--subsample needs an `{}` column in the cohort", args.id_column)));
        }
        let rows: Vec<usize> = (0..cohort.len()).filter(|&r| wanted.contains(&cohort.row_id(r))).collect();
        if rows.len() != wanted.len() {
            return Err(argument(format!(
                "{} of {} subsample ids were not found in the cohort",
                wanted.len() - rows.len(),
                wanted.len()
            )));
        }
        cohort = cohort.subset(&rows)?;
    }
    let all: Vec<usize> = (0..cohort.len()).collect();
    let data = scores
        .iter()
        .map(|s| scored_outcome(&cohort, &all, s, &args.outcome))
        .collect::<Result<Vec<_>>>()?;
    let aucs = scores
        .iter()
        .zip(&data)
        .map(|(s, d)| {
            Ok(ScoreAuc {
                score: s.to_string(),
                result: auc_result(d)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut paired = Vec::new();
    for i in 0..scores.len() {
        for j in i + 1..scores.len() {
            paired.push(PairedAuc {
                score_a: scores[i].to_string(),
                score_b: scores[j].to_string(),
                comparison: compare_auc_paired(&data[i], &data[j])?,
            });
        }
    }
    let stratified = if args.strata.is_empty() {
        None
    } else {
        let defs = args
            .strata
            .iter()
            .map(|v| StrataDef::from_schema(&schema, v))
            .collect::<Result<Vec<_>>>()?;
        Some(stratified_auc(&cohort, &scores, &args.outcome, &defs)?)
    };
    let trajectory = match (&args.schedule, &args.target) {
        (None, None) => None,
        (Some(schedule), Some(target_path)) => {
            let seed = args
                .seed
                .ok_or_else(|| argument("a trajectory needs --seed"))?;
            run.input("target", target_path)?;
            run.seeds.insert("seed".into(), seed);
            let target = load_cohort(target_path, &schema, &args.id_column, &[], None, args.out_of_range)?;
            let config = AlignmentConfig {
                seed,
                replicates: args.replicates,
                ..AlignmentConfig::default()
            };
            let aligner = Aligner::new(&cohort, &target, &schema)?;
            Some(aligner.auc_trajectory(schedule, &scores, &args.outcome, &config)?)
        }
        _ => return Err(argument("--schedule and --target must be given together")),
    };
    if let (Some(t), Some(dir)) = (&trajectory, &args.output.out) {
        fs::create_dir_all(dir)?;
        t.write_csv(fs::File::create(dir.join("trajectory.csv"))?)?;
    }
    let payload = EvaluatePayload {
        n: cohort.len(),
        aucs,
        paired,
        stratified,
        trajectory,
    };
    let text = render_evaluate(&payload);
    run.finish(args, &payload, &text, &args.output)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- synth

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let mut spec = PopulationSpec::load(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let mut table = generate_table(&spec)?;
    if !args.scores.is_empty() {
        let outcomes = generate_outcomes(table.len(), args.prevalence, spec.seed)?;
        for (name, auc) in &args.scores {
            let seed = rng::derive_seed(spec.seed, &[rng::hash_str(name)]);
            let scores = generate_binormal_scores(&outcomes, *auc, seed)?;
            table.add_column(name.clone(), scores.iter().map(|v| format!("{v:.6}")).collect())?;
        }
        table.add_column(args.outcome.clone(), outcomes.iter().map(|o| o.to_string()).collect())?;
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    table.write_csv(fs::File::create(&args.out)?)?;
    println!("{} written to {}", plural(table.len(), "row"), args.out.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- entry

pub fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Align(a) => cmd_align(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Maxsize(a) => cmd_maxsize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Usage line of the first subcommand named in `args`, or of the tool.
fn usage_for(args: impl Iterator<Item = String>) -> String {
    use clap::CommandFactory;
    let mut cmd = Cli::command();
    cmd.build();
    for a in args {
        if let Some(sub) = cmd.find_subcommand_mut(&a) {
            return sub.render_usage().to_string();
        }
    }
    cmd.render_usage().to_string()
}

/// Parses arguments, sizes the worker pool and maps errors to exit code 2.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprint!("{}", e.render());
            eprintln!("\n{}", usage_for(std::env::args().skip(1)));
            return ExitCode::from(2);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.0004), "<1e-3");
        assert_eq!(format_p(0.001), "0.001");
        assert_eq!(format_p(0.9837), "0.984");
    }

    #[test]
    fn alpha_bounds() {
        assert!(parse_alpha("0.05").is_ok());
        assert!(parse_alpha("1.5").is_err());
        assert!(parse_alpha("0").is_err());
        assert!(parse_alpha("x").is_err());
    }

    #[test]
    fn score_spec() {
        assert_eq!(parse_score_spec("psfr=0.91").unwrap(), ("psfr".into(), 0.91));
        assert!(parse_score_spec("psfr").is_err());
        assert!(parse_score_spec("=0.9").is_err());
    }

    #[test]
    fn seed_is_required() {
        let r = Cli::try_parse_from([
            "distinct", "align", "--schema", "s", "--source", "a", "--target", "b", "--n", "10",
        ]);
        assert!(r.is_err());
        let r = Cli::try_parse_from([
            "distinct", "align", "--schema", "s", "--source", "a", "--target", "b", "--n", "10", "--seed", "1",
        ])
        .unwrap();
        match r.command {
            Command::Align(a) => {
                let c = a.test.config();
                assert_eq!(c.methods.len(), 2);
                assert_eq!(c.permutations, 999);
                assert_eq!(c.alpha, 0.05);
            }
            _ => panic!("wrong command"),
        }
    }
}
