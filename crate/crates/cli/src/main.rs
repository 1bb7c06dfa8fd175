//! `clickstream`: command-line driver for the clickstream pipeline.
//!
//! Exit status: 0 on success, 2 when an input file is missing, 3 on schema or
//! configuration errors, 1 otherwise.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use clickstream::actions::BehavioralCatalog;
use clickstream::config::PipelineConfig;
use clickstream::ingest::{parse_concatenated, parse_event_log, parse_tokens, ClickOp, EngagementVariant};
use clickstream::pipeline::{self, Corpus, Table};
use clickstream::strdist::{classify_match, fuzzy_pattern_weight, levenshtein_table, EditWeights, MatchCase};
use clickstream::synth::{generate_cohort, CohortSpec};
use clickstream::Error;

#[derive(Parser)]
#[command(name = "clickstream", version, about = "Lecture-video clickstream analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the event log into click-operation sequences.
    Encode(Common),
    /// Behavioral action weights and levels per sequence.
    Actions(Common),
    /// Information processing index per sequence.
    Ipi(Common),
    /// Markov model selection, transition-matrix and metric clustering.
    Cluster(Common),
    /// Engagement, next-click, in-video and course dropout classifiers.
    Predict(Common),
    /// Hazard model of course dropout.
    Survival(Common),
    /// Co-membership networks, densities, E-I index and QAP tests.
    Sna(Common),
    /// ANOVA, Tukey HSD, chi-square and z tests over clusters and dropout.
    Stats(Common),
    /// Every stage plus per-partition IPI summaries.
    Report(Common),
    /// Generate a synthetic cohort with planted structure.
    Synth(SynthArgs),
    /// Print the weighted edit-distance table of a pattern against a sequence.
    Strdist(StrdistArgs),
}

#[derive(Args)]
struct Common {
    /// Event log, one JSON record per line.
    #[arg(long)]
    input: PathBuf,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Engagement definition: full or pause_seek_only.
    #[arg(long)]
    variant: Option<EngagementVariant>,
    /// Number of clusters for both clusterings.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Cohort specification (TOML); the two-archetype cohort when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    students: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StrdistArgs {
    /// Click group, e.g. `Pl,Pa,Sb,Pl` or `PlPaSbPl`.
    #[arg(long)]
    pattern: String,
    #[arg(long)]
    sequence: String,
}

/// A failure with a fixed exit status.
#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn missing(path: &Path, what: &str) -> anyhow::Error {
    Exit {
        code: 2,
        message: format!("{what} not found: {}", path.display()),
    }
    .into()
}

fn read(path: &Path, what: &str) -> anyhow::Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(missing(path, what)),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(x) = e.downcast_ref::<Exit>() {
        return x.code;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Schema { .. } | Error::Config(_)) => 3,
        Some(Error::Io(io)) if io.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn load_config(args: &Common) -> anyhow::Result<(PipelineConfig, BehavioralCatalog)> {
    let (mut cfg, base) = match &args.config {
        Some(p) => {
            let cfg = PipelineConfig::from_toml(&read(p, "config file")?)
                .with_context(|| format!("in {}", p.display()))?;
            (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (PipelineConfig::default(), PathBuf::new()),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.variant {
        cfg.engagement_variant = v;
    }
    if let Some(k) = args.k {
        cfg.cluster.k_markov = k;
        cfg.cluster.k_metrics = k;
    }
    if let Some(f) = args.folds {
        cfg.predict.folds = f;
    }
    if let Some(p) = args.permutations {
        cfg.sna.permutations = p;
    }
    cfg.validate()?;
    let catalog = match &cfg.catalog {
        Some(p) => {
            let path = if p.is_relative() { base.join(p) } else { p.clone() };
            BehavioralCatalog::parse(&read(&path, "catalog file")?)
                .with_context(|| format!("in {}", path.display()))?
        }
        None => BehavioralCatalog::default(),
    };
    Ok((cfg, catalog))
}

fn load_corpus(args: &Common) -> anyhow::Result<(PipelineConfig, Corpus)> {
    let (cfg, catalog) = load_config(args)?;
    let text = read(&args.input, "input file")?;
    let log = parse_event_log(&text);
    if !log.diagnostics.is_empty() {
        let lines: Vec<String> = log
            .diagnostics
            .iter()
            .map(|d| format!("{}:{}: {}", args.input.display(), d.line, d.message))
            .collect();
        return Err(Exit {
            code: 3,
            message: format!("{} malformed records\n{}", lines.len(), lines.join("\n")),
        }
        .into());
    }
    let corpus = Corpus::build(&log, catalog, &cfg)?;
    for d in &corpus.diagnostics {
        eprintln!("note: {d}");
    }
    Ok((cfg, corpus))
}

fn emit(args: &Common, cfg: &PipelineConfig, tables: &[Table]) -> anyhow::Result<()> {
    pipeline::write_tables(&args.out_dir, tables, &cfg.hash())
        .with_context(|| format!("writing to {}", args.out_dir.display()))?;
    // the artifacts are on disk; a closed stdout is not worth failing over
    let mut out = std::io::stdout().lock();
    for t in tables {
        let _ = writeln!(out, "{}\t{} rows", args.out_dir.join(&t.name).display(), t.rows.len());
    }
    Ok(())
}

fn stage(args: &Common, f: impl Fn(&Corpus, &PipelineConfig) -> clickstream::Result<Vec<Table>>) -> anyhow::Result<()> {
    let (cfg, corpus) = load_corpus(args)?;
    let tables = f(&corpus, &cfg)?;
    emit(args, &cfg, &tables)
}

fn tokens(s: &str) -> clickstream::Result<Vec<ClickOp>> {
    if s.contains(',') || s.contains(' ') {
        parse_tokens(s)
    } else {
        parse_concatenated(s)
    }
}

fn strdist(args: &StrdistArgs) -> anyhow::Result<()> {
    let p = tokens(&args.pattern).context("pattern")?;
    let s = tokens(&args.sequence).context("sequence")?;
    let case = classify_match(&p, &s);
    let weights = match case {
        MatchCase::Full => {
            println!("case\tfull\nweight\t{}", fuzzy_pattern_weight(&p, &s)?);
            return Ok(());
        }
        MatchCase::NoMatch => EditWeights::NO_MATCH,
        MatchCase::Partial => EditWeights::PARTIAL_MATCH,
    };
    let name = if case == MatchCase::NoMatch { "no_match" } else { "partial" };
    println!("case\t{name}\nweights\tdel={} ins={} sub={}", weights.w_del, weights.w_ins, weights.w_sub);
    // rows follow the pattern, columns the sequence
    let table = levenshtein_table(&p, &s, weights);
    let mut head = vec![String::new(), "-".into()];
    head.extend(s.iter().map(|t| t.to_string()));
    println!("{}", head.join("\t"));
    for (i, row) in table.iter().enumerate() {
        let label = if i == 0 { "-".to_string() } else { p[i - 1].to_string() };
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.1}")).collect();
        println!("{label}\t{}", cells.join("\t"));
    }
    println!("weight\t{}", fuzzy_pattern_weight(&p, &s)?);
    Ok(())
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut spec = match &args.config {
        Some(p) => CohortSpec::from_toml(&read(p, "cohort file")?).with_context(|| format!("in {}", p.display()))?,
        None => CohortSpec::two_archetype(200, 42),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.students {
        spec.n_students = n;
    }
    let cohort = generate_cohort(&spec)?;
    let hash = pipeline::write_cohort(&args.out_dir, &cohort)?;
    let pairs: usize = cohort.students.iter().map(|s| s.videos.len()).sum();
    println!(
        "{}\t{} students, {} student-video pairs, {} events\nconfig_sha256\t{hash}",
        args.out_dir.display(),
        cohort.students.len(),
        pairs,
        cohort.log_lines.len()
    );
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Encode(a) => stage(a, |c, _| Ok(pipeline::encode_tables(c))),
        Command::Actions(a) => stage(a, |c, _| Ok(pipeline::actions_tables(c))),
        Command::Ipi(a) => stage(a, |c, _| Ok(pipeline::ipi_tables(c))),
        Command::Cluster(a) => stage(a, pipeline::cluster_tables),
        Command::Predict(a) => stage(a, pipeline::predict_tables),
        Command::Survival(a) => stage(a, pipeline::survival_tables),
        Command::Sna(a) => stage(a, pipeline::sna_tables),
        Command::Stats(a) => stage(a, pipeline::stats_tables),
        Command::Report(a) => stage(a, pipeline::report_tables),
        Command::Synth(a) => synth(a),
        Command::Strdist(a) => strdist(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
