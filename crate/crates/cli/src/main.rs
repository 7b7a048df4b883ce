use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use resume_audit::corpus::{filter_corpus, load_documents, DocumentKind, DocumentSet, FilterOptions};
use resume_audit::namebank::{load_names, select_matched, verify_ratio, NameBank, NameGroup, NameRecord};
use resume_audit::report::emit::emit_scores;
use resume_audit::report::{emit, summarize, ExperimentConfig, ExperimentReport, Format, Runner};
use resume_audit::tokenize::WhitespaceTokenizer;
use resume_audit::{Error, Stage};

#[derive(Parser)]
#[command(name = "audit", version, about = "Name-based bias audits of embedding retrievers for resume screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its reports.
    Run(RunArgs),
    /// Pool the tests of several reports of the same experiment type.
    Summarize(SummarizeArgs),
    /// Load document tables and report what survives the corpus filters.
    ValidateCorpus(ValidateArgs),
    /// Name bank utilities.
    Names {
        #[command(subcommand)]
        command: NamesCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Embedding cache directory; overrides the config.
    #[arg(long, env = "AUDIT_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Where reports go; overrides the config (default: current directory).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values = ["json", "csv", "markdown"])]
    format: Vec<FormatArg>,
    /// Leave timing metadata out so identical runs produce identical files.
    #[arg(long)]
    normalize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Markdown,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Markdown => Format::Markdown,
        }
    }
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Print the summary as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Resume,
    Job,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Document kind of every listed file.
    #[arg(long, value_enum, default_value = "resume")]
    kind: KindArg,
    #[arg(long, default_value_t = FilterOptions::default().min_confidence)]
    min_confidence: f64,
    #[arg(long, default_value_t = FilterOptions::default().min_resumes)]
    min_resumes: usize,
    #[arg(long, default_value_t = FilterOptions::default().min_jobs)]
    min_jobs: usize,
}

#[derive(Subcommand)]
enum NamesCommand {
    /// Pair reference names with target names at a frequency ratio.
    Match(MatchArgs),
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value = "BM")]
    reference: NameGroup,
    #[arg(long, default_value = "WM")]
    target: NameGroup,
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Name table to use instead of the bundled one.
    #[arg(long)]
    names: Option<PathBuf>,
}

fn tagged(stage: Stage) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage,
            source: Box::new(e),
        },
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config).map_err(tagged(Stage::Config))?;
    let cache_dir = args
        .cache_dir
        .or_else(|| config.cache_dir.as_ref().map(|p| config.resolve(p)));
    let out_dir = args
        .output_dir
        .or_else(|| config.output_dir.as_ref().map(|p| config.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("."));

    log::info!("running {} (config {})", config.experiment.as_str(), config.hash());
    let output = Runner::new(&config)
        .with_cache_dir(cache_dir)
        .record_timing(!args.normalize)
        .run()?;
    let formats: Vec<Format> = args.format.into_iter().map(Format::from).collect();
    let mut written = emit(&output.report, &formats, &out_dir).map_err(tagged(Stage::Report))?;
    written.extend(emit_scores(&output.scores, &out_dir).map_err(tagged(Stage::Report))?);

    for a in &output.report.aggregates {
        let (pa, pb, pn) = a.percentages();
        println!(
            "{}: {} tests, favors {} {pa:.1}%, favors {} {pb:.1}%, not significant {pn:.1}%",
            a.comparison,
            a.tests,
            a.labels.first().map(String::as_str).unwrap_or("A"),
            a.labels.get(1).map(String::as_str).unwrap_or("B"),
        );
    }
    for v in &output.report.validation {
        println!(
            "{} {}: matched {:.4} vs unmatched {:.4}, p = {:.3e}",
            v.backend_id, v.occupation_code, v.gap.mean_matched, v.gap.mean_unmatched, v.gap.test.p_value
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn summarize_reports(args: SummarizeArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let text = std::fs::read_to_string(path).with_context(|| format!("[report] reading {}", path.display()))?;
        let r = ExperimentReport::from_json(&text)
            .map_err(tagged(Stage::Report))
            .with_context(|| format!("parsing {}", path.display()))?;
        reports.push(r);
    }
    let summary = summarize(&reports).map_err(tagged(Stage::Report))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    println!("experiment {} ({} reports)", summary.experiment.as_str(), summary.reports);
    println!("| comparison | tests | favors A | favors B | not significant | median disparity |");
    println!("|---|---|---|---|---|---|");
    for row in &summary.rows {
        let a = &row.aggregate;
        let (pa, pb, pn) = a.percentages();
        println!(
            "| {} ({}) | {} | {pa:.1}% | {pb:.1}% | {pn:.1}% | {:.4} |",
            a.comparison,
            a.labels.join(" vs "),
            a.tests,
            row.disparity.median
        );
    }
    Ok(())
}

fn validate_corpus(args: ValidateArgs) -> Result<()> {
    let kind = match args.kind {
        KindArg::Resume => DocumentKind::Resume,
        KindArg::Job => DocumentKind::JobDescription,
    };
    let mut all = DocumentSet::default();
    for path in &args.files {
        let docs = load_documents(path, kind, &WhitespaceTokenizer)
            .map_err(tagged(Stage::Corpus))
            .with_context(|| format!("loading {}", path.display()))?;
        println!("{}: {} documents", path.display(), docs.len());
        all = all.merge(docs).map_err(tagged(Stage::Corpus))?;
    }
    let mut per_code: BTreeMap<&str, usize> = BTreeMap::new();
    for d in all.documents() {
        *per_code.entry(d.occupation_code.as_str()).or_default() += 1;
    }
    for (code, n) in &per_code {
        println!("  occupation {code}: {n}");
    }
    let opts = FilterOptions {
        min_confidence: args.min_confidence,
        min_resumes: if kind == DocumentKind::Resume { args.min_resumes } else { 0 },
        min_jobs: if kind == DocumentKind::JobDescription { args.min_jobs } else { 0 },
    };
    let kept = filter_corpus(&all, &opts).map_err(tagged(Stage::Corpus))?;
    println!(
        "{} of {} documents survive filtering in {} occupation(s): {}",
        kept.len(),
        all.len(),
        kept.category_index().len(),
        kept.occupations().collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn names_match(args: MatchArgs) -> Result<()> {
    let bank = match &args.names {
        Some(p) => load_names(p).map_err(tagged(Stage::Names))?,
        None => NameBank::bundled(),
    };
    if args.reference == args.target {
        bail!("[names] reference and target groups must differ");
    }
    let pairs = select_matched(&bank, args.reference, args.target, args.ratio, args.count).map_err(tagged(Stage::Names))?;
    println!("reference,target,reference_freq,target_freq,ratio");
    for (r, t) in &pairs {
        println!(
            "{},{},{},{},{:.3}",
            r.first,
            t.first,
            r.corpus_freq,
            t.corpus_freq,
            t.corpus_freq as f64 / r.corpus_freq as f64
        );
    }
    let (refs, targets): (Vec<NameRecord>, Vec<NameRecord>) = pairs.into_iter().unzip();
    let gm = verify_ratio(&targets, &refs).map_err(tagged(Stage::Names))?;
    println!("geometric-mean ratio {gm:.3} (requested {})", args.ratio);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Summarize(a) => summarize_reports(a),
        Command::ValidateCorpus(a) => validate_corpus(a),
        Command::Names {
            command: NamesCommand::Match(a),
        } => names_match(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
