//! The `qagrade` command line.
//!
//! Every subcommand opens the workspace, does one step of the pipeline and
//! prints a short human summary, or the underlying document with
//! `--format json`. Exit status is 0 on success, 1 when an operation fails
//! (the message says what to do next) and 2 for usage errors.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::agreement::{plot_svg, read_ablation_csv, write_ablation_csv, AgreementReport};
use crate::api::ApiServer;
use crate::config::Config;
use crate::gateway::RuleBook;
use crate::grading::{GradingRun, Relevance, RunStatus};
use crate::model::{load_assignment, load_labels, load_responses, CorpusFormat, Grade};
use crate::rrag::{Choice, EvaluationSet, ManualEntry, ModelQuestions, QuestionGenerator, ScriptedQuestions};
use crate::scoring::{reports_markdown, reports_to_jsonl, RunScores};
use crate::service::{Service, ServiceError, ShotConfig};
use crate::shots::{FeedbackBook, SelectionMethod, ShotSet};
use crate::workspace::Workspace;

const DEFAULT_CONFIG: &str = "qagrade.toml";
const DEFAULT_WORKSPACE: &str = "workspace";

#[derive(Debug, Parser)]
#[command(name = "qagrade", version, about = "Rubric-driven short-answer grading")]
pub struct Cli {
    /// Workspace directory (overrides the config file).
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,
    /// Config file; `qagrade.toml` is used when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Assignment to operate on; may be omitted when the workspace holds one.
    #[arg(long = "assignment-id", global = true)]
    pub assignment_id: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load an assignment, responses, labels and supporting files.
    Ingest(IngestArgs),
    /// Generate candidate evaluation questions for every rubric point.
    GenQuestions(GenQuestionsArgs),
    /// List, approve or instruct evaluation items.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
    /// Choose the graded examples shown in prompts.
    SelectShots(SelectShotsArgs),
    /// Grade every evaluated response on every rubric point.
    Grade(GradeArgs),
    /// Consolidate a finished run into per-response scores.
    Score(ScoreArgs),
    /// Cohen's kappa of a run or grader against a reference.
    Agree(AgreeArgs),
    /// Sweep shot counts and selection methods.
    Ablate(AblateArgs),
    /// Flag justifications as relevant or irrelevant, or summarize flags.
    Annotate(AnnotateArgs),
    /// Compare two graders and resolve their disagreements.
    Reconcile {
        #[command(subcommand)]
        action: Option<ReconcileAction>,
    },
    /// Serve the HTTP API (and optionally the review UI).
    Serve(ServeArgs),
    /// Render an ablation CSV as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Assignment JSON.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// Responses as JSONL or CSV (by extension).
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Label rows as JSONL.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Per-cell feedback for graded examples, as JSONL.
    #[arg(long)]
    pub feedback: Option<PathBuf>,
    /// Keyword rules for the oracle backend.
    #[arg(long)]
    pub oracle_rules: Option<PathBuf>,
    /// General grading instruction, as plain text.
    #[arg(long)]
    pub instruction: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Clustering,
    Random,
}

impl From<Method> for SelectionMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Clustering => SelectionMethod::Clustering,
            Method::Random => SelectionMethod::Random,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenQuestionsArgs {
    /// Candidates per rubric point.
    #[arg(long, default_value_t = 3)]
    pub candidates: usize,
    /// `scripted` (needs --questions), `manual` (stdin) or a chat backend name.
    #[arg(long)]
    pub backend: String,
    /// JSON object mapping rubric point ids to question lists.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Replace a set that already has approvals.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum ReviewAction {
    /// Show items, candidates and versions.
    List,
    /// Approve an item with a candidate number or custom text.
    Approve {
        item: String,
        /// 1-based candidate number.
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        choice: Option<usize>,
        /// Custom question wording.
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        instruction: Option<String>,
        /// Re-approve an already approved item.
        #[arg(long)]
        revise: bool,
        /// Item version the edit is based on.
        #[arg(long)]
        version: Option<u64>,
    },
    /// Set (or with no text, clear) the question-specific instruction.
    Instruct {
        item: String,
        instruction: Option<String>,
        #[arg(long)]
        version: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct SelectShotsArgs {
    #[arg(long, value_enum, default_value_t = Method::Clustering)]
    pub method: Method,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    /// Continue this existing run.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Backend for a new run.
    #[arg(long, required_unless_present_any = ["run_id", "resume"])]
    pub backend: Option<String>,
    /// Continue the latest unfinished run of the assignment.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Run to score; defaults to the latest complete run.
    #[arg(long)]
    pub run: Option<String>,
    /// Write reports as JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write reports as Markdown.
    #[arg(long)]
    pub markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    /// Run id or grader id to evaluate; defaults to the latest complete run.
    #[arg(long, alias = "candidate")]
    pub run: Option<String>,
    /// `ground_truth` or a grader id.
    #[arg(long, default_value = "ground_truth")]
    pub against: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Shot counts; `0` grades zero-shot.
    #[arg(long, value_delimiter = ',', required = true)]
    pub shots: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Clustering, Method::Random])]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "oracle")]
    pub backend: String,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub run: String,
    #[arg(long, requires_all = ["item", "flag"])]
    pub response: Option<String>,
    #[arg(long)]
    pub item: Option<String>,
    /// `relevant` or `irrelevant`.
    #[arg(long)]
    pub flag: Option<String>,
    #[arg(long, default_value = "cli")]
    pub annotator: String,
    /// Cell version the flag is based on.
    #[arg(long)]
    pub version: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum ReconcileAction {
    /// List disagreements (the default).
    List,
    /// Start a reconciliation between two graders.
    Start {
        grader_a: String,
        grader_b: String,
    },
    /// Record the agreed label for a disagreement.
    Resolve {
        id: String,
        #[arg(long)]
        label: u8,
        #[arg(long, default_value = "cli")]
        resolver: String,
        #[arg(long)]
        version: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of static UI assets.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Ablation CSV.
    pub csv: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn other(e: impl std::fmt::Display) -> CliError {
        CliError::Other(e.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(args, &mut io::stdout().lock(), &mut io::stderr().lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(path) => Ok(Config::load(path).map_err(ServiceError::from)?),
        None if Path::new(DEFAULT_CONFIG).is_file() => Ok(Config::load(Path::new(DEFAULT_CONFIG)).map_err(ServiceError::from)?),
        None => Ok(Config::default()),
    }
}

fn open_service(cli: &Cli) -> Result<Service> {
    let config = load_config(cli)?;
    let root = match (&cli.workspace, &config.workspace) {
        (Some(path), _) => path.clone(),
        (None, Some(path)) => config.resolve_path(path),
        (None, None) => PathBuf::from(DEFAULT_WORKSPACE),
    };
    let ws = Workspace::open(&root).map_err(ServiceError::from)?;
    Ok(Service::new(ws, config))
}

struct Printer<'a> {
    format: Format,
    out: &'a mut dyn Write,
}

impl Printer<'_> {
    /// Prints `text` in text mode or `value` as JSON.
    fn emit(&mut self, value: &impl Serialize, text: impl FnOnce() -> String) -> Result<()> {
        let rendered = match self.format {
            Format::Json => serde_json::to_string_pretty(value).map_err(CliError::other)? + "\n",
            Format::Text => text(),
        };
        self.out.write_all(rendered.as_bytes()).map_err(CliError::other)
    }
}

fn read_file(path: &Path) -> Result<File> {
    File::open(path).map_err(CliError::io(path))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(CliError::io(path))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let mut p = Printer { format: cli.format, out };
    match &cli.command {
        Command::Plot(args) => return plot(args, &mut p),
        Command::Ingest(args) => return ingest(cli, args, &mut p),
        _ => {}
    }
    let service = open_service(cli)?;
    let aid = || service.resolve_assignment(cli.assignment_id.as_deref());
    match &cli.command {
        Command::Ingest(_) | Command::Plot(_) => unreachable!(),
        Command::GenQuestions(args) => gen_questions(&service, &aid()?, args, &mut p),
        Command::Review { action } => review(&service, &aid()?, action, &mut p),
        Command::SelectShots(args) => {
            let shots = ShotConfig {
                method: args.method.into(),
                k: args.k,
                seed: args.seed,
            };
            let set = service.select_shots(&aid()?, &shots)?;
            p.emit(&set, || shot_summary(&set))
        }
        Command::Grade(args) => grade(&service, cli.assignment_id.as_deref(), args, &mut p),
        Command::Score(args) => score(&service, cli.assignment_id.as_deref(), args, &mut p),
        Command::Agree(args) => {
            let aid = aid()?;
            let candidate = match &args.run {
                Some(run) => run.clone(),
                None => latest_run(&service, Some(&aid), |r| r.status == RunStatus::Complete)?.run_id,
            };
            let report = service.agree(&aid, &candidate, &args.against)?;
            p.emit(&report, || agreement_summary(&report))
        }
        Command::Ablate(args) => ablate(&service, &aid()?, args, &mut p),
        Command::Annotate(args) => annotate(&service, args, &mut p),
        Command::Reconcile { action } => reconcile(&service, cli.assignment_id.as_deref(), action.as_ref(), &mut p),
        Command::Serve(args) => serve(service, args, &mut p),
    }
}

fn ingest(cli: &Cli, args: &IngestArgs, p: &mut Printer<'_>) -> Result<()> {
    let service = open_service(cli)?;
    let mut done = serde_json::Map::new();
    let mut lines = Vec::new();
    let aid = match &args.assignment {
        Some(path) => {
            let assignment = load_assignment(read_file(path)?).map_err(ServiceError::from)?;
            let expected = service.ws.get_raw(&crate::workspace::assignment_key(&assignment.id)).map_err(ServiceError::from)?.map(|v| v.version);
            service.put_assignment(&assignment, expected.or(Some(0)))?;
            lines.push(format!("assignment {} ({} rubric points, max score {})", assignment.id, assignment.rubric.len(), assignment.max_score()));
            done.insert("assignment".into(), json!(assignment.id));
            assignment.id
        }
        None => service.resolve_assignment(cli.assignment_id.as_deref())?,
    };
    if let Some(path) = &args.responses {
        let corpus = load_responses(read_file(path)?, CorpusFormat::from_path(path)).map_err(ServiceError::from)?;
        service.put_responses(&aid, &corpus)?;
        lines.push(format!("{} responses ({} blank rows dropped)", corpus.responses.len(), corpus.dropped));
        done.insert("responses".into(), json!({"count": corpus.responses.len(), "dropped": corpus.dropped}));
    }
    if let Some(path) = &args.labels {
        let responses = service.responses(&aid)?.responses;
        let items = service.assignment(&aid)?.item_ids();
        let sets = load_labels(read_file(path)?, &responses, &items).map_err(ServiceError::from)?;
        service.put_labels(&aid, &sets)?;
        let graders: Vec<String> = sets.iter().map(|s| format!("{} ({} cells)", s.grader_id, s.len())).collect();
        lines.push(format!("labels from {}", graders.join(", ")));
        done.insert("labels".into(), json!(sets.iter().map(|s| &s.grader_id).collect::<Vec<_>>()));
    }
    if let Some(path) = &args.feedback {
        let book = FeedbackBook::from_jsonl(BufReader::new(read_file(path)?)).map_err(ServiceError::from)?;
        service.put_feedback(&aid, &book)?;
        let cells: usize = book.0.values().map(|items| items.len()).sum();
        lines.push(format!("feedback for {cells} cells of {} responses", book.0.len()));
        done.insert("feedback".into(), json!(cells));
    }
    if let Some(path) = &args.oracle_rules {
        let rules = RuleBook::load(path).map_err(ServiceError::from)?;
        service.put_rules(&aid, &rules)?;
        lines.push(format!("oracle rules for {} items", rules.0.len()));
        done.insert("oracle_rules".into(), json!(rules.0.len()));
    }
    if let Some(path) = &args.instruction {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        service.put_instruction(&aid, &text)?;
        lines.push("general instruction".to_string());
        done.insert("instruction".into(), json!(true));
    }
    if lines.is_empty() {
        return Err(CliError::Usage("nothing to ingest; pass at least one of --assignment, --responses, --labels, --feedback, --oracle-rules, --instruction".into()));
    }
    done.insert("assignment_id".into(), json!(aid));
    p.emit(&done, || lines.iter().map(|l| format!("ingested {l}\n")).collect())
}

fn gen_questions(service: &Service, aid: &str, args: &GenQuestionsArgs, p: &mut Printer<'_>) -> Result<()> {
    let generator: Box<dyn QuestionGenerator> = match args.backend.as_str() {
        "scripted" => {
            let path = args.questions.as_ref().ok_or_else(|| CliError::Usage("`--backend scripted` needs --questions FILE".into()))?;
            let script: ScriptedQuestions = serde_json::from_reader(BufReader::new(read_file(path)?)).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
            Box::new(script)
        }
        "manual" => Box::new(ManualEntry::new(BufReader::new(io::stdin()), io::stderr())),
        name => {
            let config = service.config.backend(name).map_err(ServiceError::from)?;
            Box::new(ModelQuestions::new(service.completion_backend(&config, aid)?))
        }
    };
    let set = service.generate_questions(aid, args.candidates, generator.as_ref(), args.force)?;
    p.emit(&set, || evaluation_listing(&set))
}

fn evaluation_listing(set: &EvaluationSet) -> String {
    let mut s = String::new();
    for item in &set.items {
        let status = if item.is_approved() { "approved" } else { "pending" };
        s += &format!("{} [{}] {status}, version {}\n", item.item_id, item.rubric_point_id, item.version);
        s += &format!("  gold answer: {}\n", item.gold_answer);
        for (n, c) in item.candidates.iter().enumerate() {
            let mark = if item.approved_question.as_deref() == Some(c.as_str()) { '*' } else { ' ' };
            s += &format!(" {mark}{}. {c}\n", n + 1);
        }
        if let Some(q) = &item.approved_question {
            if !item.candidates.contains(q) {
                s += &format!("  * {q}\n");
            }
        }
        if let Some(i) = &item.question_specific_instruction {
            s += &format!("  instruction: {i}\n");
        }
    }
    s
}

fn review(service: &Service, aid: &str, action: &ReviewAction, p: &mut Printer<'_>) -> Result<()> {
    match action {
        ReviewAction::List => {
            let set = service.evaluation(aid)?.value;
            p.emit(&set, || evaluation_listing(&set))
        }
        ReviewAction::Approve {
            item,
            choice,
            text,
            instruction,
            revise,
            version,
        } => {
            let choice = match (choice, text) {
                (Some(n), _) => Choice::Candidate(*n),
                (None, Some(t)) => Choice::Text(t.clone()),
                (None, None) => unreachable!("clap requires one"),
            };
            let item = service.approve(aid, item, choice, instruction.clone(), *revise, *version)?;
            let pending = service.evaluation(aid)?.value.pending();
            p.emit(&item, || {
                let rest = if pending.is_empty() {
                    "all items approved".to_string()
                } else {
                    format!("pending: {}", pending.join(", "))
                };
                format!(
                    "approved {}: {} (version {})\n{rest}\n",
                    item.item_id,
                    item.approved_question.as_deref().unwrap_or_default(),
                    item.version
                )
            })
        }
        ReviewAction::Instruct { item, instruction, version } => {
            let item = service.instruct(aid, item, instruction.clone(), *version)?;
            p.emit(&item, || match &item.question_specific_instruction {
                Some(i) => format!("{}: instruction set to \"{i}\" (version {})\n", item.item_id, item.version),
                None => format!("{}: instruction cleared (version {})\n", item.item_id, item.version),
            })
        }
    }
}

fn shot_summary(set: &ShotSet) -> String {
    if set.shot_ids.is_empty() {
        return format!("zero-shot: {} responses to grade\n", set.eval_ids.len());
    }
    format!(
        "{} shots by {} (seed {}): {}\n{} responses to grade\n",
        set.k,
        set.method,
        set.seed,
        set.shot_ids.join(", "),
        set.eval_ids.len()
    )
}

fn latest_run(service: &Service, aid: Option<&str>, pred: impl Fn(&GradingRun) -> bool) -> Result<GradingRun> {
    for id in service.run_ids()?.iter().rev() {
        let run = service.run_view(id)?;
        if aid.is_none_or(|a| a == run.assignment_id) && pred(&run) {
            return Ok(run);
        }
    }
    Err(ServiceError::Precondition("no matching grading run; start one with `grade --backend NAME`".into()).into())
}

fn grade(service: &Service, aid: Option<&str>, args: &GradeArgs, p: &mut Printer<'_>) -> Result<()> {
    let run_id = match (&args.run_id, args.resume) {
        (Some(id), _) => id.clone(),
        (None, true) => {
            let aid = service.resolve_assignment(aid)?;
            latest_run(service, Some(&aid), |r| !r.is_complete())
                .map_err(|_| ServiceError::Precondition(format!("`{aid}` has no unfinished run to resume")))?
                .run_id
        }
        (None, false) => {
            let aid = service.resolve_assignment(aid)?;
            let backend = args.backend.as_deref().expect("clap requires --backend");
            service.create_run(&aid, backend, None)?.run_id
        }
    };
    let (run, summary) = service.execute_run(&run_id, None)?;
    let progress = run.progress();
    let value = json!({"run_id": run.run_id, "status": run.status, "progress": progress, "summary": summary});
    p.emit(&value, || {
        format!(
            "{}: {} ({}/{} cells; {} graded now, {} backend calls)\n",
            run.run_id, run.status, progress.graded, progress.total, summary.graded, summary.backend_calls
        )
    })?;
    if run.status != RunStatus::Complete {
        let reason = run.failures.last().map(|f| f.message.clone()).unwrap_or_default();
        return Err(CliError::Other(format!(
            "run {} stopped with {} unresolved cells: {reason}; continue with `grade --run-id {}`",
            run.run_id,
            run.unresolved().len(),
            run.run_id
        )));
    }
    Ok(())
}

fn score(service: &Service, aid: Option<&str>, args: &ScoreArgs, p: &mut Printer<'_>) -> Result<()> {
    let run_id = match &args.run {
        Some(id) => id.clone(),
        None => latest_run(service, aid, GradingRun::is_complete)?.run_id,
    };
    let scores = service.score(&run_id)?;
    if let Some(path) = &args.out {
        write_file(path, &reports_to_jsonl(&scores.reports))?;
    }
    if let Some(path) = &args.markdown {
        write_file(path, &reports_markdown(&scores))?;
    }
    p.emit(&scores, || distribution_summary(&scores))
}

fn distribution_summary(scores: &RunScores) -> String {
    let mut s = format!("{}: {} responses scored\n", scores.run_id, scores.distribution.total());
    for bin in &scores.distribution.bins {
        s += &format!("  {:>5} / {}: {}\n", bin.score.to_string(), scores.distribution.max_score, bin.count);
    }
    s
}

fn agreement_summary(r: &AgreementReport) -> String {
    let mut s = format!(
        "{} vs {}: kappa {:.4}, raw agreement {:.4} over {} cells",
        r.candidate, r.reference, r.kappa, r.raw, r.n_pairs
    );
    if r.excluded > 0 {
        s += &format!(" ({} cells labeled on one side only)", r.excluded);
    }
    if r.degenerate {
        s += " [degenerate: chance agreement is 1]";
    }
    s.push('\n');
    if let Some(f) = &r.final_score {
        s += &format!("final scores: kappa {:.4}, raw {:.4} over {} responses\n", f.kappa, f.raw, f.n_responses);
    }
    s
}

fn ablate(service: &Service, aid: &str, args: &AblateArgs, p: &mut Printer<'_>) -> Result<()> {
    let methods: Vec<SelectionMethod> = args.methods.iter().map(|&m| m.into()).collect();
    let points = service.ablate(aid, &args.shots, &methods, args.seed, &args.backend)?;
    let mut csv = Vec::new();
    write_ablation_csv(&points, &mut csv).map_err(ServiceError::from)?;
    let csv = String::from_utf8(csv).expect("csv is utf-8");
    if let Some(path) = &args.csv {
        write_file(path, &csv)?;
    }
    if let Some(path) = &args.svg {
        write_file(path, &plot_svg(&points))?;
    }
    p.emit(&points, || {
        if args.csv.is_some() {
            points
                .iter()
                .map(|pt| format!("{} {} shots: kappa {:.4}, raw {:.4}, {} pairs ({})\n", pt.method, pt.shots, pt.kappa, pt.raw, pt.n_pairs, pt.run_id))
                .collect()
        } else {
            csv.clone()
        }
    })
}

fn annotate(service: &Service, args: &AnnotateArgs, p: &mut Printer<'_>) -> Result<()> {
    if let (Some(response), Some(item), Some(flag)) = (&args.response, &args.item, &args.flag) {
        let flag: Relevance = flag.parse().map_err(ServiceError::from)?;
        let cell = service.annotate(&args.run, response, item, flag, &args.annotator, args.version)?;
        return p.emit(&cell, || format!("{}:{} flagged {} (version {})\n", cell.response_id, cell.item_id, json!(flag).as_str().unwrap_or_default(), cell.version));
    }
    let report = service.relevance(&args.run)?;
    p.emit(&report, || format!("{}: {report}\n", args.run))
}

fn reconcile(service: &Service, aid: Option<&str>, action: Option<&ReconcileAction>, p: &mut Printer<'_>) -> Result<()> {
    match action.unwrap_or(&ReconcileAction::List) {
        ReconcileAction::List => {
            let views = service.disagreements(aid)?;
            p.emit(&views, || {
                if views.is_empty() {
                    return "no disagreements\n".to_string();
                }
                views
                    .iter()
                    .map(|v| {
                        let d = &v.disagreement;
                        let state = match d.resolution {
                            Some(g) => format!("resolved {g} by {}", d.resolver_id.as_deref().unwrap_or("?")),
                            None => "open".to_string(),
                        };
                        format!("{} {}: {} vs {} ({state}, version {})\n", v.assignment_id, d.id, d.label_a, d.label_b, d.version)
                    })
                    .collect()
            })
        }
        ReconcileAction::Start { grader_a, grader_b } => {
            let aid = service.resolve_assignment(aid)?;
            let rec = service.reconcile(&aid, grader_a, grader_b)?;
            p.emit(&rec, || format!("{} disagreements between {grader_a} and {grader_b}\n", rec.disagreements.len()))
        }
        ReconcileAction::Resolve { id, label, resolver, version } => {
            let label = Grade::from_u8(*label).ok_or_else(|| CliError::Usage(format!("label must be 0 or 1, got {label}")))?;
            let view = service.resolve(aid, id, label, resolver, *version)?;
            p.emit(&view, || format!("{} resolved to {label} (version {})\n", view.disagreement.id, view.disagreement.version))
        }
    }
}

fn serve(service: Service, args: &ServeArgs, p: &mut Printer<'_>) -> Result<()> {
    let addr = format!("{}:{}", args.host, args.port);
    let server = ApiServer::start(Arc::new(service), &addr, args.static_dir.clone()).map_err(|e| CliError::Other(format!("binding {addr}: {e}")))?;
    let url = server.url();
    p.emit(&json!({ "url": url }), || format!("listening on {url}\n"))?;
    p.out.flush().map_err(CliError::other)?;
    server.join();
    Ok(())
}

fn plot(args: &PlotArgs, p: &mut Printer<'_>) -> Result<()> {
    let points = read_ablation_csv(read_file(&args.csv)?).map_err(ServiceError::from)?;
    let svg = plot_svg(&points);
    match &args.out {
        Some(path) => {
            write_file(path, &svg)?;
            p.emit(&json!({"out": path, "points": points.len()}), || format!("wrote {}\n", path.display()))
        }
        None => p.out.write_all(svg.as_bytes()).map_err(CliError::other),
    }
}
