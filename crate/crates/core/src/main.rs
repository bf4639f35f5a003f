use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use hkg::analysis::{
    abnormality_flags, covariates_tsv, disease_covariates, population_stats, predictability, predictability_tsv, subgroup_learn, top_bottom_summary, Partition,
    TargetKind, DEFAULT_MIN_SUBGROUP,
};
use hkg::cohort::{format_records, AggregationMode, DemoEncoding, SupportConfig, DEFAULT_GAP_DAYS};
use hkg::estimators::Family;
use hkg::eval::{evaluate, filter_reference, Baseline, EvalConfig, EvalReport, F1Budget};
use hkg::graphlearn::{learn, LearnConfig, Learner, ScoreMatrix};
use hkg::kgraph::KnowledgeGraph;
use hkg::pipeline::{ingest, raw_scores_path, read_input, write_manifest, write_output, IngestOptions, Ingested, RunManifest};
use hkg::synthgen::{sample_cohort, TruthSpec};
use hkg::{Error, Result};

#[derive(Parser)]
#[command(name = "hkg", version, about = "Learn and evaluate disease-symptom knowledge graphs")]
struct Cli {
    /// Worker threads (outputs do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, support-filter and aggregate a records file
    Ingest(IngestCmd),
    /// Sample a synthetic records file from a truth spec
    Synth(SynthCmd),
    /// Learn an importance score matrix
    Learn(LearnCmd),
    /// Score a matrix against a reference graph
    Eval(EvalCmd),
    /// Abnormality flags, top/bottom comparison, subgroups, predictability
    Analyze(AnalyzeCmd),
    /// Cross-validated AUROC per disease or symptom
    Predictability(PredictabilityCmd),
    /// ingest → learn → eval → analyze with one seed
    Pipeline(PipelineCmd),
}

#[derive(Args)]
struct CohortArgs {
    /// Records file (`-` for standard input)
    #[arg(long)]
    records: PathBuf,
    /// single, episode or patient
    #[arg(long, default_value = "episode", value_parser = AggregationMode::from_str)]
    aggregate: AggregationMode,
    #[arg(long, default_value_t = DEFAULT_GAP_DAYS)]
    gap_days: i64,
    #[arg(long, default_value_t = 100)]
    min_disease: usize,
    #[arg(long, default_value_t = 10)]
    min_symptom: usize,
    /// Demographic features; any value other than `none` turns them on
    #[arg(long, default_value = "none", value_parser = DemoEncoding::from_str)]
    demo: DemoEncoding,
    /// File listing excluded symptoms, one per line (default: pain)
    #[arg(long)]
    exclude_symptoms: Option<PathBuf>,
}

impl CohortArgs {
    fn load(&self, manifest: &mut RunManifest) -> Result<Ingested> {
        let excluded = match &self.exclude_symptoms {
            Some(path) => {
                let bytes = read_input(path)?;
                manifest.add_input(&path.to_string_lossy(), &bytes);
                String::from_utf8_lossy(&bytes)
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(str::to_string)
                    .collect()
            }
            None => SupportConfig::default().excluded_symptoms,
        };
        let options = IngestOptions {
            support: SupportConfig {
                min_disease_count: self.min_disease,
                min_symptom_count: self.min_symptom,
                excluded_symptoms: excluded,
            },
            mode: self.aggregate,
            gap_days: self.gap_days,
        };
        let ingested = ingest(&self.records, &options, manifest)?;
        manifest.settings.push(format!("demo={}", self.demo));
        info!(
            "{} notes -> {} records over {} diseases and {} symptoms",
            ingested.notes.len(),
            ingested.records.len(),
            ingested.records.vocabulary().n_diseases(),
            ingested.records.vocabulary().n_symptoms()
        );
        Ok(ingested)
    }
}

#[derive(Args)]
struct LearnArgs {
    /// nb, lr, nor, causal_lr, causal_rf or causal_nb
    #[arg(long, value_parser = Learner::from_str)]
    model: Learner,
    /// Required for every model except nb
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    /// Smoothing for the naive Bayes metric
    #[arg(long, default_value_t = 0.0)]
    nb_alpha: f64,
    /// Denominator floor of the causal ratio
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
}

impl LearnArgs {
    fn config(&self, demo: DemoEncoding, manifest: &mut RunManifest) -> Result<LearnConfig> {
        let seed = match (self.seed, self.model.is_stochastic()) {
            (Some(seed), _) => seed,
            (None, false) => 0,
            (None, true) => return Err(Error::Unsupported(format!("model {} is stochastic and needs --seed", self.model))),
        };
        let config = LearnConfig {
            demo: demo != DemoEncoding::None,
            seed,
            folds: self.folds,
            n_trees: self.n_trees,
            nb_alpha: self.nb_alpha,
            epsilon: self.epsilon,
            ..LearnConfig::default()
        };
        let native = match self.model {
            Learner::Lr | Learner::CausalLr => DemoEncoding::Continuous,
            _ => DemoEncoding::Bracket,
        };
        if config.demo && demo != native {
            warn!("model {} encodes demographics as {native}; --demo {demo} only switches them on", self.model);
        }
        manifest.seed = self.seed;
        manifest.model = Some(self.model.to_string());
        manifest.settings.extend(config.describe(self.model));
        Ok(config)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Reference graph TSV
    #[arg(long)]
    reference: PathBuf,
    /// F1 edge budget: `ref` (reference degree) or a fixed count
    #[arg(long, default_value = "ref", value_parser = F1Budget::from_str)]
    budget: F1Budget,
    /// Symptom to drop from the reference (repeatable)
    #[arg(long = "exclude", default_values_t = vec!["pain".to_string()])]
    exclude: Vec<String>,
    /// Denominator of the terminal precision: all pairs or retained candidates
    #[arg(long, default_value = "full", value_parser = Baseline::from_str)]
    baseline: Baseline,
}

impl EvalArgs {
    fn load_reference(&self, manifest: &mut RunManifest) -> Result<KnowledgeGraph> {
        let bytes = read_input(&self.reference)?;
        manifest.add_input(&self.reference.to_string_lossy(), &bytes);
        let graph = KnowledgeGraph::parse_tsv(&String::from_utf8_lossy(&bytes))?;
        let (graph, dropped) = filter_reference(graph, &self.exclude);
        if dropped > 0 {
            info!("dropped {dropped} reference edges touching excluded symptoms");
        }
        manifest.settings.extend([
            format!("budget={}", self.budget.label()),
            format!("baseline={}", self.baseline),
            format!("reference_exclusions={}", self.exclude.join(",")),
            format!("reference_edges_dropped={dropped}"),
        ]);
        Ok(graph)
    }

    fn config(&self) -> EvalConfig {
        EvalConfig {
            budget: self.budget,
            baseline: self.baseline,
        }
    }
}

#[derive(Args)]
struct IngestCmd {
    #[command(flatten)]
    cohort: CohortArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    patients: usize,
    #[arg(long)]
    seed: u64,
    /// Records file to write (`-` for standard output)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct LearnCmd {
    #[command(flatten)]
    cohort: CohortArgs,
    #[command(flatten)]
    learn: LearnArgs,
    /// Score matrix TSV; raw scores go next to it as `<stem>.raw.tsv`
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ranking {
    Raw,
    Export,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    eval: EvalArgs,
    /// Rank by raw scores when a `.raw.tsv` companion exists
    #[arg(long, value_enum, default_value_t = Ranking::Raw)]
    ranking: Ranking,
    /// Output directory; the summary goes to standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Flags,
    Topbottom,
    Subgroups,
    Predictability,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Age,
    Sex,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Disease,
    Symptom,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Logistic,
    RandomForest,
    NaiveBayes,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::RandomForest => Family::RandomForest,
            FamilyArg::NaiveBayes => Family::NaiveBayes,
        }
    }
}

impl From<TargetArg> for TargetKind {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Disease => TargetKind::Disease,
            TargetArg::Symptom => TargetKind::Symptom,
        }
    }
}

#[derive(Args)]
struct AnalyzeCmd {
    #[command(flatten)]
    cohort: CohortArgs,
    #[arg(long, value_enum)]
    what: What,
    /// Score matrix (topbottom)
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Reference graph (topbottom, subgroups)
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "ref", value_parser = F1Budget::from_str)]
    budget: F1Budget,
    #[arg(long = "exclude", default_values_t = vec!["pain".to_string()])]
    exclude: Vec<String>,
    #[arg(long, default_value = "full", value_parser = Baseline::from_str)]
    baseline: Baseline,
    /// Group size for topbottom
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Learner for subgroups
    #[arg(long, value_parser = Learner::from_str)]
    model: Option<Learner>,
    #[arg(long, value_enum, default_value_t = PartitionArg::Sex)]
    partition: PartitionArg,
    #[arg(long, default_value_t = DEFAULT_MIN_SUBGROUP)]
    min_subgroup: usize,
    #[arg(long, value_enum, default_value_t = TargetArg::Disease)]
    target: TargetArg,
    #[arg(long, value_enum, default_value_t = FamilyArg::Logistic)]
    family: FamilyArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    /// Output TSV (`-` for standard output)
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictabilityCmd {
    #[command(flatten)]
    cohort: CohortArgs,
    #[arg(long, value_enum, default_value_t = TargetArg::Disease)]
    target: TargetArg,
    #[arg(long, value_enum, default_value_t = FamilyArg::Logistic)]
    family: FamilyArg,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineCmd {
    #[command(flatten)]
    cohort: CohortArgs,
    #[command(flatten)]
    learn: LearnArgs,
    #[command(flatten)]
    eval: EvalArgs,
    /// Group size for the top/bottom comparison
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let manifest = RunManifest::new(&argv);
    let result = match cli.command {
        Command::Ingest(cmd) => run_ingest(cmd, manifest),
        Command::Synth(cmd) => run_synth(cmd, manifest),
        Command::Learn(cmd) => run_learn(cmd, manifest),
        Command::Eval(cmd) => run_eval(cmd, manifest),
        Command::Analyze(cmd) => run_analyze(cmd, manifest),
        Command::Predictability(cmd) => run_predictability(cmd, manifest),
        Command::Pipeline(cmd) => run_pipeline(cmd, manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn run_ingest(cmd: IngestCmd, mut manifest: RunManifest) -> Result<()> {
    let ingested = cmd.cohort.load(&mut manifest)?;
    create_dir(&cmd.out)?;
    write_manifest(&cmd.out.join("manifest.json"), &manifest)?;
    let vocab = ingested.records.vocabulary();
    write_output(&cmd.out.join("vocabulary.tsv"), &manifest, &vocab.to_tsv())?;
    let summary = format!(
        "notes\t{}\nrecords\t{}\ndiseases\t{}\nsymptoms\t{}\naggregate\t{}\n",
        ingested.notes.len(),
        ingested.records.len(),
        vocab.n_diseases(),
        vocab.n_symptoms(),
        cmd.cohort.aggregate
    );
    write_output(&cmd.out.join("summary.tsv"), &manifest, &summary)
}

fn run_synth(cmd: SynthCmd, mut manifest: RunManifest) -> Result<()> {
    let bytes = read_input(&cmd.spec)?;
    manifest.add_input(&cmd.spec.to_string_lossy(), &bytes);
    let spec = TruthSpec::parse(&String::from_utf8_lossy(&bytes))?;
    manifest.seed = Some(cmd.seed);
    manifest.diseases = Some(spec.n_diseases());
    manifest.symptoms = Some(spec.n_symptoms());
    manifest.settings.push(format!("patients={}", cmd.patients));
    if let Some(path) = &cmd.manifest {
        write_manifest(path, &manifest)?;
    }
    let (notes, truth) = sample_cohort(&spec, cmd.patients, cmd.seed)?;
    write_output(&cmd.out, &manifest, &format_records(&notes))?;
    if let Some(path) = &cmd.truth_out {
        write_output(path, &manifest, &truth.to_tsv())?;
    }
    Ok(())
}

fn write_scores(path: &Path, manifest: &RunManifest, scores: &ScoreMatrix) -> Result<()> {
    write_output(path, manifest, &scores.to_tsv(false))?;
    if scores.raw().is_some() {
        write_output(&raw_scores_path(path), manifest, &scores.to_tsv(true))?;
    }
    Ok(())
}

fn run_learn(cmd: LearnCmd, mut manifest: RunManifest) -> Result<()> {
    let ingested = cmd.cohort.load(&mut manifest)?;
    let config = cmd.learn.config(cmd.cohort.demo, &mut manifest)?;
    if let Some(path) = &cmd.manifest {
        write_manifest(path, &manifest)?;
    }
    let scores = learn(&ingested.records, cmd.learn.model, &config)?;
    write_scores(&cmd.out, &manifest, &scores)
}

fn read_scores(path: &Path, ranking: Ranking, manifest: &mut RunManifest) -> Result<ScoreMatrix> {
    let bytes = read_input(path)?;
    manifest.add_input(&path.to_string_lossy(), &bytes);
    let raw_path = raw_scores_path(path);
    let raw = match ranking {
        Ranking::Raw if raw_path.exists() => {
            let raw = read_input(&raw_path)?;
            manifest.add_input(&raw_path.to_string_lossy(), &raw);
            Some(String::from_utf8_lossy(&raw).into_owned())
        }
        _ => None,
    };
    let scores = ScoreMatrix::from_tsv(&String::from_utf8_lossy(&bytes), raw.as_deref())?;
    manifest.set_vocabulary(scores.vocabulary());
    manifest.model = Some(scores.learner().to_string());
    Ok(scores)
}

fn write_report(dir: &Path, manifest: &RunManifest, report: &EvalReport) -> Result<()> {
    write_output(&dir.join("eval_f1.tsv"), manifest, &report.f1_tsv())?;
    write_output(&dir.join("eval_summary.tsv"), manifest, &report.summary())?;
    write_output(&dir.join("pr_curve.tsv"), manifest, &report.curve_tsv())
}

fn run_eval(cmd: EvalCmd, mut manifest: RunManifest) -> Result<()> {
    let scores = read_scores(&cmd.scores, cmd.ranking, &mut manifest)?;
    let reference = cmd.eval.load_reference(&mut manifest)?;
    let report = evaluate(&scores, &reference, cmd.eval.config())?;
    match &cmd.out {
        Some(dir) => {
            create_dir(dir)?;
            write_manifest(&dir.join("manifest.json"), &manifest)?;
            write_report(dir, &manifest, &report)
        }
        None => write_output(Path::new("-"), &manifest, &report.summary()),
    }
}

fn run_analyze(cmd: AnalyzeCmd, mut manifest: RunManifest) -> Result<()> {
    if let What::Predictability = cmd.what {
        let seed = cmd.seed.ok_or_else(|| Error::Unsupported("predictability needs --seed".into()))?;
        let pcmd = PredictabilityCmd {
            cohort: cmd.cohort,
            target: cmd.target,
            family: cmd.family,
            seed,
            folds: cmd.folds,
            n_trees: cmd.n_trees,
            out: cmd.out,
        };
        return run_predictability(pcmd, manifest);
    }
    let ingested = cmd.cohort.load(&mut manifest)?;
    let records = &ingested.records;
    let eval_args = |reference: PathBuf| EvalArgs {
        reference,
        budget: cmd.budget,
        exclude: cmd.exclude.clone(),
        baseline: cmd.baseline,
    };
    let need = |flag: &str| Error::Unsupported(format!("--what needs --{flag}"));
    let body = match cmd.what {
        What::Flags => {
            let covs = disease_covariates(records);
            let flags = abnormality_flags(&covs, &population_stats(&covs)?);
            covariates_tsv(&covs, &flags, None)
        }
        What::Topbottom => {
            let scores = read_scores(cmd.scores.as_deref().ok_or_else(|| need("scores"))?, Ranking::Raw, &mut manifest)?;
            let eval = eval_args(cmd.reference.clone().ok_or_else(|| need("reference"))?);
            let reference = eval.load_reference(&mut manifest)?;
            let report = evaluate(&scores, &reference, eval.config())?;
            let covs = disease_covariates(records);
            let flags = abnormality_flags(&covs, &population_stats(&covs)?);
            top_bottom_summary(&report.f1_by_disease, &flags, cmd.n).to_tsv()
        }
        What::Subgroups => {
            let model = cmd.model.ok_or_else(|| need("model"))?;
            let learn_args = LearnArgs {
                model,
                seed: cmd.seed,
                folds: cmd.folds,
                n_trees: cmd.n_trees,
                nb_alpha: 0.0,
                epsilon: 1e-6,
            };
            let config = learn_args.config(cmd.cohort.demo, &mut manifest)?;
            let eval = eval_args(cmd.reference.clone().ok_or_else(|| need("reference"))?);
            let reference = eval.load_reference(&mut manifest)?;
            let partition = match cmd.partition {
                PartitionArg::Age => Partition::AgeBrackets,
                PartitionArg::Sex => Partition::Sex,
            };
            subgroup_learn(records, partition, model, &config, &reference, eval.config(), cmd.min_subgroup)?.to_tsv()
        }
        What::Predictability => unreachable!("handled above"),
    };
    write_output(&cmd.out, &manifest, &body)
}

fn run_predictability(cmd: PredictabilityCmd, mut manifest: RunManifest) -> Result<()> {
    let ingested = cmd.cohort.load(&mut manifest)?;
    let family = Family::from(cmd.family);
    let config = LearnConfig {
        demo: cmd.cohort.demo != DemoEncoding::None,
        seed: cmd.seed,
        folds: cmd.folds,
        n_trees: cmd.n_trees,
        ..LearnConfig::default()
    };
    manifest.seed = Some(cmd.seed);
    manifest.settings.push(format!("folds={}", cmd.folds));
    manifest
        .settings
        .extend(config.grid(family).describe().into_iter().map(|c| format!("grid {c}")));
    let rows = predictability(&ingested.records, TargetKind::from(cmd.target), family, &config)?;
    write_output(&cmd.out, &manifest, &predictability_tsv(&rows))
}

fn run_pipeline(cmd: PipelineCmd, mut manifest: RunManifest) -> Result<()> {
    let ingested = cmd.cohort.load(&mut manifest)?;
    let config = cmd.learn.config(cmd.cohort.demo, &mut manifest)?;
    let reference = cmd.eval.load_reference(&mut manifest)?;
    create_dir(&cmd.out)?;
    write_manifest(&cmd.out.join("manifest.json"), &manifest)?;

    let records = &ingested.records;
    write_output(&cmd.out.join("vocabulary.tsv"), &manifest, &records.vocabulary().to_tsv())?;
    let scores = learn(records, cmd.learn.model, &config)?;
    write_scores(&cmd.out.join("scores.tsv"), &manifest, &scores)?;

    let report = evaluate(&scores, &reference, cmd.eval.config())?;
    write_report(&cmd.out, &manifest, &report)?;

    let covs = disease_covariates(records);
    match population_stats(&covs) {
        Ok(stats) => {
            let flags = abnormality_flags(&covs, &stats);
            write_output(
                &cmd.out.join("covariates.tsv"),
                &manifest,
                &covariates_tsv(&covs, &flags, Some(&report.f1_by_disease)),
            )?;
            let tb = top_bottom_summary(&report.f1_by_disease, &flags, cmd.n);
            write_output(&cmd.out.join("topbottom.tsv"), &manifest, &tb.to_tsv())?;
        }
        Err(e) => warn!("skipping abnormality analysis: {e}"),
    }
    info!("AUPRC {:.4}, mean F1 {:.4}", report.auprc(), report.mean_f1());
    Ok(())
}
