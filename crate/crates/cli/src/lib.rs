//! The `persona-survey` command line.
//!
//! Each subcommand reads its options from flags and, optionally, from the
//! matching section of a TOML or JSON file given with `--config`; flags win.
//! Every run that writes files also writes `<output>.manifest.json` with the
//! effective options and SHA-256 hashes of inputs and outputs.

mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use persona_survey::dataset::{
    assemble_dataset, build_from_raw, read_dataset, split_dataset, write_dataset, AssemblyPlan, RawResponse, SplitSpec,
    StratifyKey,
};
use persona_survey::eval::{evaluate_batch, tokenize, EvalContext, EvalItem, EvalLine, IdfWeights, SentimentLexicon};
use persona_survey::generation::{EndpointConfig, GenerationClient, GenerationLine, ResponseCache};
use persona_survey::jsonl::{read_jsonl, write_jsonl};
use persona_survey::persona::{ingest_personas, PersonaStore, SampleStrategy};
use persona_survey::question_bank::{
    load_question_bank, type_distribution, validate_bank, Domain, QuestionBank, TypeRatios, DEFAULT_BANK,
};
use persona_survey::report::{aggregate, best_per_domain, keyed, render, render_winners, Average, Format};

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "persona-survey", version, about = "Build, generate, evaluate and report persona survey datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a dataset from a plan, or package raw responses
    BuildDataset(BuildArgs),
    /// Split a dataset into train, val and test files
    Split(SplitArgs),
    /// Fill assistant turns from a chat-completions endpoint
    Generate(GenerateArgs),
    /// Score generations against reference answers
    Evaluate(EvaluateArgs),
    /// Aggregate metrics into a table
    Report(ReportArgs),
    /// Check a question bank, persona file or dataset
    Validate(ValidateArgs),
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BuildArgs {
    /// TOML or JSON file; options are read from its [build_dataset] section
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Question bank file (default: the bundled bank)
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Persona file, JSON lines or one description per line
    #[arg(long)]
    personas: Option<PathBuf>,
    /// Plan file mapping domain to record count, or `reference` for the
    /// 3,568-record plan
    #[arg(long)]
    plan: Option<String>,
    /// Raw rows {persona_id, question_id, response} to package instead of a plan
    #[arg(long, conflicts_with = "plan")]
    responses: Option<PathBuf>,
    /// Question-type ratios open,likert,yesno,agreement
    #[arg(long)]
    ratios: Option<String>,
    /// uniform or category_balanced
    #[arg(long)]
    persona_strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SplitArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// train,val,test fractions (default 0.8,0.1,0.1)
    #[arg(long)]
    fractions: Option<String>,
    /// Comma-separated keys from domain, qtype
    #[arg(long)]
    stratify: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for train.jsonl, val.jsonl and test.jsonl (default: next to the input)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// Base URL; requests go to {endpoint}/v1/chat/completions
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Per-request timeout in seconds
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Backoff base and cap in milliseconds
    #[arg(long)]
    backoff_base_ms: Option<u64>,
    #[arg(long)]
    backoff_cap_ms: Option<u64>,
    /// Seeds retry jitter
    #[arg(long)]
    seed: Option<u64>,
    /// Response cache directory
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Dataset holding the reference answers
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// Generations file; repeat for several models
    #[arg(long)]
    generations: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sentiment lexicon, token<TAB>+1|-1 per line (default: bundled)
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Weight semantic matching by IDF over the references
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    idf: Option<bool>,
    /// Quality weights format,length,diversity
    #[arg(long)]
    quality_weights: Option<String>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReportArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// model or model,domain
    #[arg(long)]
    group: Option<String>,
    /// markdown or csv
    #[arg(long)]
    format: Option<String>,
    /// Average per-domain means instead of examples
    #[arg(long = "macro", num_args = 0..=1, default_missing_value = "true")]
    #[serde(rename = "macro")]
    macro_avg: Option<bool>,
    /// Append the best model per domain by this metric field
    #[arg(long)]
    best_per_domain: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ValidateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    personas: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

/// Exit code and message of a failed run.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn domain(err: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: err.to_string() }
}

type Outcome = Result<(), Failure>;

/// Parses `argv` (program name first) and runs the subcommand. Returns 0 on
/// success, 1 on a domain error and 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::BuildDataset(a) => with_config(a, "build_dataset", build_dataset),
        Command::Split(a) => with_config(a, "split", split),
        Command::Generate(a) => with_config(a, "generate", generate),
        Command::Evaluate(a) => with_config(a, "evaluate", evaluate),
        Command::Report(a) => with_config(a, "report", report),
        Command::Validate(a) => with_config(a, "validate", validate),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

trait Configurable: Sized + DeserializeOwned {
    fn config_path(&self) -> Option<&Path>;
    /// Fills every unset option from `file`.
    fn fill_from(&mut self, file: Self);
}

macro_rules! configurable {
    ($t:ty { $($field:ident),* } $(lists { $($list:ident),* })?) => {
        impl Configurable for $t {
            fn config_path(&self) -> Option<&Path> {
                self.config.as_deref()
            }

            fn fill_from(&mut self, file: Self) {
                $(if self.$field.is_none() {
                    self.$field = file.$field;
                })*
                $($(if self.$list.is_empty() {
                    self.$list = file.$list;
                })*)?
            }
        }
    };
}

configurable!(BuildArgs { bank, personas, plan, responses, ratios, persona_strategy, seed, out });
configurable!(SplitArgs { input, fractions, stratify, seed, out_dir });
configurable!(GenerateArgs {
    input, endpoint, model, out, max_tokens, temperature, timeout, max_retries, max_in_flight, backoff_base_ms,
    backoff_cap_ms, seed, cache
});
configurable!(EvaluateArgs { input, out, lexicon, idf, quality_weights } lists { generations });
configurable!(ReportArgs { input, group, format, macro_avg, best_per_domain, out });
configurable!(ValidateArgs { bank, personas, dataset });

fn with_config<A: Configurable>(mut args: A, section: &str, f: fn(A) -> Outcome) -> Outcome {
    if let Some(path) = args.config_path().map(Path::to_path_buf) {
        let text = std::fs::read_to_string(&path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|x| x == "json");
        let mut doc: BTreeMap<String, serde_json::Value> = if is_json {
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        };
        if let Some(value) = doc.remove(section) {
            let file: A = serde_json::from_value(value).map_err(|e| usage(format!("{}: [{section}] {e}", path.display())))?;
            args.fill_from(file);
        }
    }
    f(args)
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| usage(format!("missing required option --{flag}")))
}

fn parse_floats<const N: usize>(text: &str, what: &str) -> Result<[f64; N], Failure> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("{what}: {e}")))?;
    values.try_into().map_err(|v: Vec<f64>| usage(format!("{what}: expected {N} comma-separated numbers, got {}", v.len())))
}

fn load_bank(path: Option<&Path>, manifest: &mut Manifest) -> Result<QuestionBank, Failure> {
    match path {
        Some(p) => {
            manifest.input(p)?;
            load_question_bank(p).map_err(domain)
        }
        None => {
            manifest.input_bytes("bundled:default_bank.json", DEFAULT_BANK.as_bytes());
            Ok(QuestionBank::bundled())
        }
    }
}

fn load_personas(path: &Path, manifest: &mut Manifest) -> Result<PersonaStore, Failure> {
    manifest.input(path)?;
    let ingested = ingest_personas(path).map_err(domain)?;
    for s in &ingested.skipped {
        eprintln!("{}:{}: skipped ({})", path.display(), s.line, s.reason);
    }
    Ok(ingested.store)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlanFile {
    Nested { counts: BTreeMap<Domain, usize> },
    Flat(BTreeMap<Domain, usize>),
}

fn read_structured<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|x| x == "toml") {
        toml::from_str(&text).map_err(|e| domain(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| domain(format!("{}: {e}", path.display())))
    }
}

fn build_dataset(args: BuildArgs) -> Outcome {
    let out = required(args.out.clone(), "out")?;
    let personas_path = required(args.personas.clone(), "personas")?;
    let mut manifest = Manifest::new("build-dataset", &args);
    let bank = load_bank(args.bank.as_deref(), &mut manifest)?;
    let personas = load_personas(&personas_path, &mut manifest)?;
    let records = if let Some(rows_path) = &args.responses {
        manifest.input(rows_path)?;
        let rows: Vec<RawResponse> = read_jsonl(rows_path).map_err(domain)?;
        build_from_raw(&rows, &personas, &bank).map_err(domain)?
    } else {
        let plan_arg = args.plan.as_deref().ok_or_else(|| usage("one of --plan or --responses is required"))?;
        let seed = required(args.seed, "seed")?;
        let mut plan = if plan_arg == "reference" {
            AssemblyPlan::reference(seed)
        } else {
            let path = Path::new(plan_arg);
            manifest.input(path)?;
            let counts = match read_structured::<PlanFile>(path)? {
                PlanFile::Nested { counts } | PlanFile::Flat(counts) => counts,
            };
            AssemblyPlan::new(counts, seed)
        };
        if let Some(r) = &args.ratios {
            let [o, l, y, a] = parse_floats::<4>(r, "--ratios")?;
            plan.ratios = TypeRatios::new(o, l, y, a).map_err(|e| usage(e.to_string()))?;
        }
        if let Some(s) = &args.persona_strategy {
            plan.persona_strategy = match s.as_str() {
                "uniform" => SampleStrategy::Uniform,
                "category_balanced" | "category-balanced" => SampleStrategy::CategoryBalanced,
                other => return Err(usage(format!("unknown persona strategy `{other}`"))),
            };
        }
        assemble_dataset(&personas, &bank, &plan).map_err(domain)?
    };
    write_dataset(&records, &out).map_err(domain)?;
    manifest.output(&out)?;
    manifest.write_next_to(&out)?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn split(args: SplitArgs) -> Outcome {
    let input = required(args.input.clone(), "in")?;
    let seed = required(args.seed, "seed")?;
    let fractions = match &args.fractions {
        Some(f) => parse_floats::<3>(f, "--fractions")?,
        None => [0.8, 0.1, 0.1],
    };
    let stratify: Vec<StratifyKey> = match &args.stratify {
        Some(s) if !s.trim().is_empty() => s.split(',').map(str::parse).collect::<Result<_, _>>().map_err(usage)?,
        _ => Vec::new(),
    };
    let spec = SplitSpec { fractions, stratify, seed };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut manifest = Manifest::new("split", &args);
    manifest.input(&input)?;
    let records = read_dataset(&input).map_err(domain)?;
    let parts = split_dataset(&records, &spec).map_err(domain)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| domain(format!("{}: {e}", out_dir.display())))?;
    for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        let path = out_dir.join(format!("{name}.jsonl"));
        write_dataset(part, &path).map_err(domain)?;
        manifest.output(&path)?;
    }
    manifest.write_to(&out_dir.join("split.manifest.json"))?;
    let (a, b, c) = parts.sizes();
    eprintln!("split {} records into train {a}, val {b}, test {c}", records.len());
    Ok(())
}

fn generate(args: GenerateArgs) -> Outcome {
    let input = required(args.input.clone(), "in")?;
    let out = required(args.out.clone(), "out")?;
    let defaults = EndpointConfig::default();
    let mut cfg = EndpointConfig {
        max_tokens: args.max_tokens.unwrap_or(defaults.max_tokens),
        temperature: args.temperature.unwrap_or(defaults.temperature),
        request_timeout_secs: args.timeout.unwrap_or(defaults.request_timeout_secs),
        max_retries: args.max_retries.unwrap_or(defaults.max_retries),
        max_in_flight: args.max_in_flight.unwrap_or(defaults.max_in_flight),
        seed: args.seed.unwrap_or(defaults.seed),
        ..EndpointConfig::new(required(args.endpoint.clone(), "endpoint")?, required(args.model.clone(), "model")?)
    }
    .with_env_api_key();
    cfg.retry.base_ms = args.backoff_base_ms.unwrap_or(cfg.retry.base_ms);
    cfg.retry.cap_ms = args.backoff_cap_ms.unwrap_or(cfg.retry.cap_ms);
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let mut manifest = Manifest::new("generate", &args);
    manifest.set("endpoint_config", &cfg);
    manifest.input(&input)?;
    let records = read_dataset(&input).map_err(domain)?;
    let cache = args.cache.as_ref().map(ResponseCache::open).transpose().map_err(domain)?;
    let client = GenerationClient::new(cfg).map_err(domain)?;
    let results = client.generate_batch(&records, cache.as_ref());
    let lines: Vec<GenerationLine> = results.iter().map(GenerationLine::from).collect();
    write_jsonl(&lines, &out).map_err(domain)?;
    manifest.output(&out)?;
    manifest.write_next_to(&out)?;

    let failed = results.iter().filter(|r| r.error.is_some()).count();
    let cached = results.iter().filter(|r| r.cached).count();
    let requests: u32 = results.iter().map(|r| r.attempt_count).sum();
    eprintln!("generated {} ({} cached, {} failed, {} requests)", results.len(), cached, failed, requests);
    for r in results.iter().filter(|r| r.error.is_some()) {
        eprintln!("  {}: {}", r.record_id, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Outcome {
    let input = required(args.input.clone(), "in")?;
    let out = required(args.out.clone(), "out")?;
    if args.generations.is_empty() {
        return Err(usage("missing required option --generations"));
    }
    let mut manifest = Manifest::new("evaluate", &args);
    manifest.input(&input)?;
    let records = read_dataset(&input).map_err(domain)?;
    let by_id: BTreeMap<&str, _> = records.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut ctx = EvalContext::default();
    if let Some(path) = &args.lexicon {
        manifest.input(path)?;
        ctx.lexicon = SentimentLexicon::load(path).map_err(domain)?;
    }
    if let Some(w) = &args.quality_weights {
        let [f, l, d] = parse_floats::<3>(w, "--quality-weights")?;
        ctx.quality.weights = persona_survey::eval::survey::QualityWeights { format: f, length: l, diversity: d };
    }
    if args.idf.unwrap_or(false) {
        let docs: Vec<Vec<String>> = records.iter().map(|r| tokenize(r.assistant_content())).collect();
        ctx.idf = Some(IdfWeights::from_documents(&docs));
    }

    let mut generations = Vec::new();
    for path in &args.generations {
        manifest.input(path)?;
        let lines: Vec<GenerationLine> = read_jsonl(path).map_err(domain)?;
        generations.extend(lines);
    }
    let mut items = Vec::with_capacity(generations.len());
    let mut skipped = 0usize;
    for g in &generations {
        let record = by_id
            .get(g.record_id.as_str())
            .ok_or_else(|| domain(format!("generation for unknown record {}", g.record_id)))?;
        if record.assistant_content().trim().is_empty() {
            skipped += 1;
            continue;
        }
        items.push((
            EvalItem { record, model: &g.model, generated: &g.text, reference: record.assistant_content() },
            g.error.is_some(),
        ));
    }
    let batch: Vec<EvalItem> = items.iter().map(|(i, _)| *i).collect();
    let mut lines: Vec<EvalLine> = evaluate_batch(&batch, &ctx).map_err(domain)?;
    for (line, (_, failed)) in lines.iter_mut().zip(&items) {
        if *failed {
            line.flags.push("generation_error".into());
        }
    }
    write_jsonl(&lines, &out).map_err(domain)?;
    manifest.output(&out)?;
    manifest.write_next_to(&out)?;
    eprintln!("evaluated {} generations ({} without a reference skipped)", lines.len(), skipped);
    Ok(())
}

fn report(args: ReportArgs) -> Outcome {
    let input = required(args.input.clone(), "in")?;
    let by_domain = match args.group.as_deref().unwrap_or("model") {
        "model" => false,
        "model,domain" => true,
        other => return Err(usage(format!("--group must be model or model,domain, got `{other}`"))),
    };
    let format: Format = args.format.as_deref().unwrap_or("markdown").parse().map_err(usage)?;
    let average = if args.macro_avg.unwrap_or(false) { Average::Macro } else { Average::Micro };
    let mut manifest = Manifest::new("report", &args);
    manifest.input(&input)?;
    let lines: Vec<EvalLine> = read_jsonl(&input).map_err(domain)?;
    let rows = aggregate(&keyed(&lines, by_domain), average).map_err(domain)?;
    let mut text = render(&rows, format);
    if let Some(criterion) = &args.best_per_domain {
        let per_domain = aggregate(&keyed(&lines, true), Average::Micro).map_err(domain)?;
        let mut domains: Vec<Domain> = lines.iter().map(|l| l.domain).collect();
        domains.sort();
        domains.dedup();
        let winners = best_per_domain(&per_domain, criterion, &domains).map_err(|e| usage(e.to_string()))?;
        text.push('\n');
        text.push_str(&render_winners(&winners, format));
    }
    match &args.out {
        Some(out) => {
            std::fs::write(out, &text).map_err(|e| domain(format!("{}: {e}", out.display())))?;
            manifest.output(out)?;
            manifest.write_next_to(out)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Outcome {
    if args.bank.is_none() && args.personas.is_none() && args.dataset.is_none() {
        return Err(usage("nothing to validate: pass --bank, --personas or --dataset"));
    }
    let mut problems = 0usize;
    if let Some(path) = &args.bank {
        match load_question_bank(path) {
            Ok(bank) => {
                let problems_here = validate_bank(&bank);
                for v in &problems_here {
                    println!("{}: {v}", path.display());
                }
                problems += problems_here.len();
                let dist = type_distribution(bank.iter()).map_err(domain)?;
                println!(
                    "{}: {} questions (open {:.3}, likert {:.3}, yesno {:.3}, agreement {:.3})",
                    path.display(),
                    bank.len(),
                    dist.open,
                    dist.likert,
                    dist.yesno,
                    dist.agreement
                );
            }
            Err(e) => {
                println!("{}: {e}", path.display());
                problems += 1;
            }
        }
    }
    if let Some(path) = &args.personas {
        match ingest_personas(path) {
            Ok(ing) => {
                for s in &ing.skipped {
                    println!("{}:{}: skipped ({})", path.display(), s.line, s.reason);
                }
                println!("{}: {} personas", path.display(), ing.store.len());
            }
            Err(e) => {
                println!("{}: {e}", path.display());
                problems += 1;
            }
        }
    }
    if let Some(path) = &args.dataset {
        match read_dataset(path) {
            Ok(records) => println!("{}: {} records", path.display(), records.len()),
            Err(e) => {
                println!("{}: {e}", path.display());
                problems += 1;
            }
        }
    }
    if problems > 0 {
        return Err(domain(format!("{problems} problem(s) found")));
    }
    Ok(())
}
