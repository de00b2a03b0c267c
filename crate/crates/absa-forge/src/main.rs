//! Command-line surface binding the pipeline stages into reproducible,
//! manifest-tracked runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use absa_forge::corpus::{
    self, dataset_stats, dedup_merge, leak_check, AdapterRegistry, SourceDescriptor, StatsTable,
};
use absa_forge::domain::{Dataset, Sample, Split};
use absa_forge::eval::{self, ClassMode, EvalConfig};
use absa_forge::gateway::{GatewayMode, LlmGateway};
use absa_forge::inject::InjectionConfig;
use absa_forge::jsonl;
use absa_forge::pipeline::{
    self, stage_seed, ComposeInputs, GatewayConfig, PipelineError, RunConfig, RunManifest,
};
use absa_forge::reasoning::{
    self, pack_masked, render_encoder_cls_input, render_encoder_template, targeted_mask,
    MaskedSequence, ReferenceTokenizer, TokenSequence, Tokenizer, Vocab,
};
use absa_forge::upsd::{forge_dataset, load_seed_corpus, LabelPolicy};
use absa_forge::upscale::{upscale, UpscaleConfig};

#[derive(Parser)]
#[command(name = "absa-forge", version, about = "Build, augment, and evaluate five-class aspect-based sentiment datasets")]
struct Cli {
    /// Optional TOML run configuration; flags override config fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; per-stage seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct GatewayArgs {
    /// Cassette file for record/replay.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Chat-completions endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model identifier sent on the wire.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
    /// Force a gateway mode instead of inferring it.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Record,
    Replay,
    Passthrough,
}

impl From<ModeArg> for GatewayMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Record => GatewayMode::Record,
            ModeArg::Replay => GatewayMode::Replay,
            ModeArg::Passthrough => GatewayMode::Passthrough,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassModeArg {
    Three,
    Five,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderMode {
    /// Four-field thinking template for masked pretraining.
    Template,
    /// Per-aspect [CLS] text [SEP] aspect [SEP] inputs.
    Cls,
    /// Decoder prompt/completion targets with loss masks.
    Decoder,
}

#[derive(Subcommand)]
enum Command {
    /// Parse one source file under its descriptor's adapter.
    Ingest {
        /// Source descriptor JSON (id, path, format, field_map, language).
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge samples that share a normalized text.
    Dedup {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove train samples whose text appears in any eval split.
    LeakCheck {
        #[arg(long)]
        train: PathBuf,
        /// Eval split to protect (repeatable).
        #[arg(long = "leak-against", required = true)]
        eval: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-dataset statistics (samples, unique aspects, class counts).
    Stats {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        /// Also write the table as JSON.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Generate synthetic samples from a seed corpus (labels first).
    Forge {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        count: usize,
        /// Five comma-separated weights over positive,negative,neutral,mixed,unknown.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Add judge-verified absent aspects labeled unknown.
    InjectUnknown {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        p: f64,
        #[arg(long, default_value_t = 2)]
        min_aspects: u32,
        #[arg(long, default_value_t = 4)]
        max_aspects: u32,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Grow a dataset with style-matched synthetic samples.
    Upscale {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.3)]
        temperature: f64,
        #[arg(long, default_value_t = 0.95)]
        top_p: f64,
        #[arg(long, default_value_t = 50)]
        max_passes: u32,
        /// Accept all five classes instead of the classic three.
        #[arg(long)]
        five_class: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Bootstrap reasoning chains (generate, refine, curate).
    Reason {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Render samples to token sequences or decoder targets.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "template")]
        mode: RenderMode,
        #[arg(long)]
        out: PathBuf,
        /// Where to persist the vocabulary grown during rendering.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
        /// Thinking mode for decoder targets.
        #[arg(long)]
        thinking: bool,
    },
    /// Apply targeted masking and pack the results.
    Mask {
        /// Rendered sequences JSONL.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 0.30)]
        ratio: f64,
        #[arg(long, default_value_t = 512)]
        l_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pack rendered sequences without masking.
    Pack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 512)]
        l_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the benchmark protocol over one or more datasets.
    Eval {
        /// name=path (repeatable).
        #[arg(long, required = true)]
        dataset: Vec<String>,
        #[arg(long, value_enum, default_value = "five")]
        class_mode: ClassModeArg,
        #[arg(long)]
        include_overall: bool,
        #[arg(long)]
        strict_json: bool,
        /// Report JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Translate a dataset's texts and aspect names.
    Translate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        language: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Assemble the mixed training set end to end.
    ComposeMix {
        #[arg(long, required = true)]
        public: Vec<PathBuf>,
        #[arg(long)]
        synth: Vec<PathBuf>,
        #[arg(long = "eval")]
        eval: Vec<PathBuf>,
        /// Pre-upscaled split to append.
        #[arg(long)]
        upscaled: Option<PathBuf>,
        /// Source id to drop from the composed training set (repeatable).
        #[arg(long = "exclude-source")]
        exclude_sources: Vec<String>,
        #[arg(long, default_value_t = 0.25)]
        p: f64,
        #[arg(long, default_value_t = 2)]
        min_aspects: u32,
        #[arg(long, default_value_t = 4)]
        max_aspects: u32,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Uniformly sample document-level datapoints, keeping only overall labels.
    SampleOveralls {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 600)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.config.as_deref().map(RunConfig::load).transpose() {
        Ok(config) => config.unwrap_or_default(),
        Err(e) => return fail(&e),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    match dispatch(cli.command, &config, seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

/// Machine-readable error record on stderr, exit 1.
fn fail(error: &PipelineError) -> ExitCode {
    let record = serde_json::json!({
        "error": error.to_string(),
        "kind": format!("{error:?}").split(['(', ' ']).next().unwrap_or("Unknown"),
    });
    eprintln!("{record}");
    ExitCode::FAILURE
}

fn resolve_gateway(args: &GatewayArgs, config: &RunConfig) -> Result<LlmGateway, PipelineError> {
    let mut gateway_config: GatewayConfig = config.gateway.clone();
    if args.cassette.is_some() {
        gateway_config.cassette = args.cassette.clone();
    }
    if args.endpoint.is_some() {
        gateway_config.endpoint = args.endpoint.clone();
    }
    if let Some(model) = &args.model {
        gateway_config.model = model.clone();
    }
    if args.auth_env.is_some() {
        gateway_config.auth_env = args.auth_env.clone();
    }
    if let Some(mode) = args.mode {
        gateway_config.mode = Some(mode.into());
    }
    gateway_config.build_gateway()
}

fn write_manifest(
    stage: &str,
    inputs: &[&Path],
    outputs: &[&Path],
    effective_config: serde_json::Value,
    gateway: Option<&LlmGateway>,
) -> Result<(), PipelineError> {
    let manifest = RunManifest::build(stage, inputs, outputs, &effective_config, gateway)?;
    let out = outputs.first().expect("stages with manifests have outputs");
    let manifest_path = PathBuf::from(format!("{}.manifest.json", out.display()));
    manifest.save(&manifest_path)
}

fn read_dataset(path: &Path) -> Result<Dataset, PipelineError> {
    Ok(Dataset::new(jsonl::read_samples(path)?, Split::Train))
}

fn parse_policy(raw: Option<&str>) -> Result<LabelPolicy, PipelineError> {
    let Some(raw) = raw else {
        return Ok(LabelPolicy::uniform());
    };
    let weights: Vec<f64> = raw
        .split(',')
        .map(|w| w.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::Config(format!("bad policy weights: {e}")))?;
    let weights: [f64; 5] = weights
        .try_into()
        .map_err(|_| PipelineError::Config("policy needs exactly five weights".to_string()))?;
    Ok(LabelPolicy(weights))
}

fn parse_named_dataset(raw: &str) -> Result<(String, PathBuf), PipelineError> {
    let (name, path) = raw
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("--dataset wants name=path, got {raw:?}")))?;
    Ok((name.to_string(), PathBuf::from(path)))
}

fn dispatch(command: Command, config: &RunConfig, seed: u64) -> Result<(), PipelineError> {
    match command {
        Command::Ingest { source, out } => {
            let raw = std::fs::read_to_string(&source)
                .map_err(|e| pipeline::io_err(&source, e))?;
            let descriptor: SourceDescriptor = serde_json::from_str(&raw)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", source.display())))?;
            let dataset = corpus::ingest(&descriptor, &AdapterRegistry::default())?;
            jsonl::write_samples(&out, &dataset.samples)?;
            println!("ingested {} samples from {}", dataset.len(), descriptor.id);
            write_manifest(
                "ingest",
                &[&source, Path::new(&descriptor.path)],
                &[&out],
                serde_json::to_value(&descriptor).expect("descriptor serializes"),
                None,
            )
        }
        Command::Dedup { input, out } => {
            let dataset = read_dataset(&input)?;
            let deduped = dedup_merge(&dataset);
            jsonl::write_samples(&out, &deduped.samples)?;
            println!("dedup: {} -> {} samples", dataset.len(), deduped.len());
            write_manifest("dedup", &[&input], &[&out], serde_json::json!({}), None)
        }
        Command::LeakCheck { train, eval, out } => {
            let mut dataset = read_dataset(&train)?;
            let mut removed = 0usize;
            let mut collisions = Vec::new();
            for path in &eval {
                let eval_set = read_dataset(path)?;
                let (survivor, report) = leak_check(&dataset, &eval_set);
                dataset = survivor;
                removed += report.removed_count;
                collisions.extend(report.collisions);
            }
            jsonl::write_samples(&out, &dataset.samples)?;
            let report_path = PathBuf::from(format!("{}.leaks.json", out.display()));
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&collisions).expect("report serializes"),
            )
            .map_err(|e| pipeline::io_err(&report_path, e))?;
            println!("leak-check: removed {removed} colliding samples");
            let mut inputs: Vec<&Path> = vec![&train];
            inputs.extend(eval.iter().map(|p| p.as_path()));
            write_manifest("leak-check", &inputs, &[&out], serde_json::json!({}), None)
        }
        Command::Stats { inputs, json_out } => {
            let mut table = StatsTable::default();
            for path in &inputs {
                let dataset = read_dataset(path)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                table.rows.push(dataset_stats(&name, &dataset));
            }
            print!("{}", table.render());
            if let Some(path) = json_out {
                std::fs::write(
                    &path,
                    serde_json::to_string_pretty(&table).expect("table serializes"),
                )
                .map_err(|e| pipeline::io_err(&path, e))?;
            }
            Ok(())
        }
        Command::Forge {
            corpus: corpus_path,
            count,
            policy,
            out,
            gateway,
        } => {
            let seed_corpus = load_seed_corpus(&corpus_path)?;
            let policy = parse_policy(policy.as_deref())?;
            let gateway = resolve_gateway(&gateway, config)?;
            let stage = stage_seed(seed, "forge");
            let dataset = forge_dataset(&seed_corpus, count, &policy, &gateway, stage)?;
            gateway.persist()?;
            jsonl::write_samples(&out, &dataset.samples)?;
            println!("forged {} samples", dataset.len());
            write_manifest(
                "forge",
                &[&corpus_path],
                &[&out],
                serde_json::json!({"count": count, "policy": policy.0, "seed": stage}),
                Some(&gateway),
            )
        }
        Command::InjectUnknown {
            input,
            p,
            min_aspects,
            max_aspects,
            out,
            gateway,
        } => {
            let dataset = read_dataset(&input)?;
            let gateway = resolve_gateway(&gateway, config)?;
            let injection = InjectionConfig {
                p,
                a: min_aspects,
                b: max_aspects,
                seed: stage_seed(seed, "inject"),
            };
            let (injected, report) = absa_forge::inject::inject_unknowns(&dataset, &injection, &gateway)?;
            gateway.persist()?;
            jsonl::write_samples(&out, &injected.samples)?;
            println!(
                "inject-unknown: modified {} of {} samples ({} aspects added)",
                report.modified,
                injected.len(),
                report.injected_aspects
            );
            write_manifest(
                "inject-unknown",
                &[&input],
                &[&out],
                serde_json::to_value(injection).expect("config serializes"),
                Some(&gateway),
            )
        }
        Command::Upscale {
            input,
            batch_size,
            temperature,
            top_p,
            max_passes,
            five_class,
            out,
            gateway,
        } => {
            let dataset = read_dataset(&input)?;
            let gateway = resolve_gateway(&gateway, config)?;
            let upscale_config = UpscaleConfig {
                batch_size,
                temperature,
                top_p,
                seed: stage_seed(seed, "upscale"),
                max_passes,
                five_class,
            };
            let (generated, stats) = upscale(&dataset, &upscale_config, &gateway)?;
            gateway.persist()?;
            jsonl::write_samples(&out, &generated.samples)?;
            let stats_path = PathBuf::from(format!("{}.stats.json", out.display()));
            std::fs::write(
                &stats_path,
                serde_json::to_string_pretty(&stats).expect("stats serialize"),
            )
            .map_err(|e| pipeline::io_err(&stats_path, e))?;
            println!(
                "upscale: {} samples in {} passes (neutral share {:.1}%)",
                stats.generated,
                stats.passes,
                stats.neutral_share * 100.0
            );
            write_manifest(
                "upscale",
                &[&input],
                &[&out],
                serde_json::to_value(upscale_config).expect("config serializes"),
                Some(&gateway),
            )
        }
        Command::Reason { input, out, gateway } => {
            let dataset = read_dataset(&input)?;
            let gateway = resolve_gateway(&gateway, config)?;
            let (kept, report) = reasoning::reason_dataset(&dataset.samples, &gateway)?;
            gateway.persist()?;
            let samples: Vec<Sample> = kept
                .into_iter()
                .map(|(sample, chain)| sample.with_reasoning(chain))
                .collect();
            jsonl::write_samples(&out, &samples)?;
            println!(
                "reason: kept {} of {} ({} correct, {} refined, {} rejected)",
                samples.len(),
                report.total,
                report.correct_first_try,
                report.refined,
                report.rejected
            );
            write_manifest(
                "reason",
                &[&input],
                &[&out],
                serde_json::to_value(&report).expect("report serializes"),
                Some(&gateway),
            )
        }
        Command::Render {
            input,
            mode,
            out,
            vocab_out,
            thinking,
        } => {
            let samples = jsonl::read_samples(&input)?;
            let mut tokenizer = ReferenceTokenizer::new();
            let mut lines: Vec<String> = Vec::new();
            let mut skipped = 0usize;
            match mode {
                RenderMode::Template => {
                    for sample in &samples {
                        let Some(chain) = &sample.reasoning else {
                            skipped += 1;
                            continue;
                        };
                        let seq = render_encoder_template(sample, chain, &mut tokenizer)?;
                        lines.push(serde_json::to_string(&seq).expect("sequence serializes"));
                    }
                }
                RenderMode::Cls => {
                    for sample in &samples {
                        for label in sample.aspects().keys() {
                            let seq =
                                render_encoder_cls_input(sample.text(), label.name(), &mut tokenizer)?;
                            lines.push(serde_json::to_string(&seq).expect("sequence serializes"));
                        }
                    }
                }
                RenderMode::Decoder => {
                    for sample in &samples {
                        let target = reasoning::render_decoder_target(
                            sample,
                            sample.reasoning.as_ref(),
                            thinking,
                            ClassMode::Five,
                            &mut tokenizer,
                        )?;
                        let record = reasoning::DecoderTargetRecord::from(&target);
                        lines.push(serde_json::to_string(&record).expect("record serializes"));
                    }
                }
            }
            write_lines(&out, &lines)?;
            if let Some(vocab_path) = &vocab_out {
                tokenizer.vocab().save(vocab_path)?;
            }
            println!("rendered {} sequences ({} skipped)", lines.len(), skipped);
            write_manifest(
                "render",
                &[&input],
                &[&out],
                serde_json::json!({"mode": format!("{:?}", mode as u8), "thinking": thinking}),
                None,
            )
        }
        Command::Mask {
            input,
            vocab,
            ratio,
            l_max,
            out,
        } => {
            let sequences = read_sequences(&input)?;
            let vocab = Vocab::load(&vocab)?;
            let mask_seed = stage_seed(seed, "mask");
            let mut masked: Vec<MaskedSequence> = Vec::with_capacity(sequences.len());
            for (index, seq) in sequences.iter().enumerate() {
                let mut rng = rand::SeedableRng::seed_from_u64(absa_forge::derive_seed(
                    mask_seed,
                    &format!("sample:{index}"),
                ));
                masked.push(targeted_mask(seq, ratio, &mut rng, &vocab)?);
            }
            let packs = pack_masked(&masked, l_max)?;
            let header = serde_json::json!({
                "format": "absa-forge-masked-packs",
                "version": 1,
                "ratio": ratio,
                "l_max": l_max,
            });
            let mut lines = vec![header.to_string()];
            lines.extend(packs.iter().map(|p| serde_json::to_string(p).expect("pack serializes")));
            write_lines(&out, &lines)?;
            println!("masked {} sequences into {} packs", masked.len(), packs.len());
            write_manifest(
                "mask",
                &[&input],
                &[&out],
                serde_json::json!({"ratio": ratio, "l_max": l_max, "seed": mask_seed}),
                None,
            )
        }
        Command::Pack { input, l_max, out } => {
            let sequences = read_sequences(&input)?;
            let packs = reasoning::pack(&sequences, l_max)?;
            let header = serde_json::json!({
                "format": "absa-forge-packs",
                "version": 1,
                "l_max": l_max,
            });
            let mut lines = vec![header.to_string()];
            lines.extend(packs.iter().map(|p| serde_json::to_string(p).expect("pack serializes")));
            write_lines(&out, &lines)?;
            println!("packed {} sequences into {} packs", sequences.len(), packs.len());
            write_manifest(
                "pack",
                &[&input],
                &[&out],
                serde_json::json!({"l_max": l_max}),
                None,
            )
        }
        Command::Eval {
            dataset,
            class_mode,
            include_overall,
            strict_json,
            out,
            gateway,
        } => {
            let gateway = resolve_gateway(&gateway, config)?;
            let eval_config = EvalConfig {
                class_mode: match class_mode {
                    ClassModeArg::Three => ClassMode::Three,
                    ClassModeArg::Five => ClassMode::Five,
                },
                include_overall,
                strict_json,
                ..Default::default()
            };
            let mut named: Vec<(String, Dataset)> = Vec::new();
            let mut paths: Vec<PathBuf> = Vec::new();
            for raw in &dataset {
                let (name, path) = parse_named_dataset(raw)?;
                named.push((name, read_dataset(&path)?));
                paths.push(path);
            }
            let report = eval::run_benchmark(&named, &eval_config, &gateway)?;
            gateway.persist()?;
            print!("{}", report.render());
            if let Some(out) = &out {
                std::fs::write(
                    out,
                    serde_json::to_string_pretty(&report).expect("report serializes"),
                )
                .map_err(|e| pipeline::io_err(out, e))?;
                let inputs: Vec<&Path> = paths.iter().map(|p| p.as_path()).collect();
                write_manifest(
                    "eval",
                    &inputs,
                    &[out.as_path()],
                    serde_json::json!({
                        "class_mode": format!("{:?}", eval_config.class_mode),
                        "include_overall": include_overall,
                        "strict_json": strict_json,
                    }),
                    Some(&gateway),
                )?;
            }
            Ok(())
        }
        Command::Translate {
            input,
            language,
            out,
            gateway,
        } => {
            let dataset = read_dataset(&input)?;
            let gateway = resolve_gateway(&gateway, config)?;
            let outcome = corpus::translate_dataset(&dataset, &language, &gateway)?;
            gateway.persist()?;
            jsonl::write_samples(&out, &outcome.dataset.samples)?;
            println!(
                "translate: {} samples to {language} ({} dropped)",
                outcome.dataset.len(),
                outcome.dropped
            );
            write_manifest(
                "translate",
                &[&input],
                &[&out],
                serde_json::json!({"language": language, "dropped": outcome.dropped}),
                Some(&gateway),
            )
        }
        Command::ComposeMix {
            public,
            synth,
            eval,
            upscaled,
            exclude_sources,
            p,
            min_aspects,
            max_aspects,
            out,
            gateway,
        } => {
            // p = 0 composes without injection and issues no LLM calls, so
            // it runs without any gateway configuration.
            let gateway = if p == 0.0 {
                resolve_gateway(&gateway, config).unwrap_or_else(|_| LlmGateway::inert())
            } else {
                resolve_gateway(&gateway, config)?
            };
            let inputs = ComposeInputs {
                public: public.clone(),
                synth: synth.clone(),
                eval: eval.clone(),
                upscaled: upscaled.clone(),
                injection: InjectionConfig {
                    p,
                    a: min_aspects,
                    b: max_aspects,
                    seed: stage_seed(seed, "inject"),
                },
                exclude_sources,
            };
            let outcome = pipeline::compose_mix(&inputs, &gateway)?;
            gateway.persist()?;
            jsonl::write_samples(&out, &outcome.dataset.samples)?;
            println!(
                "compose-mix: {} samples ({} leaks removed, {} samples injected)",
                outcome.dataset.len(),
                outcome.leak_report.removed_count,
                outcome.injection_report.modified
            );
            let mut input_paths: Vec<&Path> = Vec::new();
            input_paths.extend(public.iter().map(|p| p.as_path()));
            input_paths.extend(synth.iter().map(|p| p.as_path()));
            input_paths.extend(eval.iter().map(|p| p.as_path()));
            if let Some(upscaled) = &upscaled {
                input_paths.push(upscaled.as_path());
            }
            let manifest_counts: BTreeMap<String, usize> =
                outcome.dataset.manifest.iter().cloned().collect();
            write_manifest(
                "compose-mix",
                &input_paths,
                &[&out],
                serde_json::json!({
                    "injection": inputs.injection,
                    "excluded_sources": inputs.exclude_sources,
                    "leaks_removed": outcome.leak_report.removed_count,
                    "sources": manifest_counts,
                }),
                Some(&gateway),
            )
        }
        Command::SampleOveralls { inputs, n, out } => {
            let datasets: Vec<Dataset> = inputs
                .iter()
                .map(|p| read_dataset(p))
                .collect::<Result<_, _>>()?;
            let refs: Vec<&Dataset> = datasets.iter().collect();
            let picked = corpus::sample_overalls(&refs, n, stage_seed(seed, "overalls"))?;
            jsonl::write_samples(&out, &picked.samples)?;
            println!("sampled {} overall-sentiment datapoints", picked.len());
            let input_paths: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
            write_manifest(
                "sample-overalls",
                &input_paths,
                &[&out],
                serde_json::json!({"n": n}),
                None,
            )
        }
    }
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| pipeline::io_err(path, e))?;
        }
    }
    let mut body = lines.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| pipeline::io_err(path, e))
}

fn read_sequences(path: &Path) -> Result<Vec<TokenSequence>, PipelineError> {
    let raw = std::fs::read_to_string(path).map_err(|e| pipeline::io_err(path, e))?;
    raw.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
        })
        .collect()
}
