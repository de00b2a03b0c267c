//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use absa_forge::corpus::{dataset_stats, dedup_merge};
use absa_forge::domain::{
    polarity_merge, sample_merge, ChainStatus, Dataset, ReasoningChain, Sample, SentimentPolarity,
    Split,
};
use absa_forge::eval::{
    self, build_eval_prompt, cross_entropy, parse_response, validate_class_mode, ClassMode,
    EvalConfig, PredictionSet,
};
use absa_forge::gateway::{Cassette, ChatRequest, GatewayMode, LlmGateway, Transport, TransportFailure};
use absa_forge::inject::{inject_unknowns, InjectionConfig};
use absa_forge::jsonl;
use absa_forge::reasoning::{
    assign_packs, curate, pack, reason_dataset, render_decoder_target, render_encoder_template,
    targeted_mask, unpack, ReferenceTokenizer, TokenSequence, Tokenizer,
};
use absa_forge::upscale::{upscale, UpscaleConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pass(criterion: u32, message: &str) {
    println!("PASS criterion {criterion}: {message}");
}

/// Scripted transport for building cassettes offline.
struct Scripted<F>(F);

impl<F> Transport for Scripted<F>
where
    F: Fn(&serde_json::Value) -> String + Send + Sync,
{
    fn send(&self, body: &serde_json::Value) -> Result<String, TransportFailure> {
        Ok((self.0)(body))
    }
}

fn recording_gateway(
    cassette: &Path,
    script: impl Fn(&serde_json::Value) -> String + Send + Sync + 'static,
) -> LlmGateway {
    LlmGateway::builder(GatewayMode::Record)
        .cassette_path(cassette.to_path_buf())
        .transport(Box::new(Scripted(script)))
        .build()
        .unwrap()
}

fn aspect_pool() -> Vec<String> {
    (0..40).map(|i| format!("aspect {i}")).collect()
}

/// Deterministic synthetic corpus with 1..=3 aspects per sample.
fn fixture_corpus(count: usize, seed: u64) -> Dataset {
    let pool = aspect_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..count)
        .map(|i| {
            let n_aspects = rng.gen_range(1..=3usize);
            let mut pairs = Vec::new();
            let picked = rand::seq::index::sample(&mut rng, pool.len(), n_aspects);
            for idx in picked {
                pairs.push((
                    pool[idx].as_str(),
                    SentimentPolarity::ALL[rng.gen_range(0..3)],
                ));
            }
            Sample::new(
                &format!("Fixture review number {i} covering its aspects."),
                Sample::aspect_map(&pairs).unwrap(),
                None,
                "en",
                "fixture",
            )
            .unwrap()
        })
        .collect();
    Dataset::new(samples, Split::Train)
}

// -------------------------------------------------------------------------
// 1. Targeted masking statistics
// -------------------------------------------------------------------------
#[test]
fn criterion_01_targeted_masking_statistics() {
    let mut tokenizer = ReferenceTokenizer::new();
    let samples = jsonl::read_samples(&fixture("synth.jsonl")).unwrap();
    let sequences: Vec<TokenSequence> = samples
        .iter()
        .map(|s| {
            render_encoder_template(s, s.reasoning.as_ref().unwrap(), &mut tokenizer).unwrap()
        })
        .collect();
    let vocab = tokenizer.vocab();

    let mut selected_total = 0u64;
    let mut masked = 0u64;
    let mut random = 0u64;
    let mut kept = 0u64;
    let mut seed = 0u64;
    while selected_total < 100_000 {
        for seq in &sequences {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            seed += 1;
            let out = targeted_mask(seq, 0.30, &mut rng, vocab).unwrap();
            // Selection size is exactly ceil(0.3 * L) on every sequence.
            let budget = (0.30 * seq.len() as f64).ceil() as usize;
            assert_eq!(out.selected_count(), budget, "budget violated at L = {}", seq.len());
            // 100% of sentiment-span positions are selected.
            let span = seq.spans.sentiments;
            for idx in span.start..span.end {
                assert!(out.selection_mask[idx], "sentiment position {idx} unselected");
            }
            for idx in 0..seq.len() {
                if !out.selection_mask[idx] {
                    continue;
                }
                selected_total += 1;
                if out.input_tokens[idx] == absa_forge::reasoning::tokenizer::MASK {
                    masked += 1;
                } else if out.input_tokens[idx] == seq.tokens[idx] {
                    kept += 1;
                } else {
                    random += 1;
                }
            }
        }
    }
    let f = |n: u64| n as f64 / selected_total as f64;
    assert!((f(masked) - 0.80).abs() < 0.01, "masked fraction {}", f(masked));
    assert!((f(random) - 0.10).abs() < 0.01, "random fraction {}", f(random));
    assert!((f(kept) - 0.10).abs() < 0.01, "kept fraction {}", f(kept));
    pass(
        1,
        &format!(
            "masking stats over {selected_total} selections: {:.2}%/{:.2}%/{:.2}%",
            f(masked) * 100.0,
            f(random) * 100.0,
            f(kept) * 100.0
        ),
    );
}

// -------------------------------------------------------------------------
// 2. Packing oracle equivalence
// -------------------------------------------------------------------------

/// Independent reference: simulate the greedy rule over lengths alone.
fn oracle_pack(lengths: &[usize], l_max: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut used = 0usize;
    for (idx, &len) in lengths.iter().enumerate() {
        let fits = match groups.last() {
            Some(last) if !last.is_empty() => used + 1 + len <= l_max,
            _ => false,
        };
        if fits {
            groups.last_mut().unwrap().push(idx);
            used += 1 + len;
        } else {
            groups.push(vec![idx]);
            used = len;
        }
    }
    groups
}

#[test]
fn criterion_02_packing_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..1000 {
        let l_max = rng.gen_range(8..=256usize);
        let count = rng.gen_range(1..=50usize);
        let lengths: Vec<usize> = (0..count).map(|_| rng.gen_range(1..=l_max)).collect();

        let expected = oracle_pack(&lengths, l_max);
        let actual = assign_packs(&lengths, l_max).unwrap();
        assert_eq!(actual, expected, "case {case}: lengths {lengths:?}, l_max {l_max}");

        let sequences: Vec<TokenSequence> = lengths
            .iter()
            .map(|&len| TokenSequence {
                tokens: (0..len as u32).map(|t| t + 100).collect(),
                spans: Default::default(),
            })
            .collect();
        let packs = pack(&sequences, l_max).unwrap();
        for p in &packs {
            assert!(p.len() <= l_max);
        }
        let restored = unpack(&packs);
        let original: Vec<Vec<u32>> = sequences.iter().map(|s| s.tokens.clone()).collect();
        assert_eq!(restored, original, "case {case} round-trip");
    }
    pass(2, "1000 random length-lists match the independent greedy oracle");
}

// -------------------------------------------------------------------------
// 3. Merge semantics
// -------------------------------------------------------------------------
#[test]
fn criterion_03_merge_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let pool = aspect_pool();
    // The published conflict case, verbatim.
    assert_eq!(
        polarity_merge(SentimentPolarity::Positive, SentimentPolarity::Negative),
        SentimentPolarity::Mixed
    );
    for _ in 0..2000 {
        let p = SentimentPolarity::ALL[rng.gen_range(0..5)];
        let q = SentimentPolarity::ALL[rng.gen_range(0..5)];
        assert_eq!(polarity_merge(p, q), polarity_merge(q, p));
        assert_eq!(polarity_merge(p, p), p);
        if p != q {
            assert_eq!(polarity_merge(p, q), SentimentPolarity::Mixed);
        }
    }
    // Random same-text sample pairs: merge commutes up to provenance order.
    for round in 0..500 {
        let text = format!("Shared text {}.", round % 7);
        let mut build = |source: &str| {
            let n = rng.gen_range(1..=4usize);
            let mut pairs = Vec::new();
            for idx in rand::seq::index::sample(&mut rng, pool.len(), n) {
                pairs.push((pool[idx].as_str(), SentimentPolarity::ALL[rng.gen_range(0..5)]));
            }
            Sample::new(&text, Sample::aspect_map(&pairs).unwrap(), None, "en", source).unwrap()
        };
        let a = build("src-a");
        let b = build("src-b");
        let ab = sample_merge(&a, &b).unwrap();
        let ba = sample_merge(&b, &a).unwrap();
        for (label, polarity) in ab.aspects() {
            assert_eq!(ba.aspects().get(label), Some(polarity));
        }
        assert_eq!(ab.aspects().len(), ba.aspects().len());
        let aa = sample_merge(&a, &a).unwrap();
        assert_eq!(aa, a);
    }
    // dedup_merge idempotence over a corpus with planted duplicates.
    let mut samples = fixture_corpus(300, 3).samples;
    let dupes: Vec<Sample> = samples.iter().step_by(5).cloned().collect();
    samples.extend(dupes);
    let dataset = Dataset::new(samples, Split::Train);
    let once = dedup_merge(&dataset);
    let twice = dedup_merge(&once);
    assert_eq!(once, twice);
    pass(3, "polarity and sample merge properties hold; dedup_merge is idempotent");
}

// -------------------------------------------------------------------------
// 4. Algorithm 1 fidelity
// -------------------------------------------------------------------------
#[test]
fn criterion_04_unknown_injection_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("judge.json");
    let dataset = fixture_corpus(10_000, 44);
    let config = InjectionConfig { p: 0.25, a: 2, b: 4, seed: 4411 };

    // Record an always-approve judge cassette, then replay it.
    let record = recording_gateway(&cassette, |_| "yes".to_string());
    let (recorded_out, _) = inject_unknowns(&dataset, &config, &record).unwrap();
    record.persist().unwrap();

    let replay = LlmGateway::replay(&cassette).unwrap();
    let (out, report) = inject_unknowns(&dataset, &config, &replay).unwrap();
    assert_eq!(out.samples, recorded_out.samples, "record and replay diverge");

    let mut added_counts = [0usize; 3]; // 2, 3, 4
    let mut modified = 0usize;
    for (before, after) in dataset.samples.iter().zip(&out.samples) {
        let added: Vec<_> = after
            .aspects()
            .iter()
            .filter(|(label, _)| !before.aspects().contains_key(*label))
            .collect();
        if added.is_empty() {
            assert_eq!(before, after, "unmodified samples must be bit-identical");
            continue;
        }
        modified += 1;
        assert!((2..=4).contains(&added.len()), "added {} aspects", added.len());
        added_counts[added.len() - 2] += 1;
        for (label, polarity) in added {
            assert_eq!(*polarity, SentimentPolarity::Unknown);
            assert!(!before.aspects().contains_key(label));
        }
    }
    assert_eq!(modified, report.modified);
    let fraction = modified as f64 / dataset.len() as f64;
    assert!(
        (fraction - 0.25).abs() < 0.015,
        "modified fraction {fraction} outside 25% +/- 1.5pp"
    );
    for (i, count) in added_counts.iter().enumerate() {
        let share = *count as f64 / modified as f64;
        assert!(
            (share - 1.0 / 3.0).abs() < 0.03,
            "count {} share {share} outside 1/3 +/- 3pp",
            i + 2
        );
    }
    pass(
        4,
        &format!(
            "modified {:.2}% of samples; added-count shares {:.1}%/{:.1}%/{:.1}%",
            fraction * 100.0,
            added_counts[0] as f64 / modified as f64 * 100.0,
            added_counts[1] as f64 / modified as f64 * 100.0,
            added_counts[2] as f64 / modified as f64 * 100.0
        ),
    );
}

// -------------------------------------------------------------------------
// 5. Algorithm 2 fidelity
// -------------------------------------------------------------------------
#[test]
fn criterion_05_upscaling_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let originals = Dataset::new(
        (0..25)
            .map(|i| {
                Sample::new(
                    &format!("Original benchmark sentence {i}."),
                    Sample::aspect_map(&[("service", SentimentPolarity::Positive)]).unwrap(),
                    None,
                    "en",
                    "semeval",
                )
                .unwrap()
            })
            .collect(),
        Split::Train,
    );
    let config = UpscaleConfig { seed: 55, ..Default::default() };

    // Unique valid completions: 3 calls per pass, so 9 passes reach 27 >= 25.
    let cassette = dir.path().join("upscale.json");
    let counter = AtomicUsize::new(0);
    let record = recording_gateway(&cassette, move |_| {
        serde_json::json!({
            "text": format!("Synthetic benchmark sentence {}.", counter.fetch_add(1, Ordering::SeqCst)),
            "aspects": {"service": "neutral"},
        })
        .to_string()
    });
    let (recorded_out, recorded_stats) = upscale(&originals, &config, &record).unwrap();
    record.persist().unwrap();

    let replay = LlmGateway::replay(&cassette).unwrap();
    let (out, stats) = upscale(&originals, &config, &replay).unwrap();
    assert_eq!(out.samples, recorded_out.samples);
    assert_eq!(stats.passes, 9, "pass count predicted by the simulation");
    assert_eq!(out.len(), 27);
    assert_eq!(recorded_stats.passes, 9);
    assert!(out.len() >= originals.len());

    // No duplicates, and nothing echoing an original.
    let mut seen = std::collections::HashSet::new();
    for sample in &out.samples {
        assert!(seen.insert(sample.normalized_text()));
        assert!(!sample.text().starts_with("Original benchmark"));
    }

    // Degenerate duplicate-only cassette hits the pass cap.
    let cassette2 = dir.path().join("upscale_dup.json");
    let degenerate = recording_gateway(&cassette2, |_| {
        serde_json::json!({"text": "Always the same sentence.", "aspects": {"service": "neutral"}})
            .to_string()
    });
    let tight = UpscaleConfig { seed: 55, max_passes: 6, ..Default::default() };
    let err = upscale(&originals, &tight, &degenerate).unwrap_err();
    assert!(matches!(
        err,
        absa_forge::upscale::UpscaleError::MaxPassesExceeded { generated: 1, .. }
    ));

    // Dedup removes collisions against originals, not just within new_df.
    let cassette3 = dir.path().join("upscale_echo.json");
    let counter = AtomicUsize::new(0);
    let echoing = recording_gateway(&cassette3, move |_| {
        let n = counter.fetch_add(1, Ordering::SeqCst);
        let text = if n.is_multiple_of(2) {
            format!("Original benchmark sentence {}.", n % 25)
        } else {
            format!("Fresh sentence {n}.")
        };
        serde_json::json!({"text": text, "aspects": {"service": "neutral"}}).to_string()
    });
    let (echo_out, _) = upscale(&originals, &config, &echoing).unwrap();
    for sample in &echo_out.samples {
        assert!(!sample.text().starts_with("Original benchmark"));
    }
    pass(5, "25-sample fixture upscales in 9 passes to 27 samples; degenerate cassette errors");
}

// -------------------------------------------------------------------------
// 6. Reasoning curation
// -------------------------------------------------------------------------
#[test]
fn criterion_06_reasoning_curation() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("curation.json");
    let samples = vec![
        Sample::new(
            "The battery is excellent.",
            Sample::aspect_map(&[("battery", SentimentPolarity::Positive)]).unwrap(),
            None,
            "en",
            "fix",
        )
        .unwrap(),
        Sample::new(
            "The screen neither impresses nor offends.",
            Sample::aspect_map(&[("screen", SentimentPolarity::Neutral)]).unwrap(),
            None,
            "en",
            "fix",
        )
        .unwrap(),
        Sample::new(
            "The keyboard flex ruins typing.",
            Sample::aspect_map(&[("keyboard", SentimentPolarity::Negative)]).unwrap(),
            None,
            "en",
            "fix",
        )
        .unwrap(),
        Sample::new(
            "The trackpad is fine.",
            Sample::aspect_map(&[("trackpad", SentimentPolarity::Neutral)]).unwrap(),
            None,
            "en",
            "fix",
        )
        .unwrap(),
    ];

    // correct / refinable / unrefinable / refusal.
    let record = recording_gateway(&cassette, |body: &serde_json::Value| {
        let user = body["messages"][1]["content"].as_str().unwrap();
        let refining = user.contains("earlier attempt");
        if user.contains("battery is excellent") {
            r#"{"reasoning": "clear praise", "aspects": {"battery": "positive"}}"#.to_string()
        } else if user.contains("neither impresses") {
            if refining {
                r#"{"reasoning": "balanced wording means neutral", "aspects": {"screen": "neutral"}}"#.to_string()
            } else {
                r#"{"reasoning": "sounds negative", "aspects": {"screen": "negative"}}"#.to_string()
            }
        } else if user.contains("keyboard flex") {
            // Wrong on both attempts.
            r#"{"reasoning": "flex is normal", "aspects": {"keyboard": "neutral"}}"#.to_string()
        } else if refining {
            "I cannot continue with this request.".to_string()
        } else {
            r#"{"reasoning": "fine means positive", "aspects": {"trackpad": "positive"}}"#.to_string()
        }
    });
    let (kept_recorded, _) = reason_dataset(&samples, &record).unwrap();
    record.persist().unwrap();

    let replay = LlmGateway::replay(&cassette).unwrap();
    let (kept, report) = reason_dataset(&samples, &replay).unwrap();
    assert_eq!(kept.len(), kept_recorded.len());

    // keep / keep / drop / drop.
    assert_eq!(kept.len(), 2);
    assert_eq!(report.correct_first_try, 1);
    assert_eq!(report.refined, 1);
    assert_eq!(report.rejected, 2);
    assert_eq!(kept[0].0.text(), "The battery is excellent.");
    assert_eq!(kept[0].1.status, ChainStatus::Generated);
    assert_eq!(kept[1].0.text(), "The screen neither impresses nor offends.");
    assert_eq!(kept[1].1.status, ChainStatus::Refined);

    // Curation is a pure filter and idempotent.
    let again = curate(kept.clone());
    assert_eq!(again, kept);
    pass(6, "correct/refinable/unrefinable/refusal cassettes yield keep/keep/drop/drop");
}

// -------------------------------------------------------------------------
// 7. Decoder target contract
// -------------------------------------------------------------------------
#[test]
fn criterion_07_decoder_target_contract() {
    let mut tokenizer = ReferenceTokenizer::new();
    let samples = jsonl::read_samples(&fixture("synth.jsonl")).unwrap();
    let chain = ReasoningChain {
        text: "the labels follow from the text".to_string(),
        status: ChainStatus::Refined,
        source_answer_correct: false,
    };
    for sample in &samples {
        for thinking in [false, true] {
            let target = render_decoder_target(
                sample,
                Some(&chain),
                thinking,
                ClassMode::Five,
                &mut tokenizer,
            )
            .unwrap();
            let p = target.prompt_tokens.len();
            assert!(target.loss_mask[..p].iter().all(|&f| !f), "loss on prompt tokens");
            assert!(target.loss_mask[p..].iter().all(|&f| f), "completion tokens unmasked");
            assert_eq!(target.loss_mask.len(), target.total_len());

            let value: serde_json::Value = serde_json::from_str(&target.completion_text).unwrap();
            let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
            if thinking {
                assert_eq!(keys[0], "<thoughts>");
            } else {
                assert!(keys.iter().all(|k| *k != "<thoughts>"));
            }

            let parsed = parse_response(&target.completion_text).unwrap();
            assert_eq!(&parsed.aspects, sample.aspects(), "round-trip to gold labels");
            assert_eq!(parsed.overall, sample.overall);
        }
    }
    pass(7, "loss masks, <thoughts> key order, and completion round-trips all hold");
}

// -------------------------------------------------------------------------
// 8. Eval-harness exactness
// -------------------------------------------------------------------------
#[test]
fn criterion_08_eval_harness_exactness() {
    let dir = tempfile::tempdir().unwrap();
    let pool = aspect_pool();
    // 50 samples x 2 aspects = 100 annotations.
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let samples: Vec<Sample> = (0..50)
        .map(|i| {
            let picked = rand::seq::index::sample(&mut rng, pool.len(), 2);
            let pairs: Vec<(&str, SentimentPolarity)> = picked
                .iter()
                .map(|idx| (pool[idx].as_str(), SentimentPolarity::ALL[rng.gen_range(0..5)]))
                .collect();
            Sample::new(
                &format!("Evaluation fixture text {i}."),
                Sample::aspect_map(&pairs).unwrap(),
                None,
                "en",
                "eval-fx",
            )
            .unwrap()
        })
        .collect();
    let gold = Dataset::new(samples, Split::Test);
    let config = EvalConfig::default();

    // Known error pattern: samples 0..7 get exactly one wrong aspect;
    // samples 10 and 11 return garbage; sample 12 answers inside a fenced
    // block with prose; everything else is perfect.
    let mut cassette = Cassette::default();
    for (i, sample) in gold.samples.iter().enumerate() {
        let request: ChatRequest = build_eval_prompt(sample, &config);
        let response = if i == 10 || i == 11 {
            "The sentiment is hard to tell here.".to_string()
        } else {
            let mut object = serde_json::Map::new();
            for (k, (label, polarity)) in sample.aspects().iter().enumerate() {
                let answer = if i < 7 && k == 0 {
                    // A deliberately wrong polarity.
                    if *polarity == SentimentPolarity::Positive {
                        SentimentPolarity::Negative
                    } else {
                        SentimentPolarity::Positive
                    }
                } else {
                    *polarity
                };
                object.insert(label.name().to_string(), serde_json::Value::String(answer.to_string()));
            }
            let body = serde_json::Value::Object(object).to_string();
            if i == 12 {
                format!("Here you go:\n```json\n{body}\n```\nHope that helps!")
            } else {
                body
            }
        };
        cassette.insert(request.fingerprint(), response);
    }
    let cassette_path = dir.path().join("eval.json");
    cassette.save(&cassette_path).unwrap();

    let gateway = LlmGateway::replay(&cassette_path).unwrap();
    let row = eval::evaluate_dataset("fixture", &gold, &config, &gateway).unwrap();
    // 100 annotations, 7 wrong singles + 2 x 2 from the garbage samples.
    assert_eq!(row.metrics.n_aspects, 100);
    assert_eq!(row.metrics.correct, 89);
    assert_eq!(row.metrics.accuracy, 89.0 / 100.0, "hand-computed accuracy, exact");
    assert_eq!(row.metrics.n_parse_failures, 2);

    // Self-scoring gold against itself yields exactly 1.0.
    let self_predictions: Vec<Option<PredictionSet>> = gold
        .samples
        .iter()
        .map(|s| {
            Some(PredictionSet {
                aspects: s.aspects().clone(),
                overall: s.overall,
            })
        })
        .collect();
    let self_metrics = eval::score(&gold, &self_predictions, &config).unwrap();
    assert_eq!(self_metrics.accuracy, 1.0);

    // Fenced/prose-wrapped JSON parsed (sample 12 scored clean).
    assert!(parse_response("```json\n{\"a\": \"positive\"}\n```").is_ok());

    // Three-class configuration rejects mixed/unknown gold.
    let three = EvalConfig { class_mode: ClassMode::Three, ..Default::default() };
    assert!(validate_class_mode(&gold, &three).is_err());
    pass(8, "50-sample fixture scores 89/100 exactly; self-scoring is 1.0");
}

// -------------------------------------------------------------------------
// 9. End-to-end determinism
// -------------------------------------------------------------------------
#[test]
fn criterion_09_compose_mix_determinism() {
    use std::process::Command;

    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("judge.json");
    let seed = 7u64;

    // Build the judge cassette by running the composition in-process against
    // an always-approve stub, mirroring the binary's seed derivation.
    let inputs = absa_forge::pipeline::ComposeInputs {
        public: vec![fixture("public.jsonl")],
        synth: vec![fixture("synth.jsonl")],
        eval: vec![fixture("eval_split.jsonl")],
        upscaled: Some(fixture("upscaled.jsonl")),
        injection: InjectionConfig {
            p: 0.25,
            a: 2,
            b: 4,
            seed: absa_forge::pipeline::stage_seed(seed, "inject"),
        },
        exclude_sources: vec![],
    };
    let record = recording_gateway(&cassette, |_| "yes".to_string());
    absa_forge::pipeline::compose_mix(&inputs, &record).unwrap();
    record.persist().unwrap();

    let out = dir.path().join("mix.jsonl");
    let manifest = dir.path().join("mix.jsonl.manifest.json");
    let run = || {
        let output = Command::new(env!("CARGO_BIN_EXE_absa-forge"))
            .args([
                "compose-mix",
                "--public",
                fixture("public.jsonl").to_str().unwrap(),
                "--synth",
                fixture("synth.jsonl").to_str().unwrap(),
                "--eval",
                fixture("eval_split.jsonl").to_str().unwrap(),
                "--upscaled",
                fixture("upscaled.jsonl").to_str().unwrap(),
                "--cassette",
                cassette.to_str().unwrap(),
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "compose-mix failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        (
            std::fs::read(&out).unwrap(),
            std::fs::read(&manifest).unwrap(),
        )
    };

    let (bytes_a, manifest_a) = run();
    std::fs::remove_file(&out).unwrap();
    std::fs::remove_file(&manifest).unwrap();
    let (bytes_b, manifest_b) = run();
    assert_eq!(bytes_a, bytes_b, "composed dataset must be byte-identical");
    assert_eq!(manifest_a, manifest_b, "manifests must be byte-identical");
    assert!(!bytes_a.is_empty());
    pass(9, "compose-mix over bundled fixtures is byte-identical across runs");
}

// -------------------------------------------------------------------------
// 10. Stats table
// -------------------------------------------------------------------------
#[test]
fn criterion_10_stats_table() {
    let dataset = Dataset::new(
        jsonl::read_samples(&fixture("stats_fixture.jsonl")).unwrap(),
        Split::Train,
    );
    let row = dataset_stats("stats_fixture", &dataset);
    // Hand-counted: 6 samples; unique aspects battery/screen/price/warranty/
    // support/keyboard; annotations 3 pos, 1 neg, 1 neu, 2 mixed, 1 unknown.
    assert_eq!(row.samples, 6);
    assert_eq!(row.unique_aspects, 6);
    assert_eq!(row.positive, 3);
    assert_eq!(row.negative, 1);
    assert_eq!(row.neutral, 1);
    assert_eq!(row.mixed, 2);
    assert_eq!(row.unknown, 1);
    assert_eq!(row.total_annotations(), 8);

    // Row shape: samples / unique aspects / five polarity counts.
    let value = serde_json::to_value(&row).unwrap();
    for field in ["samples", "unique_aspects", "positive", "negative", "neutral", "mixed", "unknown"] {
        assert!(value.get(field).is_some(), "missing field {field}");
    }
    pass(10, "bundled fixture stats match hand counts and emit the full row shape");
}

// -------------------------------------------------------------------------
// 11. Cross-entropy checks
// -------------------------------------------------------------------------
#[test]
fn criterion_11_cross_entropy() {
    assert_eq!(cross_entropy(&[1.0, 0.0, 0.0, 0.0, 0.0], 0).unwrap(), 0.0);
    let uniform = cross_entropy(&[0.2; 5], 2).unwrap();
    assert!(
        (uniform - 5.0_f64.ln()).abs() < 1e-12,
        "uniform CE {uniform} vs ln 5 {}",
        5.0_f64.ln()
    );
    pass(11, "one-hot scores 0; uniform over five classes scores ln 5 within 1e-12");
}
