//! Benchmark prompt construction. Templates live behind a small registry so
//! alternative phrasings can be selected by name from configuration.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use super::{ClassMode, EvalConfig};
use crate::domain::Sample;
use crate::gateway::ChatRequest;

/// Pseudo-aspect under which the whole text's sentiment is queried.
pub const OVERALL_SENTIMENT_KEY: &str = "overall sentiment";

pub trait PromptTemplate: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, sample: &Sample, config: &EvalConfig) -> ChatRequest;
}

pub struct TemplateRegistry {
    templates: HashMap<String, Arc<dyn PromptTemplate>>,
}

impl TemplateRegistry {
    pub fn get(&self, name: &str) -> Option<Arc<dyn PromptTemplate>> {
        self.templates.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.templates.keys().cloned().collect();
        names.sort();
        names
    }
}

pub fn template_registry() -> &'static TemplateRegistry {
    static REGISTRY: OnceLock<TemplateRegistry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut templates: HashMap<String, Arc<dyn PromptTemplate>> = HashMap::new();
        let standard: Arc<dyn PromptTemplate> = Arc::new(StandardTemplate);
        templates.insert(standard.name().to_string(), standard);
        TemplateRegistry { templates }
    })
}

fn sentiment_list(mode: ClassMode) -> String {
    mode.allowed()
        .iter()
        .map(|p| p.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// The aspect names queried for a sample, with the overall pseudo-aspect
/// appended when configured and present.
pub fn queried_aspects(sample: &Sample, include_overall: bool) -> Vec<String> {
    let mut names: Vec<String> = sample
        .aspects()
        .keys()
        .map(|label| label.name().to_string())
        .collect();
    if include_overall && sample.overall.is_some() {
        names.push(OVERALL_SENTIMENT_KEY.to_string());
    }
    names
}

/// The benchmark user prompt body: allowed sentiment values, the text and
/// aspect list, and the JSON answer schema repeated to sharpen instruction
/// following. Shared by evaluation requests and decoder-training targets.
pub fn eval_user_prompt(
    text: &str,
    aspects: &[String],
    class_mode: ClassMode,
    include_overall: bool,
) -> String {
    let sentiments = sentiment_list(class_mode);
    let aspect_list = aspects.join(", ");
    let overall_clause = if include_overall && aspects.iter().any(|a| a == OVERALL_SENTIMENT_KEY) {
        format!(
            "The aspect \"{OVERALL_SENTIMENT_KEY}\" should be interpreted as the overall \
             sentiment of the whole text.\n"
        )
    } else {
        String::new()
    };
    format!(
        "Analyze the sentiment of the text towards each of the given aspects.\n\
         For every aspect answer with exactly one of: {sentiments}.\n\
         Respond with a JSON object mapping each aspect to its sentiment, like \
         {{\"<aspect>\": \"<sentiment>\"}}.\n\n\
         Text: {text}\n\
         Aspects: {aspect_list}\n\
         {overall_clause}\n\
         Remember: respond only with a JSON object mapping each aspect to one of \
         {sentiments}, nothing else."
    )
}

struct StandardTemplate;

impl PromptTemplate for StandardTemplate {
    fn name(&self) -> &'static str {
        "standard"
    }

    fn build(&self, sample: &Sample, config: &EvalConfig) -> ChatRequest {
        let aspects = queried_aspects(sample, config.include_overall);
        let user = eval_user_prompt(sample.text(), &aspects, config.class_mode, config.include_overall);
        ChatRequest::system_user(
            "You are an expert in aspect-based sentiment analysis.",
            &user,
            config.gen_params,
            "eval",
        )
    }
}

/// Build the evaluation prompt for one sample under the configured template.
pub fn build_eval_prompt(sample: &Sample, config: &EvalConfig) -> ChatRequest {
    let template = template_registry()
        .get(&config.prompt_template)
        .unwrap_or_else(|| template_registry().get("standard").expect("standard registered"));
    template.build(sample, config)
}
