//! Source format adapters. Each input format lives behind the common
//! `SourceAdapter` trait and is registered by name; adding a source means
//! writing a descriptor, not touching pipeline code.

use std::collections::HashMap;
use std::sync::Arc;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::domain::{polarity_parse, AspectLabel, AspectMap, Sample};

/// Where a source file lives and how to read it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub id: String,
    pub path: String,
    /// Registered adapter name: jsonl-canonical | csv-pairs | semeval-xml-like.
    pub format: String,
    /// Canonical field -> source column mapping (csv-pairs only).
    #[serde(default)]
    pub field_map: HashMap<String, String>,
    #[serde(default = "default_language")]
    pub default_language: String,
    /// Honored by the pipeline composer for sources that degrade
    /// encoder-model training when included.
    #[serde(default)]
    pub exclude_from_encoder_train: bool,
}

fn default_language() -> String {
    "en".to_string()
}

pub trait SourceAdapter: Send + Sync {
    fn name(&self) -> &'static str;
    fn parse(&self, descriptor: &SourceDescriptor, content: &str)
        -> Result<Vec<Sample>, CorpusError>;
}

/// Name -> adapter lookup. The default registry holds the three built-in
/// formats; callers may register more.
#[derive(Clone)]
pub struct AdapterRegistry {
    adapters: HashMap<String, Arc<dyn SourceAdapter>>,
}

impl AdapterRegistry {
    pub fn empty() -> Self {
        AdapterRegistry {
            adapters: HashMap::new(),
        }
    }

    pub fn register(&mut self, adapter: Arc<dyn SourceAdapter>) {
        self.adapters.insert(adapter.name().to_string(), adapter);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn SourceAdapter>> {
        self.adapters.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.adapters.keys().cloned().collect();
        names.sort();
        names
    }
}

impl Default for AdapterRegistry {
    fn default() -> Self {
        let mut registry = AdapterRegistry::empty();
        registry.register(Arc::new(CanonicalJsonlAdapter));
        registry.register(Arc::new(CsvPairsAdapter));
        registry.register(Arc::new(SemevalXmlAdapter));
        registry
    }
}

fn parse_err(descriptor: &SourceDescriptor, line: usize, cause: impl ToString) -> CorpusError {
    CorpusError::AdapterParseError {
        file: descriptor.path.clone(),
        line,
        cause: cause.to_string(),
    }
}

/// The identity adapter: one canonical JSON object per line.
pub struct CanonicalJsonlAdapter;

impl SourceAdapter for CanonicalJsonlAdapter {
    fn name(&self) -> &'static str {
        "jsonl-canonical"
    }

    fn parse(
        &self,
        descriptor: &SourceDescriptor,
        content: &str,
    ) -> Result<Vec<Sample>, CorpusError> {
        let mut samples = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sample: Sample =
                serde_json::from_str(line).map_err(|e| parse_err(descriptor, idx + 1, e))?;
            samples.push(sample);
        }
        Ok(samples)
    }
}

/// Two-column CSV: a text column and a column of `aspect:polarity` pairs
/// separated by semicolons. Column names come from the descriptor field_map.
pub struct CsvPairsAdapter;

impl SourceAdapter for CsvPairsAdapter {
    fn name(&self) -> &'static str {
        "csv-pairs"
    }

    fn parse(
        &self,
        descriptor: &SourceDescriptor,
        content: &str,
    ) -> Result<Vec<Sample>, CorpusError> {
        let text_col = descriptor.field_map.get("text").ok_or_else(|| {
            CorpusError::BadDescriptor {
                id: descriptor.id.clone(),
                message: "csv-pairs needs a field_map entry for \"text\"".to_string(),
            }
        })?;
        let aspects_col = descriptor.field_map.get("aspects").ok_or_else(|| {
            CorpusError::BadDescriptor {
                id: descriptor.id.clone(),
                message: "csv-pairs needs a field_map entry for \"aspects\"".to_string(),
            }
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .flexible(false)
            .from_reader(content.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| parse_err(descriptor, 1, e))?
            .clone();
        let text_idx = headers
            .iter()
            .position(|h| h == text_col)
            .ok_or_else(|| parse_err(descriptor, 1, format!("missing column {text_col:?}")))?;
        let aspects_idx = headers
            .iter()
            .position(|h| h == aspects_col)
            .ok_or_else(|| parse_err(descriptor, 1, format!("missing column {aspects_col:?}")))?;

        let mut samples = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let line = row_idx + 2; // header is line 1
            let record = record.map_err(|e| parse_err(descriptor, line, e))?;
            let text = record
                .get(text_idx)
                .ok_or_else(|| parse_err(descriptor, line, "short row"))?;
            let pairs_raw = record
                .get(aspects_idx)
                .ok_or_else(|| parse_err(descriptor, line, "short row"))?;
            let mut aspects = AspectMap::new();
            for pair in pairs_raw.split(';').filter(|p| !p.trim().is_empty()) {
                let (name, polarity) = pair.split_once(':').ok_or_else(|| {
                    parse_err(descriptor, line, format!("pair {pair:?} is not aspect:polarity"))
                })?;
                let label =
                    AspectLabel::new(name).map_err(|e| parse_err(descriptor, line, e))?;
                let polarity =
                    polarity_parse(polarity).map_err(|e| parse_err(descriptor, line, e))?;
                if aspects.insert(label.clone(), polarity).is_some() {
                    return Err(parse_err(
                        descriptor,
                        line,
                        format!("duplicate aspect {:?}", label.name()),
                    ));
                }
            }
            let sample = Sample::new(
                text,
                aspects,
                None,
                &descriptor.default_language,
                &descriptor.id,
            )
            .map_err(|e| parse_err(descriptor, line, e))?;
            samples.push(sample);
        }
        Ok(samples)
    }
}

/// SemEval-style per-sentence XML: `<sentence>` elements holding a `<text>`
/// child and `<aspectTerm term=".." polarity=".."/>` annotations.
pub struct SemevalXmlAdapter;

impl SourceAdapter for SemevalXmlAdapter {
    fn name(&self) -> &'static str {
        "semeval-xml-like"
    }

    fn parse(
        &self,
        descriptor: &SourceDescriptor,
        content: &str,
    ) -> Result<Vec<Sample>, CorpusError> {
        let mut reader = Reader::from_str(content);
        reader.config_mut().trim_text(true);
        let mut samples = Vec::new();
        let mut text: Option<String> = None;
        let mut aspects = AspectMap::new();
        let mut in_text = false;
        let mut sentence_line = 1usize;
        loop {
            let position_line = |reader: &Reader<&[u8]>| {
                content[..reader.buffer_position() as usize].matches('\n').count() + 1
            };
            match reader.read_event() {
                Ok(Event::Start(e)) => match e.name().as_ref() {
                    b"sentence" => {
                        sentence_line = position_line(&reader);
                        text = None;
                        aspects = AspectMap::new();
                    }
                    b"text" => in_text = true,
                    b"aspectTerm" => {
                        self.push_aspect(descriptor, &reader, &e, &mut aspects, &position_line)?
                    }
                    _ => {}
                },
                Ok(Event::Empty(e)) => {
                    if e.name().as_ref() == b"aspectTerm" {
                        self.push_aspect(descriptor, &reader, &e, &mut aspects, &position_line)?;
                    }
                }
                Ok(Event::Text(t)) => {
                    if in_text {
                        let value = t
                            .unescape()
                            .map_err(|e| parse_err(descriptor, position_line(&reader), e))?;
                        text = Some(value.into_owned());
                    }
                }
                Ok(Event::End(e)) => match e.name().as_ref() {
                    b"text" => in_text = false,
                    b"sentence" => {
                        let text = text.take().ok_or_else(|| {
                            parse_err(descriptor, sentence_line, "sentence without text")
                        })?;
                        let sample = Sample::new(
                            &text,
                            std::mem::take(&mut aspects),
                            None,
                            &descriptor.default_language,
                            &descriptor.id,
                        )
                        .map_err(|e| parse_err(descriptor, sentence_line, e))?;
                        samples.push(sample);
                    }
                    _ => {}
                },
                Ok(Event::Eof) => break,
                Ok(_) => {}
                Err(e) => return Err(parse_err(descriptor, position_line(&reader), e)),
            }
        }
        Ok(samples)
    }
}

impl SemevalXmlAdapter {
    fn push_aspect(
        &self,
        descriptor: &SourceDescriptor,
        reader: &Reader<&[u8]>,
        element: &quick_xml::events::BytesStart<'_>,
        aspects: &mut AspectMap,
        position_line: &dyn Fn(&Reader<&[u8]>) -> usize,
    ) -> Result<(), CorpusError> {
        let line = position_line(reader);
        let mut term: Option<String> = None;
        let mut polarity: Option<String> = None;
        for attr in element.attributes() {
            let attr = attr.map_err(|e| parse_err(descriptor, line, e))?;
            let value = attr
                .unescape_value()
                .map_err(|e| parse_err(descriptor, line, e))?
                .into_owned();
            match attr.key.as_ref() {
                b"term" => term = Some(value),
                b"polarity" => polarity = Some(value),
                _ => {}
            }
        }
        let term = term.ok_or_else(|| parse_err(descriptor, line, "aspectTerm without term"))?;
        let polarity_raw =
            polarity.ok_or_else(|| parse_err(descriptor, line, "aspectTerm without polarity"))?;
        let label = AspectLabel::new(&term).map_err(|e| parse_err(descriptor, line, e))?;
        let polarity = polarity_parse(&polarity_raw).map_err(|e| parse_err(descriptor, line, e))?;
        match aspects.get_mut(&label) {
            // Repeated mentions of one term in a sentence: resolve like any
            // other label conflict.
            Some(existing) => *existing = crate::domain::polarity_merge(*existing, polarity),
            None => {
                aspects.insert(label, polarity);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SentimentPolarity;

    fn descriptor(format: &str, field_map: &[(&str, &str)]) -> SourceDescriptor {
        SourceDescriptor {
            id: "fixture".to_string(),
            path: "fixture".to_string(),
            format: format.to_string(),
            field_map: field_map
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            default_language: "en".to_string(),
            exclude_from_encoder_train: false,
        }
    }

    #[test]
    fn canonical_jsonl_identity() {
        let adapter = CanonicalJsonlAdapter;
        let content = r#"{"text":"Great battery.","aspects":{"battery":"positive"},"overall":null,"language":"en","source":"x"}"#;
        let samples = adapter.parse(&descriptor("jsonl-canonical", &[]), content).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].text(), "Great battery.");
    }

    #[test]
    fn csv_pairs_parses_mapped_columns() {
        let adapter = CsvPairsAdapter;
        let content = "review,labels\n\"Good food, bad service.\",food:positive;service:negative\n";
        let d = descriptor("csv-pairs", &[("text", "review"), ("aspects", "labels")]);
        let samples = adapter.parse(&d, content).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].aspects().len(), 2);
        assert_eq!(samples[0].source, "fixture");
    }

    #[test]
    fn csv_empty_text_is_a_parse_error() {
        let adapter = CsvPairsAdapter;
        let content = "review,labels\n\"\",food:positive\n";
        let d = descriptor("csv-pairs", &[("text", "review"), ("aspects", "labels")]);
        let err = adapter.parse(&d, content).unwrap_err();
        assert!(matches!(err, CorpusError::AdapterParseError { line: 2, .. }));
    }

    #[test]
    fn csv_unmapped_polarity_raises() {
        let adapter = CsvPairsAdapter;
        let content = "review,labels\nfine,food:pos\n";
        let d = descriptor("csv-pairs", &[("text", "review"), ("aspects", "labels")]);
        assert!(adapter.parse(&d, content).is_err());
    }

    #[test]
    fn csv_missing_field_map_is_a_descriptor_error() {
        let adapter = CsvPairsAdapter;
        let d = descriptor("csv-pairs", &[("text", "review")]);
        assert!(matches!(
            adapter.parse(&d, "review\nhello\n"),
            Err(CorpusError::BadDescriptor { .. })
        ));
    }

    #[test]
    fn semeval_xml_parses_sentences_and_terms() {
        let adapter = SemevalXmlAdapter;
        let content = r#"<?xml version="1.0"?>
<sentences>
  <sentence id="1">
    <text>The fish &amp; chips were great.</text>
    <aspectTerms>
      <aspectTerm term="fish &amp; chips" polarity="positive"/>
    </aspectTerms>
  </sentence>
  <sentence id="2">
    <text>Nothing to report.</text>
  </sentence>
</sentences>"#;
        let samples = adapter.parse(&descriptor("semeval-xml-like", &[]), content).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].text(), "The fish & chips were great.");
        let label = AspectLabel::new("fish & chips").unwrap();
        assert_eq!(samples[0].aspects()[&label], SentimentPolarity::Positive);
        assert!(samples[1].aspects().is_empty());
    }

    #[test]
    fn semeval_repeated_term_conflict_merges_to_mixed() {
        let adapter = SemevalXmlAdapter;
        let content = r#"<sentences><sentence><text>Service was odd.</text>
<aspectTerms><aspectTerm term="service" polarity="positive"/><aspectTerm term="Service" polarity="negative"/></aspectTerms>
</sentence></sentences>"#;
        let samples = adapter.parse(&descriptor("semeval-xml-like", &[]), content).unwrap();
        let label = AspectLabel::new("service").unwrap();
        assert_eq!(samples[0].aspects()[&label], SentimentPolarity::Mixed);
    }

    #[test]
    fn registry_knows_the_builtin_formats() {
        let registry = AdapterRegistry::default();
        assert_eq!(
            registry.names(),
            vec!["csv-pairs", "jsonl-canonical", "semeval-xml-like"]
        );
        assert!(registry.get("jsonl-canonical").is_some());
        assert!(registry.get("parquet").is_none());
    }
}
