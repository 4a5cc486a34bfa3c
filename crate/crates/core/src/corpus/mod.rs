//! Corpus ingestion, preprocessing and dataset statistics.

mod text;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use text::{is_punctuation, normalize, tokenize};

use crate::eval::{split_present_absent, KeyphraseSet};
use crate::{Error, Result, DEFAULT_MAX_TOKENS, DEFAULT_SEP_TOKEN};

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    /// Gold keyphrases; `None` for unlabeled records.
    pub keyphrases: Option<Vec<String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            keyphrases: None,
        }
    }

    pub fn with_keyphrases<I, S>(mut self, keyphrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.keyphrases = Some(keyphrases.into_iter().map(Into::into).collect());
        self
    }
}

/// JSON field names used when reading and writing corpora.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub id: String,
    pub title: String,
    pub body: String,
    pub keyphrases: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            title: "title".into(),
            body: "abstract".into(),
            keyphrases: "keywords".into(),
        }
    }
}

/// Streaming JSONL reader. Yields documents in file order; bad records
/// surface as `Err` items and iteration continues with the next line.
pub struct CorpusReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    schema: Schema,
    seen: HashSet<String>,
}

impl CorpusReader {
    fn parse_line(&mut self, line: &str) -> Result<Document> {
        let line_no = self.line_no;
        let value: Value = serde_json::from_str(line).map_err(|e| Error::MalformedJson {
            path: self.path.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(Error::InvalidRecord {
                path: self.path.clone(),
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        let doc = document_from_object(&obj, &self.schema).map_err(|e| match e {
            FieldError::Missing(field) => Error::MissingField {
                path: self.path.clone(),
                line: line_no,
                field,
            },
            FieldError::Invalid(message) => Error::InvalidRecord {
                path: self.path.clone(),
                line: line_no,
                message,
            },
        })?;
        if !self.seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        Ok(doc)
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&line));
        }
    }
}

enum FieldError {
    Missing(String),
    Invalid(String),
}

fn string_field(obj: &Map<String, Value>, name: &str) -> std::result::Result<String, FieldError> {
    match obj.get(name) {
        None => Err(FieldError::Missing(name.to_string())),
        Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(FieldError::Invalid(format!(
            "field `{name}` must be a string, got {other}"
        ))),
    }
}

fn document_from_object(
    obj: &Map<String, Value>,
    schema: &Schema,
) -> std::result::Result<Document, FieldError> {
    let id = string_field(obj, &schema.id)?;
    if id.is_empty() {
        return Err(FieldError::Invalid(format!("field `{}` is empty", schema.id)));
    }
    let title = string_field(obj, &schema.title)?;
    let body = string_field(obj, &schema.body)?;
    if title.trim().is_empty() && body.trim().is_empty() {
        return Err(FieldError::Invalid(format!(
            "document `{id}` has neither title nor body"
        )));
    }
    let keyphrases = match obj.get(&schema.keyphrases) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(split_keyphrase_string(s)),
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) if !s.trim().is_empty() => out.push(s.trim().to_string()),
                    Value::String(_) => {}
                    other => {
                        return Err(FieldError::Invalid(format!(
                            "keyphrase must be a string, got {other}"
                        )))
                    }
                }
            }
            Some(out)
        }
        Some(other) => {
            return Err(FieldError::Invalid(format!(
                "field `{}` must be a list or a string, got {other}",
                schema.keyphrases
            )))
        }
    };
    Ok(Document {
        id,
        title,
        body,
        keyphrases,
    })
}

fn split_keyphrase_string(s: &str) -> Vec<String> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// Opens a JSONL corpus for streaming.
pub fn load_corpus(path: impl AsRef<Path>, schema: &Schema) -> Result<CorpusReader> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok(CorpusReader {
        path,
        lines: BufReader::new(file).lines(),
        line_no: 0,
        schema: schema.clone(),
        seen: HashSet::new(),
    })
}

/// Loads a whole corpus, failing on the first bad record.
pub fn read_corpus(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<Document>> {
    load_corpus(path, schema)?.collect()
}

/// Writes documents as JSONL using the schema's field names.
pub fn write_corpus<'a>(
    path: impl AsRef<Path>,
    docs: impl IntoIterator<Item = &'a Document>,
    schema: &Schema,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        let mut obj = Map::new();
        obj.insert(schema.id.clone(), Value::String(doc.id.clone()));
        obj.insert(schema.title.clone(), Value::String(doc.title.clone()));
        obj.insert(schema.body.clone(), Value::String(doc.body.clone()));
        if let Some(kps) = &doc.keyphrases {
            obj.insert(
                schema.keyphrases.clone(),
                Value::Array(kps.iter().cloned().map(Value::String).collect()),
            );
        }
        serde_json::to_writer(&mut out, &Value::Object(obj))
            .map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Normalised, tokenised model input: title tokens, separator, body tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
    /// Number of leading tokens that come from the title.
    pub title_len: usize,
}

impl TokenizedDoc {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn title(&self) -> &[String] {
        &self.tokens[..self.title_len]
    }

    /// Tokens after the separator (empty when truncation cut into the title).
    pub fn body(&self) -> &[String] {
        self.tokens.get(self.title_len + 1..).unwrap_or(&[])
    }
}

/// Preprocessing settings shared by every stage that sees model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputConfig {
    pub max_tokens: usize,
    pub sep_token: String,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            sep_token: DEFAULT_SEP_TOKEN.to_string(),
        }
    }
}

impl InputConfig {
    pub fn with_max_tokens(max_tokens: usize) -> Self {
        Self {
            max_tokens,
            ..Self::default()
        }
    }

    /// Same separator, no truncation.
    pub fn untruncated(&self) -> Self {
        Self {
            max_tokens: usize::MAX,
            sep_token: self.sep_token.clone(),
        }
    }

    pub fn model_input(&self, doc: &Document) -> TokenizedDoc {
        assert!(self.max_tokens >= 1, "max_tokens must be at least 1");
        let mut tokens = tokenize(&normalize(&doc.title));
        let title_len = tokens.len().min(self.max_tokens);
        if tokens.len() < self.max_tokens {
            tokens.push(self.sep_token.clone());
            if tokens.len() < self.max_tokens {
                let body = tokenize(&normalize(&doc.body));
                let room = self.max_tokens - tokens.len();
                tokens.extend(body.into_iter().take(room));
            }
        }
        tokens.truncate(self.max_tokens);
        TokenizedDoc {
            doc_id: doc.id.clone(),
            tokens,
            title_len,
        }
    }
}

/// `model_input` with the default separator.
pub fn model_input(doc: &Document, max_tokens: usize) -> TokenizedDoc {
    InputConfig::with_max_tokens(max_tokens).model_input(doc)
}

/// Dataset statistics in the style of keyphrase benchmark tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_docs: usize,
    /// Documents without gold keyphrases; not included in any average.
    pub num_unlabeled: usize,
    pub avg_kp_per_doc: f64,
    /// Average keyphrase length in tokens.
    pub avg_kp_len: f64,
    /// Percentage of gold keyphrases that are absent from their document.
    pub pct_absent_kp: f64,
    /// Average title + body length in tokens.
    pub avg_doc_len: f64,
}

/// Computes dataset statistics over labeled documents. Present/absent is
/// decided by stemmed contiguous containment in the untruncated input.
pub fn dataset_stats<I>(docs: I) -> Result<CorpusStats>
where
    I: IntoIterator<Item = Document>,
{
    let input = InputConfig::default().untruncated();
    let mut num_docs = 0usize;
    let mut num_unlabeled = 0usize;
    let mut num_kp = 0usize;
    let mut kp_tokens = 0usize;
    let mut num_absent = 0usize;
    let mut doc_tokens = 0usize;

    for doc in docs {
        let gold = KeyphraseSet::from_phrases(doc.keyphrases.iter().flatten());
        if gold.is_empty() {
            num_unlabeled += 1;
            continue;
        }
        let tokenized = input.model_input(&doc);
        num_docs += 1;
        doc_tokens += tokenized.len() - usize::from(tokenized.len() > tokenized.title_len);
        num_kp += gold.len();
        kp_tokens += gold.phrases().iter().map(Vec::len).sum::<usize>();
        let (_, absent) = split_present_absent(&gold, &tokenized);
        num_absent += absent.len();
    }

    if num_docs == 0 {
        return Err(Error::NoLabeledDocuments);
    }
    Ok(CorpusStats {
        num_docs,
        num_unlabeled,
        avg_kp_per_doc: num_kp as f64 / num_docs as f64,
        avg_kp_len: kp_tokens as f64 / num_kp as f64,
        pct_absent_kp: 100.0 * num_absent as f64 / num_kp as f64,
        avg_doc_len: doc_tokens as f64 / num_docs as f64,
    })
}
