//! Dataset ingestion: sentence splitting, tokenization, vocabulary
//! construction and the line-delimited record format shared by every CLI
//! stage.
//!
//! A record is one JSON object per line:
//!
//! ```text
//! {"id": "doc-1", "src": ["first sentence .", "second ."], "tgt": ["gold ."], "labels": [1, 0]}
//! ```
//!
//! `labels` is optional. Writers may add `pred` / `pred_indices`; readers
//! ignore fields they do not know.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Token id within a [`Vocabulary`].
pub type TokenId = u32;

/// A sentence is a non-empty list of lowercased tokens.
pub type Sentence = Vec<String>;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const SEP: TokenId = 3;

const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Lowercased abbreviations (without their final period) that never end a
/// sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "u.s",
    "u.k", "u.n", "e.u", "inc", "ltd", "co", "corp", "gen", "gov", "sen", "rep", "capt", "lt",
    "col", "sgt", "rev", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
    "nov", "dec", "a.m", "p.m", "no", "approx", "dept", "est", "fig",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub gold_summary: Vec<Sentence>,
    pub labels: Option<Vec<u8>>,
}

impl Document {
    /// Builds a document, checking its structural invariants.
    pub fn new(
        id: impl Into<String>,
        sentences: Vec<Sentence>,
        gold_summary: Vec<Sentence>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let doc = Document {
            id: id.into(),
            sentences,
            gold_summary,
            labels,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Tokenizes raw sentence strings into a document.
    pub fn from_text<S: AsRef<str>>(id: impl Into<String>, src: &[S], tgt: &[S]) -> Result<Self> {
        let sentences = src.iter().map(|s| word_tokens(s.as_ref())).collect();
        let gold = tgt
            .iter()
            .map(|s| word_tokens(s.as_ref()))
            .filter(|s: &Sentence| !s.is_empty())
            .collect();
        Document::new(id, sentences, gold, None)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(Error::Document {
                id: self.id.clone(),
                msg,
            })
        };
        if self.sentences.is_empty() {
            return fail("document has no sentences".into());
        }
        if let Some(i) = self.sentences.iter().position(|s| s.is_empty()) {
            return fail(format!("sentence {i} is empty"));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.sentences.len() {
                return fail(format!(
                    "{} labels for {} sentences",
                    labels.len(),
                    self.sentences.len()
                ));
            }
            if labels.iter().any(|&l| l > 1) {
                return fail("labels must be 0 or 1".into());
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// All sentence tokens concatenated in document order.
    pub fn flat_tokens(&self) -> Vec<String> {
        flatten(&self.sentences)
    }

    pub fn gold_tokens(&self) -> Vec<String> {
        flatten(&self.gold_summary)
    }

    pub fn to_record(&self) -> Record {
        Record {
            id: self.id.clone(),
            src: self.sentences.iter().map(|s| s.join(" ")).collect(),
            tgt: self.gold_summary.iter().map(|s| s.join(" ")).collect(),
            labels: self.labels.clone(),
            pred: None,
            pred_indices: None,
        }
    }
}

pub fn flatten(sentences: &[Sentence]) -> Vec<String> {
    sentences.iter().flatten().cloned().collect()
}

/// Parses a raw story: running text, then `@highlight` markers each
/// followed by one summary sentence. Blank lines separate paragraphs.
pub fn document_from_story(id: impl Into<String>, text: &str) -> Result<Document> {
    let mut body = Vec::new();
    let mut gold = Vec::new();
    let mut in_highlight = false;
    for para in text.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
        for (k, chunk) in para.split("@highlight").enumerate() {
            if k > 0 {
                in_highlight = true;
            }
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            if in_highlight {
                gold.push(chunk.split_whitespace().collect::<Vec<_>>().join(" "));
            } else {
                body.extend(split_sentences(chunk));
            }
        }
    }
    Document::from_text(id, &body, &gold)
}

/// Builds a document from unsplit article and summary text.
pub fn document_from_raw(id: impl Into<String>, text: &str, summary: &str) -> Result<Document> {
    Document::from_text(id, &split_sentences(text), &split_sentences(summary))
}

/// Serialized form of a document, plus optional prediction fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_indices: Option<Vec<usize>>,
}

/// Splits running text into sentences.
///
/// A sentence ends at a run of `.`, `!` or `?` that is followed by the end of
/// the text or by whitespace and an uppercase letter. A period closing one of
/// a fixed list of abbreviations (`Mr.`, `Dr.`, `U.S.`, ...) never ends a
/// sentence. Returned slices are trimmed.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        // Consume the whole terminal run, e.g. "?!" or "...".
        let mut j = i;
        while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
            j += 1;
        }
        let end_byte = chars.get(j + 1).map_or(text.len(), |&(b, _)| b);
        let mut k = j + 1;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let at_end = k == chars.len();
        let boundary = at_end || (k > j + 1 && chars[k].1.is_uppercase());
        let abbreviation = i == j && c == '.' && is_abbreviation(&text[..chars[i].0]);
        if boundary && !abbreviation {
            let piece = text[start..end_byte].trim();
            if !piece.is_empty() {
                out.push(piece.to_string());
            }
            start = end_byte;
        }
        i = j + 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

fn is_abbreviation(before_period: &str) -> bool {
    let word = before_period
        .rsplit(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .next()
        .unwrap_or("");
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    // Single initials such as the "J" in "J. Smith".
    if lower.chars().count() == 1 && lower.chars().all(char::is_alphabetic) {
        return true;
    }
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Lowercases and splits a string into word and punctuation tokens.
///
/// A word token is a maximal run of alphanumeric characters; every other
/// non-whitespace character is a token of its own.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

fn is_punctuation(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_tokens(RESERVED.iter().map(|s| s.to_string()).collect())
            .expect("reserved tokens form a valid vocabulary")
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, reserved) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*reserved) {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary id {i} must be {reserved}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary token `{t}`"
                )));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Id of a non-reserved token.
    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index
            .get(token)
            .copied()
            .filter(|&id| id as usize >= RESERVED.len())
    }

    /// Maps already-split tokens to ids. Unknown words become `[UNK]`,
    /// punctuation absent from the vocabulary is dropped.
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .filter_map(|t| {
                let t = t.as_ref();
                match self.id(t) {
                    Some(id) => Some(id),
                    None if is_punctuation(t) => None,
                    None => Some(UNK),
                }
            })
            .collect()
    }
}

impl Vocabulary {
    /// Writes one token per line in id order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.tokens {
            writeln!(w, "{t}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(text.lines().map(str::to_string).collect())
    }
}

/// Tokenizes a raw sentence against `vocab`.
pub fn tokenize(sentence: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    vocab.encode_tokens(&word_tokens(sentence))
}

/// Builds a vocabulary of at most `max_size` non-reserved tokens from the
/// document sentences, most frequent first, ties broken lexicographically.
pub fn build_vocab<'a, I>(docs: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a Document>,
{
    if max_size < 5 {
        return Err(Error::InvalidArgument(format!(
            "vocabulary max_size must be at least 5, got {max_size}"
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for tok in doc.sentences.iter().flatten() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !RESERVED.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().take(max_size).map(|(t, _)| t.to_string()))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Streaming reader over a record file.
pub struct DocumentReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R) -> Self {
        DocumentReader {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Error::Malformed {
                        line: self.line_no,
                        field: "<record>".into(),
                        msg: e.to_string(),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_record(&line, self.line_no).map(|(doc, _)| doc));
        }
    }
}

/// Parses one record line into a document plus the raw record.
pub fn parse_record(line: &str, line_no: usize) -> Result<(Document, Record)> {
    let malformed = |field: &str, msg: String| Error::Malformed {
        line: line_no,
        field: field.to_string(),
        msg,
    };
    let value: Value =
        serde_json::from_str(line).map_err(|e| malformed("<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("<record>", "expected a JSON object".into()))?;

    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("id", "expected a string".into())),
        None => return Err(malformed("id", "missing".into())),
    };
    let string_list = |field: &str, required: bool| -> Result<Option<Vec<String>>> {
        match obj.get(field) {
            None | Some(Value::Null) if !required => Ok(None),
            None => Err(malformed(field, "missing".into())),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| malformed(field, "expected a list of strings".into()))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(malformed(field, "expected a list of strings".into())),
        }
    };
    let src = string_list("src", true)?.unwrap_or_default();
    let tgt = string_list("tgt", true)?.unwrap_or_default();
    let pred = string_list("pred", false)?;

    let labels = match obj.get("labels") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|v| match v.as_u64() {
                    Some(l @ (0 | 1)) => Ok(l as u8),
                    _ => Err(malformed("labels", "expected a list of 0/1 integers".into())),
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        Some(_) => return Err(malformed("labels", "expected a list".into())),
    };
    let pred_indices = match obj.get("pred_indices") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value::<Vec<usize>>(v.clone())
                .map_err(|e| malformed("pred_indices", e.to_string()))?,
        ),
    };

    if src.is_empty() {
        return Err(malformed("src", "document has no sentences".into()));
    }
    let sentences: Vec<Sentence> = src.iter().map(|s| word_tokens(s)).collect();
    if let Some(i) = sentences.iter().position(Vec::is_empty) {
        return Err(malformed("src", format!("sentence {i} has no tokens")));
    }
    let gold_summary: Vec<Sentence> = tgt
        .iter()
        .map(|s| word_tokens(s))
        .filter(|s| !s.is_empty())
        .collect();
    if let Some(l) = &labels {
        if l.len() != sentences.len() {
            return Err(malformed(
                "labels",
                format!("{} labels for {} sentences", l.len(), sentences.len()),
            ));
        }
    }
    let doc = Document {
        id: id.clone(),
        sentences,
        gold_summary,
        labels: labels.clone(),
    };
    let record = Record {
        id,
        src,
        tgt,
        labels,
        pred,
        pred_indices,
    };
    Ok((doc, record))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Opens a record file as a lazy document stream.
pub fn document_stream(path: impl AsRef<Path>) -> Result<DocumentReader<BufReader<File>>> {
    Ok(DocumentReader::new(open(path.as_ref())?))
}

pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    document_stream(path)?.collect()
}

/// Reads raw records (including prediction fields) in file order.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?.1);
    }
    Ok(out)
}

pub fn write_records<'a, I>(path: impl AsRef<Path>, records: I) -> Result<()>
where
    I: IntoIterator<Item = &'a Record>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec).expect("records always serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_documents<'a, I>(path: impl AsRef<Path>, docs: I) -> Result<()>
where
    I: IntoIterator<Item = &'a Document>,
{
    let records: Vec<Record> = docs.into_iter().map(Document::to_record).collect();
    write_records(path, &records)
}
