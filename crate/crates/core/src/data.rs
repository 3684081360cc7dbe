//! Text normalization, vocabularies, dataset loaders and the bundled
//! synthetic corpora.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const O_TAG: &str = "O";
pub const DEFAULT_TEST_FRACTION: f64 = 0.27;

/// Lowercases, drops ASCII punctuation and splits on whitespace runs.
/// Non-ASCII characters pass through untouched.
pub fn normalize_and_tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Token ↔ id map with `PAD = 0` and `UNK = 1`; other ids follow first
/// appearance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut vocab = Self::from_tokens(vec![PAD_TOKEN.into(), UNK_TOKEN.into()]);
        for sentence in sentences {
            for tok in sentence {
                if !vocab.index.contains_key(tok) {
                    vocab.index.insert(tok.clone(), vocab.tokens.len());
                    vocab.tokens.push(tok.clone());
                }
            }
        }
        vocab
    }

    /// Rebuilds from an id-ordered token list (as stored in checkpoints).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids back to tokens, dropping padding.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != PAD)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }
}

/// Truncates to `n` and right-pads with `PAD`.
pub fn encode(tokens: &[String], vocab: &Vocab, n: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokens.iter().take(n).map(|t| vocab.id(t)).collect();
    ids.resize(n, PAD);
    ids
}

#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Text { text: String, label: String },
    Tagged { tokens: Vec<String>, tags: Vec<String> },
}

impl Record {
    pub fn tokens(&self) -> Vec<String> {
        match self {
            Record::Text { text, .. } => normalize_and_tokenize(text),
            Record::Tagged { tokens, .. } => tokens.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawDataset {
    pub records: Vec<Record>,
    /// BIO tags rewritten from a dangling `I-X` to `B-X`.
    pub bio_repairs: usize,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_tagged(&self) -> bool {
        matches!(self.records.first(), Some(Record::Tagged { .. }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    CsvTextLabel,
    JsonlTextLabel,
    ConllBio,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv_text_label" => Ok(Self::CsvTextLabel),
            "jsonl" | "jsonl_text_label" => Ok(Self::JsonlTextLabel),
            "conll" | "conll_bio" => Ok(Self::ConllBio),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<RawDataset> {
    match format {
        DatasetFormat::CsvTextLabel => load_csv(path),
        DatasetFormat::JsonlTextLabel => load_jsonl(BufReader::new(File::open(path)?)),
        DatasetFormat::ConllBio => load_conll(BufReader::new(File::open(path)?)),
    }
}

fn load_csv(path: &Path) -> Result<RawDataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::data(e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::data(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::data_at(1, format!("missing `{name}` column")))
    };
    let (text_col, label_col) = (col("text")?, col("label")?);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::data_at(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| {
            row.get(i)
                .map(str::to_string)
                .ok_or_else(|| Error::data_at(line, "row is missing a field"))
        };
        records.push(Record::Text {
            text: field(text_col)?,
            label: field(label_col)?.trim().to_string(),
        });
    }
    Ok(RawDataset {
        records,
        bio_repairs: 0,
    })
}

fn load_jsonl(reader: impl BufRead) -> Result<RawDataset> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::data_at(no, e.to_string()))?;
        let text = value
            .get("text")
            .and_then(|t| t.as_str())
            .ok_or_else(|| Error::data_at(no, "missing string field `text`"))?;
        let label = match value.get("label") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(Error::data_at(no, "missing numeric or string field `label`")),
        };
        records.push(Record::Text {
            text: text.to_string(),
            label,
        });
    }
    Ok(RawDataset {
        records,
        bio_repairs: 0,
    })
}

/// Rewrites `I-X` that does not continue a `B-X`/`I-X` run into `B-X`.
/// Returns the number of rewrites.
pub fn repair_bio(tags: &mut [String]) -> usize {
    let mut repairs = 0;
    let mut prev: Option<String> = None;
    for tag in tags.iter_mut() {
        if let Some(kind) = tag.strip_prefix("I-") {
            let continues = prev.as_deref().is_some_and(|p| {
                p.strip_prefix("B-").or_else(|| p.strip_prefix("I-")) == Some(kind)
            });
            if !continues {
                *tag = format!("B-{kind}");
                repairs += 1;
            }
        }
        prev = Some(tag.clone());
    }
    repairs
}

fn load_conll(reader: impl BufRead) -> Result<RawDataset> {
    let mut dataset = RawDataset::default();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, ds: &mut RawDataset| {
        if !tokens.is_empty() {
            ds.bio_repairs += repair_bio(tags);
            ds.records.push(Record::Tagged {
                tokens: std::mem::take(tokens),
                tags: std::mem::take(tags),
            });
        }
    };
    for (i, line) in reader.lines().enumerate() {
        let no = i + 1;
        let line = line?;
        let line = line.trim_end();
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut dataset);
            continue;
        }
        let (tok, tag) = line
            .split_once('\t')
            .or_else(|| line.trim().rsplit_once(char::is_whitespace))
            .ok_or_else(|| Error::data_at(no, "expected `token<TAB>tag`"))?;
        let (tok, tag) = (tok.trim(), tag.trim());
        if tok.is_empty() || tag.is_empty() {
            return Err(Error::data_at(no, "empty token or tag"));
        }
        let valid = tag == O_TAG || tag.starts_with("B-") || tag.starts_with("I-");
        if !valid {
            return Err(Error::data_at(no, format!("`{tag}` is not a BIO tag")));
        }
        tokens.push(tok.to_string());
        tags.push(tag.to_string());
    }
    flush(&mut tokens, &mut tags, &mut dataset);
    Ok(dataset)
}

/// Deterministic shuffled split with `round(test_fraction·N)` test items.
pub fn split<T: Clone>(items: &[T], test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::data(format!(
            "need at least 2 examples to split, got {}",
            items.len()
        )));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::data(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (test_fraction * items.len() as f64).round() as usize;
    let test = order[..n_test].iter().map(|&i| items[i].clone()).collect();
    let train = order[n_test..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    KeywordPresence,
    TagCopy,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keyword_presence" => Ok(Self::KeywordPresence),
            "tag_copy" => Ok(Self::TagCopy),
            other => Err(Error::Config(format!("unknown synthetic corpus `{other}`"))),
        }
    }
}

/// Symbols `t0 … t15`.
pub const SYNTHETIC_SYMBOLS: usize = 16;
pub const KEYWORD: &str = "t0";
/// Sentence lengths drawn uniformly from this range, so any `n >= 4` sees
/// every token.
pub const SYNTHETIC_LENGTHS: std::ops::RangeInclusive<usize> = 2..=4;
/// `tag_copy` labels `t_k` with tag `k mod 4`; tag 0 is `O`.
pub const TAG_COPY_CLASSES: usize = 4;

fn symbol(k: usize) -> String {
    format!("t{k}")
}

pub fn tag_copy_tag(k: usize) -> String {
    match k % TAG_COPY_CLASSES {
        0 => O_TAG.to_string(),
        r => format!("T{r}"),
    }
}

/// Desk-scale stand-in corpora.
///
/// `keyword_presence`: label 1 iff `t0` occurs, exactly `size/2` positives.
/// `tag_copy`: every token `t_k` is tagged `k mod 4` (`O` for 0).
pub fn synthetic_corpora(kind: SyntheticKind, size: usize, seed: u64) -> Result<RawDataset> {
    if size < 10 {
        return Err(Error::data(format!("synthetic corpus size must be >= 10, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(size);
    match kind {
        SyntheticKind::KeywordPresence => {
            let positives = size / 2;
            for i in 0..size {
                let len = rng.random_range(SYNTHETIC_LENGTHS);
                let mut toks: Vec<usize> =
                    (0..len).map(|_| rng.random_range(1..SYNTHETIC_SYMBOLS)).collect();
                let label = i < positives;
                if label {
                    let at = rng.random_range(0..len);
                    toks[at] = 0;
                }
                let text = toks.iter().map(|&k| symbol(k)).collect::<Vec<_>>().join(" ");
                records.push(Record::Text {
                    text,
                    label: (label as u8).to_string(),
                });
            }
            records.shuffle(&mut rng);
        }
        SyntheticKind::TagCopy => {
            for _ in 0..size {
                let len = rng.random_range(SYNTHETIC_LENGTHS);
                let toks: Vec<usize> = (0..len).map(|_| rng.random_range(0..SYNTHETIC_SYMBOLS)).collect();
                records.push(Record::Tagged {
                    tokens: toks.iter().map(|&k| symbol(k)).collect(),
                    tags: toks.iter().map(|&k| tag_copy_tag(k)).collect(),
                });
            }
        }
    }
    Ok(RawDataset {
        records,
        bio_repairs: 0,
    })
}

/// What a head is trained to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Value(f64),
    /// Per-position tags; `mask[i]` is false on padding.
    Tags { tags: Vec<usize>, mask: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub ids: Vec<usize>,
    pub target: Target,
}

/// How raw labels become targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LabelSpace {
    /// Class names in id order.
    Classes(Vec<String>),
    Real,
    /// Tag names in id order, `O` first.
    Tags(Vec<String>),
}

impl LabelSpace {
    pub fn num_classes(&self) -> usize {
        match self {
            LabelSpace::Classes(c) | LabelSpace::Tags(c) => c.len(),
            LabelSpace::Real => 1,
        }
    }

    /// Classes from the training labels: integer labels keep their value,
    /// anything else is sorted lexicographically.
    pub fn classes_from<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        let ints: Option<Vec<usize>> = set.iter().map(|l| l.parse::<usize>().ok()).collect();
        match ints {
            Some(ints) => {
                let max = ints.into_iter().max().unwrap_or(0);
                LabelSpace::Classes((0..=max).map(|i| i.to_string()).collect())
            }
            None => LabelSpace::Classes(set.into_iter().map(str::to_string).collect()),
        }
    }

    pub fn tags_from<'a>(tags: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = tags.into_iter().filter(|t| *t != O_TAG).collect();
        let mut names = vec![O_TAG.to_string()];
        names.extend(set.into_iter().map(str::to_string));
        LabelSpace::Tags(names)
    }

    fn class_id(&self, label: &str) -> Result<usize> {
        match self {
            LabelSpace::Classes(c) | LabelSpace::Tags(c) => c
                .iter()
                .position(|x| x == label)
                .ok_or_else(|| Error::data(format!("label `{label}` is outside the class set"))),
            LabelSpace::Real => Err(Error::data("real-valued label space has no classes")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    Class,
    Real,
}

/// A split, vocabulary-encoded dataset.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub vocab: Vocab,
    pub labels: LabelSpace,
    pub train: Vec<TokenizedExample>,
    pub test: Vec<TokenizedExample>,
}

/// Converts one record using a fixed vocabulary and label space.
pub fn tokenize_record(record: &Record, vocab: &Vocab, labels: &LabelSpace, n: usize) -> Result<TokenizedExample> {
    let tokens = record.tokens();
    let ids = encode(&tokens, vocab, n);
    let target = match (record, labels) {
        (Record::Tagged { tags, .. }, LabelSpace::Tags(_)) => {
            let mut ids_t = vec![0; n];
            let mut mask = vec![false; n];
            for (i, tag) in tags.iter().take(n).enumerate() {
                ids_t[i] = labels.class_id(tag)?;
                mask[i] = true;
            }
            Target::Tags { tags: ids_t, mask }
        }
        (Record::Text { label, .. }, LabelSpace::Real) => Target::Value(
            label
                .parse()
                .map_err(|_| Error::data(format!("label `{label}` is not a number")))?,
        ),
        (Record::Text { label, .. }, LabelSpace::Classes(_)) => Target::Class(labels.class_id(label)?),
        _ => return Err(Error::data("record type does not match the label space")),
    };
    Ok(TokenizedExample { ids, target })
}

/// Splits, builds the vocabulary and label space from the training part
/// only, and encodes both parts to length `n`. Test labels unseen in
/// training are a data error.
pub fn prepare(
    raw: &RawDataset,
    label_kind: LabelKind,
    n: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<PreparedData> {
    let (train_raw, test_raw) = split(&raw.records, test_fraction, seed)?;
    let train_tokens: Vec<Vec<String>> = train_raw.iter().map(Record::tokens).collect();
    let vocab = Vocab::build(train_tokens.iter().map(Vec::as_slice));
    let labels = if raw.is_tagged() {
        LabelSpace::tags_from(train_raw.iter().flat_map(|r| match r {
            Record::Tagged { tags, .. } => tags.iter().map(String::as_str).collect::<Vec<_>>(),
            Record::Text { .. } => Vec::new(),
        }))
    } else {
        match label_kind {
            LabelKind::Real => LabelSpace::Real,
            LabelKind::Class => LabelSpace::classes_from(train_raw.iter().filter_map(|r| match r {
                Record::Text { label, .. } => Some(label.as_str()),
                Record::Tagged { .. } => None,
            })),
        }
    };
    let encode_all = |records: &[Record]| -> Result<Vec<TokenizedExample>> {
        records.iter().map(|r| tokenize_record(r, &vocab, &labels, n)).collect()
    };
    Ok(PreparedData {
        train: encode_all(&train_raw)?,
        test: encode_all(&test_raw)?,
        vocab,
        labels,
    })
}
