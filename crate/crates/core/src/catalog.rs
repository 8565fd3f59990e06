//! ICD-10 code catalog: loading, code normalization, description tokenization
//! and the word → entry inverted index used by the matcher.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Lowercase and split on every non-alphanumeric character, dropping empty
/// fragments. Numerals are kept as ordinary words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodeError {
    #[error("empty ICD-10 code")]
    EmptyCode,
    #[error("malformed ICD-10 code {0:?}")]
    Malformed(String),
}

/// Uppercase the code and put the dot after the three-character category.
/// Anything not shaped like an ICD-10 code is rejected.
pub fn normalize_code(raw: &str) -> Result<String, CodeError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(CodeError::EmptyCode);
    }
    let upper = trimmed.to_uppercase();
    if upper.chars().any(|c| !(c.is_ascii_alphanumeric() || c == '.'))
        || upper.matches('.').count() > 1
        || upper.starts_with('.')
    {
        return Err(CodeError::Malformed(raw.to_string()));
    }
    // Letter, digit, alphanumeric category, then up to four more characters.
    let undotted: String = upper.chars().filter(|&c| c != '.').collect();
    let b = undotted.as_bytes();
    let dot_ok = upper.find('.').is_none_or(|i| i == 3);
    if !(3..=7).contains(&b.len()) || !b[0].is_ascii_alphabetic() || !b[1].is_ascii_digit() || !dot_ok {
        return Err(CodeError::Malformed(raw.to_string()));
    }
    if undotted.len() == 3 {
        Ok(undotted)
    } else {
        Ok(format!("{}.{}", &undotted[..3], &undotted[3..]))
    }
}

/// A normalized ICD-10 code. Equality, ordering and hashing use the undotted
/// form so that `E119` and `E11.9` compare equal; display uses the dotted form.
#[derive(Debug, Clone)]
pub struct IcdCode {
    dotted: String,
    key: String,
}

impl IcdCode {
    pub fn parse(raw: &str) -> Result<Self, CodeError> {
        let dotted = normalize_code(raw)?;
        let key = dotted.replace('.', "");
        Ok(IcdCode { dotted, key })
    }

    pub fn as_dotted(&self) -> &str {
        &self.dotted
    }

    pub fn undotted(&self) -> &str {
        &self.key
    }
}

impl PartialEq for IcdCode {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for IcdCode {}

impl Hash for IcdCode {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state)
    }
}

impl PartialOrd for IcdCode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for IcdCode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Display for IcdCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dotted)
    }
}

impl Serialize for IcdCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.dotted)
    }
}

impl<'de> Deserialize<'de> for IcdCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        IcdCode::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcdEntry {
    pub code: IcdCode,
    pub description: String,
    pub tokens: Vec<String>,
}

impl IcdEntry {
    pub fn new(code: IcdCode, description: impl Into<String>) -> Self {
        let description = description.into();
        let tokens = tokenize(&description);
        IcdEntry {
            code,
            description,
            tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogFormat {
    Tsv,
    Csv,
}

impl CatalogFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CatalogFormat::Csv,
            _ => CatalogFormat::Tsv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            CatalogFormat::Tsv => b'\t',
            CatalogFormat::Csv => b',',
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog file not found: {0}")]
    MissingFile(String),
    #[error("malformed catalog row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate code {0} in catalog")]
    DuplicateCode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Posting lists are sorted entry positions.
pub type InvertedIndex = BTreeMap<String, Vec<u32>>;

/// Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    entries: Vec<IcdEntry>,
    by_code: HashMap<String, usize>,
    index: InvertedIndex,
}

const EMBEDDED_FIXTURE: &str = include_str!("../data/icd10cm_fixture.tsv");

impl Catalog {
    pub fn from_entries(entries: Vec<IcdEntry>) -> Result<Self, CatalogError> {
        let mut by_code = HashMap::with_capacity(entries.len());
        for (pos, entry) in entries.iter().enumerate() {
            if by_code.insert(entry.code.undotted().to_string(), pos).is_some() {
                return Err(CatalogError::DuplicateCode(entry.code.to_string()));
            }
        }
        let index = build_index(&entries);
        Ok(Catalog {
            entries,
            by_code,
            index,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::load_with_format(path, CatalogFormat::from_path(path))
    }

    pub fn load_with_format(path: &Path, format: CatalogFormat) -> Result<Self, CatalogError> {
        if !path.is_file() {
            return Err(CatalogError::MissingFile(path.display().to_string()));
        }
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, format)
    }

    /// Two-column delimited text, `code<delim>description`. A leading
    /// `code` header row is skipped.
    pub fn from_reader<R: Read>(reader: R, format: CatalogFormat) -> Result<Self, CatalogError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .delimiter(format.delimiter())
            .quoting(format == CatalogFormat::Csv)
            .from_reader(reader);
        let mut entries = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| CatalogError::MalformedRow {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                reason: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            if entries.is_empty() && record[0].trim().eq_ignore_ascii_case("code") {
                continue;
            }
            if record.len() < 2 {
                return Err(CatalogError::MalformedRow {
                    line,
                    reason: "expected code and description columns".into(),
                });
            }
            let code = IcdCode::parse(&record[0]).map_err(|e| CatalogError::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            let sep = if format == CatalogFormat::Csv { "," } else { "\t" };
            let description = record.iter().skip(1).collect::<Vec<_>>().join(sep);
            entries.push(IcdEntry::new(code, description.trim()));
        }
        Self::from_entries(entries)
    }

    /// The ICD-10-CM subset bundled with the crate (used by tests, the
    /// synthetic generator and as a default for desk experiments).
    pub fn embedded_fixture() -> Self {
        Self::from_reader(EMBEDDED_FIXTURE.as_bytes(), CatalogFormat::Tsv)
            .expect("bundled catalog is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IcdEntry] {
        &self.entries
    }

    pub fn entry(&self, pos: u32) -> &IcdEntry {
        &self.entries[pos as usize]
    }

    pub fn get(&self, code: &IcdCode) -> Option<&IcdEntry> {
        self.by_code.get(code.undotted()).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, code: &IcdCode) -> bool {
        self.by_code.contains_key(code.undotted())
    }

    pub fn postings(&self, word: &str) -> &[u32] {
        self.index.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn vocabulary_size(&self) -> usize {
        self.index.len()
    }

    /// Recompute the inverted index from the entries and compare.
    pub fn index_is_consistent(&self) -> bool {
        build_index(&self.entries) == self.index
    }
}

fn build_index(entries: &[IcdEntry]) -> InvertedIndex {
    let mut index: InvertedIndex = BTreeMap::new();
    for (pos, entry) in entries.iter().enumerate() {
        for token in &entry.tokens {
            let list = index.entry(token.clone()).or_default();
            if list.last() != Some(&(pos as u32)) {
                list.push(pos as u32);
            }
        }
    }
    index
}
