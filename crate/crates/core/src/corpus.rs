//! Raw text ingestion, preprocessing settings and the character vocabulary.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const EOS_TOKEN: &str = "<EOS>";
pub const SPECIAL_TOKEN: &str = "<SPX>";
pub const UNK_TOKEN: &str = "<UNK>";

/// Preprocessing setting applied to raw lines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Setting {
    /// Whole lines, whitespace removed.
    #[default]
    Raw = 1,
    /// Punctuation marks are hard delimiters.
    Punctuation = 3,
    /// Punctuation delimits; runs of non-native characters collapse into
    /// one placeholder symbol.
    Special = 4,
}

impl Setting {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Setting::Raw),
            "3" => Ok(Setting::Punctuation),
            "4" => Ok(Setting::Special),
            other => Err(Error::Config(format!("unknown setting {other:?} (expected 1, 3 or 4)"))),
        }
    }
}

/// A set of code point ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharClass {
    ranges: Vec<RangeInclusive<char>>,
}

impl CharClass {
    pub fn new(ranges: Vec<RangeInclusive<char>>) -> Self {
        CharClass { ranges }
    }

    pub fn contains(&self, c: char) -> bool {
        self.ranges.iter().any(|r| r.contains(&c))
    }

    /// ASCII and common CJK/fullwidth punctuation.
    pub fn default_punctuation() -> Self {
        CharClass::new(vec![
            '!'..='/',
            ':'..='@',
            '['..='`',
            '{'..='~',
            '\u{00A1}'..='\u{00BF}',
            '\u{2000}'..='\u{206F}',
            '\u{3000}'..='\u{3004}',
            '\u{3008}'..='\u{3020}',
            '\u{30FB}'..='\u{30FB}',
            '\u{FE10}'..='\u{FE1F}',
            '\u{FE30}'..='\u{FE6F}',
            '\u{FF01}'..='\u{FF0F}',
            '\u{FF1A}'..='\u{FF20}',
            '\u{FF3B}'..='\u{FF40}',
            '\u{FF5B}'..='\u{FF65}',
        ])
    }

    /// CJK unified ideographs and the iteration/zero marks.
    pub fn han() -> Self {
        CharClass::new(vec![
            '\u{3005}'..='\u{3007}',
            '\u{3400}'..='\u{4DBF}',
            '\u{4E00}'..='\u{9FFF}',
            '\u{F900}'..='\u{FAFF}',
            '\u{20000}'..='\u{2FA1F}',
        ])
    }

    pub fn thai() -> Self {
        CharClass::new(vec!['\u{0E00}'..='\u{0E7F}'])
    }

    /// Parses `U+4E00-U+9FFF,U+3400-U+4DBF` style lists, or the names
    /// `han` / `thai`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "han" => return Ok(Self::han()),
            "thai" => return Ok(Self::thai()),
            _ => {}
        }
        let bad = || Error::Config(format!("bad character class {spec:?}"));
        let point = |s: &str| -> Result<char> {
            let hex = s.trim().trim_start_matches("U+").trim_start_matches("u+");
            u32::from_str_radix(hex, 16).ok().and_then(char::from_u32).ok_or_else(bad)
        };
        let mut ranges = Vec::new();
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let range = match part.split_once('-') {
                Some((a, b)) => point(a)?..=point(b)?,
                None => {
                    let c = point(part)?;
                    c..=c
                }
            };
            ranges.push(range);
        }
        if ranges.is_empty() {
            return Err(bad());
        }
        Ok(CharClass::new(ranges))
    }
}

/// How raw lines are turned into training sentences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preprocess {
    pub setting: Setting,
    pub punctuation: CharClass,
    pub native: CharClass,
}

impl Preprocess {
    pub fn new(setting: Setting) -> Self {
        Preprocess {
            setting,
            punctuation: CharClass::default_punctuation(),
            native: CharClass::han(),
        }
    }
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess::new(Setting::Raw)
    }
}

/// One position of a sentence before vocabulary lookup.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Unit {
    Char(char),
    /// A collapsed run of non-native characters; holds the original text.
    Special(String),
}

impl Unit {
    pub fn text(&self) -> String {
        match self {
            Unit::Char(c) => c.to_string(),
            Unit::Special(s) => s.clone(),
        }
    }
}

/// A sentence as preprocessed units, not yet mapped to vocabulary ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSentence {
    pub units: Vec<Unit>,
}

impl RawSentence {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn raw(&self) -> Vec<String> {
        self.units.iter().map(Unit::text).collect()
    }
}

/// A piece of a preprocessed line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece {
    Text(RawSentence),
    /// Punctuation removed as a hard delimiter.
    Delimiter(char),
}

/// Splits one line according to the preprocessing setting. Whitespace is
/// always dropped.
pub fn split_line(line: &str, pre: &Preprocess) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut current: Vec<Unit> = Vec::new();
    let mut special = String::new();

    fn flush_special(special: &mut String, current: &mut Vec<Unit>) {
        if !special.is_empty() {
            current.push(Unit::Special(std::mem::take(special)));
        }
    }

    for c in line.chars().filter(|c| !c.is_whitespace()) {
        match pre.setting {
            Setting::Raw => current.push(Unit::Char(c)),
            Setting::Punctuation | Setting::Special if pre.punctuation.contains(c) => {
                flush_special(&mut special, &mut current);
                if !current.is_empty() {
                    pieces.push(Piece::Text(RawSentence {
                        units: std::mem::take(&mut current),
                    }));
                }
                pieces.push(Piece::Delimiter(c));
            }
            Setting::Special if !pre.native.contains(c) => special.push(c),
            _ => {
                flush_special(&mut special, &mut current);
                current.push(Unit::Char(c));
            }
        }
    }
    flush_special(&mut special, &mut current);
    if !current.is_empty() {
        pieces.push(Piece::Text(RawSentence { units: current }));
    }
    pieces
}

/// Reads a whole file as UTF-8, reporting the byte offset of the first
/// invalid sequence.
pub fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })
}

pub fn sentences_from_text(text: &str, pre: &Preprocess) -> Vec<RawSentence> {
    text.lines()
        .flat_map(|line| split_line(line, pre))
        .filter_map(|p| match p {
            Piece::Text(s) => Some(s),
            Piece::Delimiter(_) => None,
        })
        .collect()
}

/// Loads a one-sentence-per-line corpus. Blank lines are skipped.
pub fn load_corpus(path: &Path, pre: &Preprocess) -> Result<Vec<RawSentence>> {
    Ok(sentences_from_text(&read_text(path)?, pre))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    Char(char),
    Special,
    Unk,
    Eos,
}

impl Symbol {
    fn token(&self) -> String {
        match self {
            Symbol::Char(c) => c.to_string(),
            Symbol::Special => SPECIAL_TOKEN.into(),
            Symbol::Unk => UNK_TOKEN.into(),
            Symbol::Eos => EOS_TOKEN.into(),
        }
    }
}

/// Dense symbol index. EOS is always the last entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<Symbol>,
    index: HashMap<Symbol, usize>,
}

/// Sentence as vocabulary ids, with the original text of each position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharSequence {
    pub ids: Vec<usize>,
    pub raw: Vec<String>,
}

impl CharSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Builds the vocabulary in first-occurrence order, then `<UNK>` when
/// requested, then `<EOS>`.
pub fn build_vocab(corpus: &[RawSentence], with_unk: bool) -> Vocab {
    let mut symbols = Vec::new();
    let mut seen = HashSet::new();
    for unit in corpus.iter().flat_map(|s| &s.units) {
        let sym = match unit {
            Unit::Char(c) => Symbol::Char(*c),
            Unit::Special(_) => Symbol::Special,
        };
        if seen.insert(sym.clone()) {
            symbols.push(sym);
        }
    }
    if with_unk {
        symbols.push(Symbol::Unk);
    }
    symbols.push(Symbol::Eos);
    Vocab::from_symbols(symbols).expect("distinct by construction")
}

impl Vocab {
    fn from_symbols(symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.last() != Some(&Symbol::Eos) {
            return Err(Error::Format(format!("vocabulary must end with {EOS_TOKEN}")));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary symbol {}", s.token())));
            }
        }
        Ok(Vocab { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eos_id(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn special_id(&self) -> Option<usize> {
        self.index.get(&Symbol::Special).copied()
    }

    pub fn unk_id(&self) -> Option<usize> {
        self.index.get(&Symbol::Unk).copied()
    }

    pub fn id_of(&self, c: char) -> Option<usize> {
        self.index.get(&Symbol::Char(c)).copied()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Maps a sentence to ids. Unknown characters fall back to the
    /// placeholder, then to `<UNK>`.
    pub fn encode(&self, sentence: &RawSentence) -> Result<CharSequence> {
        let mut ids = Vec::with_capacity(sentence.len());
        for unit in &sentence.units {
            let id = match unit {
                Unit::Char(c) => self.id_of(*c).or(self.special_id()).or(self.unk_id()),
                Unit::Special(_) => self.special_id().or(self.unk_id()),
            };
            ids.push(id.ok_or(Error::UnknownChar {
                ch: match unit {
                    Unit::Char(c) => *c,
                    Unit::Special(s) => s.chars().next().unwrap_or('?'),
                },
            })?);
        }
        Ok(CharSequence {
            ids,
            raw: sentence.raw(),
        })
    }

    /// One symbol per line; line number is the index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            out.push_str(&s.token());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let sym = match line {
                EOS_TOKEN => Symbol::Eos,
                SPECIAL_TOKEN => Symbol::Special,
                UNK_TOKEN => Symbol::Unk,
                _ => {
                    let mut chars = line.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => Symbol::Char(c),
                        _ => {
                            return Err(Error::Format(format!(
                                "vocabulary line {} is not a single character: {line:?}",
                                lineno + 1
                            )))
                        }
                    }
                }
            };
            symbols.push(sym);
        }
        Vocab::from_symbols(symbols)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Vocab::from_text(&read_text(path)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub word_types: usize,
    pub word_tokens: usize,
    pub char_types: usize,
    pub char_tokens: usize,
}

pub fn stats_from_text(text: &str) -> CorpusStats {
    let mut words = HashSet::new();
    let mut chars = HashSet::new();
    let mut stats = CorpusStats::default();
    for w in text.split_whitespace() {
        stats.word_tokens += 1;
        words.insert(w);
        for c in w.chars() {
            stats.char_tokens += 1;
            chars.insert(c);
        }
    }
    stats.word_types = words.len();
    stats.char_types = chars.len();
    stats
}

/// Word and character type/token counts of a whitespace-segmented file.
pub fn corpus_stats(gold_path: &Path) -> Result<CorpusStats> {
    Ok(stats_from_text(&read_text(gold_path)?))
}
