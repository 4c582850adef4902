//! Word-category lexicons, a closed-class tagger, and slot-based phrase
//! patterns for opinion and solicitation expressions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Part of speech attached to a lexicon category with `@pos=`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Verb,
    Noun,
    Adj,
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "verb" => Ok(Pos::Verb),
            "noun" => Ok(Pos::Noun),
            "adj" | "adjective" => Ok(Pos::Adj),
            other => Err(Error::InvalidInput(format!("unknown pos `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryKey {
    pub name: String,
    pub pos: Option<Pos>,
}

impl CategoryKey {
    pub fn plain(name: &str) -> Self {
        Self {
            name: name.to_string(),
            pos: None,
        }
    }
}

impl fmt::Display for CategoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            None => f.write_str(&self.name),
            Some(Pos::Verb) => write!(f, "{}@pos=verb", self.name),
            Some(Pos::Noun) => write!(f, "{}@pos=noun", self.name),
            Some(Pos::Adj) => write!(f, "{}@pos=adj", self.name),
        }
    }
}

/// Literal words and trailing-`*` stems of one category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySet {
    words: BTreeSet<String>,
    stems: BTreeSet<String>,
}

impl EntrySet {
    pub fn insert(&mut self, entry: &str) {
        let entry = entry.trim().to_lowercase();
        match entry.strip_suffix('*') {
            Some(stem) if !stem.is_empty() => {
                self.stems.insert(stem.to_string());
            }
            Some(_) => {}
            None if !entry.is_empty() => {
                self.words.insert(entry);
            }
            None => {}
        }
    }

    pub fn len(&self) -> usize {
        self.words.len() + self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `lower` must already be lowercase.
    pub fn matches(&self, lower: &str) -> bool {
        self.words.contains(lower) || self.stems.iter().any(|s| lower.starts_with(s.as_str()))
    }
}

/// Named word categories, optionally split by part of speech.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    categories: BTreeMap<CategoryKey, EntrySet>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `name[@pos=verb|noun|adj]: w1, w2, stem*` lines.
    pub fn parse(src: &str, path: &Path) -> Result<Self> {
        let mut lexicon = Self::new();
        for (idx, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (head, body) = line
                .split_once(':')
                .ok_or_else(|| err("expected `category: words`".into()))?;
            let key = parse_category_head(head).map_err(|e| err(e.to_string()))?;
            if lexicon.categories.contains_key(&key) {
                return Err(err(format!("duplicate category `{key}`")));
            }
            let mut set = EntrySet::default();
            for entry in body.split(',') {
                set.insert(entry);
            }
            if set.is_empty() {
                log::warn!("{}:{}: category `{key}` is empty", path.display(), idx + 1);
            }
            lexicon.categories.insert(key, set);
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src, path)
    }

    /// Adds every category of `other`; a category present in both is an error.
    pub fn merge(&mut self, other: Lexicon) -> Result<()> {
        for (key, set) in other.categories {
            if self.categories.contains_key(&key) {
                return Err(Error::InvalidInput(format!("duplicate category `{key}`")));
            }
            self.categories.insert(key, set);
        }
        Ok(())
    }

    pub fn get(&self, key: &CategoryKey) -> Option<&EntrySet> {
        self.categories.get(key)
    }

    pub fn category(&self, name: &str) -> Result<&EntrySet> {
        self.categories
            .get(&CategoryKey::plain(name))
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &CategoryKey> {
        self.categories.keys()
    }

    pub fn insert(&mut self, key: CategoryKey, entries: EntrySet) {
        self.categories.insert(key, entries);
    }

    fn pos_categories(&self) -> impl Iterator<Item = (&str, Pos, &EntrySet)> {
        self.categories
            .iter()
            .filter_map(|(k, v)| k.pos.map(|p| (k.name.as_str(), p, v)))
    }

    /// Lexicon built from the bundled example word lists.
    pub fn bundled() -> Self {
        let mut lex = Self::new();
        for (name, src) in BUNDLED_LEXICONS {
            let part = Self::parse(src, Path::new(name)).expect("bundled lexicon parses");
            lex.merge(part).expect("bundled lexicons are disjoint");
        }
        lex
    }
}

fn parse_category_head(head: &str) -> Result<CategoryKey> {
    let head = head.trim();
    let (name, pos) = match head.split_once('@') {
        Some((name, suffix)) => {
            let value = suffix
                .trim()
                .strip_prefix("pos=")
                .ok_or_else(|| Error::InvalidInput(format!("bad category suffix `@{suffix}`")))?;
            (name.trim(), Some(value.parse()?))
        }
        None => (head, None),
    };
    if name.is_empty() {
        return Err(Error::InvalidInput("empty category name".into()));
    }
    Ok(CategoryKey {
        name: name.to_lowercase(),
        pos,
    })
}

pub const BUNDLED_LEXICONS: [(&str, &str); 4] = [
    (
        "drives.txt",
        include_str!("../../../data/lexicons/drives.txt"),
    ),
    (
        "pos_verbs.txt",
        include_str!("../../../data/lexicons/pos_verbs.txt"),
    ),
    (
        "pos_nouns.txt",
        include_str!("../../../data/lexicons/pos_nouns.txt"),
    ),
    (
        "pos_adjs.txt",
        include_str!("../../../data/lexicons/pos_adjs.txt"),
    ),
];

pub const BUNDLED_PATTERNS: &str = include_str!("../../../data/patterns.txt");

/// Lowercased word tokens of `text`, apostrophes inside words kept.
pub fn words(text: &str) -> Vec<String> {
    split_tokens(text).into_iter().map(|t| t.lower).collect()
}

/// `matches / tokens` for one plain category; 0 for text without tokens.
pub fn category_proportion(text: &str, lexicon: &Lexicon, category: &str) -> Result<f64> {
    let set = lexicon.category(category)?;
    let tokens = words(text);
    if tokens.is_empty() {
        return Ok(0.0);
    }
    let hits = tokens.iter().filter(|t| set.matches(t)).count();
    Ok(hits as f64 / tokens.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    PronounFirstSubjective,
    PronounFirstObjective,
    PronounFirstPossessive,
    PronounSecond,
    PronounThird,
    ModalVerb,
    AuxiliaryVerb,
    Negation,
    Adverb,
    ProperNoun,
    LexVerb(String),
    LexNoun(String),
    LexAdjective(String),
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    pub tag: Tag,
    /// Sentence number within the text; patterns never span sentences.
    pub sentence: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn tags(&self) -> Vec<Tag> {
        self.tokens.iter().map(|t| t.tag.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

struct RawToken {
    surface: String,
    lower: String,
    sentence: usize,
    sentence_start: bool,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ';' | ':' | '\n' | '\u{2026}')
}

fn split_tokens(text: &str) -> Vec<RawToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut sentence = 0;
    let mut sentence_has_tokens = false;
    let mut current = String::new();

    let flush = |current: &mut String, out: &mut Vec<RawToken>, sentence: usize, has: &mut bool| {
        if current.is_empty() {
            return;
        }
        let surface = std::mem::take(current);
        out.push(RawToken {
            lower: surface.to_lowercase(),
            surface,
            sentence,
            sentence_start: !*has,
        });
        *has = true;
    };

    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.push(c);
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else {
            flush(&mut current, &mut out, sentence, &mut sentence_has_tokens);
            if is_sentence_end(c) && sentence_has_tokens {
                sentence += 1;
                sentence_has_tokens = false;
            }
        }
    }
    flush(&mut current, &mut out, sentence, &mut sentence_has_tokens);
    out
}

const NEGATIONS: &[&str] = &[
    "not",
    "no",
    "never",
    "nor",
    "cannot",
    "don't",
    "doesn't",
    "didn't",
    "can't",
    "won't",
    "wouldn't",
    "shouldn't",
    "couldn't",
    "mustn't",
    "mightn't",
    "isn't",
    "aren't",
    "wasn't",
    "weren't",
    "haven't",
    "hasn't",
    "hadn't",
    "ain't",
];
const MODALS: &[&str] = &[
    "should", "must", "can", "could", "will", "might", "would", "may", "shall", "ought",
];
const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "have", "has",
    "had",
];
const FIRST_SUBJECTIVE: &[&str] = &[
    "i", "we", "i'm", "i've", "i'd", "i'll", "we're", "we've", "we'd", "we'll",
];
const FIRST_OBJECTIVE: &[&str] = &["me", "us", "myself", "ourselves"];
const FIRST_POSSESSIVE: &[&str] = &["my", "mine", "our", "ours"];
const SECOND: &[&str] = &[
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "you're",
    "you've",
    "you'd",
    "you'll",
];
const THIRD: &[&str] = &[
    "he", "she", "it", "they", "him", "her", "them", "his", "hers", "its", "their", "theirs",
    "he's", "she's", "it's", "they're", "they've", "they'd", "they'll", "he'd", "she'd", "he'll",
    "she'll",
];
const ADVERBS: &[&str] = &["really", "definitely", "actually", "very"];
/// Words that signal a following noun reading for verb/noun homographs.
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "my", "our", "your", "his", "her", "their",
    "its", "every", "each", "any", "some",
];
/// Capitalized only because they open a sentence; never proper nouns there.
const SENTENCE_INITIAL_COMMON: &[&str] = &[
    "a",
    "an",
    "the",
    "this",
    "that",
    "these",
    "those",
    "there",
    "here",
    "what",
    "when",
    "where",
    "why",
    "how",
    "who",
    "whom",
    "whose",
    "which",
    "if",
    "and",
    "but",
    "or",
    "so",
    "because",
    "after",
    "before",
    "while",
    "since",
    "until",
    "although",
    "though",
    "today",
    "tonight",
    "yesterday",
    "tomorrow",
    "now",
    "then",
    "please",
    "let",
    "let's",
    "look",
    "read",
    "watch",
    "see",
    "check",
    "share",
    "breaking",
    "just",
    "in",
    "on",
    "at",
    "for",
    "from",
    "with",
    "of",
    "to",
    "by",
    "as",
    "about",
    "into",
    "over",
    "under",
    "yes",
    "oh",
    "wow",
    "thanks",
    "thank",
    "new",
    "more",
    "most",
    "all",
    "some",
    "many",
    "much",
    "every",
    "each",
    "nobody",
    "everyone",
    "everybody",
    "someone",
    "somebody",
    "people",
    "another",
    "other",
    "such",
    "only",
    "also",
    "even",
    "still",
    "again",
    "once",
    "first",
    "last",
    "next",
    "good",
    "great",
    "big",
    "last",
    "update",
    "video",
    "photo",
    "news",
    "story",
    "report",
    "here's",
    "there's",
    "that's",
    "what's",
    "who's",
    "how's",
    "where's",
    "it",
    "one",
    "two",
    "three",
    "several",
    "few",
];

fn in_list(list: &[&str], word: &str) -> bool {
    list.contains(&word)
}

fn is_capitalized(surface: &str) -> bool {
    surface.chars().next().is_some_and(char::is_uppercase)
}

fn is_all_caps(surface: &str) -> bool {
    surface.chars().filter(|c| c.is_alphabetic()).count() >= 2
        && surface
            .chars()
            .filter(|c| c.is_alphabetic())
            .all(char::is_uppercase)
}

/// Assigns one tag per token from closed word classes, POS-split lexicon
/// categories, and surface heuristics.
///
/// Priority: negation, modal, auxiliary, pronoun, lexicon POS, adverb,
/// proper noun, plain.
#[derive(Debug, Clone)]
pub struct Tagger {
    lexicon: Lexicon,
}

impl Tagger {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn tag(&self, text: &str) -> TokenStream {
        let raw = split_tokens(text);
        let mut tokens = Vec::with_capacity(raw.len());
        for (i, rt) in raw.iter().enumerate() {
            let tag = self.classify(&raw, i);
            tokens.push(Token {
                surface: rt.surface.clone(),
                lower: rt.lower.clone(),
                tag,
                sentence: rt.sentence,
            });
        }
        TokenStream { tokens }
    }

    fn classify(&self, raw: &[RawToken], i: usize) -> Tag {
        let t = &raw[i];
        let w = t.lower.as_str();
        if in_list(NEGATIONS, w) {
            return Tag::Negation;
        }
        if in_list(MODALS, w) {
            return Tag::ModalVerb;
        }
        if in_list(AUXILIARIES, w) {
            return Tag::AuxiliaryVerb;
        }
        if in_list(FIRST_SUBJECTIVE, w) {
            return Tag::PronounFirstSubjective;
        }
        if in_list(FIRST_OBJECTIVE, w) {
            return Tag::PronounFirstObjective;
        }
        if in_list(FIRST_POSSESSIVE, w) {
            return Tag::PronounFirstPossessive;
        }
        if in_list(SECOND, w) {
            return Tag::PronounSecond;
        }
        if in_list(THIRD, w) {
            return Tag::PronounThird;
        }
        if let Some(tag) = self.lexical_tag(raw, i) {
            return tag;
        }
        if in_list(ADVERBS, w) || (w.len() >= 4 && w.ends_with("ly")) {
            return Tag::Adverb;
        }
        let proper = if is_all_caps(&t.surface) {
            true
        } else if is_capitalized(&t.surface) {
            !t.sentence_start || !in_list(SENTENCE_INITIAL_COMMON, w)
        } else {
            false
        };
        if proper && !w.chars().all(|c| c.is_numeric()) {
            return Tag::ProperNoun;
        }
        Tag::Plain
    }

    fn lexical_tag(&self, raw: &[RawToken], i: usize) -> Option<Tag> {
        let w = raw[i].lower.as_str();
        let mut verb = None;
        let mut noun = None;
        let mut adj = None;
        for (name, pos, set) in self.lexicon.pos_categories() {
            if !set.matches(w) {
                continue;
            }
            let slot = match pos {
                Pos::Verb => &mut verb,
                Pos::Noun => &mut noun,
                Pos::Adj => &mut adj,
            };
            if slot.is_none() {
                *slot = Some(name.to_string());
            }
        }
        match (verb, noun) {
            (Some(v), Some(n)) => {
                if follows_determiner(raw, i) {
                    Some(Tag::LexNoun(n))
                } else {
                    Some(Tag::LexVerb(v))
                }
            }
            (Some(v), None) => Some(Tag::LexVerb(v)),
            (None, Some(n)) => Some(Tag::LexNoun(n)),
            (None, None) => adj.map(Tag::LexAdjective),
        }
    }
}

/// True when one of the two preceding tokens in the sentence is a determiner.
fn follows_determiner(raw: &[RawToken], i: usize) -> bool {
    (1..=2).any(|back| {
        i.checked_sub(back)
            .map(|j| &raw[j])
            .is_some_and(|p| p.sentence == raw[i].sentence && in_list(DETERMINERS, &p.lower))
    })
}

/// Tags `text` with the bundled lexicon.
pub fn tokenize_and_tag(text: &str) -> TokenStream {
    Tagger::new(Lexicon::bundled()).tag(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternLabel {
    Opinion,
    Solicitation,
}

impl FromStr for PatternLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "opinion" => Ok(PatternLabel::Opinion),
            "solicitation" => Ok(PatternLabel::Solicitation),
            other => Err(Error::InvalidInput(format!(
                "unknown pattern label `{other}`"
            ))),
        }
    }
}

/// One acceptable tag in a `TAG(..)` slot. Lexicon classes may omit the
/// category to accept any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagClass {
    Exact(Tag),
    LexVerb(Option<String>),
    LexNoun(Option<String>),
    LexAdjective(Option<String>),
}

impl TagClass {
    pub fn accepts(&self, tag: &Tag) -> bool {
        fn cat(want: &Option<String>, got: &str) -> bool {
            want.as_deref().is_none_or(|w| w == got)
        }
        match (self, tag) {
            (TagClass::Exact(t), tag) => t == tag,
            (TagClass::LexVerb(w), Tag::LexVerb(c)) => cat(w, c),
            (TagClass::LexNoun(w), Tag::LexNoun(c)) => cat(w, c),
            (TagClass::LexAdjective(w), Tag::LexAdjective(c)) => cat(w, c),
            _ => false,
        }
    }
}

impl FromStr for TagClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, category) = match s.split_once(':') {
            Some((n, c)) => (n.trim(), Some(c.trim().to_lowercase())),
            None => (s, None),
        };
        let exact = |t: Tag| -> Result<TagClass> {
            if category.is_some() {
                return Err(Error::InvalidInput(format!(
                    "tag `{name}` takes no category"
                )));
            }
            Ok(TagClass::Exact(t))
        };
        match name {
            "LexVerb" => Ok(TagClass::LexVerb(category)),
            "LexNoun" => Ok(TagClass::LexNoun(category)),
            "LexAdjective" => Ok(TagClass::LexAdjective(category)),
            "PronounFirstSubjective" => exact(Tag::PronounFirstSubjective),
            "PronounFirstObjective" => exact(Tag::PronounFirstObjective),
            "PronounFirstPossessive" => exact(Tag::PronounFirstPossessive),
            "PronounSecond" => exact(Tag::PronounSecond),
            "PronounThird" => exact(Tag::PronounThird),
            "ModalVerb" => exact(Tag::ModalVerb),
            "AuxiliaryVerb" => exact(Tag::AuxiliaryVerb),
            "Negation" => exact(Tag::Negation),
            "Adverb" => exact(Tag::Adverb),
            "ProperNoun" => exact(Tag::ProperNoun),
            "Plain" => exact(Tag::Plain),
            other => Err(Error::InvalidInput(format!("unknown tag `{other}`"))),
        }
    }
}

pub const MAX_GAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    /// Any one of the listed tag classes.
    Tag(Vec<TagClass>),
    /// Any one of the listed lowercase words.
    Words(Vec<String>),
    /// Up to `n` arbitrary tokens.
    Gap(usize),
}

impl Slot {
    fn accepts(&self, token: &Token) -> bool {
        match self {
            Slot::Tag(classes) => classes.iter().any(|c| c.accepts(&token.tag)),
            Slot::Words(words) => words.contains(&token.lower),
            Slot::Gap(_) => true,
        }
    }
}

fn parse_slot(s: &str) -> Result<Slot> {
    let s = s.trim();
    let open = s
        .find('(')
        .filter(|_| s.ends_with(')'))
        .ok_or_else(|| Error::InvalidInput(format!("bad slot `{s}`")))?;
    let kind = s[..open].trim();
    let inner = &s[open + 1..s.len() - 1];
    match kind {
        "TAG" => Ok(Slot::Tag(
            inner.split('|').map(str::parse).collect::<Result<_>>()?,
        )),
        "WORDS" => {
            let words: Vec<String> = inner
                .split('|')
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect();
            if words.is_empty() {
                return Err(Error::InvalidInput(
                    "WORDS() needs at least one word".into(),
                ));
            }
            Ok(Slot::Words(words))
        }
        "GAP" => {
            let n: usize = inner
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad gap `{inner}`")))?;
            if n > MAX_GAP {
                return Err(Error::InvalidInput(format!(
                    "gap {n} exceeds the maximum of {MAX_GAP}"
                )));
            }
            Ok(Slot::Gap(n))
        }
        other => Err(Error::InvalidInput(format!("unknown slot kind `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRule {
    pub name: String,
    pub label: PatternLabel,
    pub slots: Vec<Slot>,
}

impl PatternRule {
    pub fn new(name: impl Into<String>, label: PatternLabel, slots: Vec<Slot>) -> Result<Self> {
        let name = name.into();
        if !slots.iter().any(|s| !matches!(s, Slot::Gap(_))) {
            return Err(Error::InvalidInput(format!(
                "rule `{name}` has no required slot"
            )));
        }
        if let Some(Slot::Gap(n)) = slots
            .iter()
            .find(|s| matches!(s, Slot::Gap(n) if *n > MAX_GAP))
        {
            return Err(Error::InvalidInput(format!(
                "rule `{name}`: gap {n} > {MAX_GAP}"
            )));
        }
        Ok(Self { name, label, slots })
    }

    /// True when the slots match a token run inside one sentence.
    pub fn matches(&self, stream: &TokenStream) -> bool {
        let tokens = &stream.tokens;
        (0..tokens.len())
            .any(|start| match_from(&self.slots, tokens, start, tokens[start].sentence))
    }
}

fn match_from(slots: &[Slot], tokens: &[Token], pos: usize, sentence: usize) -> bool {
    let Some((slot, rest)) = slots.split_first() else {
        return true;
    };
    match slot {
        Slot::Gap(n) => (0..=*n).any(|skip| {
            let next = pos + skip;
            next <= tokens.len()
                && tokens[pos.min(next)..next]
                    .iter()
                    .all(|t| t.sentence == sentence)
                && match_from(rest, tokens, next, sentence)
        }),
        _ => {
            tokens
                .get(pos)
                .is_some_and(|t| t.sentence == sentence && slot.accepts(t))
                && match_from(rest, tokens, pos + 1, sentence)
        }
    }
}

/// Compiled opinion and solicitation rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSet {
    pub rules: Vec<PatternRule>,
}

/// Whether a text contains opinion and solicitation expressions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyFlags {
    pub has_opinion: bool,
    pub has_solicitation: bool,
}

impl PatternSet {
    /// Parses `label | name | slot;slot;...` lines.
    pub fn parse(src: &str, path: &Path) -> Result<Self> {
        let mut rules = Vec::new();
        let mut names = BTreeSet::new();
        for (idx, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let parts: Vec<&str> = line.splitn(3, '|').map(str::trim).collect();
            let [label, name, slots] = parts[..] else {
                return Err(err("expected `label | name | slots`".into()));
            };
            let label: PatternLabel = label.parse().map_err(|e: Error| err(e.to_string()))?;
            let slots = split_slots(slots)
                .into_iter()
                .map(parse_slot)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| err(e.to_string()))?;
            let rule = PatternRule::new(name, label, slots).map_err(|e| err(e.to_string()))?;
            if !names.insert(rule.name.clone()) {
                return Err(err(format!("duplicate rule name `{}`", rule.name)));
            }
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src, path)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_PATTERNS, Path::new("patterns.txt")).expect("bundled patterns parse")
    }

    /// Names of every rule matching `stream`.
    pub fn match_patterns(&self, stream: &TokenStream) -> BTreeSet<String> {
        self.rules
            .iter()
            .filter(|r| r.matches(stream))
            .map(|r| r.name.clone())
            .collect()
    }

    pub fn strategy_flags(&self, stream: &TokenStream) -> StrategyFlags {
        let has = |label| {
            self.rules
                .iter()
                .filter(|r| r.label == label)
                .any(|r| r.matches(stream))
        };
        StrategyFlags {
            has_opinion: has(PatternLabel::Opinion),
            has_solicitation: has(PatternLabel::Solicitation),
        }
    }
}

/// Splits on `;` outside parentheses.
fn split_slots(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ';' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out.into_iter().filter(|p| !p.trim().is_empty()).collect()
}

/// Tagger and pattern set bundled together for per-post evaluation.
#[derive(Debug, Clone)]
pub struct StrategyMatcher {
    pub tagger: Tagger,
    pub patterns: PatternSet,
}

impl StrategyMatcher {
    pub fn new(lexicon: Lexicon, patterns: PatternSet) -> Self {
        Self {
            tagger: Tagger::new(lexicon),
            patterns,
        }
    }

    pub fn bundled() -> Self {
        Self::new(Lexicon::bundled(), PatternSet::bundled())
    }

    pub fn strategy_flags(&self, text: &str) -> StrategyFlags {
        self.patterns.strategy_flags(&self.tagger.tag(text))
    }

    pub fn match_patterns(&self, text: &str) -> BTreeSet<String> {
        self.patterns.match_patterns(&self.tagger.tag(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> &'static Path {
        Path::new("test.txt")
    }

    #[test]
    fn parses_categories_and_stems() {
        let lex = Lexicon::parse(
            "# c\nrisk: danger*, threat\ncogproc@pos=verb: think\n",
            path(),
        )
        .unwrap();
        let risk = lex.category("risk").unwrap();
        assert!(risk.matches("dangerous"));
        assert!(risk.matches("threat"));
        assert!(!risk.matches("threats"));
        assert!(lex
            .get(&CategoryKey {
                name: "cogproc".into(),
                pos: Some(Pos::Verb)
            })
            .is_some());
        assert!(matches!(
            lex.category("nope"),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn duplicate_category_rejected() {
        assert!(Lexicon::parse("a: x\na: y\n", path()).is_err());
    }

    #[test]
    fn proportion_counts_tokens() {
        let lex = Lexicon::parse("anger: hate*, rage\n", path()).unwrap();
        let p = category_proportion("I hate this rage, truly hateful", &lex, "anger").unwrap();
        assert!((p - 3.0 / 6.0).abs() < 1e-12);
        assert_eq!(category_proportion("", &lex, "anger").unwrap(), 0.0);
    }

    #[test]
    fn tags_closed_classes() {
        let tags = tokenize_and_tag("I believe").tags();
        assert_eq!(
            tags,
            vec![Tag::PronounFirstSubjective, Tag::LexVerb("cogproc".into())]
        );
        let tags = tokenize_and_tag("Please donate").tags();
        assert_eq!(tags[1], Tag::LexVerb("social".into()));
        let tags = tokenize_and_tag("Trump should").tags();
        assert_eq!(tags, vec![Tag::ProperNoun, Tag::ModalVerb]);
        let tags = tokenize_and_tag("We don't think").tags();
        assert_eq!(tags[1], Tag::Negation);
    }

    #[test]
    fn homograph_noun_after_determiner() {
        let s = tokenize_and_tag("Your timely call");
        assert_eq!(s.tokens[2].tag, Tag::LexNoun("social".into()));
        let s = tokenize_and_tag("Call your senator");
        assert_eq!(s.tokens[0].tag, Tag::LexVerb("social".into()));
    }

    #[test]
    fn sentence_initial_common_word_not_proper() {
        let s = tokenize_and_tag("The group can wait. Mary can wait.");
        assert_eq!(s.tokens[0].tag, Tag::Plain);
        assert_eq!(s.tokens[4].tag, Tag::ProperNoun);
    }

    #[test]
    fn pattern_does_not_cross_sentences() {
        let m = StrategyMatcher::bundled();
        assert!(m
            .match_patterns("I know. believe")
            .contains("first_subjective_cogproc_verb"));
        assert!(m.match_patterns("I left. Think again").is_empty());
    }

    #[test]
    fn gap_bound_enforced() {
        assert!(PatternSet::parse(
            "opinion | x | TAG(ProperNoun);GAP(4);TAG(ModalVerb)\n",
            path()
        )
        .is_err());
        assert!(PatternSet::parse("opinion | x | GAP(2)\n", path()).is_err());
    }

    pub(crate) const OPINION_GOLDENS: [&str; 15] = [
        "I believe",
        "We don't think",
        "I really don't understand",
        "My strong opinion",
        "Our shared understanding of the issue",
        "I am hopeful",
        "We are really confused",
        "I might not be supportive",
        "They should",
        "He should",
        "They definitely must",
        "His incomplete understanding must",
        "Hillary must",
        "Trump should",
        "CAIR actually can",
    ];

    pub(crate) const SOLICITATION_GOLDENS: [&str; 13] = [
        "Please donate",
        "Please consider registering",
        "Sign the petition",
        "Register for this beautiful event",
        "Contact us",
        "Register with our",
        "You should",
        "You really must",
        "You can",
        "Your wonderful donation",
        "Your timely call",
        "Will you sign this petition?",
        "Can you call your senator?",
    ];

    #[test]
    fn goldens_match_their_label() {
        let m = StrategyMatcher::bundled();
        for g in OPINION_GOLDENS {
            let f = m.strategy_flags(g);
            assert!(f.has_opinion, "{g}");
        }
        for g in SOLICITATION_GOLDENS {
            let f = m.strategy_flags(g);
            assert!(f.has_solicitation, "{g}");
        }
        let f = m.strategy_flags("Will you sign this petition?");
        assert_eq!((f.has_opinion, f.has_solicitation), (false, true));
        let f = m.strategy_flags("My strong opinion is clear");
        assert_eq!((f.has_opinion, f.has_solicitation), (true, false));
    }

    #[test]
    fn lowercase_input_matches_non_proper_rules() {
        let m = StrategyMatcher::bundled();
        for g in [
            "I believe",
            "Sign the petition",
            "You should",
            "They definitely must",
        ] {
            assert_eq!(
                m.match_patterns(g),
                m.match_patterns(&g.to_lowercase()),
                "{g}"
            );
        }
    }
}
