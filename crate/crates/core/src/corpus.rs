//! Email corpus preparation: normalization, deduplication, seeded splits,
//! majority-class undersampling and rule-based perturbation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::records::Label;
use crate::stats::derive_stream;
use rand_core::RngCore;

/// Texts with fewer whitespace-delimited tokens than this are rejected.
pub const MIN_TOKENS: usize = 15;
pub const URL_TOKEN: &str = "<URL>";
pub const EMAIL_TOKEN: &str = "<EMAIL>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmailRecord {
    pub id: String,
    pub email_text: String,
    pub label: Label,
}

/// Hook run on lowercased, NFC-normalized text before link and address
/// replacement. The default leaves text untouched.
pub trait Lemmatizer {
    fn lemmatize(&self, text: &str) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityLemmatizer;

impl Lemmatizer for IdentityLemmatizer {
    fn lemmatize(&self, text: &str) -> String {
        text.to_string()
    }
}

/// `Key: value` with a key made of ASCII alphanumerics and dashes.
fn is_header_line(line: &str) -> bool {
    let Some((key, rest)) = line.split_once(':') else {
        return false;
    };
    !key.is_empty()
        && key.len() <= 64
        && key.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
        && (rest.is_empty() || rest.starts_with(' ') || rest.starts_with('\t'))
}

/// Drops a leading block of header lines (with folded continuation lines)
/// when it is terminated by a blank line.
fn strip_headers(text: &str) -> &str {
    let mut offset = 0;
    let mut seen_header = false;
    for line in text.split_inclusive('\n') {
        let bare = line.trim_end_matches(['\n', '\r']);
        if is_header_line(bare) {
            seen_header = true;
        } else if seen_header && bare.starts_with([' ', '\t']) && !bare.trim().is_empty() {
            // folded header value
        } else if seen_header && bare.trim().is_empty() {
            return &text[offset + line.len()..];
        } else {
            return text;
        }
        offset += line.len();
    }
    text
}

fn looks_like_url(s: &str) -> bool {
    s.contains("://") || s.starts_with("www.") || s.starts_with("mailto:")
}

fn looks_like_email(s: &str) -> bool {
    let Some((local, domain)) = s.rsplit_once('@') else {
        return false;
    };
    !local.is_empty()
        && domain
            .split_once('.')
            .is_some_and(|(host, tld)| !host.is_empty() && !tld.is_empty())
}

/// Removes markup. `<url>`/`<email>` placeholders (any case) are kept in
/// canonical form; bracketed links and addresses keep their content.
fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let Some(close) = after.find('>') else {
            out.push_str(&rest[open..]);
            return out;
        };
        let inner = &after[..close];
        if inner.contains('<') {
            out.push('<');
            rest = after;
            continue;
        }
        if inner.eq_ignore_ascii_case("url") {
            out.push_str(URL_TOKEN);
        } else if inner.eq_ignore_ascii_case("email") {
            out.push_str(EMAIL_TOKEN);
        } else if !inner.contains(char::is_whitespace)
            && (looks_like_url(inner) || looks_like_email(inner))
        {
            out.push(' ');
            out.push_str(inner);
            out.push(' ');
        } else if inner
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || matches!(c, '/' | '!' | '?'))
        {
            out.push(' ');
        } else {
            out.push('<');
            rest = after;
            continue;
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

fn replace_token(token: &str) -> &str {
    if token == URL_TOKEN || token == EMAIL_TOKEN {
        token
    } else if looks_like_url(token) {
        URL_TOKEN
    } else if looks_like_email(token) {
        EMAIL_TOKEN
    } else {
        token
    }
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Normalizes raw email text: header block and markup removed, lowercased,
/// NFC, links replaced by `<URL>` and addresses by `<EMAIL>`, whitespace
/// collapsed. `None` when fewer than [`MIN_TOKENS`] tokens remain.
pub fn normalize_text(raw: &str) -> Option<String> {
    normalize_with(raw, &IdentityLemmatizer)
}

pub fn normalize_with(raw: &str, lemmatizer: &dyn Lemmatizer) -> Option<String> {
    let body = strip_headers(raw);
    let lowered = body.to_lowercase();
    // Removing a tag can join the pieces of a new one, so repeat until stable.
    let mut untagged = strip_tags(&lowered);
    loop {
        let next = strip_tags(&untagged);
        if next == untagged {
            break;
        }
        untagged = next;
    }
    let composed: String = untagged.nfc().collect();
    let lemmatized = lemmatizer.lemmatize(&composed);
    let tokens: Vec<&str> = lemmatized.split_whitespace().map(replace_token).collect();
    if tokens.len() < MIN_TOKENS {
        return None;
    }
    Some(tokens.join(" "))
}

/// [`normalize_text`] on raw bytes, rejecting invalid UTF-8 with the offset
/// of the first bad byte.
pub fn normalize_bytes(raw: &[u8]) -> Result<Option<String>> {
    let text = core::str::from_utf8(raw).map_err(|e| Error::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    Ok(normalize_text(text))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessTally {
    pub input: usize,
    pub kept: usize,
    pub too_short: usize,
    pub duplicate_text: usize,
    pub duplicate_id: usize,
}

/// Normalizes every record, dropping short texts, repeated ids and texts
/// whose normalized form was already seen. Order is preserved.
pub fn preprocess(
    corpus: &[EmailRecord],
    lemmatizer: &dyn Lemmatizer,
) -> (Vec<EmailRecord>, PreprocessTally) {
    let mut tally = PreprocessTally {
        input: corpus.len(),
        ..PreprocessTally::default()
    };
    let mut ids = BTreeSet::new();
    let mut texts = BTreeSet::new();
    let mut kept = Vec::new();
    for r in corpus {
        if !ids.insert(r.id.as_str()) {
            tally.duplicate_id += 1;
            continue;
        }
        let Some(text) = normalize_with(&r.email_text, lemmatizer) else {
            tally.too_short += 1;
            continue;
        };
        if !texts.insert(text.clone()) {
            tally.duplicate_text += 1;
            continue;
        }
        kept.push(EmailRecord {
            id: r.id.clone(),
            email_text: text,
            label: r.label,
        });
    }
    tally.kept = kept.len();
    (kept, tally)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction_of_train: f64,
    pub undersample_threshold: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            train_fraction: 0.8,
            val_fraction_of_train: 0.1,
            undersample_threshold: 0.6,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train_fraction", self.train_fraction),
            ("val_fraction_of_train", self.val_fraction_of_train),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::param(name, format!("{v} is outside (0, 1)")));
            }
        }
        check_threshold(self.undersample_threshold)
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.5 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::param(
            "undersample_threshold",
            format!("{t} is outside (0.5, 1)"),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusSplit {
    pub train: Vec<EmailRecord>,
    pub val: Vec<EmailRecord>,
    pub test: Vec<EmailRecord>,
}

pub const MIN_SPLIT_CORPUS: usize = 10;

/// Seeded train/val/test partition. `|test| = round((1 - train_fraction) n)`
/// and validation takes `round(val_fraction_of_train * |train|)` of the
/// remainder. Each split keeps corpus order.
pub fn split_corpus(corpus: &[EmailRecord], spec: &SplitSpec) -> Result<CorpusSplit> {
    spec.validate()?;
    let n = corpus.len();
    if n < MIN_SPLIT_CORPUS {
        return Err(Error::CorpusTooSmall {
            found: n,
            required: MIN_SPLIT_CORPUS,
        });
    }
    let n_test = libm::round((1.0 - spec.train_fraction) * n as f64) as usize;
    let n_val = libm::round(spec.val_fraction_of_train * (n - n_test) as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    derive_stream(spec.seed, "split").shuffle(&mut order);

    let take = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| corpus[i].clone()).collect::<Vec<_>>()
    };
    Ok(CorpusSplit {
        test: take(&order[..n_test]),
        val: take(&order[n_test..n_test + n_val]),
        train: take(&order[n_test + n_val..]),
    })
}

/// Randomly drops majority-class records until the majority fraction equals
/// `threshold` (counts rounded down). Input at or below the threshold is
/// returned unchanged; minority records are never touched.
pub fn undersample(train: &[EmailRecord], threshold: f64, seed: u64) -> Result<Vec<EmailRecord>> {
    check_threshold(threshold)?;
    let phishing = train.iter().filter(|r| r.label.is_positive()).count();
    let safe = train.len() - phishing;
    if phishing == 0 || safe == 0 {
        return Err(Error::SingleClass);
    }
    let (majority, major_n, minor_n) = if phishing >= safe {
        (Label::Phishing, phishing, safe)
    } else {
        (Label::Safe, safe, phishing)
    };
    if major_n as f64 / train.len() as f64 <= threshold {
        return Ok(train.to_vec());
    }
    let target = libm::floor(threshold * minor_n as f64 / (1.0 - threshold) + 1e-9) as usize;
    let mut major_idx: Vec<usize> = (0..train.len())
        .filter(|&i| train[i].label == majority)
        .collect();
    derive_stream(seed, "undersample").shuffle(&mut major_idx);
    let keep: BTreeSet<usize> = major_idx.into_iter().take(target).collect();
    Ok(train
        .iter()
        .enumerate()
        .filter(|(i, r)| r.label != majority || keep.contains(i))
        .map(|(_, r)| r.clone())
        .collect())
}

/// Word-to-synonyms map read from `word<TAB>synonym` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    /// Parses lexicon text. Blank lines and lines starting with `#` are
    /// skipped; entries are lowercased.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('\t') {
                Some((w, s)) if !w.trim().is_empty() && !s.trim().is_empty() && !s.contains('\t') => {
                    lex.insert(&w.trim().to_lowercase(), &s.trim().to_lowercase());
                }
                _ => {
                    return Err(Error::param(
                        "lexicon",
                        format!("line {}: expected `word<TAB>synonym`", no + 1),
                    ))
                }
            }
        }
        Ok(lex)
    }

    pub fn insert(&mut self, word: &str, synonym: &str) {
        let list = self.entries.entry(word.to_string()).or_default();
        if !list.iter().any(|s| s == synonym) {
            list.push(synonym.to_string());
        }
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

const TERMINAL: [char; 3] = ['.', '!', '?'];
const TRAILING: [char; 6] = ['.', ',', '!', '?', ';', ':'];

fn is_placeholder(token: &str) -> bool {
    token == URL_TOKEN || token == EMAIL_TOKEN
}

/// Rule-based paraphrase: a seeded, non-empty random subset of the tokens
/// found in the lexicon is replaced by synonyms, then terminal punctuation is
/// toggled. `<URL>` and `<EMAIL>` tokens are never altered. With an empty
/// lexicon only the punctuation changes.
pub fn perturb(text: &str, seed: u64, lexicon: &Lexicon) -> String {
    let mut tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return text.to_string();
    }
    let mut rng = derive_stream(seed, "perturb");

    let mut slots: Vec<usize> = (0..tokens.len())
        .filter(|&i| {
            !is_placeholder(&tokens[i]) && lexicon.synonyms(tokens[i].trim_end_matches(TRAILING)).is_some()
        })
        .collect();
    if !slots.is_empty() {
        let k = 1 + rng.index(slots.len());
        rng.shuffle(&mut slots);
        slots.truncate(k);
        slots.sort_unstable();
        for i in slots {
            let token = &tokens[i];
            let core_len = token.trim_end_matches(TRAILING).len();
            let options = lexicon.synonyms(&token[..core_len]).unwrap_or(&[]);
            if options.is_empty() {
                continue;
            }
            let choice = &options[rng.index(options.len())];
            tokens[i] = format!("{choice}{}", &token[core_len..]);
        }
    }

    let last = tokens.len() - 1;
    if is_placeholder(&tokens[last]) {
        tokens.push(".".to_string());
    } else if tokens[last].len() == 1 && tokens[last].ends_with(TERMINAL) {
        tokens.pop();
    } else if tokens[last].ends_with(TERMINAL) {
        tokens[last].pop();
    } else {
        tokens[last].push('.');
    }
    tokens.join(" ")
}

/// Cosine similarity of whitespace-token frequency vectors.
pub fn lexical_similarity(a: &str, b: &str) -> Result<f64> {
    fn tf(s: &str) -> BTreeMap<&str, u64> {
        let mut m = BTreeMap::new();
        for t in s.split_whitespace() {
            *m.entry(t).or_insert(0) += 1;
        }
        m
    }
    let (ta, tb) = (tf(a), tf(b));
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::EmptyInput("similarity text"));
    }
    let dot: u64 = ta.iter().map(|(t, c)| c * tb.get(t).copied().unwrap_or(0)).sum();
    let na: u64 = ta.values().map(|c| c * c).sum();
    let nb: u64 = tb.values().map(|c| c * c).sum();
    Ok((dot as f64 / libm::sqrt(na as f64 * nb as f64)).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedPerturbation {
    pub text: String,
    pub similarity: f64,
    /// Zero-based attempt that passed the gate.
    pub attempt: usize,
}

/// Perturbs `text` until `similarity(original, perturbed) >= threshold`,
/// trying at most `max_attempts` seeds drawn from the stream
/// `perturb/{id}/{attempt}`. `None` when every attempt falls below.
pub fn perturb_gated<S>(
    id: &str,
    text: &str,
    master_seed: u64,
    lexicon: &Lexicon,
    threshold: f64,
    max_attempts: usize,
    similarity: S,
) -> Result<Option<GatedPerturbation>>
where
    S: Fn(&str, &str) -> Result<f64>,
{
    for attempt in 0..max_attempts {
        let seed = derive_stream(master_seed, &format!("perturb/{id}/{attempt}")).next_u64();
        let candidate = perturb(text, seed, lexicon);
        let sim = similarity(text, &candidate)?;
        if sim >= threshold {
            return Ok(Some(GatedPerturbation {
                text: candidate,
                similarity: sim,
                attempt,
            }));
        }
    }
    Ok(None)
}
