//! Examples, tokenization, vocabulary and JSONL dataset I/O.

mod stopwords;
mod synth;

pub use stopwords::StopwordSet;
pub use synth::{generate_synthetic_corpus, HintProfile, EASY_RATIO};

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
    Unlabeled,
}

impl Difficulty {
    /// Row of the difficulty-indexed tables; `None` for unlabeled.
    pub fn index(self) -> Option<usize> {
        match self {
            Difficulty::Easy => Some(0),
            Difficulty::Hard => Some(1),
            Difficulty::Unlabeled => None,
        }
    }

    pub fn reversed(self) -> Difficulty {
        match self {
            Difficulty::Easy => Difficulty::Hard,
            Difficulty::Hard => Difficulty::Easy,
            Difficulty::Unlabeled => Difficulty::Unlabeled,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Difficulty::Unlabeled
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
            Difficulty::Unlabeled => "unlabeled",
        }
    }

    fn to_json(self) -> Option<String> {
        self.is_labeled().then(|| self.as_str().to_string())
    }

    fn from_json(value: Option<&str>) -> std::result::Result<Self, String> {
        match value {
            None => Ok(Difficulty::Unlabeled),
            Some("easy") => Ok(Difficulty::Easy),
            Some("hard") => Ok(Difficulty::Hard),
            Some(other) => Err(format!("unknown difficulty {other:?}")),
        }
    }
}

/// One (sentence, answer span, question, difficulty) record.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub sentence: String,
    pub sentence_tokens: Vec<String>,
    /// Character offset of the answer in `sentence`.
    pub answer_start: usize,
    pub answer_text: String,
    /// Inclusive token span of the answer.
    pub answer_span: (usize, usize),
    pub question: String,
    pub question_tokens: Vec<String>,
    pub difficulty: Difficulty,
}

impl Example {
    pub fn from_raw(
        id: impl Into<String>,
        sentence: &str,
        answer_start: usize,
        answer_text: &str,
        question: &str,
        difficulty: Difficulty,
    ) -> Result<Self> {
        let id = id.into();
        let sentence_tokens = tokenize(sentence);
        let question_tokens = tokenize(question);
        if sentence_tokens.is_empty() || question_tokens.is_empty() {
            return Err(CorpusError::Contract(format!(
                "example {id}: sentence and question must be non-empty"
            )));
        }
        let answer_span = char_span_to_token_span(sentence, answer_start, answer_text)
            .map_err(|e| match e {
                CorpusError::Alignment(msg) => CorpusError::Alignment(format!("example {id}: {msg}")),
                other => other,
            })?;
        Ok(Example {
            id,
            sentence: sentence.to_string(),
            sentence_tokens,
            answer_start,
            answer_text: answer_text.to_string(),
            answer_span,
            question: question.to_string(),
            question_tokens,
            difficulty,
        })
    }

    pub fn answer_tokens(&self) -> &[String] {
        &self.sentence_tokens[self.answer_span.0..=self.answer_span.1]
    }

    pub fn with_difficulty(&self, difficulty: Difficulty) -> Example {
        Example {
            difficulty,
            ..self.clone()
        }
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Tokens with their character ranges (`start..end`) in the input.
pub fn tokenize_with_offsets(text: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let flush = |current: &mut String, start: usize, end: usize, out: &mut Vec<_>| {
        if !current.is_empty() {
            out.push((current.to_lowercase(), start, end));
            current.clear();
        }
    };
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, start, i, &mut out);
        } else if is_punct(c) {
            flush(&mut current, start, i, &mut out);
            out.push((c.to_lowercase().collect(), i, i + 1));
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
    }
    let end = text.chars().count();
    flush(&mut current, start, end, &mut out);
    out
}

/// Lowercases, splits on whitespace and detaches punctuation characters.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text)
        .into_iter()
        .map(|(t, _, _)| t)
        .collect()
}

/// Maps a character-offset answer onto an inclusive token span.
pub fn char_span_to_token_span(
    sentence: &str,
    char_start: usize,
    answer_text: &str,
) -> Result<(usize, usize)> {
    let chars: Vec<char> = sentence.chars().collect();
    let answer: Vec<char> = answer_text.chars().collect();
    let char_end = char_start + answer.len();
    if answer.is_empty() || char_end > chars.len() || chars[char_start..char_end] != answer[..] {
        let found: String = chars
            .iter()
            .skip(char_start)
            .take(answer.len().max(1))
            .collect();
        return Err(CorpusError::Alignment(format!(
            "answer {answer_text:?} not found at offset {char_start} (found {found:?})"
        )));
    }
    let tokens = tokenize_with_offsets(sentence);
    let first = tokens.iter().position(|(_, _, end)| *end > char_start);
    let last = tokens.iter().rposition(|(_, start, _)| *start < char_end);
    match (first, last) {
        (Some(f), Some(l))
            if f <= l && tokens[f].1 == char_start && tokens[l].2 == char_end =>
        {
            Ok((f, l))
        }
        _ => Err(CorpusError::Alignment(format!(
            "answer {answer_text:?} at offset {char_start} does not fall on token boundaries"
        ))),
    }
}

/// Token-id mapping shared by encoder and decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub min_freq: usize,
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const SOS: usize = 2;
    pub const EOS: usize = 3;
    pub const RESERVED: [&'static str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

    /// Builds from an explicit token list that starts with the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        if tokens.len() < 4 || tokens[..4].iter().zip(Self::RESERVED).any(|(a, b)| a != b) {
            return Err(CorpusError::Contract(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CorpusError::Contract(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab {
            tokens,
            index,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, falling back to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary over sentence and question tokens, ordered by frequency then
/// lexicographically. Tokens seen fewer than `min_freq` times map to UNK.
pub fn build_vocab(examples: &[Example], min_freq: usize) -> Result<Vocab> {
    if min_freq == 0 {
        return Err(CorpusError::Contract("min_freq must be at least 1".into()));
    }
    if examples.is_empty() {
        return Err(CorpusError::Contract("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in examples {
        for t in ex.sentence_tokens.iter().chain(&ex.question_tokens) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !Vocab::RESERVED.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens = Vocab::RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Vocab::from_tokens(tokens, min_freq)
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    sentence: String,
    answer_start: usize,
    answer_text: String,
    question: String,
    difficulty: Option<String>,
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let difficulty = Difficulty::from_json(rec.difficulty.as_deref())
            .map_err(|message| CorpusError::Parse {
                line: line_no,
                message,
            })?;
        out.push(Example::from_raw(
            rec.id,
            &rec.sentence,
            rec.answer_start,
            &rec.answer_text,
            &rec.question,
            difficulty,
        )?);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    parse_jsonl(BufReader::new(File::open(path)?))
}

pub fn write_jsonl(examples: &[Example], mut w: impl Write) -> Result<()> {
    for ex in examples {
        let rec = ExampleRecord {
            id: ex.id.clone(),
            sentence: ex.sentence.clone(),
            answer_start: ex.answer_start,
            answer_text: ex.answer_text.clone(),
            question: ex.question.clone(),
            difficulty: ex.difficulty.to_json(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_jsonl(examples: &[Example], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(examples, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const OXYGEN: &str = "Oxygen is a chemical element with symbol O and atomic number 8";

    #[test]
    fn tokenize_cases() {
        assert_eq!(
            tokenize(OXYGEN),
            [
                "oxygen", "is", "a", "chemical", "element", "with", "symbol", "o", "and", "atomic",
                "number", "8"
            ]
        );
        assert_eq!(tokenize("What?"), ["what", "?"]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn span_alignment() {
        let off = OXYGEN.find('8').unwrap();
        assert_eq!(char_span_to_token_span(OXYGEN, off, "8").unwrap(), (11, 11));
        assert_eq!(char_span_to_token_span(OXYGEN, 0, OXYGEN).unwrap(), (0, 11));
        assert!(matches!(
            char_span_to_token_span(OXYGEN, 1, "xygen"),
            Err(CorpusError::Alignment(_))
        ));
        assert!(matches!(
            char_span_to_token_span(OXYGEN, 3, "8"),
            Err(CorpusError::Alignment(_))
        ));
        assert_eq!(
            char_span_to_token_span("It costs $5.", 9, "$5").unwrap(),
            (2, 3)
        );
    }

    fn ex(sentence: &str, question: &str) -> Example {
        let first = sentence.split_whitespace().next().unwrap();
        Example::from_raw("x", sentence, 0, first, question, Difficulty::Unlabeled)
            .unwrap()
    }

    #[test]
    fn vocab_counting_and_threshold() {
        let corpus = vec![ex("a a", "a ?")];
        // "a" x3 plus "?" x1
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.token(4), Some("a"));
        let v = build_vocab(&[ex("a a", "a")], 1).unwrap();
        assert_eq!(v.len(), 5);
        let v = build_vocab(&[ex("a a", "a")], 4).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), Vocab::UNK);
        assert!(build_vocab(&[], 1).is_err());
        assert!(build_vocab(&corpus, 0).is_err());
    }

    #[test]
    fn vocab_tie_break_is_lexicographic() {
        let corpus = vec![ex("zeta alpha", "mid")];
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(&v.tokens()[4..], ["alpha", "mid", "zeta"]);
        assert_eq!(build_vocab(&corpus, 1).unwrap(), v);
    }

    #[test]
    fn jsonl_round_trip() {
        let text = concat!(
            r#"{"id":"a","sentence":"Oxygen is a chemical element with symbol O and atomic number 8","answer_start":61,"answer_text":"8","question":"What is the atomic number of the element oxygen?","difficulty":"easy"}"#,
            "\n",
            r#"{"id":"b","sentence":"The guitar was loud.","answer_start":4,"answer_text":"guitar","question":"What was loud?","difficulty":null}"#,
            "\n"
        );
        let exs = parse_jsonl(text.as_bytes()).unwrap();
        assert_eq!(exs.len(), 2);
        assert_eq!(exs[0].answer_span, (11, 11));
        assert_eq!(exs[1].difficulty, Difficulty::Unlabeled);
        let mut out = Vec::new();
        write_jsonl(&exs, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn jsonl_errors_carry_context() {
        let bad = "{\"id\":\"a\"}\n";
        match parse_jsonl(bad.as_bytes()) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        let misaligned = r#"{"id":"zz","sentence":"abc def","answer_start":1,"answer_text":"bc","question":"q","difficulty":null}"#;
        match parse_jsonl(misaligned.as_bytes()) {
            Err(CorpusError::Alignment(msg)) => assert!(msg.contains("zz")),
            other => panic!("{other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tokenize_idempotent(s in "[a-zA-Z0-9 ,.?!'-]{0,40}") {
                let once = tokenize(&s);
                let twice = tokenize(&once.join(" "));
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn span_recovers_answer(words in proptest::collection::vec("[a-zA-Z]{1,6}", 1..10), a in 0usize..10, len in 1usize..4) {
                let a = a % words.len();
                let b = (a + len).min(words.len());
                let sentence = words.join(" ");
                let start: usize = words[..a].iter().map(|w| w.chars().count() + 1).sum();
                let answer = words[a..b].join(" ");
                let (s, e) = char_span_to_token_span(&sentence, start, &answer).unwrap();
                let toks = tokenize(&sentence);
                prop_assert_eq!(toks[s..=e].join(" "), answer.to_lowercase());
            }
        }
    }
}
