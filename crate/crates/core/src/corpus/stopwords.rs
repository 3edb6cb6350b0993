//! Embedded English stopword list.
//!
//! The list is the common 179-word NLTK English set. Tokens made only of
//! punctuation are treated as stopwords as well, so they never count as
//! proximity hints.

use std::collections::BTreeSet;

const WORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
    "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
    "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
    "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
    "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
    "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
    "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
    "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn",
    "wouldn't",
];

#[derive(Debug, Clone)]
pub struct StopwordSet {
    words: BTreeSet<&'static str>,
}

impl Default for StopwordSet {
    fn default() -> Self {
        StopwordSet {
            words: WORDS.iter().copied().collect(),
        }
    }
}

impl StopwordSet {
    pub fn english() -> Self {
        Self::default()
    }

    /// Case-insensitive membership; punctuation-only tokens count as stopwords.
    pub fn is_stop(&self, token: &str) -> bool {
        if token.chars().all(|c| !c.is_alphanumeric()) {
            return true;
        }
        let lower = token.to_lowercase();
        self.words.contains(lower.as_str())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership() {
        let s = StopwordSet::english();
        assert_eq!(s.len(), 179);
        for w in ["what", "is", "the", "of", "What", "THE", "?", ","] {
            assert!(s.is_stop(w), "{w}");
        }
        for w in ["atomic", "number", "element", "oxygen", "8"] {
            assert!(!s.is_stop(w), "{w}");
        }
    }
}
