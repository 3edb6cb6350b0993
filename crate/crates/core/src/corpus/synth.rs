//! Templated synthetic corpus whose difficulty labels are defined by where
//! the question's hint words sit relative to the answer.
//!
//! Easy questions quote content words immediately left of the answer (within
//! `easy_max_dist`); hard questions quote content words at least
//! `hard_min_dist` tokens away. Sentence content words are distinct within a
//! sentence, so every hint has exactly one occurrence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Difficulty, Example, Result};

/// Target share of Easy examples.
pub const EASY_RATIO: f64 = 0.58;

const MIN_LEN: usize = 14;
const MAX_LEN: usize = 20;
const HINTS: usize = 2;
const FUNCTION_WORD_RATE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintProfile {
    pub easy_max_dist: usize,
    pub hard_min_dist: usize,
}

impl Default for HintProfile {
    fn default() -> Self {
        HintProfile {
            easy_max_dist: 2,
            hard_min_dist: 6,
        }
    }
}

const CONTENT: &[&str] = &[
    "river", "valley", "castle", "engine", "harbor", "forest", "council", "bridge", "temple",
    "market", "garden", "tower", "museum", "village", "canal", "railway", "factory", "library",
    "college", "festival", "treaty", "empire", "kingdom", "province", "island", "mountain",
    "desert", "glacier", "volcano", "ocean", "lake", "coast", "plain", "plateau", "delta",
    "harvest", "cotton", "silver", "copper", "marble", "granite", "timber", "wool", "grain",
    "spice", "silk", "pottery", "painting", "sculpture", "poem", "novel", "opera", "symphony",
    "ballet", "theater", "cathedral", "monastery", "fortress", "palace", "arena", "stadium",
    "airport", "station", "highway", "tunnel", "dam", "reservoir", "mill", "furnace", "forge",
    "laboratory", "observatory", "telescope", "satellite", "rocket", "vessel", "frigate",
    "galleon", "steamship", "locomotive", "carriage", "wagon", "cavalry", "infantry", "army",
    "navy", "senate", "parliament", "assembly", "court", "charter", "statute", "constitution",
    "republic", "dynasty", "monarch", "governor", "merchant", "scholar", "priest", "farmer",
    "sailor", "soldier", "painter", "composer", "architect", "engineer", "physician",
    "chemist", "botanist", "astronomer", "philosopher", "historian", "poet", "novelist",
    "ancient", "northern", "southern", "eastern", "western", "coastal", "royal", "imperial",
    "colonial", "medieval", "modern", "famous", "wealthy", "sacred", "urban", "rural", "annual",
    "national", "regional", "military", "naval", "civil", "built", "founded", "captured",
    "restored", "designed", "painted", "composed", "discovered", "invented", "published",
    "signed", "crowned", "defeated", "explored", "mapped", "measured", "traded", "exported",
    "carved",
];

const FUNCTION_WORDS: &[&str] = &["the", "of", "and", "in", "was", "by", "at"];

const FIRST_NAMES: &[&str] = &[
    "marie", "isaac", "ada", "nikola", "rosalind", "charles", "galileo", "emmy", "alan",
    "grace", "johannes", "lise", "michael", "dorothy", "niels",
];
const LAST_NAMES: &[&str] = &[
    "curie", "newton", "lovelace", "tesla", "franklin", "darwin", "galilei", "noether",
    "turing", "hopper", "kepler", "meitner", "faraday", "hodgkin", "bohr",
];
const PLACES: &[&str] = &[
    "paris", "vienna", "lisbon", "cairo", "kyoto", "lima", "oslo", "dublin", "prague", "madrid",
    "athens", "delhi", "quito", "riga", "sofia", "tunis", "hanoi", "nairobi", "havana",
    "warsaw", "geneva", "bergen", "porto", "seville", "naples", "krakow", "bruges", "salzburg",
    "toledo", "granada",
];
const THINGS: &[&str] = &[
    "oxygen", "iron", "gold", "quartz", "jade", "amber", "ivory", "cobalt", "nickel", "zinc",
    "sulfur", "carbon", "helium", "neon", "argon", "tin", "lead", "mercury", "platinum",
    "tungsten", "salt", "coal", "tea", "coffee", "sugar", "rice", "wheat", "barley", "indigo",
    "saffron",
];

#[derive(Debug, Clone, Copy)]
enum AnswerKind {
    Person,
    Year,
    Place,
    Thing,
}

impl AnswerKind {
    const ALL: [AnswerKind; 4] = [
        AnswerKind::Person,
        AnswerKind::Year,
        AnswerKind::Place,
        AnswerKind::Thing,
    ];

    fn wh_word(self) -> &'static str {
        match self {
            AnswerKind::Person => "who",
            AnswerKind::Year => "when",
            AnswerKind::Place => "where",
            AnswerKind::Thing => "what",
        }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> Vec<String> {
        match self {
            AnswerKind::Person => vec![
                pick(FIRST_NAMES, rng).to_string(),
                pick(LAST_NAMES, rng).to_string(),
            ],
            AnswerKind::Year => vec![rng.gen_range(1500..1950).to_string()],
            AnswerKind::Place => vec![pick(PLACES, rng).to_string()],
            AnswerKind::Thing => vec![pick(THINGS, rng).to_string()],
        }
    }
}

fn pick<'a>(pool: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn distance(i: usize, start: usize, end: usize) -> usize {
    if i < start {
        start - i
    } else { i.saturating_sub(end) }
}

fn easy_hint_count(profile: &HintProfile) -> usize {
    HINTS.min(profile.easy_max_dist)
}

/// Answer starts that leave room for the easy hints on the left and at
/// least `HINTS` positions at `hard_min_dist` or farther.
fn valid_starts(m: usize, answer_len: usize, profile: &HintProfile) -> Vec<usize> {
    let easy = easy_hint_count(profile);
    (0..=m.saturating_sub(answer_len))
        .filter(|&s| {
            let end = s + answer_len - 1;
            let far = (0..m)
                .filter(|&i| distance(i, s, end) >= profile.hard_min_dist)
                .count();
            s.min(profile.easy_max_dist) >= easy && far >= HINTS
        })
        .collect()
}

/// Deterministic corpus of `n` templated examples with ≈58% Easy labels.
pub fn generate_synthetic_corpus(n: usize, seed: u64, profile: HintProfile) -> Result<Vec<Example>> {
    if n == 0 {
        return Err(CorpusError::Contract("corpus size must be at least 1".into()));
    }
    if profile.easy_max_dist == 0 || profile.easy_max_dist >= profile.hard_min_dist {
        return Err(CorpusError::Contract(format!(
            "need 1 <= easy_max_dist < hard_min_dist, got {} and {}",
            profile.easy_max_dist, profile.hard_min_dist
        )));
    }
    if valid_starts(MAX_LEN, 2, &profile).is_empty() {
        return Err(CorpusError::Contract(format!(
            "template of at most {MAX_LEN} tokens is too short for hard_min_dist {}",
            profile.hard_min_dist
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_easy = (n as f64 * EASY_RATIO).round() as usize;
    let mut labels: Vec<Difficulty> = (0..n)
        .map(|i| if i < n_easy { Difficulty::Easy } else { Difficulty::Hard })
        .collect();
    labels.shuffle(&mut rng);

    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| make_example(format!("syn-{seed}-{i:05}"), label, &profile, &mut rng))
        .collect()
}

fn make_example(
    id: String,
    label: Difficulty,
    profile: &HintProfile,
    rng: &mut ChaCha8Rng,
) -> Result<Example> {
    let kind = AnswerKind::ALL[rng.gen_range(0..AnswerKind::ALL.len())];
    let answer = kind.sample(rng);
    let la = answer.len();

    let mut m = rng.gen_range(MIN_LEN..=MAX_LEN);
    let starts = loop {
        let s = valid_starts(m, la, profile);
        if !s.is_empty() {
            break s;
        }
        m += 1;
    };
    let start = starts[rng.gen_range(0..starts.len())];
    let end = start + la - 1;

    let eligible: Vec<usize> = match label {
        Difficulty::Easy => (start.saturating_sub(profile.easy_max_dist)..start).collect(),
        _ => (0..m)
            .filter(|&i| distance(i, start, end) >= profile.hard_min_dist)
            .collect(),
    };
    let want = match label {
        Difficulty::Easy => easy_hint_count(profile),
        _ => HINTS,
    };
    let mut hints: Vec<usize> = eligible.choose_multiple(rng, want).copied().collect();
    hints.sort_unstable();

    let mut content: Vec<&str> = CONTENT.to_vec();
    content.shuffle(rng);
    let mut content = content.into_iter();
    let mut tokens: Vec<String> = Vec::with_capacity(m);
    for i in 0..m {
        if (start..=end).contains(&i) {
            tokens.push(answer[i - start].clone());
        } else if !hints.contains(&i)
            && distance(i, start, end) > profile.easy_max_dist
            && rng.gen_bool(FUNCTION_WORD_RATE)
        {
            tokens.push(pick(FUNCTION_WORDS, rng).to_string());
        } else {
            tokens.push(content.next().expect("content pool exhausted").to_string());
        }
    }

    let mut sentence = String::new();
    let mut answer_start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            sentence.push(' ');
        }
        if i == start {
            answer_start = sentence.chars().count();
        }
        if i == 0 {
            sentence.push_str(&capitalize(tok));
        } else {
            sentence.push_str(tok);
        }
    }
    sentence.push('.');
    let answer_text: String = sentence.chars().skip(answer_start).take(answer.join(" ").chars().count()).collect();

    let mut question = capitalize(kind.wh_word());
    for &h in &hints {
        question.push(' ');
        question.push_str(&tokens[h]);
    }
    question.push('?');

    Example::from_raw(id, &sentence, answer_start, &answer_text, &question, label)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
