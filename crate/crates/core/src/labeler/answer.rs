use std::collections::HashMap;

/// Lowercases, drops ASCII punctuation, removes the articles `a`, `an`,
/// `the` and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> bool {
    normalize_answer(pred) == normalize_answer(gold)
}

/// Harmonic mean of token-overlap precision and recall on normalized text.
/// Both sides empty counts as a perfect match; one side empty scores 0.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let p: Vec<&str> = p.split_whitespace().collect();
    let g: Vec<&str> = g.split_whitespace().collect();
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize_answer("The Electric Guitar"), "electric guitar");
        assert_eq!(normalize_answer("8"), "8");
        assert_eq!(normalize_answer("a b"), "b");
        assert_eq!(normalize_answer("  a,  b "), "b");
        assert_eq!(normalize_answer("An apple."), "apple");
        assert_eq!(normalize_answer("theater"), "theater");
    }

    #[test]
    fn em_and_f1_cases() {
        assert!(exact_match("8", "8"));
        assert_eq!(token_f1("8", "8"), 1.0);
        assert_eq!(token_f1("atomic number", "number 8"), 0.5);
        assert!(!exact_match("", "x"));
        assert_eq!(token_f1("", "x"), 0.0);
        assert_eq!(token_f1("the", "a"), 1.0);
        assert!(exact_match("The Electric Guitar!", "electric guitar"));
        assert!((token_f1("x x y", "x y y") - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn em_reflexive_and_f1_symmetric(a in "[a-zA-Z ,.]{0,24}", b in "[a-zA-Z ,.]{0,24}") {
            prop_assert!(exact_match(&a, &a));
            prop_assert_eq!(token_f1(&a, &b), token_f1(&b, &a));
            let f = token_f1(&a, &b);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
