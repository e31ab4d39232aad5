//! Surface-string normalization shared by label lookup, tagging and scoring.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Lowercase, fold diacritics, unify apostrophes and collapse whitespace.
pub fn normalize(s: &str) -> String {
    let folded: String = s
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '`' => '\'',
            _ => c,
        })
        .flat_map(char::to_lowercase)
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalized whitespace-separated words of a label.
pub fn words(s: &str) -> Vec<String> {
    normalize(s).split(' ').filter(|w| !w.is_empty()).map(str::to_owned).collect()
}

pub fn is_title_case(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_uppercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_case_and_accents() {
        assert_eq!(normalize("MICHAEL  Jackson"), "michael jackson");
        assert_eq!(normalize("Père"), "pere");
        assert_eq!(normalize("Andorra la Vella"), "andorra la vella");
        assert_eq!(normalize("l\u{2019}Andorre"), "l'andorre");
    }

    #[test]
    fn title_case() {
        assert!(is_title_case("Jackson"));
        assert!(!is_title_case("jackson"));
        assert!(!is_title_case(""));
    }
}
