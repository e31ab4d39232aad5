use super::{Pos, Token};

const ELISION_MAX: usize = 3;

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '_' || is_apostrophe(c)
}

/// Split on whitespace and punctuation. Punctuation becomes separate tokens;
/// `'s` and bare trailing apostrophes are split off English words, and
/// elided articles (`l'`, `d'`, `qu'`) are split off French words.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some(&(start, c)) = iter.peek() {
        if c.is_whitespace() {
            iter.next();
            continue;
        }
        if !is_word_char(c) || (is_apostrophe(c) && !starts_clitic(&text[start..])) {
            iter.next();
            let end = start + c.len_utf8();
            tokens.push(Token::raw(&text[start..end], (start, end), Pos::Punct));
            continue;
        }
        let mut end = start;
        while let Some(&(i, c)) = iter.peek() {
            if !is_word_char(c) {
                break;
            }
            end = i + c.len_utf8();
            iter.next();
        }
        split_word(text, start, end, &mut tokens);
    }
    tokens
}

fn starts_clitic(rest: &str) -> bool {
    let mut chars = rest.chars();
    chars.next();
    matches!(chars.next(), Some('s' | 'S')) && chars.next().is_none_or(|c| !c.is_alphanumeric())
}

fn split_word(text: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    let word = &text[start..end];
    // Elision: short prefix ending in an apostrophe, followed by a letter.
    if let Some((i, c)) = word.char_indices().find(|(_, c)| is_apostrophe(*c)) {
        let after = i + c.len_utf8();
        let prefix_chars = word[..i].chars().count();
        let rest = &word[after..];
        let is_possessive_s = rest.eq_ignore_ascii_case("s");
        if prefix_chars > 0 && prefix_chars <= ELISION_MAX && !rest.is_empty() && !is_possessive_s {
            out.push(Token::raw(&word[..after], (start, start + after), Pos::Other));
            split_word(text, start + after, end, out);
            return;
        }
    }
    // Trailing "'s" or bare "'".
    let lower = word.to_lowercase();
    for suffix in ["'s", "\u{2019}s", "'", "\u{2019}"] {
        if lower.ends_with(suffix) && word.len() > suffix.len() {
            let cut = end - suffix.len();
            push_hyphen_trimmed(text, start, cut, out);
            out.push(Token::raw(&text[cut..end], (cut, end), Pos::Other));
            return;
        }
    }
    push_hyphen_trimmed(text, start, end, out);
}

fn push_hyphen_trimmed(text: &str, mut start: usize, mut end: usize, out: &mut Vec<Token>) {
    while start < end && text[start..].starts_with('-') {
        out.push(Token::raw("-", (start, start + 1), Pos::Punct));
        start += 1;
    }
    let mut trailing = 0;
    while end > start && text[..end].ends_with('-') {
        end -= 1;
        trailing += 1;
    }
    if start < end {
        out.push(Token::raw(&text[start..end], (start, end), Pos::Other));
    }
    for k in 0..trailing {
        out.push(Token::raw("-", (end + k, end + k + 1), Pos::Punct));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.surface).collect()
    }

    #[test]
    fn splits_punctuation_and_clitics() {
        assert_eq!(surfaces("Who is Michael Jackson?"), ["Who", "is", "Michael", "Jackson", "?"]);
        assert_eq!(surfaces("and his mother's?"), ["and", "his", "mother", "'s", "?"]);
        assert_eq!(surfaces("his brothers' and sisters'?"), ["his", "brothers", "'", "and", "sisters", "'", "?"]);
        assert_eq!(surfaces("la capitale de l'Andorre"), ["la", "capitale", "de", "l'", "Andorre"]);
        assert_eq!(surfaces("qu\u{2019}est-ce"), ["qu\u{2019}", "est-ce"]);
        assert_eq!(surfaces("1958-08-29, -x"), ["1958-08-29", ",", "-", "x"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn spans_cover_input() {
        let text = "  What's  the \u{2018}capital\u{2019} of Côte d'Ivoire?! ";
        let toks = tokenize(text);
        let mut rebuilt = String::new();
        let mut cursor = 0;
        for t in &toks {
            assert!(text[cursor..t.span.0].chars().all(char::is_whitespace));
            rebuilt.push_str(&text[cursor..t.span.0]);
            assert_eq!(&text[t.span.0..t.span.1], t.surface);
            rebuilt.push_str(&t.surface);
            cursor = t.span.1;
        }
        rebuilt.push_str(&text[cursor..]);
        assert_eq!(rebuilt, text);
    }
}
