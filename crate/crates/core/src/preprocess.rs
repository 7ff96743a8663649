//! Persian social-media text preprocessing.
//!
//! The public pipeline is [`preprocess`]: pattern substitution first, then
//! character normalization, then whitespace tokenization. The order matters:
//! mentions, URLs and numbers are made of characters the normalizer deletes,
//! so they must be replaced by placeholders before it runs.

use std::fmt;

pub const USER: &str = "<کاربر>";
pub const URL: &str = "<آدرس>";
pub const NUMBER: &str = "<عدد>";
pub const HASHTAG: &str = "<هشتگ>";

pub const PLACEHOLDERS: [&str; 4] = [USER, URL, NUMBER, HASHTAG];

const ZWNJ: char = '\u{200C}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Tweet,
    News,
    Review,
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tweet" => Ok(Source::Tweet),
            "news" => Ok(Source::News),
            "review" => Ok(Source::Review),
            other => Err(format!("unknown source tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub text: String,
    pub source: Source,
}

impl RawDocument {
    pub fn tokens(&self) -> TokenSequence {
        preprocess(&self.text)
    }
}

/// Ordered list of non-empty, whitespace-free tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        TokenSequence(tokens)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Full pipeline: substitute, normalize, tokenize.
pub fn preprocess(text: &str) -> TokenSequence {
    tokenize(&normalize(&substitute_patterns(text)))
}

pub fn is_placeholder(token: &str) -> bool {
    PLACEHOLDERS.contains(&token)
}

fn is_digit(c: char) -> bool {
    c.is_ascii_digit() || ('۰'..='۹').contains(&c) || ('٠'..='٩').contains(&c)
}

fn is_handle_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

// Each matcher returns the byte length of its match at the start of `s`, or 0.

fn match_mention(s: &str) -> usize {
    let Some(rest) = s.strip_prefix('@') else {
        return 0;
    };
    let len: usize = rest
        .chars()
        .take_while(|&c| is_handle_char(c))
        .map(char::len_utf8)
        .sum();
    if len == 0 {
        0
    } else {
        1 + len
    }
}

fn match_url(s: &str) -> usize {
    let scheme = if s.starts_with("https://") {
        8
    } else if s.starts_with("http://") {
        7
    } else {
        return 0;
    };
    let tail: usize = s[scheme..]
        .chars()
        .take_while(|c| !c.is_whitespace())
        .map(char::len_utf8)
        .sum();
    if tail == 0 {
        0
    } else {
        scheme + tail
    }
}

fn digit_run(s: &str) -> usize {
    s.chars()
        .take_while(|&c| is_digit(c))
        .map(char::len_utf8)
        .sum()
}

/// Digit runs joined by single slashes, as in dates: `1389/02/14`.
fn match_number(s: &str) -> usize {
    let mut len = digit_run(s);
    if len == 0 {
        return 0;
    }
    while s[len..].starts_with('/') {
        let next = digit_run(&s[len + 1..]);
        if next == 0 {
            break;
        }
        len += 1 + next;
    }
    len
}

fn match_hashtag(s: &str) -> usize {
    let Some(rest) = s.strip_prefix('#') else {
        return 0;
    };
    let tail: usize = rest
        .chars()
        .take_while(|c| !c.is_whitespace())
        .map(char::len_utf8)
        .sum();
    if tail == 0 {
        0
    } else {
        1 + tail
    }
}

/// Replace mentions, URLs, numbers and hashtags by their placeholders.
///
/// Scans left to right; at each position the longest of the four matches
/// wins. A placeholder (including one already present in the input) is
/// separated from adjacent non-space text by one space so it always survives
/// as a token of its own.
pub fn substitute_patterns(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let literal = PLACEHOLDERS
            .iter()
            .find(|p| rest.starts_with(**p))
            .map_or((0, ""), |p| (p.len(), *p));
        let candidates = [
            literal,
            (match_mention(rest), USER),
            (match_url(rest), URL),
            (match_number(rest), NUMBER),
            (match_hashtag(rest), HASHTAG),
        ];
        // Each rule needs a distinct leading character, so lengths never tie.
        let (len, placeholder) = candidates
            .iter()
            .copied()
            .fold((0, ""), |best, c| if c.0 > best.0 { c } else { best });
        if len == 0 {
            let c = rest.chars().next().expect("non-empty remainder");
            out.push(c);
            i += c.len_utf8();
            continue;
        }
        if out.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
            out.push(' ');
        }
        out.push_str(placeholder);
        i += len;
        if text[i..].chars().next().is_some_and(|c| !c.is_whitespace()) {
            out.push(' ');
        }
    }
    out
}

/// Map Arabic code points to their Persian forms. Returns `None` for
/// characters that are dropped outright (tatweel, diacritics).
fn fold_char(c: char) -> Option<char> {
    match c {
        'ي' | 'ى' => Some('ی'),
        'ك' => Some('ک'),
        '\u{0640}' => None,
        '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{06D6}'..='\u{06ED}' => None,
        '\u{0300}'..='\u{036F}' => None,
        '٠'..='٩' => char::from_u32(c as u32 - '٠' as u32 + '۰' as u32),
        _ => Some(c),
    }
}

pub fn is_persian_letter(c: char) -> bool {
    matches!(c,
        '\u{0621}'..='\u{063A}'
        | '\u{0641}'..='\u{0648}'
        | 'پ' | 'چ' | 'ژ' | 'ک' | 'گ' | 'ی' | 'ۀ')
}

fn is_kept(c: char) -> bool {
    is_persian_letter(c) || c == ZWNJ || c.is_ascii_digit() || ('۰'..='۹').contains(&c)
}

/// Character-level normalization.
///
/// Arabic letter variants become Persian, tatweel and diacritics are deleted,
/// and any other character outside Persian letters, digits, ZWNJ, whitespace
/// and the placeholder tokens is removed. Whitespace is collapsed and the
/// result trimmed. ZWNJ is kept inside words but stripped at word edges.
pub fn normalize(text: &str) -> String {
    let mut spaced = String::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if let Some(p) = PLACEHOLDERS.iter().find(|p| rest.starts_with(**p)) {
            spaced.push(' ');
            spaced.push_str(p);
            spaced.push(' ');
            i += p.len();
            continue;
        }
        let c = rest.chars().next().expect("non-empty remainder");
        i += c.len_utf8();
        match fold_char(c) {
            None => {}
            Some(c) if is_kept(c) => spaced.push(c),
            Some(c) if c.is_whitespace() => spaced.push(' '),
            Some(_) => {}
        }
    }

    let mut out = String::with_capacity(spaced.len());
    for word in spaced.split_whitespace() {
        let word = word.trim_matches(ZWNJ);
        if word.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Whitespace split. Input is expected to be normalized already.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence::new(text.split_whitespace().map(str::to_owned).collect())
}
