//! Text preprocessing: whitespace/punctuation normalization and entity
//! placeholder replacement.
//!
//! Both passes are deterministic and idempotent. The final system runs with
//! both disabled, so [`PreprocessConfig::default`] is all-off.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Punctuation characters whose same-character runs collapse to one.
const COLLAPSIBLE_PUNCT: [char; 7] = ['.', ',', '!', '?', ';', ':', '-'];

/// Which preprocessing passes to apply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    #[serde(default)]
    pub normalize_whitespace_punct: bool,
    #[serde(default)]
    pub replace_entities: bool,
}

impl PreprocessConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        PreprocessConfig {
            normalize_whitespace_punct: true,
            replace_entities: true,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.normalize_whitespace_punct && !self.replace_entities
    }
}

/// Collapses whitespace runs to a single space, trims the ends, and reduces
/// runs of the same punctuation character (`. , ! ? ; : -`) to one.
pub fn normalize_ws_punct(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            pending_space = true;
            i += 1;
            continue;
        }
        if pending_space {
            if !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
        }
        out.push(c);
        if COLLAPSIBLE_PUNCT.contains(&c) {
            while i + 1 < chars.len() && chars[i + 1] == c {
                i += 1;
            }
        }
        i += 1;
    }
    out
}

fn entity_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // Alternation order encodes precedence: URL > email > hashtag > emoji.
        // The regex engine picks the leftmost match, and at equal start the
        // earliest alternative, which is exactly a single left-to-right scan.
        Regex::new(concat!(
            r"(?P<url>https?://\S*)",
            r"|(?P<email>[\w.+-]+@[\w-]+(?:\.[\w-]+)+)",
            r"|(?P<hashtag>#\w+)",
            r"|(?P<emoji>\p{Extended_Pictographic})",
        ))
        .expect("entity regex compiles")
    })
}

/// Replaces URLs, emails, hashtags and emoji codepoints with `{url}`,
/// `{email}`, `{hashtag}` and `{emoji}` placeholders.
pub fn replace_entities(text: &str) -> String {
    let re = entity_regex();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in re.captures_iter(text) {
        let m = caps.get(0).expect("whole match");
        out.push_str(&text[last..m.start()]);
        let placeholder = if caps.name("url").is_some() {
            "{url}"
        } else if caps.name("email").is_some() {
            "{email}"
        } else if caps.name("hashtag").is_some() {
            "{hashtag}"
        } else {
            "{emoji}"
        };
        out.push_str(placeholder);
        last = m.end();
    }
    out.push_str(&text[last..]);
    out
}

/// Applies the configured passes: entity replacement first, normalization
/// second, so placeholders never leave unnormalized whitespace behind.
pub fn preprocess(text: &str, config: &PreprocessConfig) -> String {
    let mut result = if config.replace_entities {
        replace_entities(text)
    } else {
        text.to_string()
    };
    if config.normalize_whitespace_punct {
        result = normalize_ws_punct(&result);
    }
    result
}
