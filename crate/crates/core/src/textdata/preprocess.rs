use std::sync::OnceLock;

use regex::Regex;

/// Standalone words dropped as reserved retweet/attribution markers.
pub const RESERVED_WORDS: &[&str] = &["rt", "via"];

struct Patterns {
    emoji: Regex,
    url: Regex,
    mention: Regex,
    reserved: Regex,
}

fn patterns() -> &'static Patterns {
    static CELL: OnceLock<Patterns> = OnceLock::new();
    CELL.get_or_init(|| Patterns {
        emoji: Regex::new(concat!(
            "[",
            r"\x{1F000}-\x{1FAFF}",
            r"\x{2300}-\x{23FF}",
            r"\x{2600}-\x{27BF}",
            r"\x{2B00}-\x{2BFF}",
            r"\x{FE00}-\x{FE0F}",
            r"\x{200D}\x{20E3}",
            r"\x{E0020}-\x{E007F}",
            "]"
        ))
        .expect("emoji pattern"),
        url: Regex::new(r"(?:[a-z][a-z0-9+.\-]*://|www\.)\S*").expect("url pattern"),
        mention: Regex::new(r"@\w+:?").expect("mention pattern"),
        reserved: Regex::new(&format!(r"\b(?:{})\b:?", RESERVED_WORDS.join("|"))).expect("reserved pattern"),
    })
}

fn single_pass(s: &str) -> String {
    let p = patterns();
    let s = s.to_lowercase();
    let s = p.emoji.replace_all(&s, " ");
    let s = p.url.replace_all(&s, " ");
    let s = p.mention.replace_all(&s, " ");
    let s = p.reserved.replace_all(&s, " ");
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercases and strips URLs, emoji, @-mentions and reserved words, then
/// collapses whitespace. Idempotent.
pub fn preprocess(text: &str) -> String {
    // Removals run in a fixed order and may expose new matches for an
    // earlier pattern; repeat until stable. Later passes only shrink.
    let mut cur = single_pass(text);
    loop {
        let next = single_pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}
