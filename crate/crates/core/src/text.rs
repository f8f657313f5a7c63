//! Text normalization shared by tokenization, embedding and exact matching.

use unicode_normalization::UnicodeNormalization;

/// NFC + lowercase.
pub fn normalize(text: &str) -> String {
    text.nfc().collect::<String>().to_lowercase()
}

/// Trims and collapses every internal run of whitespace to one space.
pub fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// The canonical form compared by exact matching and fed to the embedder.
pub fn canonical(text: &str) -> String {
    collapse_whitespace(&normalize(text))
}
