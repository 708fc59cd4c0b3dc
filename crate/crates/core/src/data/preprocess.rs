/// Lowercases and tokenizes one utterance.
///
/// Alphanumeric runs (Unicode letters and digits) form tokens, `?` and `!`
/// are tokens of their own, whitespace separates, and every other character
/// is deleted without splitting the surrounding word (`don't` → `dont`).
pub fn preprocess(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if ch == '?' || ch == '!' {
            flush(&mut current, &mut tokens);
            tokens.push(ch.to_string());
        } else if ch.is_whitespace() {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}
