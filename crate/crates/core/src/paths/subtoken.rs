/// Splits an identifier or literal into lowercase subtokens.
///
/// Boundaries: lower-to-upper (`arrayList`), the last capital of an acronym
/// before a lowercase letter (`HTTPServer` -> `http`, `server`), letter/digit
/// transitions, and any non-alphanumeric character (`_`, `$`, quotes, spaces).
/// Returns `["_"]` when nothing alphanumeric remains.
pub fn split_subtokens(token: &str) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    let mut pieces = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            flush(&mut current, &mut pieces);
            continue;
        }
        if let Some(&prev) = i.checked_sub(1).and_then(|j| chars.get(j)) {
            if prev.is_alphanumeric() {
                let next = chars.get(i + 1).copied();
                let boundary = (prev.is_lowercase() && c.is_uppercase())
                    || (prev.is_uppercase()
                        && c.is_uppercase()
                        && next.is_some_and(|n| n.is_lowercase()))
                    || (prev.is_alphabetic() && c.is_numeric())
                    || (prev.is_numeric() && c.is_alphabetic());
                if boundary {
                    flush(&mut current, &mut pieces);
                }
            }
        }
        current.extend(c.to_lowercase());
    }
    flush(&mut current, &mut pieces);
    if pieces.is_empty() {
        pieces.push("_".to_string());
    }
    pieces
}

fn flush(current: &mut String, pieces: &mut Vec<String>) {
    if !current.is_empty() {
        pieces.push(std::mem::take(current));
    }
}
