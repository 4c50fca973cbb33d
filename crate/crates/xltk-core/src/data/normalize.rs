//! Text normalization applied before any tokenization.

use super::NUM_TOKEN;

/// Lowercase, drop URL/email chunks, replace each maximal digit run with the
/// `<NUM>` marker, and collapse all whitespace to single spaces.
///
/// Chunk-level removal happens before digit substitution so numeric URLs
/// don't leak `<NUM>` debris into the text.
pub fn normalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for chunk in lower.split_whitespace() {
        if is_url(chunk) || is_email(chunk) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        push_with_num_marker(&mut out, chunk);
    }
    out
}

fn is_url(chunk: &str) -> bool {
    chunk.starts_with("http://") || chunk.starts_with("https://") || chunk.starts_with("www.")
}

fn is_email(chunk: &str) -> bool {
    match chunk.split_once('@') {
        Some((user, host)) => !user.is_empty() && host.contains('.'),
        None => false,
    }
}

fn push_with_num_marker(out: &mut String, chunk: &str) {
    let mut in_digits = false;
    for c in chunk.chars() {
        if c.is_ascii_digit() {
            if !in_digits {
                out.push_str(NUM_TOKEN);
                in_digits = true;
            }
        } else {
            in_digits = false;
            out.push(c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_runs_become_markers() {
        assert_eq!(normalize("Call 911 twice 911"), "call <NUM> twice <NUM>");
    }

    #[test]
    fn digits_inside_words_are_replaced() {
        assert_eq!(normalize("user1234name v2"), "user<NUM>name v<NUM>");
    }

    #[test]
    fn urls_and_emails_are_dropped() {
        assert_eq!(
            normalize("Visit https://spam.example/x?q=1 or write me@host.org now"),
            "visit or write now"
        );
        assert_eq!(normalize("www.bad.site stays not"), "stays not");
    }

    #[test]
    fn whitespace_collapses() {
        assert_eq!(normalize("  A \t B\n\nC  "), "a b c");
    }

    #[test]
    fn empty_input_stays_empty() {
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("   \n "), "");
    }
}
