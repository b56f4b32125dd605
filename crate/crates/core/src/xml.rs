//! Entity escaping for text placed between tags. Quotes need no escaping
//! in element content, so only `&`, `<` and `>` are rewritten; all five
//! standard entities are decoded.

use std::borrow::Cow;

pub fn escape(text: &str) -> Cow<'_, str> {
    if !text.contains(['&', '<', '>']) {
        return Cow::Borrowed(text);
    }
    let mut out = String::with_capacity(text.len() + 16);
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    Cow::Owned(out)
}

/// Reverses [`escape`]. Unknown or malformed entities are left as written,
/// so a bare `&` in model output survives untouched.
pub fn unescape(text: &str) -> Cow<'_, str> {
    if !text.contains('&') {
        return Cow::Borrowed(text);
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let decoded = [
            ("&amp;", '&'),
            ("&lt;", '<'),
            ("&gt;", '>'),
            ("&quot;", '"'),
            ("&apos;", '\''),
        ]
        .iter()
        .find(|(entity, _)| rest.starts_with(entity));
        match decoded {
            Some((entity, c)) => {
                out.push(*c);
                rest = &rest[entity.len()..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    Cow::Owned(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn escapes_reserved() {
        assert_eq!(escape("a < b & c"), "a &lt; b &amp; c");
        assert_eq!(escape(r#""x" 'y' >"#), r#""x" 'y' &gt;"#);
        assert_eq!(unescape("&quot;x&quot; &apos;y&apos;"), r#""x" 'y'"#);
        assert!(matches!(escape("plain"), Cow::Borrowed(_)));
    }

    #[test]
    fn bare_ampersand_survives_unescape() {
        assert_eq!(unescape("R&D &amp; more &unknown;"), "R&D & more &unknown;");
    }

    proptest! {
        #[test]
        fn unescape_inverts_escape(s in ".*") {
            prop_assert_eq!(unescape(&escape(&s)).into_owned(), s);
        }
    }
}
