//! Prohibited-language scanner written from the default rule lists, with no
//! reference to the library's lexicon code.

const DIAGNOSTIC: [&str; 8] = [
    "abuser",
    "abusive",
    "narcissist",
    "sociopath",
    "manipulator",
    "toxic",
    "victim",
    "gaslighter",
];

const DIRECTIVE: [&str; 9] = [
    "you should",
    "you must",
    "you need to leave",
    "break up",
    "divorce",
    "leave him",
    "leave her",
    "leave them",
    "report them",
];

fn boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// Every rule the text breaks, as short labels.
pub fn scan(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let folded = text.to_lowercase();
    for term in DIAGNOSTIC {
        for form in [term.to_owned(), format!("{term}s"), format!("{term}es")] {
            let hit = folded.match_indices(&form).any(|(i, m)| {
                boundary(folded[..i].chars().next_back()) && boundary(folded[i + m.len()..].chars().next())
            });
            if hit {
                out.push(format!("diagnostic:{term}"));
                break;
            }
        }
    }
    let squashed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    for phrase in DIRECTIVE {
        if squashed.contains(phrase) {
            out.push(format!("directive:{phrase}"));
        }
    }
    if !text.ends_with('?') {
        out.push("not-a-question".into());
    }
    out
}
