//! A second, independently written hashed-trigram embedder and the golden
//! vectors it produced.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub const PHRASES: [&str; 20] = [
    "you're imagining things",
    "That never happened!",
    "after all i've done for you",
    "if you leave me i don't know what i'll do",
    "it's never enough with you",
    "you're overreacting",
    "calm down, it was NOTHING",
    "I booked us a table",
    "a",
    "",
    "   ",
    "?!...",
    "naïve café déjà vu",
    "ÜBER straße",
    "日本語のテキスト",
    "emoji 😀 between words",
    "tab\tseparated\nlines",
    "123 456 7890",
    "mixed-case-HYPHENATED_words",
    "the the the the the",
];

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0f64; 256];
    let lower = text.to_lowercase();
    let mut token = String::new();
    let mut tokens = Vec::new();
    for c in lower.chars() {
        if c.is_alphanumeric() {
            token.push(c);
        } else if !token.is_empty() {
            tokens.push(std::mem::take(&mut token));
        }
    }
    if !token.is_empty() {
        tokens.push(token);
    }
    for t in tokens {
        let padded: Vec<char> = format!("#{t}#").chars().collect();
        for i in 0..padded.len() - 2 {
            let tri: String = padded[i..i + 3].iter().collect();
            let h = fnv(tri.as_bytes());
            let sign = if h & 0x100 == 0 { 1.0 } else { -1.0 };
            v[(h % 256) as usize] += sign;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

#[derive(Serialize, Deserialize)]
pub struct GoldenEntry {
    pub text: String,
    /// IEEE-754 bit patterns, hex encoded.
    pub bits: Vec<String>,
}

pub fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/embedding_golden.json")
}

pub fn to_bits(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{:016x}", x.to_bits())).collect()
}

pub fn load_golden() -> Vec<GoldenEntry> {
    serde_json::from_str(&std::fs::read_to_string(golden_path()).expect("golden file present")).expect("golden file parses")
}

pub fn write_golden() {
    let entries: Vec<GoldenEntry> = PHRASES
        .iter()
        .map(|p| GoldenEntry {
            text: (*p).to_owned(),
            bits: to_bits(&embed(p)),
        })
        .collect();
    std::fs::write(golden_path(), serde_json::to_string_pretty(&entries).unwrap() + "\n").unwrap();
}
