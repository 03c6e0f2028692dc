use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySchema, NerOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grounding {
    #[default]
    Off,
    /// Drop values that do not occur in the query (case-insensitive substring).
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no balanced {{...}} region in the completion")]
    NoDictionaryFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub output: NerOutput,
    pub dropped_hallucinations: usize,
}

/// Parses a dictionary-shaped completion onto `schema`.
///
/// Every schema type is present in the result. Keys fold case, whitespace and underscores;
/// quotes may be single, double or absent; text around the first balanced `{...}` is ignored.
pub fn parse_output(
    completion: &str,
    schema: &EntitySchema,
    query_text: &str,
    grounding: Grounding,
) -> Result<ParsedOutput, ParseError> {
    let chars: Vec<char> = completion.chars().collect();
    let (open, close) = find_dict(&chars).ok_or(ParseError::NoDictionaryFound)?;
    let fields = Fields::new(&chars[open + 1..close]).parse();

    let mut output = NerOutput::empty(&schema.names());
    let query_lower = query_text.to_lowercase();
    let mut dropped = 0;
    for (key, value) in fields {
        let Value::List(values) = value else { continue };
        let Some(t) = schema.resolve(&key) else {
            output.unrecognized.push((key, values));
            continue;
        };
        let slot = output.get_mut(&t.name).expect("schema key present");
        for v in values {
            if grounding == Grounding::Strict && !query_lower.contains(&v.to_lowercase()) {
                dropped += 1;
            } else {
                slot.push(v);
            }
        }
    }
    Ok(ParsedOutput {
        output,
        dropped_hallucinations: dropped,
    })
}

fn is_delim(c: char) -> bool {
    matches!(c, ',' | ']' | '}' | ':' | '[' | '{')
}

/// A quote at `i` opens a string only at the start of a token.
fn opens_quote(chars: &[char], i: usize) -> bool {
    if !matches!(chars[i], '"' | '\'') {
        return false;
    }
    match chars[..i].iter().rev().find(|c| !c.is_whitespace()) {
        None => true,
        Some(&p) => matches!(p, '{' | '[' | ',' | ':'),
    }
}

/// Index just past the closing quote of the string opened at `i`, or `chars.len()`.
/// A quote closes only when followed by a delimiter (or the end), so `'O'Brien'` survives.
fn skip_quoted(chars: &[char], i: usize) -> (usize, String) {
    let q = chars[i];
    let mut s = String::new();
    let mut j = i + 1;
    while j < chars.len() {
        let c = chars[j];
        if c == '\\' && j + 1 < chars.len() {
            s.push(chars[j + 1]);
            j += 2;
            continue;
        }
        if c == q {
            let next = chars[j + 1..].iter().find(|c| !c.is_whitespace());
            if next.is_none_or(|&n| is_delim(n) && n != '[' && n != '{') {
                return (j + 1, s);
            }
        }
        s.push(c);
        j += 1;
    }
    (chars.len(), s)
}

/// First `{` that balances, as `(open, close)` indices.
fn find_dict(chars: &[char]) -> Option<(usize, usize)> {
    let mut start = 0;
    while let Some(off) = chars[start..].iter().position(|&c| c == '{') {
        let open = start + off;
        if let Some(close) = matching_brace(chars, open) {
            return Some((open, close));
        }
        start = open + 1;
    }
    None
}

fn matching_brace(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = open;
    while i < chars.len() {
        match chars[i] {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ if opens_quote(chars, i) => {
                i = skip_quoted(chars, i).0;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    None
}

enum Value {
    List(Vec<String>),
    Nested,
}

struct Fields<'a> {
    chars: &'a [char],
    pos: usize,
}

impl<'a> Fields<'a> {
    fn new(chars: &'a [char]) -> Self {
        Self { chars, pos: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn parse(mut self) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(|c| c.is_whitespace() || c == ',') {
                self.pos += 1;
            }
            if self.pos >= self.chars.len() {
                return out;
            }
            let key = self.scalar(&[':', ',']);
            self.skip_ws();
            if self.peek() != Some(':') {
                // A fragment without a value; skip it.
                self.pos += usize::from(self.peek().is_some());
                continue;
            }
            self.pos += 1;
            self.skip_ws();
            let value = match self.peek() {
                Some('[') => {
                    self.pos += 1;
                    Value::List(self.list())
                }
                Some('{') => {
                    self.pos = matching_brace(self.chars, self.pos).map_or(self.chars.len(), |c| c + 1);
                    Value::Nested
                }
                _ => {
                    let v = self.scalar(&[',']).filter(|v| {
                        !matches!(v.to_lowercase().as_str(), "none" | "null")
                    });
                    Value::List(v.into_iter().collect())
                }
            };
            if let Some(key) = key {
                out.push((key, value));
            }
        }
    }

    /// Items up to the closing `]` (consumed).
    fn list(&mut self) -> Vec<String> {
        let mut items = Vec::new();
        loop {
            while self.peek().is_some_and(|c| c.is_whitespace() || c == ',') {
                self.pos += 1;
            }
            match self.peek() {
                None => return items,
                Some(']') => {
                    self.pos += 1;
                    return items;
                }
                _ => {}
            }
            let before = self.pos;
            if let Some(v) = self.scalar(&[',', ']']) {
                items.push(v);
            }
            if self.pos == before {
                self.pos += 1;
            }
        }
    }

    /// A quoted string (possibly empty), or bare text up to a stop character (`None` when
    /// empty).
    fn scalar(&mut self, stops: &[char]) -> Option<String> {
        self.skip_ws();
        if self.pos < self.chars.len() && opens_quote(self.chars, self.pos) {
            let (end, s) = skip_quoted(self.chars, self.pos);
            self.pos = end;
            return Some(s);
        }
        let start = self.pos;
        while self.peek().is_some_and(|c| !stops.contains(&c)) {
            self.pos += 1;
        }
        let s = self.chars[start..self.pos].iter().collect::<String>().trim().to_string();
        (!s.is_empty()).then_some(s)
    }
}
