//! `--set key=value` parsing and sweep expansion.

use crate::CliError;

/// One `--set` argument: a key and one or more values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub key: String,
    pub values: Vec<String>,
}

impl Setting {
    pub fn parse(arg: &str) -> Result<Self, CliError> {
        let Some((key, raw)) = arg.split_once('=') else {
            return Err(CliError::Usage(format!("--set expects key=value, got `{arg}`")));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Usage(format!("--set has an empty key in `{arg}`")));
        }
        let values = split_top_level(raw);
        if values.iter().any(|v| v.is_empty()) {
            return Err(CliError::Usage(format!("--set {key} has an empty value")));
        }
        Ok(Setting {
            key: key.to_string(),
            values,
        })
    }
}

/// Splits on commas outside brackets and quotes, so `[1, 2]` stays whole.
fn split_top_level(raw: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut cur = String::new();
    for ch in raw.chars() {
        match (quote, ch) {
            (Some(q), c) if c == q => {
                quote = None;
                cur.push(c);
            }
            (Some(_), c) => cur.push(c),
            (None, '"' | '\'') => {
                quote = Some(ch);
                cur.push(ch);
            }
            (None, '[' | '{') => {
                depth += 1;
                cur.push(ch);
            }
            (None, ']' | '}') => {
                depth -= 1;
                cur.push(ch);
            }
            (None, ',') if depth == 0 => parts.push(std::mem::take(&mut cur).trim().to_string()),
            (None, c) => cur.push(c),
        }
    }
    parts.push(cur.trim().to_string());
    parts
}

/// Cross product of all settings, in argument order with the last key
/// varying fastest.
pub fn expand(settings: &[Setting]) -> Vec<Vec<(String, String)>> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for s in settings {
        points = points
            .into_iter()
            .flat_map(|p| {
                s.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((s.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// Keys that take more than one value.
pub fn swept_keys(settings: &[Setting]) -> Vec<String> {
    settings.iter().filter(|s| s.values.len() > 1).map(|s| s.key.clone()).collect()
}
