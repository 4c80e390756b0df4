//! Text model files.
//!
//! ```text
//! [meta]
//! beta = 0.4
//! states = 2
//! actions = 3
//! shocks = 1
//! constraints = 1
//! initial_state = 0      # optional, default 0
//! initial_shock = 0      # optional, default 0
//! slater_eps = 1.0       # optional
//!
//! [transition]           # S × S, row-major
//! [reward]               # X·A·S values, (x, a, s) with s fastest
//! [constraint 1]         # same layout, one section per constraint
//! [threshold 1]          # full table or a single broadcast value
//! [horizon 1]            # "1" or "inf"
//! [feasible]             # 0/1 flags, full table or a single broadcast value
//! [zeta]                 # successor state indices, same layout
//! ```
//!
//! Numbers are whitespace separated and may span any number of lines;
//! `#` starts a comment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Horizon, ModelSpec};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{key}` in [meta]")]
    MissingKey { key: &'static str },
    #[error("missing section [{section}]")]
    MissingSection { section: String },
    #[error("section [{section}] has {found} values, expected {expected}")]
    Dimension {
        section: String,
        found: usize,
        expected: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

struct Section {
    line: usize,
    tokens: Vec<(usize, String)>,
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec, ParseError> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn save_model(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<(), ParseError> {
    std::fs::write(path, render_model(spec))?;
    Ok(())
}

pub fn parse_model(text: &str) -> Result<ModelSpec, ParseError> {
    let mut sections: HashMap<String, Section> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax(line_no, "unterminated section header"))?;
            let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
            if sections.contains_key(&name) {
                return Err(syntax(line_no, format!("duplicate section [{name}]")));
            }
            sections.insert(
                name.clone(),
                Section {
                    line: line_no,
                    tokens: Vec::new(),
                },
            );
            order.push(name.clone());
            current = Some(name);
            continue;
        }
        let name = current
            .as_ref()
            .ok_or_else(|| syntax(line_no, "data before the first section header"))?;
        let sec = sections.get_mut(name).expect("section registered");
        if name == "meta" {
            sec.tokens.push((line_no, line.to_string()));
        } else {
            sec.tokens
                .extend(line.split_whitespace().map(|t| (line_no, t.to_string())));
        }
    }

    let meta = sections.get("meta").ok_or_else(|| ParseError::MissingSection {
        section: "meta".into(),
    })?;
    let mut kv: HashMap<String, (usize, String)> = HashMap::new();
    for (line, entry) in &meta.tokens {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| syntax(*line, format!("expected `key = value`, found `{entry}`")))?;
        kv.insert(k.trim().to_string(), (*line, v.trim().to_string()));
    }
    let beta: f64 = meta_value(&kv, "beta")?;
    let nx: usize = meta_value(&kv, "states")?;
    let na: usize = meta_value(&kv, "actions")?;
    let ns: usize = meta_value(&kv, "shocks")?;
    let ni: usize = meta_value(&kv, "constraints")?;
    let initial_state: usize = meta_opt(&kv, "initial_state")?.unwrap_or(0);
    let initial_shock: usize = meta_opt(&kv, "initial_shock")?.unwrap_or(0);
    let slater_eps: Option<f64> = meta_opt(&kv, "slater_eps")?;
    for (k, (line, _)) in &kv {
        const KNOWN: [&str; 8] = [
            "beta",
            "states",
            "actions",
            "shocks",
            "constraints",
            "initial_state",
            "initial_shock",
            "slater_eps",
        ];
        if !KNOWN.contains(&k.as_str()) {
            return Err(syntax(*line, format!("unknown key `{k}` in [meta]")));
        }
    }

    let mut known: Vec<String> = ["meta", "transition", "reward", "feasible", "zeta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=ni {
        known.push(format!("constraint {i}"));
        known.push(format!("threshold {i}"));
        known.push(format!("horizon {i}"));
    }
    for name in &order {
        if !known.contains(name) {
            return Err(syntax(sections[name].line, format!("unknown section [{name}]")));
        }
    }

    let len = nx * na * ns;
    let transition = reals(&sections, "transition", ns * ns, false)?;
    let reward = reals(&sections, "reward", len, false)?;
    let mut constraints = Vec::with_capacity(ni);
    let mut thresholds = Vec::with_capacity(ni);
    let mut horizons = Vec::with_capacity(ni);
    for i in 1..=ni {
        constraints.push(reals(&sections, &format!("constraint {i}"), len, false)?);
        thresholds.push(reals(&sections, &format!("threshold {i}"), len, true)?);
        let name = format!("horizon {i}");
        let sec = section(&sections, &name)?;
        let h = match sec.tokens.as_slice() {
            [(_, t)] if t == "1" => Horizon::Two,
            [(_, t)] if t == "inf" => Horizon::Infinite,
            [(line, t)] => {
                return Err(syntax(*line, format!("horizon must be `1` or `inf`, found `{t}`")))
            }
            _ => {
                return Err(ParseError::Dimension {
                    section: name,
                    found: sec.tokens.len(),
                    expected: 1,
                })
            }
        };
        horizons.push(h);
    }
    let feasible = table(&sections, "feasible", len, true, |t| match t {
        "1" => Some(true),
        "0" => Some(false),
        _ => None,
    })?;
    let next_state = table(&sections, "zeta", len, false, |t| t.parse::<usize>().ok())?;

    Ok(ModelSpec {
        num_shocks: ns,
        num_states: nx,
        num_actions: na,
        beta,
        transition,
        reward,
        constraints,
        thresholds,
        horizons,
        feasible,
        next_state,
        initial_state,
        initial_shock,
        slater_eps,
    })
}

/// Writes every table in full. Reals use the shortest representation that
/// parses back to the same bits.
pub fn render_model(spec: &ModelSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[meta]");
    let _ = writeln!(out, "beta = {:?}", spec.beta);
    let _ = writeln!(out, "states = {}", spec.num_states);
    let _ = writeln!(out, "actions = {}", spec.num_actions);
    let _ = writeln!(out, "shocks = {}", spec.num_shocks);
    let _ = writeln!(out, "constraints = {}", spec.num_constraints());
    let _ = writeln!(out, "initial_state = {}", spec.initial_state);
    let _ = writeln!(out, "initial_shock = {}", spec.initial_shock);
    if let Some(eps) = spec.slater_eps {
        let _ = writeln!(out, "slater_eps = {eps:?}");
    }
    let ns = spec.num_shocks;
    let _ = writeln!(out, "\n[transition]");
    for row in spec.transition.chunks(ns) {
        write_row(&mut out, row.iter().map(|v| format!("{v:?}")));
    }
    let write_table = |out: &mut String, name: &str, t: &[f64]| {
        let _ = writeln!(out, "\n[{name}]");
        for row in t.chunks(ns) {
            write_row(out, row.iter().map(|v| format!("{v:?}")));
        }
    };
    write_table(&mut out, "reward", &spec.reward);
    for i in 0..spec.num_constraints() {
        write_table(&mut out, &format!("constraint {}", i + 1), &spec.constraints[i]);
        write_table(&mut out, &format!("threshold {}", i + 1), &spec.thresholds[i]);
        let _ = writeln!(out, "\n[horizon {}]\n{}", i + 1, spec.horizons[i].as_str());
    }
    let _ = writeln!(out, "\n[feasible]");
    for row in spec.feasible.chunks(ns) {
        write_row(&mut out, row.iter().map(|&f| if f { "1" } else { "0" }.to_string()));
    }
    let _ = writeln!(out, "\n[zeta]");
    for row in spec.next_state.chunks(ns) {
        write_row(&mut out, row.iter().map(|v| v.to_string()));
    }
    out
}

fn write_row(out: &mut String, items: impl Iterator<Item = String>) {
    let row: Vec<String> = items.collect();
    let _ = writeln!(out, "{}", row.join(" "));
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn meta_opt<T: std::str::FromStr>(
    kv: &HashMap<String, (usize, String)>,
    key: &'static str,
) -> Result<Option<T>, ParseError> {
    match kv.get(key) {
        None => Ok(None),
        Some((line, v)) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| syntax(*line, format!("cannot parse `{key}` from `{v}`"))),
    }
}

fn meta_value<T: std::str::FromStr>(
    kv: &HashMap<String, (usize, String)>,
    key: &'static str,
) -> Result<T, ParseError> {
    meta_opt(kv, key)?.ok_or(ParseError::MissingKey { key })
}

fn section<'a>(
    sections: &'a HashMap<String, Section>,
    name: &str,
) -> Result<&'a Section, ParseError> {
    sections.get(name).ok_or_else(|| ParseError::MissingSection {
        section: name.to_string(),
    })
}

fn table<T: Clone>(
    sections: &HashMap<String, Section>,
    name: &str,
    expected: usize,
    broadcast: bool,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>, ParseError> {
    let sec = section(sections, name)?;
    let mut values = Vec::with_capacity(sec.tokens.len());
    for (line, tok) in &sec.tokens {
        let v = parse(tok)
            .ok_or_else(|| syntax(*line, format!("invalid value `{tok}` in [{name}]")))?;
        values.push(v);
    }
    if broadcast && values.len() == 1 && expected > 1 {
        return Ok(vec![values[0].clone(); expected]);
    }
    if values.len() != expected {
        return Err(ParseError::Dimension {
            section: name.to_string(),
            found: values.len(),
            expected,
        });
    }
    Ok(values)
}

fn reals(
    sections: &HashMap<String, Section>,
    name: &str,
    expected: usize,
    broadcast: bool,
) -> Result<Vec<f64>, ParseError> {
    table(sections, name, expected, broadcast, |t| t.parse::<f64>().ok())
}
