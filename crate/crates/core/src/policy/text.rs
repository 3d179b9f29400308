//! Plain-text policy serialization.
//!
//! The format is line-oriented and self-describing:
//!
//! ```text
//! softmax-policy v1
//! kind mlp
//! vocab 4 2 1              # size l_out l_in
//! arch 3 6 5               # tabular_ar: n_inputs | linear: input_dim | mlp: input_dim hidden...
//! temperature 1.0000000000000000e0
//! params 103
//! layout w1 0 66
//! layout b1 66 72
//! ...
//! values
//! <one value per line, 17 significant digits>
//! end
//! ```
//!
//! Floats are written in base-10 scientific notation with 17 significant
//! digits, so a round trip reproduces every bit of the original parameters.

use std::path::Path;

use super::{Architecture, PolicyError, SoftmaxPolicy, Vocabulary};
use crate::fmt::fmt_f64;

pub fn policy_to_text(policy: &SoftmaxPolicy) -> String {
    let vocab = policy.vocab();
    let arch_line = match policy.arch() {
        Architecture::TabularAr { n_inputs } => format!("{n_inputs}"),
        Architecture::Linear { input_dim } => format!("{input_dim}"),
        Architecture::Mlp { input_dim, hidden } => {
            let widths: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
            format!("{input_dim} {}", widths.join(" "))
        }
    };
    let mut doc = String::new();
    doc.push_str("softmax-policy v1\n");
    doc.push_str(&format!("kind {}\n", policy.arch().kind_name()));
    doc.push_str(&format!("vocab {} {} {}\n", vocab.size(), vocab.l_out(), vocab.l_in()));
    doc.push_str(&format!("arch {arch_line}\n"));
    doc.push_str(&format!("temperature {}\n", fmt_f64(policy.temperature())));
    doc.push_str(&format!("params {}\n", policy.params().len()));
    for block in policy.params().layout() {
        doc.push_str(&format!("layout {} {} {}\n", block.name, block.start, block.len));
    }
    doc.push_str("values\n");
    for v in policy.params().values() {
        doc.push_str(&fmt_f64(*v));
        doc.push('\n');
    }
    doc.push_str("end\n");
    doc
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate() }
    }

    fn next(&mut self) -> Result<(usize, &'a str), PolicyError> {
        for (i, line) in self.lines.by_ref() {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Ok((i + 1, trimmed));
            }
        }
        Err(PolicyError::Parse { line: 0, message: "unexpected end of document".into() })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> PolicyError {
    PolicyError::Parse { line, message: message.into() }
}

fn expect_keyword<'a>(got: (usize, &'a str), keyword: &str) -> Result<(usize, &'a str), PolicyError> {
    let (line, text) = got;
    match text.strip_prefix(keyword) {
        Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok((line, rest.trim())),
        _ => Err(parse_err(line, format!("expected '{keyword}', got '{text}'"))),
    }
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str, expect: usize) -> Result<Vec<T>, PolicyError> {
    let fields: Result<Vec<T>, _> = text.split_whitespace().map(str::parse).collect();
    let fields = fields.map_err(|_| parse_err(line, format!("could not parse fields in '{text}'")))?;
    if expect > 0 && fields.len() != expect {
        return Err(parse_err(line, format!("expected {expect} fields in '{text}'")));
    }
    Ok(fields)
}

pub fn policy_from_text(text: &str) -> Result<SoftmaxPolicy, PolicyError> {
    let mut reader = LineReader::new(text);

    let (line, header) = reader.next()?;
    if header != "softmax-policy v1" {
        return Err(parse_err(line, format!("unknown header '{header}'")));
    }

    let (line, kind) = expect_keyword(reader.next()?, "kind")?;
    let kind = kind.to_owned();

    let (vline, vocab_text) = expect_keyword(reader.next()?, "vocab")?;
    let v: Vec<usize> = parse_fields(vline, vocab_text, 3)?;
    let vocab = Vocabulary::new(v[0], v[1], v[2])
        .map_err(|e| parse_err(vline, e.to_string()))?;

    let (aline, arch_text) = expect_keyword(reader.next()?, "arch")?;
    let nums: Vec<usize> = parse_fields(aline, arch_text, 0)?;
    let arch = match kind.as_str() {
        "tabular_ar" if nums.len() == 1 => Architecture::TabularAr { n_inputs: nums[0] },
        "linear" if nums.len() == 1 => Architecture::Linear { input_dim: nums[0] },
        "mlp" if nums.len() >= 2 => {
            Architecture::Mlp { input_dim: nums[0], hidden: nums[1..].to_vec() }
        }
        _ => return Err(parse_err(line, format!("kind '{kind}' with {} arch fields", nums.len()))),
    };

    let (tline, temp_text) = expect_keyword(reader.next()?, "temperature")?;
    let temperature: f64 = temp_text
        .parse()
        .map_err(|_| parse_err(tline, format!("bad temperature '{temp_text}'")))?;

    let (pline, count_text) = expect_keyword(reader.next()?, "params")?;
    let count: usize = count_text
        .parse()
        .map_err(|_| parse_err(pline, format!("bad parameter count '{count_text}'")))?;

    // Layout lines are validated against the canonical layout the
    // architecture implies; a document cannot rearrange blocks.
    let expected_layout = arch.layout(&vocab).map_err(|e| parse_err(aline, e.to_string()))?;
    let mut declared: Vec<(String, usize, usize)> = Vec::new();
    let values_line;
    loop {
        let (line, text) = reader.next()?;
        if text == "values" {
            values_line = line;
            break;
        }
        let (line, rest) = expect_keyword((line, text), "layout")?;
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(line, format!("layout needs 'name start len', got '{rest}'")));
        }
        let start: usize = fields[1].parse().map_err(|_| parse_err(line, "bad layout start"))?;
        let len: usize = fields[2].parse().map_err(|_| parse_err(line, "bad layout len"))?;
        declared.push((fields[0].to_owned(), start, len));
    }
    let mut cursor = 0usize;
    if declared.len() != expected_layout.len() {
        return Err(parse_err(
            values_line,
            format!("{} layout blocks declared, architecture has {}", declared.len(), expected_layout.len()),
        ));
    }
    for ((name, start, len), (want_name, want_len)) in declared.iter().zip(&expected_layout) {
        if name != want_name || *start != cursor || len != want_len {
            return Err(parse_err(
                values_line,
                format!("layout block '{name}' ({start}, {len}) does not match architecture block '{want_name}' ({cursor}, {want_len})"),
            ));
        }
        cursor += len;
    }
    if cursor != count {
        return Err(parse_err(pline, format!("params says {count} but layout covers {cursor}")));
    }

    let mut values = Vec::with_capacity(count);
    loop {
        let (line, text) = reader.next()?;
        if text == "end" {
            break;
        }
        let v: f64 = text.parse().map_err(|_| parse_err(line, format!("bad value '{text}'")))?;
        values.push(v);
    }
    if values.len() != count {
        return Err(parse_err(0, format!("expected {count} values, found {}", values.len())));
    }

    SoftmaxPolicy::new(vocab, arch, values)?.with_temperature(temperature)
}

pub fn save_policy(policy: &SoftmaxPolicy, path: &Path) -> Result<(), PolicyError> {
    std::fs::write(path, policy_to_text(policy))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<SoftmaxPolicy, PolicyError> {
    let text = std::fs::read_to_string(path)?;
    policy_from_text(&text)
}
