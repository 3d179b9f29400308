//! Text formatting for data files.
//!
//! Every float written to a CSV/JSON/JSONL artifact goes through
//! [`fmt_f64`]: lowercase scientific notation with 17 significant digits,
//! which round-trips any finite `f64` exactly and is locale-independent.
//! Byte-identical reruns depend on all writers funneling through here.

/// Format a finite float with 17 significant digits (lossless round-trip).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Escape a string for inclusion in a JSON document.
pub fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Minimal JSON object builder with deterministic field order.
///
/// The standard serializers re-format floats with shortest-representation
/// rules; routing values through [`fmt_f64`] instead keeps the 17-digit
/// contract, at the cost of assembling objects by hand.
#[derive(Debug, Default)]
pub struct JsonObject {
    fields: Vec<(String, String)>,
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn float(mut self, key: &str, value: f64) -> Self {
        self.fields.push((key.to_owned(), fmt_f64(value)));
        self
    }

    pub fn int(mut self, key: &str, value: i64) -> Self {
        self.fields.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn uint(mut self, key: &str, value: u64) -> Self {
        self.fields.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn bool(mut self, key: &str, value: bool) -> Self {
        self.fields.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn string(mut self, key: &str, value: &str) -> Self {
        self.fields.push((key.to_owned(), format!("\"{}\"", json_escape(value))));
        self
    }

    /// Insert a pre-rendered JSON value (array or nested object).
    pub fn raw(mut self, key: &str, value: String) -> Self {
        self.fields.push((key.to_owned(), value));
        self
    }

    pub fn render(&self) -> String {
        let body: Vec<String> = self
            .fields
            .iter()
            .map(|(k, v)| format!("\"{}\":{}", json_escape(k), v))
            .collect();
        format!("{{{}}}", body.join(","))
    }
}

/// Render a JSON array of pre-rendered values.
pub fn json_array(items: impl IntoIterator<Item = String>) -> String {
    let body: Vec<String> = items.into_iter().collect();
    format!("[{}]", body.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_round_trips_exactly() {
        for &x in &[
            0.0,
            -0.0,
            1.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            f64::MAX,
            -2.2250738585072014e-308,
            6.02e23,
        ] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "value {x:?}");
        }
    }

    #[test]
    fn object_field_order_is_insertion_order() {
        let doc = JsonObject::new().int("b", 2).int("a", 1).render();
        assert_eq!(doc, "{\"b\":2,\"a\":1}");
    }

    #[test]
    fn strings_are_escaped() {
        let doc = JsonObject::new().string("k", "a\"b\\c\nd").render();
        assert_eq!(doc, "{\"k\":\"a\\\"b\\\\c\\nd\"}");
    }
}
