//! Minimal CSV reading/writing with RFC-style quoting for the handful of
//! fixed-schema files this pipeline emits.

/// Quote a field iff it contains a comma, quote, or newline.
pub fn escape_field(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn write_row(out: &mut String, fields: &[&str]) {
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&escape_field(field));
    }
    out.push('\n');
}

/// Parse one CSV line into fields (handles quoted fields and doubled
/// quotes). Embedded newlines are not supported: none of our schemas
/// produce them.
pub fn parse_row(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        if quoted {
            match c {
                '"' => {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        field.push('"');
                    } else {
                        quoted = false;
                    }
                }
                other => field.push(other),
            }
        } else {
            match c {
                '"' => quoted = true,
                ',' => fields.push(std::mem::take(&mut field)),
                '\r' => {}
                other => field.push(other),
            }
        }
    }
    fields.push(field);
    fields
}

/// Parse a CSV document with a header row; returns (header, rows).
pub fn parse_document(text: &str) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = parse_row(lines.next()?);
    let rows = lines.map(parse_row).collect();
    Some((header, rows))
}
