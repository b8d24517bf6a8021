//! CSV to markdown table.

use std::io::Read;

/// Rounds numeric cells with a fractional part or exponent to `digits`
/// significant digits; other cells pass through.
fn cell(s: &str, digits: usize) -> String {
    let looks_float = s.contains(['.', 'e', 'E']) && !s.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E');
    let text = match s.parse::<f64>() {
        Ok(v) if looks_float && v.is_finite() => {
            let a = v.abs();
            if a != 0.0 && !(1e-3..1e6).contains(&a) {
                format!("{v:.*e}", digits.saturating_sub(1))
            } else {
                let decimals = if a == 0.0 { 0 } else { (digits as i32 - 1 - a.log10().floor() as i32).max(0) as usize };
                let t = format!("{v:.decimals$}");
                if t.contains('.') {
                    t.trim_end_matches('0').trim_end_matches('.').to_string()
                } else {
                    t
                }
            }
        }
        _ => s.to_string(),
    };
    text.replace('|', "\\|")
}

pub fn csv_to_markdown<R: Read>(input: R, digits: usize) -> Result<String, csv::Error> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|h| cell(h, digits)).collect();
    let mut out = format!("| {} |\n|{}|\n", header.join(" | "), vec!["---"; header.len()].join("|"));
    for rec in r.records() {
        let rec = rec?;
        let row: Vec<String> = rec.iter().map(|c| cell(c, digits)).collect();
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    Ok(out)
}
