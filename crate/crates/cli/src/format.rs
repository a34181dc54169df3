//! Plain-text output: `%.17g` floats and comma-separated tables.

use std::io::{self, Write};
use std::path::Path;

/// C's `%.17g`: 17 significant digits, fixed notation for exponents in [−4, 17),
/// trailing zeros removed.
pub fn g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        strip_zeros(format!("{:.*}", (16 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa.to_string()), exp.abs())
    }
}

fn strip_zeros(mut s: String) -> String {
    if s.contains('.') {
        let keep = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(keep);
    }
    s
}

/// One CSV cell.
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(n) => n.to_string(),
            Cell::Float(x) => g17(*x),
        }
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> io::Result<()> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    std::fs::write(path, text + "\n")
}
