//! Text formatting of floats for files and reports.

/// Shortest decimal that parses back to exactly `x`.
///
/// Plain notation for ordinary magnitudes, exponent notation otherwise.
pub fn fmt_f64(x: f64) -> String {
    let plain = format!("{x}");
    if plain.len() > 24 {
        format!("{x:e}")
    } else {
        plain
    }
}

pub fn fmt_vec(v: &[f64], sep: &str) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(sep)
}
