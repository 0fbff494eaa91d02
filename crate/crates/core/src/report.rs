//! Small CSV and summary helpers shared by the lab reports.
//!
//! The output rows are plain numeric tables, so the writer here is
//! deliberately minimal: `Display` formatting round-trips `f64` exactly,
//! fields never contain commas, and every table ends with a newline.

/// A report row that knows its own CSV shape.
pub trait CsvRecord {
    /// Comma-separated column names, no trailing newline.
    fn csv_header() -> &'static str;
    /// One comma-separated row, no trailing newline.
    fn csv_row(&self) -> String;
}

/// Render records as a CSV table with a header line.
pub fn to_csv<T: CsvRecord>(rows: &[T]) -> String {
    let mut out = String::new();
    out.push_str(T::csv_header());
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

/// Shortest-round-trip formatting; infinities and NaN print as Rust spells
/// them ("inf", "-inf", "NaN").
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Missing values render as empty fields.
pub(crate) fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Free-text fields (error messages) must not break the row shape.
pub(crate) fn sanitize_field(text: &str) -> String {
    text.replace(['\n', '\r'], " ").replace(',', ";")
}

/// Linear-interpolation quantile of an ascending slice; `q` is clamped to
/// [0, 1]. An empty slice yields NaN.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}
