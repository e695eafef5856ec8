/// Step used for central finite differences.
pub const FD_STEP: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central difference `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for one coordinate
/// of `values`, restoring the coordinate afterwards.
pub fn central_difference<F>(values: &mut [f64], index: usize, h: f64, mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let orig = values[index];
    values[index] = orig + h;
    let plus = f(values);
    values[index] = orig - h;
    let minus = f(values);
    values[index] = orig;
    (plus - minus) / (2.0 * h)
}
