//! Finite-difference gradient checking.

/// Default step and denominator floor.
pub const FD_STEP: f64 = 1e-3;
pub const FD_FLOOR: f64 = 1e-8;

/// Five-point central difference of `f` along each coordinate in `indices`.
pub fn numeric_gradient<F>(f: F, x: &[f64], indices: &[usize], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut y = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let mut at = |d: f64| {
                y[i] = x[i] + d;
                let v = f(&y);
                y[i] = x[i];
                v
            };
            (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
        })
        .collect()
}

/// |a − n| / max(|a|, |n|, floor).
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// ‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, floor) over paired components.
pub fn vector_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    diff / norm(&mut analytic.iter().copied())
        .max(norm(&mut numeric.iter().copied()))
        .max(floor)
}
