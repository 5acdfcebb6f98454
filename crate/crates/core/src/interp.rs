/// Cubic Hermite basis on a unit interval, scaled to step `h`.
/// Returns `(value weights, derivative weights)` for `[y0, m0, y1, m1]`.
#[inline]
pub(crate) fn hermite_weights(s: f64, h: f64) -> ([f64; 4], [f64; 4]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let value = [
        2.0 * s3 - 3.0 * s2 + 1.0,
        h * (s3 - 2.0 * s2 + s),
        -2.0 * s3 + 3.0 * s2,
        h * (s3 - s2),
    ];
    let deriv = [
        (6.0 * s2 - 6.0 * s) / h,
        3.0 * s2 - 4.0 * s + 1.0,
        (-6.0 * s2 + 6.0 * s) / h,
        3.0 * s2 - 2.0 * s,
    ];
    (value, deriv)
}

/// Interval index and local coordinate of `t` on the uniform grid
/// `0, dt, ..., nt dt`. Times outside are clamped to the end intervals.
#[inline]
pub(crate) fn locate(t: f64, dt: f64, nt: usize) -> (usize, f64) {
    let pos = t / dt;
    let i = (pos.floor().max(0.0) as usize).min(nt - 1);
    (i, pos - i as f64)
}

/// Hermite interpolation of a sampled scalar channel: `(value, derivative)`.
pub(crate) fn hermite_channel(values: &[f64], rates: &[f64], dt: f64, t: f64) -> (f64, f64) {
    let nt = values.len() - 1;
    let (i, s) = locate(t, dt, nt);
    let (wv, wd) = hermite_weights(s, dt);
    let data = [values[i], rates[i], values[i + 1], rates[i + 1]];
    let v = wv.iter().zip(&data).map(|(w, d)| w * d).sum();
    let d = wd.iter().zip(&data).map(|(w, d)| w * d).sum();
    (v, d)
}
