use crate::stats::{normal_cdf, normal_pdf};

/// `E[clamp(X, -c, c)]` for `X ~ N(m, s^2)`.
///
/// With `a = (-c - m)/s` and `b = (c - m)/s`:
/// `-c Phi(a) + c (1 - Phi(b)) + m (Phi(b) - Phi(a)) + s (phi(a) - phi(b))`.
/// `s = 0` returns `clamp(m, -c, c)`.
pub fn censored_normal_clip_mean(m: f64, s: f64, c: f64) -> f64 {
    if s == 0.0 {
        return m.clamp(-c, c);
    }
    let a = (-c - m) / s;
    let b = (c - m) / s;
    let lower = normal_cdf(a);
    let upper = normal_cdf(-b);
    let inside = (1.0 - lower - upper).max(0.0);
    -c * lower + c * upper + m * inside + s * (normal_pdf(a) - normal_pdf(b))
}
