//! Fixed-step classical Runge–Kutta for small first-order systems.

/// Integrate `y' = f(t, y)` from `t0` to `t1` in `n` equal steps, calling
/// `observe(t, y)` after every step. Returns the final state.
pub(crate) fn rk4<const D: usize>(
    f: impl Fn(f64, &[f64; D]) -> [f64; D],
    t0: f64,
    t1: f64,
    y0: [f64; D],
    n: usize,
    mut observe: impl FnMut(f64, &[f64; D]),
) -> [f64; D] {
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    let axpy = |y: &[f64; D], k: &[f64; D], s: f64| -> [f64; D] { std::array::from_fn(|i| y[i] + s * k[i]) };
    for step in 0..n {
        let t = t0 + step as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
        let k3 = f(t + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
        let k4 = f(t + h, &axpy(&y, &k3, h));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        let t_next = if step + 1 == n { t1 } else { t0 + (step + 1) as f64 * h };
        observe(t_next, &y);
    }
    y
}

/// Number of steps of size at most `step` covering `[t0, t1]`.
pub(crate) fn steps_for(t0: f64, t1: f64, step: f64) -> usize {
    (((t1 - t0) / step).ceil() as usize).max(1)
}
