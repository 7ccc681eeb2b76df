//! Integer grid traversal (Amanatides & Woo).

/// Walks the cells pierced by the ray `origin + t * (cos a, sin a)` for
/// `t` in `[0, max_range]`, calling `visit(i, j, t_enter)` in order. The walk
/// stops early when `visit` returns `true`.
pub fn traverse(
    resolution: f64,
    origin: (f64, f64),
    angle: f64,
    max_range: f64,
    mut visit: impl FnMut(i64, i64, f64) -> bool,
) {
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut i = (origin.0 / resolution).floor() as i64;
    let mut j = (origin.1 / resolution).floor() as i64;

    let axis = |p: f64, d: f64, c: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((c + 1) as f64 * resolution - p) / d, resolution / d)
        } else if d < 0.0 {
            (-1, (c as f64 * resolution - p) / d, -resolution / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_i, mut t_max_i, t_delta_i) = axis(origin.0, dx, i);
    let (step_j, mut t_max_j, t_delta_j) = axis(origin.1, dy, j);

    let mut t = 0.0;
    loop {
        if visit(i, j, t) {
            return;
        }
        if t_max_i <= t_max_j {
            t = t_max_i;
            i += step_i;
            t_max_i += t_delta_i;
        } else {
            t = t_max_j;
            j += step_j;
            t_max_j += t_delta_j;
        }
        if t > max_range {
            return;
        }
    }
}
