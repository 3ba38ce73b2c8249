/// Reflect an out-of-range index into `0..n` without repeating the edge
/// sample (`-1 -> 1`, `n -> n-2`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Reflect-extend one plane to `(out_h, out_w)`, anchored at the top-left.
pub(crate) fn extend_plane(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let si = reflect(i as isize, h);
        for j in 0..out_w {
            out.push(plane[si * w + reflect(j as isize, w)]);
        }
    }
    out
}
