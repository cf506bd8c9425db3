//! Inner loops over fixed-width chunks so they compile to SIMD code.

const LANES: usize = 4;

#[inline]
fn fold(acc: [f64; LANES]) -> f64 {
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let split = n - n % LANES;
    let mut acc = [0.0; LANES];
    for (x, y) in a[..split].chunks_exact(LANES).zip(b[..split].chunks_exact(LANES)) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    fold(acc) + a[split..n].iter().zip(&b[split..n]).map(|(x, y)| x * y).sum::<f64>()
}

/// `sum (a - b)^2` when `squared`, else `sum |a - b|`.
#[inline]
pub(crate) fn diff_reduce(a: &[f64], b: &[f64], squared: bool) -> f64 {
    let n = a.len().min(b.len());
    let split = n - n % LANES;
    let mut acc = [0.0; LANES];
    let f = |x: f64| if squared { x * x } else { x.abs() };
    for (x, y) in a[..split].chunks_exact(LANES).zip(b[..split].chunks_exact(LANES)) {
        for k in 0..LANES {
            acc[k] += f(x[k] - y[k]);
        }
    }
    fold(acc) + a[split..n].iter().zip(&b[split..n]).map(|(x, y)| f(x - y)).sum::<f64>()
}

/// Writes `h + r - t` into `out`; returns `sum x^2` when `squared`, else `sum |x|`.
#[inline]
pub(crate) fn residual(h: &[f64], r: &[f64], t: &[f64], out: &mut [f64], squared: bool) -> f64 {
    let n = out.len();
    let (h, r, t) = (&h[..n], &r[..n], &t[..n]);
    let split = n - n % LANES;
    let f = |x: f64| if squared { x * x } else { x.abs() };
    let mut acc = [0.0; LANES];
    for (((o, h), r), t) in out[..split]
        .chunks_exact_mut(LANES)
        .zip(h[..split].chunks_exact(LANES))
        .zip(r[..split].chunks_exact(LANES))
        .zip(t[..split].chunks_exact(LANES))
    {
        for k in 0..LANES {
            let x = h[k] + r[k] - t[k];
            o[k] = x;
            acc[k] += f(x);
        }
    }
    let mut rest = 0.0;
    for i in split..n {
        let x = h[i] + r[i] - t[i];
        out[i] = x;
        rest += f(x);
    }
    fold(acc) + rest
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    let n = y.len();
    let x = &x[..n];
    let split = n - n % LANES;
    for (y, x) in y[..split].chunks_exact_mut(LANES).zip(x[..split].chunks_exact(LANES)) {
        for k in 0..LANES {
            y[k] += a * x[k];
        }
    }
    for i in split..n {
        y[i] += a * x[i];
    }
}
