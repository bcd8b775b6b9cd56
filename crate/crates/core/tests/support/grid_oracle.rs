//! Brute-force minimizer of the scalar fused-lasso prox objective: a coarse
//! lattice search followed by pattern-search refinement. Shares no code with
//! the library.

/// `Σ (η/2)(z_k − a_k)² + λ Σ |z_k| + ρ Σ_{k<k'} |z_k − z_k'|`, penalties
/// dropped on diagonal entries.
pub fn prox_objective(z: &[f64], a: &[f64], eta: f64, lambda: f64, rho: f64, diagonal: bool) -> f64 {
    let mut f = 0.0;
    for k in 0..z.len() {
        f += 0.5 * eta * (z[k] - a[k]).powi(2);
    }
    if diagonal {
        return f;
    }
    for k in 0..z.len() {
        f += lambda * z[k].abs();
        for l in k + 1..z.len() {
            f += rho * (z[k] - z[l]).abs();
        }
    }
    f
}

/// Odometer over all points of `{-1, 0, 1}^k`.
fn directions(k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut c = code;
        let mut d = Vec::with_capacity(k);
        for _ in 0..k {
            d.push((c % 3) as f64 - 1.0);
            c /= 3;
        }
        if d.iter().any(|v| *v != 0.0) {
            out.push(d);
        }
    }
    out
}

pub fn grid_prox(a: &[f64], eta: f64, lambda: f64, rho: f64, diagonal: bool) -> Vec<f64> {
    let k = a.len();
    let f = |z: &[f64]| prox_objective(z, a, eta, lambda, rho, diagonal);

    // the minimizer lies between min(a, 0) and max(a, 0) in every coordinate
    let lo = a.iter().cloned().fold(0.0_f64, f64::min);
    let hi = a.iter().cloned().fold(0.0_f64, f64::max);
    let cells = match k {
        1 => 4000.0,
        2 => 400.0,
        3 => 60.0,
        _ => 16.0,
    };
    let step = ((hi - lo) / cells).max(1e-3);
    // a lattice through the origin, so that zero and exact ties are grid points
    let first = (lo / step).floor() as i64 - 1;
    let last = (hi / step).ceil() as i64 + 1;
    let width = (last - first + 1) as usize;

    let mut idx = vec![0usize; k];
    let mut z = vec![0.0; k];
    let mut best = vec![0.0; k];
    let mut best_f = f64::INFINITY;
    loop {
        for c in 0..k {
            z[c] = (first + idx[c] as i64) as f64 * step;
        }
        let v = f(&z);
        if v < best_f {
            best_f = v;
            best.copy_from_slice(&z);
        }
        let mut c = 0;
        while c < k {
            idx[c] += 1;
            if idx[c] < width {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
        if c == k {
            break;
        }
    }

    let dirs = directions(k);
    let mut h = step;
    let mut trial = vec![0.0; k];
    while h > 1e-11 {
        let mut moved = false;
        for d in &dirs {
            for c in 0..k {
                trial[c] = best[c] + h * d[c];
            }
            let v = f(&trial);
            if v < best_f {
                best_f = v;
                best.copy_from_slice(&trial);
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    best
}
