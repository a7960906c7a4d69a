//! Test-only oracles that share no solver code with the library.
#![allow(dead_code)]

use lossbalance::data::{QuadraticLoss, SyntheticQuadratic};

/// `(w - c)' Q (w - c) + d`, evaluated from the raw fields.
pub fn quad(q: &QuadraticLoss, w: &[f64]) -> f64 {
    let d = w.len();
    let mut total = q.offset;
    for i in 0..d {
        for j in 0..d {
            total += (w[i] - q.center[i]) * q.curvature[(i, j)] * (w[j] - q.center[j]);
        }
    }
    total
}

pub fn losses(p: &SyntheticQuadratic, w: &[f64]) -> (f64, f64, f64) {
    let l0 = quad(&p.groups[0], w);
    let l1 = quad(&p.groups[1], w);
    (l0, l1, p.weights.0 * l0 + p.weights.1 * l1)
}

/// Real roots of `a t^2 + b t + c`.
fn roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
    if a.abs() <= 1e-12 * scale {
        if b.abs() <= 1e-300 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * s);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

fn bounds(p: &SyntheticQuadratic) -> Vec<(f64, f64)> {
    let d = p.groups[0].center.len();
    (0..d)
        .map(|i| {
            let (a, b) = (p.groups[0].center[i], p.groups[1].center[i]);
            (a.min(b) - 3.0, a.max(b) + 3.0)
        })
        .collect()
}

/// Best overall loss over points with `L_0 - L_1 = ±gamma` whose leading
/// coordinates are `prefix`; the last coordinate is solved exactly (the gap is
/// quadratic in it).
fn best_on_boundary(p: &SyntheticQuadratic, prefix: &[f64], gamma: f64) -> Option<(Vec<f64>, f64)> {
    let gap_at = |t: f64| {
        let mut w = prefix.to_vec();
        w.push(t);
        let (l0, l1, _) = losses(p, &w);
        l0 - l1
    };
    let (gm, g0, gp) = (gap_at(-1.0), gap_at(0.0), gap_at(1.0));
    let a = 0.5 * (gp + gm) - g0;
    let b = 0.5 * (gp - gm);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in [gamma, -gamma] {
        for t in roots(a, b, g0 - s) {
            let mut w = prefix.to_vec();
            w.push(t);
            let l = losses(p, &w).2;
            if best.as_ref().is_none_or(|(_, bl)| l < *bl) {
                best = Some((w, l));
            }
        }
    }
    best
}

fn grid_search(
    p: &SyntheticQuadratic,
    ranges: &[(f64, f64)],
    n: usize,
    eval: &dyn Fn(&[f64]) -> Option<(Vec<f64>, f64)>,
) -> Option<(Vec<f64>, f64)> {
    let _ = p;
    let k = ranges.len();
    if k == 0 {
        return eval(&[]);
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut idx = vec![0usize; k];
    loop {
        let prefix: Vec<f64> = idx
            .iter()
            .zip(ranges)
            .map(|(&i, &(lo, hi))| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        if let Some((w, l)) = eval(&prefix) {
            if best.as_ref().is_none_or(|(_, bl)| l < *bl) {
                best = Some((w, l));
            }
        }
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == k {
                return best;
            }
        }
    }
}

/// Dense-grid solution of `min L s.t. |L_0 - L_1| <= gamma` for dims 1-3.
pub fn grid_el_optimum(p: &SyntheticQuadratic, gamma: f64) -> (Vec<f64>, f64) {
    let d = p.groups[0].center.len();
    assert!((1..=3).contains(&d), "grid oracle supports dims 1-3");
    let mut best: Option<(Vec<f64>, f64)> = None;

    // an interior optimum is the unconstrained minimizer, found by grid too
    let full = bounds(p);
    let interior = |w: &[f64]| {
        let (l0, l1, l) = losses(p, w);
        ((l0 - l1).abs() <= gamma).then(|| (w.to_vec(), l))
    };
    let n_full = [0, 401, 81, 25][d];
    let mut ranges = full.clone();
    for _ in 0..10 {
        if let Some((w, l)) = grid_search(p, &ranges, n_full, &interior) {
            let step: Vec<f64> = ranges.iter().map(|(lo, hi)| (hi - lo) / (n_full - 1) as f64).collect();
            ranges = w.iter().zip(&step).map(|(&c, &s)| (c - 2.0 * s, c + 2.0 * s)).collect();
            if best.as_ref().is_none_or(|(_, bl)| l < *bl) {
                best = Some((w, l));
            }
        } else {
            break;
        }
    }

    let boundary = |prefix: &[f64]| best_on_boundary(p, prefix, gamma);
    let n = [0, 1, 2001, 201][d];
    let mut ranges: Vec<(f64, f64)> = full[..d - 1].to_vec();
    for _ in 0..8 {
        let Some((w, l)) = grid_search(p, &ranges, n, &boundary) else {
            break;
        };
        if best.as_ref().is_none_or(|(_, bl)| l < *bl) {
            best = Some((w.clone(), l));
        }
        if d == 1 {
            break;
        }
        let step: Vec<f64> = ranges.iter().map(|(lo, hi)| (hi - lo) / (n - 1) as f64).collect();
        ranges = w[..d - 1]
            .iter()
            .zip(&step)
            .map(|(&c, &s)| (c - 3.0 * s, c + 3.0 * s))
            .collect();
    }
    best.expect("grid found a feasible point")
}

/// `min_w max(L_0, L_1)` by grid; a `gamma`-BGL predictor exists iff this is `<= gamma`.
pub fn grid_min_max_loss(p: &SyntheticQuadratic) -> f64 {
    let d = p.groups[0].center.len();
    let n = [0, 4001, 401, 81][d];
    let mut ranges = bounds(p);
    let eval = |w: &[f64]| {
        let (l0, l1, _) = losses(p, w);
        Some((w.to_vec(), l0.max(l1)))
    };
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let (w, v) = grid_search(p, &ranges, n, &eval).unwrap();
        best = best.min(v);
        let step: Vec<f64> = ranges.iter().map(|(lo, hi)| (hi - lo) / (n - 1) as f64).collect();
        ranges = w.iter().zip(&step).map(|(&c, &s)| (c - 2.0 * s, c + 2.0 * s)).collect();
    }
    best
}

/// Spearman rank correlation (no tie handling beyond average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
