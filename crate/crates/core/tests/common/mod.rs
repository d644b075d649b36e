//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use markush_gate::tabular::{sigmoid, LAMBDA};

/// Best depth-1 split by exhaustive search over every feature and every
/// midpoint between distinct sorted values. Returns (feature, threshold,
/// left leaf, right leaf) or `None` when no split has positive gain.
pub fn best_stump(rows: &[Vec<f64>], labels: &[bool]) -> Option<(usize, f64, f64, f64)> {
    let n = rows.len() as f64;
    let prior = labels.iter().filter(|&&y| y).count() as f64 / n;
    let p = sigmoid((prior / (1.0 - prior)).ln());
    let g: Vec<f64> = labels
        .iter()
        .map(|&y| p - if y { 1.0 } else { 0.0 })
        .collect();
    let h = p * (1.0 - p);
    let score = |gs: f64, hs: f64| gs * gs / (hs + LAMBDA);
    let g_all: f64 = g.iter().sum();
    let h_all = h * n;
    let mut best: Option<(f64, usize, f64, f64, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for (r, gi) in rows.iter().zip(&g) {
                if r[f] < t {
                    gl += gi;
                    hl += h;
                }
            }
            let (gr, hr) = (g_all - gl, h_all - hl);
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(g_all, h_all));
            if best.is_none_or(|b| gain > b.0 + 1e-12) {
                best = Some((gain, f, t, -gl / (hl + LAMBDA), -gr / (hr + LAMBDA)));
            }
        }
    }
    best.filter(|b| b.0 > 0.0)
        .map(|(_, f, t, l, r)| (f, t, l, r))
}
