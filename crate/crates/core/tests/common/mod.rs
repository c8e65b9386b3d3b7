//! Brute-force reference implementations shared by the integration tests.
//! They are written from the definitions, without calling into the crate's
//! own descriptor or metric code.
#![allow(dead_code)]

/// East, Northeast, North, Northwest, West, Southwest, South, Southeast.
pub const KIRSCH: [[[f64; 3]; 3]; 8] = [
    [[-3.0, -3.0, 5.0], [-3.0, 0.0, 5.0], [-3.0, -3.0, 5.0]],
    [[-3.0, 5.0, 5.0], [-3.0, 0.0, 5.0], [-3.0, -3.0, -3.0]],
    [[5.0, 5.0, 5.0], [-3.0, 0.0, -3.0], [-3.0, -3.0, -3.0]],
    [[5.0, 5.0, -3.0], [5.0, 0.0, -3.0], [-3.0, -3.0, -3.0]],
    [[5.0, -3.0, -3.0], [5.0, 0.0, -3.0], [5.0, -3.0, -3.0]],
    [[-3.0, -3.0, -3.0], [5.0, 0.0, -3.0], [5.0, 5.0, -3.0]],
    [[-3.0, -3.0, -3.0], [-3.0, 0.0, -3.0], [5.0, 5.0, 5.0]],
    [[-3.0, -3.0, -3.0], [-3.0, 0.0, 5.0], [-3.0, 5.0, 5.0]],
];

pub fn kirsch_oracle(p: &[[f64; 3]; 3]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for d in 0..8 {
        for r in 0..3 {
            for c in 0..3 {
                out[d] += KIRSCH[d][r][c] * p[r][c];
            }
        }
    }
    out
}

/// Picks the largest remaining `|m_i|` k times; strict comparison keeps the
/// lowest index on ties.
pub fn ldp_oracle(m: &[f64; 8], k: usize) -> u8 {
    let mut taken = [false; 8];
    let mut code = 0u8;
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..8 {
            if taken[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if m[i].abs() > m[b].abs() => best = Some(i),
                _ => {}
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        code |= 1 << b;
    }
    code
}

pub fn lbp_oracle(p: &[[f64; 3]; 3]) -> u8 {
    let neighbours = [p[0][0], p[0][1], p[0][2], p[1][2], p[2][2], p[2][1], p[2][0], p[1][0]];
    let mut code = 0u8;
    for (i, n) in neighbours.iter().enumerate() {
        if *n >= p[1][1] {
            code += 1 << i;
        }
    }
    code
}

/// Replicate-padded 3x3 window of a row-major gray image.
pub fn window(gray: &[f64], w: usize, h: usize, x: usize, y: usize) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for dy in 0..3 {
        for dx in 0..3 {
            let yy = (y as isize + dy as isize - 1).clamp(0, h as isize - 1) as usize;
            let xx = (x as isize + dx as isize - 1).clamp(0, w as isize - 1) as usize;
            out[dy][dx] = gray[yy * w + xx];
        }
    }
    out
}

/// O(n^2) pairwise AUC with ties counted as one half, computed as the
/// single division `(2 * wins + ties) / (2 * pos * neg)`.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut twice_wins = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    twice_wins as f64 / (2 * pos * neg) as f64
}

/// `-log(exp(l_y) / (exp(l_0) + exp(l_1)))` evaluated without
/// stabilisation; only valid for moderate logits.
pub fn naive_cross_entropy(l0: f64, l1: f64, label: u8) -> f64 {
    let p = if label == 1 { l1.exp() } else { l0.exp() } / (l0.exp() + l1.exp());
    -p.ln()
}

/// One-feature logistic regression fitted by full-batch gradient descent
/// on standardised inputs; returns `(w, b, mean, std)`.
pub fn fit_logistic(x: &[f64], y: &[u8]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    let (mut w, mut b) = (0.0, 0.0);
    for _ in 0..2000 {
        let (mut gw, mut gb) = (0.0, 0.0);
        for (xi, &yi) in x.iter().zip(y) {
            let z = (xi - mean) / std;
            let p = 1.0 / (1.0 + (-(w * z + b)).exp());
            gw += (p - f64::from(yi)) * z;
            gb += p - f64::from(yi);
        }
        w -= 0.5 * gw / n;
        b -= 0.5 * gb / n;
    }
    (w, b, mean, std)
}

pub fn logistic_predict(model: (f64, f64, f64, f64), x: f64) -> f64 {
    let (w, b, mean, std) = model;
    1.0 / (1.0 + (-(w * (x - mean) / std + b)).exp())
}
