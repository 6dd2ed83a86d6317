//! Independent reference implementations shared by the integration
//! tests. These deliberately avoid the library's own code paths: the
//! dense solver checks the iterative solver, and the metric references
//! check the metric suite.

#![allow(dead_code)]

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let diag = m[col][col];
        assert!(diag != 0.0, "singular matrix");
        for row in col + 1..n {
            let factor = m[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Reference NMAE: plain formula evaluation.
pub fn ref_nmae(pred: &[f64], label: &[f64]) -> f64 {
    let lo = label.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = label.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += (pred[i] - label[i]).abs();
    }
    total / pred.len() as f64 / (hi - lo)
}

pub fn ref_r2(pred: &[f64], label: &[f64]) -> f64 {
    let mean: f64 = label.iter().sum::<f64>() / label.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..pred.len() {
        ss_res += (label[i] - pred[i]).powi(2);
        ss_tot += (label[i] - mean).powi(2);
    }
    1.0 - ss_res / ss_tot
}

pub fn ref_psnr(pred: &[f64], label: &[f64]) -> f64 {
    let mse: f64 = pred
        .iter()
        .zip(label)
        .map(|(&p, &l)| (p - l).powi(2))
        .sum::<f64>()
        / pred.len() as f64;
    if mse < 1e-10 {
        100.0
    } else {
        -10.0 * mse.log10()
    }
}

/// Reference SSIM for maps smaller than the 11x11 window: one uniform
/// window over the whole map.
pub fn ref_ssim_uniform(pred: &[f64], label: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let mx: f64 = pred.iter().sum::<f64>() / n;
    let my: f64 = label.iter().sum::<f64>() / n;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cov = 0.0;
    for i in 0..pred.len() {
        vx += (pred[i] - mx).powi(2);
        vy += (label[i] - my).powi(2);
        cov += (pred[i] - mx) * (label[i] - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    let c1 = 0.01_f64.powi(2);
    let c2 = 0.03_f64.powi(2);
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

pub fn ref_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx: f64 = x.iter().sum::<f64>() / n;
    let my: f64 = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Brute-force average ranks: 1 + (#strictly smaller) + (#equal - 1)/2.
pub fn ref_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let smaller = values.iter().filter(|&&w| w < v).count() as f64;
            let equal = values.iter().filter(|&&w| w == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn ref_spearman(x: &[f64], y: &[f64]) -> f64 {
    ref_pearson(&ref_ranks(x), &ref_ranks(y))
}

/// Brute-force Kendall tau-b from explicit pair tallies.
pub fn ref_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut conc = 0.0;
    let mut disc = 0.0;
    let mut tie_x = 0.0;
    let mut tie_y = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let a = x[i] - x[j];
            let b = y[i] - y[j];
            if a == 0.0 && b == 0.0 {
                tie_x += 1.0;
                tie_y += 1.0;
            } else if a == 0.0 {
                tie_x += 1.0;
            } else if b == 0.0 {
                tie_y += 1.0;
            } else if (a > 0.0) == (b > 0.0) {
                conc += 1.0;
            } else {
                disc += 1.0;
            }
        }
    }
    let n0 = (n * (n - 1)) as f64 / 2.0;
    (conc - disc) / (((n0 - tie_x) * (n0 - tie_y)).sqrt())
}

/// Brute-force AUC: fraction of (positive, negative) pairs ranked
/// correctly, ties counting half.
pub fn ref_auc(pred: &[f64], label: &[f64], q: f64) -> f64 {
    let n = label.len();
    let mut sorted = label.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = sorted[((q * (n - 1) as f64).floor() as usize).min(n - 1)];
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        if label[i] <= threshold {
            continue;
        }
        for j in 0..n {
            if label[j] > threshold {
                continue;
            }
            pairs += 1.0;
            if pred[i] > pred[j] {
                wins += 1.0;
            } else if pred[i] == pred[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
