//! Evaluation figures of merit. Degenerate cases (constant maps,
//! single-class hotspot splits) yield NaN rather than a made-up number;
//! dataset aggregation excludes NaNs and counts the exclusions.

/// The eight per-sample evaluation metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub nmae: f64,
    pub r2: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
    pub auc: f64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 8] =
        ["nmae", "r2", "psnr", "ssim", "pearson", "spearman", "kendall", "auc"];

    pub fn values(&self) -> [f64; 8] {
        [
            self.nmae,
            self.r2,
            self.psnr_db,
            self.ssim,
            self.pearson,
            self.spearman,
            self.kendall,
            self.auc,
        ]
    }
}

/// PSNR cap applied when the MSE underflows 1e-10.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Hotspot threshold quantile for AUC.
pub const HOTSPOT_QUANTILE: f64 = 0.9;

/// Compute all eight metrics for one (pred, label) map pair. Only SSIM
/// consumes the (rows, cols) geometry.
pub fn compute_all(pred: &[f64], label: &[f64], rows: usize, cols: usize) -> MetricsReport {
    let (pearson, spearman, kendall) = correlations(pred, label);
    MetricsReport {
        nmae: nmae(pred, label),
        r2: r2(pred, label),
        psnr_db: psnr(pred, label),
        ssim: ssim(pred, label, rows, cols),
        pearson,
        spearman,
        kendall,
        auc: auc_hotspot(pred, label, HOTSPOT_QUANTILE),
    }
}

fn label_range(label: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in label {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Mean absolute error normalized by the label map's value range.
/// Constant labels have no range and report NaN.
pub fn nmae(pred: &[f64], label: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), label.len());
    let range = label_range(label);
    if range <= 0.0 {
        return f64::NAN;
    }
    let mae: f64 = pred
        .iter()
        .zip(label)
        .map(|(&p, &l)| (p - l).abs())
        .sum::<f64>()
        / pred.len() as f64;
    mae / range
}

/// Coefficient of determination 1 - SS_res / SS_tot.
pub fn r2(pred: &[f64], label: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), label.len());
    let n = label.len() as f64;
    let mean = label.iter().sum::<f64>() / n;
    let ss_tot: f64 = label.iter().map(|&l| (l - mean) * (l - mean)).sum();
    if ss_tot <= 0.0 {
        return f64::NAN;
    }
    let ss_res: f64 = pred
        .iter()
        .zip(label)
        .map(|(&p, &l)| (p - l) * (p - l))
        .sum();
    1.0 - ss_res / ss_tot
}

/// Peak signal-to-noise ratio for maps on a [0,1] scale, capped at
/// [`PSNR_CAP_DB`] when the MSE underflows 1e-10.
pub fn psnr(pred: &[f64], label: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), label.len());
    let mse: f64 = pred
        .iter()
        .zip(label)
        .map(|(&p, &l)| (p - l) * (p - l))
        .sum::<f64>()
        / pred.len() as f64;
    if mse < 1e-10 {
        return PSNR_CAP_DB;
    }
    10.0 * (1.0 / mse).log10()
}

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Structural similarity. Maps at least 11x11 use the standard sliding
/// 11x11 Gaussian window (sigma 1.5) with symmetric padding; smaller
/// maps collapse to a single uniform window over the whole map.
pub fn ssim(pred: &[f64], label: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(pred.len(), rows * cols);
    debug_assert_eq!(label.len(), rows * cols);
    if rows.min(cols) < SSIM_WINDOW {
        return ssim_uniform(pred, label);
    }
    let kernel = gaussian_kernel();
    let pad = SSIM_WINDOW / 2;
    // symmetric padding: reflect including the edge sample
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - i - 1;
        }
        i as usize
    };
    let mut total = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let mut mx = 0.0;
            let mut my = 0.0;
            let mut mxx = 0.0;
            let mut myy = 0.0;
            let mut mxy = 0.0;
            for (wi, krow) in kernel.iter().enumerate() {
                let rr = reflect(r as isize + wi as isize - pad as isize, rows);
                for (wj, &kv) in krow.iter().enumerate() {
                    let cc = reflect(c as isize + wj as isize - pad as isize, cols);
                    let x = pred[rr * cols + cc];
                    let y = label[rr * cols + cc];
                    mx += kv * x;
                    my += kv * y;
                    mxx += kv * x * x;
                    myy += kv * y * y;
                    mxy += kv * x * y;
                }
            }
            let vx = mxx - mx * mx;
            let vy = myy - my * my;
            let cov = mxy - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
        }
    }
    total / (rows * cols) as f64
}

fn ssim_uniform(pred: &[f64], label: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = label.iter().sum::<f64>() / n;
    let vx = pred.iter().map(|&x| (x - mx) * (x - mx)).sum::<f64>() / n;
    let vy = label.iter().map(|&y| (y - my) * (y - my)).sum::<f64>() / n;
    let cov = pred
        .iter()
        .zip(label)
        .map(|(&x, &y)| (x - mx) * (y - my))
        .sum::<f64>()
        / n;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

fn gaussian_kernel() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let mut k = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let di = i as f64 - half;
            let dj = j as f64 - half;
            *v = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            sum += *v;
        }
    }
    for row in &mut k {
        for v in row {
            *v /= sum;
        }
    }
    k
}

/// Pearson, Spearman (average ranks), and Kendall tau-b. A constant
/// input makes the affected coefficient NaN.
pub fn correlations(pred: &[f64], label: &[f64]) -> (f64, f64, f64) {
    (
        pearson(pred, label),
        pearson(&average_ranks(pred), &average_ranks(label)),
        kendall_tau_b(pred, label),
    )
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Ranks starting at 1, ties get the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Tie-corrected Kendall tau-b by direct pair counting.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).partial_cmp(&0.0).unwrap() as i64;
            let dy = (y[i] - y[j]).partial_cmp(&0.0).unwrap() as i64;
            let s = dx * dy;
            if s > 0 {
                concordant += 1;
            } else if s < 0 {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let n1 = tie_pairs(x);
    let n2 = tie_pairs(y);
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom <= 0.0 {
        return f64::NAN;
    }
    (concordant - discordant) as f64 / denom
}

fn tie_pairs(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut pairs = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        pairs += t * (t - 1.0) / 2.0;
        i = j + 1;
    }
    pairs
}

/// Hotspot AUC: ground truth = (label > q-quantile of label), score =
/// pred, area by the rank-sum (Mann-Whitney) formulation with tie
/// averaging. Single-class splits report NaN.
pub fn auc_hotspot(pred: &[f64], label: &[f64], q: f64) -> f64 {
    debug_assert_eq!(pred.len(), label.len());
    let n = label.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut sorted = label.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((q * (n - 1) as f64).floor() as usize).min(n - 1);
    let threshold = sorted[idx];
    let positive: Vec<bool> = label.iter().map(|&l| l > threshold).collect();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let ranks = average_ranks(pred);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(&positive)
        .filter(|&(_, &p)| p)
        .map(|(&r, _)| r)
        .sum();
    (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64)
}
