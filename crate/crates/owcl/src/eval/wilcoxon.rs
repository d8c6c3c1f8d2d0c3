//! Two-sided Wilcoxon signed-rank test for paired differences.
//!
//! Zero differences are dropped and tied magnitudes get midranks. For n up
//! to 20 the p-value is exact: it sums the full distribution of the
//! signed-rank statistic over all 2^n sign assignments. Larger n falls back
//! to the normal approximation with tie and continuity corrections.

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences (W+).
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Non-zero differences used.
    pub n_used: usize,
    /// Whether the exact distribution was used.
    pub exact: bool,
}

const EXACT_LIMIT: usize = 20;

/// Midranks of the absolute differences, plus tie-group sizes.
fn ranks_of_magnitudes(diffs: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut ranks = vec![0.0; diffs.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && diffs[order[j]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // Positions i..j share the midrank (1-based ranks).
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = midrank;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    (ranks, tie_sizes)
}

/// Exact two-sided p-value: the probability mass of sign assignments whose
/// statistic is at least as far from the null mean as the observed one.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    // Midranks are multiples of 1/2; double them to integers.
    let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // counts[s] = number of sign assignments with doubled statistic s.
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &dr in &doubled {
        for s in (dr..=total).rev() {
            counts[s] += counts[s - dr];
        }
    }
    let mean2 = total as f64 / 2.0;
    let obs_dev = (2.0 * w_plus - mean2).abs();
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as f64 - mean2).abs() >= obs_dev - 1e-9)
        .map(|(_, &c)| c)
        .sum();
    extreme as f64 / (1u64 << n) as f64
}

/// Complementary error function. Rational Chebyshev fit; fractional error
/// below 1.2e-7, plenty for the large-sample path.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
    .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_p(w_plus: f64, n: usize, tie_sizes: &[usize]) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let dev = w_plus - mean;
    // Continuity correction pulls the statistic half a step toward the mean.
    let corrected = dev - 0.5 * dev.signum();
    let z = corrected / var.sqrt();
    (2.0 * normal_cdf(-z.abs())).min(1.0)
}

fn prepare(diffs: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>, f64) {
    let nonzero: Vec<f64> = diffs.iter().cloned().filter(|&d| d != 0.0).collect();
    let (ranks, tie_sizes) = ranks_of_magnitudes(&nonzero);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(&d, _)| d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    (nonzero, ranks, tie_sizes, w_plus)
}

/// Exact for n <= 20, normal approximation above.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> WilcoxonResult {
    let (nonzero, ranks, tie_sizes, w_plus) = prepare(diffs);
    let n = nonzero.len();
    if n == 0 {
        return WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_used: 0,
            exact: true,
        };
    }
    if n <= EXACT_LIMIT {
        WilcoxonResult {
            statistic: w_plus,
            p_value: exact_p(&ranks, w_plus),
            n_used: n,
            exact: true,
        }
    } else {
        WilcoxonResult {
            statistic: w_plus,
            p_value: normal_p(w_plus, n, &tie_sizes),
            n_used: n,
            exact: false,
        }
    }
}

/// Large-sample approximation regardless of n. Exposed so the two routes
/// can be compared on the same data.
pub fn wilcoxon_signed_rank_normal(diffs: &[f64]) -> WilcoxonResult {
    let (nonzero, _, tie_sizes, w_plus) = prepare(diffs);
    let n = nonzero.len();
    if n == 0 {
        return WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_used: 0,
            exact: false,
        };
    }
    WilcoxonResult {
        statistic: w_plus,
        p_value: normal_p(w_plus, n, &tie_sizes),
        n_used: n,
        exact: false,
    }
}
