//! Two-sided Wilcoxon signed-rank test.
//!
//! Zero differences are dropped; `|d|` is ranked with average ranks for ties.
//! The statistic is `W = min(W⁺, W⁻)`. For an effective sample size up to
//! the cutoff the p-value is exact, counting sign assignments with a
//! dynamic program over doubled ranks (all integers, so counts are exact);
//! above it a normal approximation with tie-corrected variance and a 0.5
//! continuity correction is used.

pub const EXACT_CUTOFF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`; `None` when degenerate.
    pub statistic: Option<f64>,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences.
    pub n: usize,
    pub p_value: f64,
    pub method: PValueMethod,
}

impl WilcoxonResult {
    pub fn is_degenerate(&self) -> bool {
        self.method == PValueMethod::Degenerate
    }
}

/// Non-zero differences and their doubled average ranks.
fn signed_doubled_ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<u64>, Vec<usize>) {
    assert_eq!(a.len(), b.len(), "paired vectors must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&d| d != 0.0).collect();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut ranks2 = vec![0u64; d.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && d[order[j]].abs() == d[order[i]].abs() {
            j += 1;
        }
        // Positions i+1..=j share rank (i+1+j)/2; doubled: i+1+j.
        for &k in &order[i..j] {
            ranks2[k] = (i + 1 + j) as u64;
        }
        ties.push(j - i);
        i = j;
    }
    (d, ranks2, ties)
}

/// Exact two-sided p for doubled ranks `ranks2` and observed doubled `min(W⁺, W⁻)`.
pub fn wilcoxon_exact_p(ranks2: &[u64], observed2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let extreme: u128 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as u64).min(total - s as u64) <= observed2)
        .map(|(_, &c)| c)
        .sum();
    extreme as f64 / 2f64.powi(ranks2.len() as i32)
}

/// Normal-approximation two-sided p.
pub fn wilcoxon_normal_p(n: usize, w_plus: f64, tie_sizes: &[usize]) -> f64 {
    let n = n as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5) / var.sqrt();
    if z <= 0.0 {
        return 1.0;
    }
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Test with an explicit exact/normal cutoff on the effective sample size.
pub fn wilcoxon_with_cutoff(a: &[f64], b: &[f64], cutoff: usize) -> WilcoxonResult {
    let (d, ranks2, ties) = signed_doubled_ranks(a, b);
    let n = d.len();
    if n == 0 {
        return WilcoxonResult {
            statistic: None,
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p_value: 1.0,
            method: PValueMethod::Degenerate,
        };
    }
    let plus2: u64 = d.iter().zip(&ranks2).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = ranks2.iter().sum();
    let minus2 = total2 - plus2;
    let w_plus = plus2 as f64 / 2.0;
    let w_minus = minus2 as f64 / 2.0;
    let (p_value, method) = if n <= cutoff {
        (wilcoxon_exact_p(&ranks2, plus2.min(minus2)), PValueMethod::Exact)
    } else {
        (wilcoxon_normal_p(n, w_plus, &ties), PValueMethod::Normal)
    };
    WilcoxonResult { statistic: Some(w_plus.min(w_minus)), w_plus, w_minus, n, p_value, method }
}

/// Test with the default cutoff ([`EXACT_CUTOFF`]).
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> WilcoxonResult {
    wilcoxon_with_cutoff(a, b, EXACT_CUTOFF)
}
