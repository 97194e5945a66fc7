//! Statistical primitives behind the feature registries.
//!
//! Every moment here is a population moment (divide by n, never n−1),
//! which removes the n/(n−1) convention ambiguity from golden values.
//! Degenerate inputs follow explicit rules: zero variance zeroes out
//! skewness and autocorrelation rather than producing NaN.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn population_variance(x: &[f64]) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64
}

/// Population skewness m₃/m₂^{3/2}; 0 when the variance is 0.
pub fn skewness(x: &[f64]) -> f64 {
    let mu = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    if m2 == 0.0 {
        return 0.0;
    }
    let m3 = x.iter().map(|v| (v - mu) * (v - mu) * (v - mu)).sum::<f64>() / n;
    // m₂^{3/2} as sqrt(m₂)·m₂ keeps exact-scaling properties of sqrt.
    m3 / (m2.sqrt() * m2)
}

/// Fraction of exact zeros.
pub fn sparsity(x: &[f64]) -> f64 {
    x.iter().filter(|&&v| v == 0.0).count() as f64 / x.len() as f64
}

fn full_windows(x: &[f64], window: usize) -> impl Iterator<Item = &[f64]> {
    x.chunks_exact(window)
}

/// Population variance of the means of non-overlapping full windows.
/// A trailing partial window is discarded.
pub fn stability(x: &[f64], window: usize) -> f64 {
    let means: Vec<f64> = full_windows(x, window).map(mean).collect();
    population_variance(&means)
}

/// Population variance of the population variances of non-overlapping
/// full windows.
pub fn lumpiness(x: &[f64], window: usize) -> f64 {
    let vars: Vec<f64> = full_windows(x, window).map(population_variance).collect();
    population_variance(&vars)
}

/// Population autocorrelation at `lag`; 0 when the variance is 0 or the
/// lag leaves no overlapping pairs.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let mu = mean(x);
    let denom: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let numer: f64 = (0..n - lag)
        .map(|t| (x[t] - mu) * (x[t + lag] - mu))
        .sum();
    numer / denom
}

/// Mean-crossing count over n−1 adjacent pairs: a crossing is a flip of
/// the predicate `value <= mean` between neighbors.
pub fn crossing_points(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mu = mean(x);
    let crossings = x
        .windows(2)
        .filter(|pair| (pair[0] <= mu) != (pair[1] <= mu))
        .count();
    crossings as f64 / (x.len() - 1) as f64
}

/// Longest run of equal consecutive values, as a fraction of the length.
pub fn flat_spots(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut longest = 1_usize;
    let mut run = 1_usize;
    for pair in x.windows(2) {
        if pair[0] == pair[1] {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 1;
        }
    }
    longest as f64 / x.len() as f64
}

/// Median: midpoint of the two middle order statistics for even lengths.
pub fn median(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Nearest-rank percentile: the smallest value with at least `p`% of the
/// sample at or below it.
pub fn percentile(x: &[f64], p: f64) -> f64 {
    debug_assert!((0.0..=100.0).contains(&p));
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0 * sorted.len() as f64).ceil() as usize).max(1);
    sorted[rank.min(sorted.len()) - 1]
}
