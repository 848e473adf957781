//! Small statistics toolkit used by the insight detectors.
//!
//! Everything here is deterministic: the permutation test draws from a fixed
//! 64-bit linear congruential generator so p-values are reproducible across
//! runs and implementations.

/// 64-bit LCG, `state = state * 6364136223846793005 + 1442695040888963407
/// (mod 2^64)`; outputs are the high 32 bits of the new state.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
    pub const INCREMENT: u64 = 1_442_695_040_888_963_407;

    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        (self.state >> 32) as u32
    }

    /// Uniform-ish integer in `0..n` via the multiply-shift reduction
    /// `(next_u32 * n) >> 32`.
    pub fn below(&mut self, n: u32) -> u32 {
        ((u64::from(self.next_u32()) * u64::from(n)) >> 32) as u32
    }

    /// Fisher-Yates, walking `i` from the last index down to 1 and swapping
    /// with `below(i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u32 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Relative slack when comparing a permuted statistic with the observed one.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// One-sided permutation p-value of a non-negative statistic:
/// `(1 + #{perm : stat(perm) >= observed}) / (1 + permutations)`.
///
/// The working copy starts in the original order and is reshuffled in place
/// for each permutation.
pub fn permutation_p_value<F>(values: &[f64], statistic: F, permutations: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let observed = statistic(values);
    let threshold = if observed.is_finite() {
        observed - TIE_TOLERANCE * observed.abs().max(1.0)
    } else {
        observed
    };
    let mut rng = Lcg::new(seed);
    let mut work = values.to_vec();
    let mut hits = 0usize;
    for _ in 0..permutations {
        rng.shuffle(&mut work);
        if statistic(&work) >= threshold {
            hits += 1;
        }
    }
    (1 + hits) as f64 / (1 + permutations) as f64
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// True when every value equals the first. Mean subtraction can leave a tiny
/// residual on such series, so callers test this before dividing by spread.
pub fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if is_constant(xs) || is_constant(ys) {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Least-squares slope of `ys` against `xs`; `None` when all `xs` coincide.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
    }
    (sxx != 0.0).then(|| sxy / sxx)
}

/// Complementary error function, Chebyshev fit with fractional error below
/// 1.2e-7 everywhere.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Two-sided normal tail mass beyond `|z|`, i.e. `2 * (1 - Phi(|z|))`.
pub fn two_sided_tail(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Largest standardized mean gap over all prefix/suffix splits, with the
/// split index (first index of the suffix). Ties keep the earliest split.
/// A zero pooled deviation with a non-zero gap scores `+inf`.
pub fn best_split(values: &[f64]) -> Option<(usize, f64)> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    if is_constant(values) {
        return Some((1, 0.0));
    }
    let mut best: Option<(usize, f64)> = None;
    for s in 1..n {
        let (a, b) = values.split_at(s);
        let (ma, mb) = (mean(a), mean(b));
        let ss = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>()
            + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
        let pooled = (ss / (n - 2) as f64).sqrt();
        let gap = (ma - mb).abs();
        let stat = if pooled > 0.0 {
            gap / pooled
        } else if gap > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if best.is_none_or(|(_, b)| stat > b) {
            best = Some((s, stat));
        }
    }
    best
}
