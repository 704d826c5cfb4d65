//! Small statistics toolkit for experiment reports.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples or a constant sample.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Fisher-Pearson moment coefficient `m3 / m2^1.5`; 0 when the spread is 0.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 <= f64::EPSILON * m.abs().max(1.0) {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins over the sample range. Constant samples give one bin.
    pub fn build(xs: &[f64], bins: usize) -> Histogram {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if xs.is_empty() {
            return Histogram { lo: 0.0, hi: 0.0, counts: vec![] };
        }
        if hi <= lo || bins <= 1 {
            return Histogram {
                lo,
                hi,
                counts: vec![xs.len() as u64],
            };
        }
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &x in xs {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n.max(1) as f64)
            .collect()
    }

    /// Number of local maxima, treating runs of equal counts as one.
    pub fn modes(&self) -> usize {
        let mut runs: Vec<u64> = Vec::new();
        for &c in &self.counts {
            if runs.last() != Some(&c) {
                runs.push(c);
            }
        }
        (0..runs.len())
            .filter(|&i| {
                let left = i == 0 || runs[i - 1] < runs[i];
                let right = i + 1 == runs.len() || runs[i + 1] < runs[i];
                left && right && runs[i] > 0
            })
            .count()
    }

    /// Peaks whose topographic prominence is at least `min_prominence`. A
    /// peak's prominence is its height minus the higher of the lowest points
    /// between it and a strictly taller bin on either side; the tallest peak
    /// counts its full height.
    pub fn prominent_modes(&self, min_prominence: f64) -> usize {
        let c = &self.counts;
        let col = |range: &mut dyn Iterator<Item = usize>, h: u64| -> Option<u64> {
            let mut low = h;
            for j in range {
                if c[j] > h {
                    return Some(low);
                }
                low = low.min(c[j]);
            }
            None
        };
        let mut peaks = 0;
        let mut i = 0;
        while i < c.len() {
            let mut end = i;
            while end + 1 < c.len() && c[end + 1] == c[i] {
                end += 1;
            }
            let h = c[i];
            let rises = i == 0 || c[i - 1] < h;
            let falls = end + 1 == c.len() || c[end + 1] < h;
            if h > 0 && rises && falls {
                let left = col(&mut (0..i).rev(), h);
                let right = col(&mut (end + 1..c.len()), h);
                let base = match (left, right) {
                    (None, None) => 0,
                    (l, r) => l.unwrap_or(0).max(r.unwrap_or(0)),
                };
                if (h - base) as f64 >= min_prominence {
                    peaks += 1;
                }
            }
            i = end + 1;
        }
        peaks
    }

    /// Modes that stand out from counting noise: prominence of at least two
    /// Poisson standard deviations of the tallest bin.
    pub fn significant_modes(&self) -> usize {
        let top = self.counts.iter().copied().max().unwrap_or(0) as f64;
        self.prominent_modes((2.0 * top.sqrt()).max(1.0))
    }

    pub fn to_csv(&self) -> String {
        let edges = self.edges();
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", edges[i], edges[i + 1], c));
        }
        s
    }
}

/// Welch's t statistic for `mean(a) - mean(b)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let se = (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt();
    let d = mean(a) - mean(b);
    if se == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    } else {
        d / se
    }
}

/// Two-sided permutation test on the difference of means.
pub fn permutation_p_value<R: Rng + ?Sized>(a: &[f64], b: &[f64], rounds: usize, rng: &mut R) -> f64 {
    let observed = (mean(a) - mean(b)).abs();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut extreme = 0usize;
    for _ in 0..rounds {
        pooled.shuffle(rng);
        let (x, y) = pooled.split_at(a.len());
        if (mean(x) - mean(y)).abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (rounds + 1) as f64
}

/// The `quantile` of `|mean(x) - mean(y)|` when both samples are drawn with
/// replacement from the pooled data, i.e. under no difference between arms.
pub fn bootstrap_null_threshold<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    rounds: usize,
    quantile: f64,
    rng: &mut R,
) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut draw = |n: usize| -> f64 { (0..n).map(|_| pooled[rng.gen_range(0..pooled.len())]).sum::<f64>() / n as f64 };
    let mut diffs: Vec<f64> = (0..rounds).map(|_| (draw(a.len()) - draw(b.len())).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let idx = ((quantile * rounds as f64).ceil() as usize).clamp(1, rounds) - 1;
    diffs[idx]
}

/// Uniform on the probability simplex: normalized Exp(1) draws.
pub fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    let mut e = [0.0; 4];
    for x in &mut e {
        let u: f64 = rng.gen();
        *x = -(1.0 - u).ln();
    }
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}
