//! Quantile binning, running moments and a one-way ANOVA F-test.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Interior cut points splitting `values` into at most `bins` quantile bins.
/// Duplicate cuts are dropped, so heavily tied data yields fewer bins.
pub fn quantile_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    if values.is_empty() || bins < 2 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let mut cuts: Vec<f64> = (1..bins)
        .map(|k| sorted[k * sorted.len() / bins])
        .filter(|&c| c > lo)
        .collect();
    cuts.dedup();
    cuts
}

/// Bin of `x`: the number of cuts at or below it.
pub fn bin_index(cuts: &[f64], x: f64) -> usize {
    cuts.partition_point(|&c| c <= x)
}

/// Count, mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn from_summary(count: u64, mean: f64, variance: f64) -> Self {
        let m2 = if count > 1 { variance * (count - 1) as f64 } else { 0.0 };
        Self { count, mean, m2 }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / n as f64;
        Moments { count: n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 below two samples.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn sum_sq_dev(&self) -> f64 {
        self.m2
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub p_value: f64,
    /// Mean within-group variance relative to the pooled variance.
    pub variance_ratio: f64,
}

/// One-way ANOVA over groups given by their moments. Groups with no samples
/// are ignored.
pub fn one_way_anova(groups: &[Moments]) -> Result<Anova> {
    let groups: Vec<&Moments> = groups.iter().filter(|g| g.count > 0).collect();
    let k = groups.len();
    let n: u64 = groups.iter().map(|g| g.count).sum();
    if k < 2 || n <= k as u64 {
        return Err(Error::InvalidArgument(format!(
            "ANOVA needs at least two groups and more samples than groups (groups {k}, samples {n})"
        )));
    }
    let pooled = groups.iter().fold(Moments::default(), |acc, g| acc.merge(g));
    let ss_within: f64 = groups.iter().map(|g| g.m2).sum();
    let ss_between = (pooled.m2 - ss_within).max(0.0);
    let df_between = (k - 1) as f64;
    let df_within = (n - k as u64) as f64;
    let ms_within = ss_within / df_within;
    let ms_between = ss_between / df_between;
    let (f, p_value) = if ms_within > 0.0 {
        let f = ms_between / ms_within;
        let dist = FisherSnedecor::new(df_between, df_within)
            .map_err(|e| Error::InvalidArgument(format!("F distribution: {e}")))?;
        (f, dist.sf(f))
    } else if ms_between > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(Anova {
        f,
        df_between,
        df_within,
        p_value,
        variance_ratio: if pooled.variance() > 0.0 {
            ms_within / pooled.variance()
        } else {
            1.0
        },
    })
}

/// Shortest decimal text that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::parse(line, format!("bad number {s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuts_and_bins() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let cuts = quantile_cuts(&v, 4);
        assert_eq!(cuts, vec![25.0, 50.0, 75.0]);
        assert_eq!(bin_index(&cuts, -1.0), 0);
        assert_eq!(bin_index(&cuts, 25.0), 1);
        assert_eq!(bin_index(&cuts, 99.0), 3);
    }

    #[test]
    fn tied_data_collapses_bins() {
        assert!(quantile_cuts(&[3.0; 50], 4).is_empty());
        assert_eq!(quantile_cuts(&[1.0, 1.0, 1.0, 2.0], 4), vec![2.0]);
    }

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.0, 4.0, 4.5, -2.0, 7.25, 0.0];
        let m: Moments = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((m.mean() - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-12);
        let a: Moments = xs[..2].iter().copied().collect();
        let b: Moments = xs[2..].iter().copied().collect();
        let ab = a.merge(&b);
        assert!((ab.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn anova_detects_separated_groups() {
        let g1: Moments = [1.0, 1.1, 0.9, 1.05].into_iter().collect();
        let g2: Moments = [5.0, 5.1, 4.9, 5.05].into_iter().collect();
        let a = one_way_anova(&[g1, g2]).unwrap();
        assert!(a.p_value < 1e-6);
        assert!(a.variance_ratio < 0.1);
    }

    #[test]
    fn anova_matches_textbook_example() {
        // Group means 2, 5, 8: SSB = 54 on 2 df, SSW = 6 on 6 df, F = 27.
        let g: Vec<Moments> = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]
            .iter()
            .map(|xs| xs.iter().copied().collect())
            .collect();
        let a = one_way_anova(&g).unwrap();
        assert!((a.f - 27.0).abs() < 1e-9);
        assert_eq!((a.df_between, a.df_within), (2.0, 6.0));
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 12345.678, -0.0] {
            assert_eq!(parse_f64(&fmt_f64(x), 1).unwrap().to_bits(), x.to_bits());
        }
    }
}
