//! Performance-profile tables: expected improvement and cost of adding `n`
//! states, conditioned on envelope size and estimated start value.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::stats::{bin_index, fmt_f64, one_way_anova, parse_f64, quantile_cuts, Anova, Moments};

/// Default grid of extension sizes.
pub const DEFAULT_N_GRID: [usize; 6] = [1, 2, 5, 10, 20, 50];

const HEADER: &str = "profile-table v1";
const COLUMNS: &str = "size_bin,value_bin,n,mean_dv,mean_cost,variance,count";

/// One extend-then-optimize observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub size_before: usize,
    pub value_before: f64,
    pub n: usize,
    pub delta_v: f64,
    pub ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningConfig {
    pub size_bins: usize,
    pub value_bins: usize,
    /// Cells with fewer samples are sparse and never used for scheduling.
    pub min_count: u64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            size_bins: 4,
            value_bins: 4,
            min_count: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileCell {
    pub mean_dv: f64,
    pub mean_cost: f64,
    /// Sample variance of the improvement.
    pub variance: f64,
    pub count: u64,
}

/// Bin coordinates `(size_bin, value_bin)`.
pub type CellId = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    size_cuts: Vec<f64>,
    value_cuts: Vec<f64>,
    min_count: u64,
    cells: BTreeMap<(usize, usize, usize), ProfileCell>,
}

impl ProfileTable {
    pub fn build(samples: &[ProfileSample], config: &BinningConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Table("no samples to build a profile table from".into()));
        }
        let sizes: Vec<f64> = samples.iter().map(|s| s.size_before as f64).collect();
        let values: Vec<f64> = samples.iter().map(|s| s.value_before).collect();
        let size_cuts = quantile_cuts(&sizes, config.size_bins);
        let value_cuts = quantile_cuts(&values, config.value_bins);
        let mut acc: BTreeMap<(usize, usize, usize), (Moments, f64)> = BTreeMap::new();
        for s in samples {
            let key = (
                bin_index(&size_cuts, s.size_before as f64),
                bin_index(&value_cuts, s.value_before),
                s.n,
            );
            let e = acc.entry(key).or_default();
            e.0.push(s.delta_v);
            e.1 += s.ticks as f64;
        }
        let cells = acc
            .into_iter()
            .map(|(k, (m, cost))| {
                (
                    k,
                    ProfileCell {
                        mean_dv: m.mean(),
                        mean_cost: cost / m.count() as f64,
                        variance: m.variance(),
                        count: m.count(),
                    },
                )
            })
            .collect();
        let table = Self {
            size_cuts,
            value_cuts,
            min_count: config.min_count,
            cells,
        };
        if table.populated_cells().is_empty() {
            return Err(Error::Table(format!(
                "every cell has fewer than {} samples; gather more samples",
                config.min_count
            )));
        }
        Ok(table)
    }

    pub fn size_cuts(&self) -> &[f64] {
        &self.size_cuts
    }

    pub fn value_cuts(&self) -> &[f64] {
        &self.value_cuts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn cell_of(&self, size: usize, value: f64) -> CellId {
        (bin_index(&self.size_cuts, size as f64), bin_index(&self.value_cuts, value))
    }

    /// Every recorded `(cell, n)` entry, sparse or not.
    pub fn entries(&self) -> impl Iterator<Item = (CellId, usize, &ProfileCell)> + '_ {
        self.cells.iter().map(|(&(i, j, n), c)| ((i, j), n, c))
    }

    pub fn is_sparse(&self, cell: &ProfileCell) -> bool {
        cell.count < self.min_count
    }

    /// Non-sparse entries of `cell` in increasing `n`.
    pub fn curve(&self, cell: CellId) -> Vec<(usize, ProfileCell)> {
        self.cells
            .range((cell.0, cell.1, 0)..=(cell.0, cell.1, usize::MAX))
            .filter(|(_, c)| !self.is_sparse(c))
            .map(|(&(_, _, n), &c)| (n, c))
            .collect()
    }

    /// Cells with at least one non-sparse entry.
    pub fn populated_cells(&self) -> Vec<CellId> {
        let mut out: Vec<CellId> = self
            .cells
            .iter()
            .filter(|(_, c)| !self.is_sparse(c))
            .map(|(&(i, j, _), _)| (i, j))
            .collect();
        out.dedup();
        out
    }

    /// The curve for the features' cell, or for the nearest populated cell
    /// by bin distance (ties by bin coordinates).
    pub fn lookup(&self, size: usize, value: f64) -> (CellId, Vec<(usize, ProfileCell)>) {
        let want = self.cell_of(size, value);
        let cell = self
            .populated_cells()
            .into_iter()
            .min_by_key(|&(i, j)| (i.abs_diff(want.0) + j.abs_diff(want.1), i, j))
            .unwrap_or(want);
        (cell, self.curve(cell))
    }

    /// One-way ANOVA of the improvement for extension size `n`, grouped by
    /// the cells of this table.
    pub fn anova(&self, samples: &[ProfileSample], n: usize) -> Result<Anova> {
        let mut groups: BTreeMap<CellId, Moments> = BTreeMap::new();
        for s in samples.iter().filter(|s| s.n == n) {
            groups.entry(self.cell_of(s.size_before, s.value_before)).or_default().push(s.delta_v);
        }
        one_way_anova(&groups.into_values().collect::<Vec<_>>())
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",");
        let mut s = format!(
            "{HEADER}\nmin_count {}\nsize_cuts {}\nvalue_cuts {}\n{COLUMNS}\n",
            self.min_count,
            join(&self.size_cuts),
            join(&self.value_cuts)
        );
        for (&(i, j, n), c) in &self.cells {
            s.push_str(&format!(
                "{i},{j},{n},{},{},{},{}\n",
                fmt_f64(c.mean_dv),
                fmt_f64(c.mean_cost),
                fmt_f64(c.variance),
                c.count
            ));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("truncated table: missing {what}")))
        };
        let (ln, header) = next("header")?;
        if header != HEADER {
            return Err(Error::parse(ln, format!("expected {HEADER:?}, found {header:?}")));
        }
        let (ln, mc) = next("min_count")?;
        let min_count = mc
            .strip_prefix("min_count ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(ln, "expected \"min_count <int>\""))?;
        let cuts = |ln: usize, line: &str, key: &str| -> Result<Vec<f64>> {
            let rest = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                .ok_or_else(|| Error::parse(ln, format!("expected {key:?} line")))?;
            if rest.is_empty() {
                return Ok(Vec::new());
            }
            let v = rest.split(',').map(|x| parse_f64(x, ln)).collect::<Result<Vec<_>>>()?;
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::parse(ln, "cut points must increase strictly"));
            }
            Ok(v)
        };
        let (ln, l) = next("size_cuts")?;
        let size_cuts = cuts(ln, l, "size_cuts")?;
        let (ln, l) = next("value_cuts")?;
        let value_cuts = cuts(ln, l, "value_cuts")?;
        let (ln, cols) = next("column header")?;
        if cols != COLUMNS {
            return Err(Error::parse(ln, format!("expected column header {COLUMNS:?}")));
        }
        let mut cells = BTreeMap::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::parse(ln, format!("expected 7 fields, found {}", f.len())));
            }
            let int = |s: &str| -> Result<usize> {
                s.parse().map_err(|e| Error::parse(ln, format!("bad integer {s:?}: {e}")))
            };
            let (i, j, n) = (int(f[0])?, int(f[1])?, int(f[2])?);
            if i > size_cuts.len() || j > value_cuts.len() {
                return Err(Error::parse(ln, format!("bin ({i},{j}) out of range")));
            }
            let count = int(f[6])? as u64;
            let cell = ProfileCell {
                mean_dv: parse_f64(f[3], ln)?,
                mean_cost: parse_f64(f[4], ln)?,
                variance: parse_f64(f[5], ln)?,
                count,
            };
            if count == 0 || cell.variance < 0.0 || cell.mean_cost < 0.0 {
                return Err(Error::parse(ln, "count must be positive; variance and cost non-negative"));
            }
            if cells.insert((i, j, n), cell).is_some() {
                return Err(Error::parse(ln, format!("duplicate row for ({i},{j},{n})")));
            }
        }
        Ok(Self {
            size_cuts,
            value_cuts,
            min_count,
            cells,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(size: usize, value: f64, n: usize, dv: f64, ticks: u64) -> ProfileSample {
        ProfileSample {
            size_before: size,
            value_before: value,
            n,
            delta_v: dv,
            ticks,
        }
    }

    #[test]
    fn single_bin() {
        let s: Vec<_> = (0..10).map(|i| sample(5, -3.0, 2, i as f64, 10)).collect();
        let t = ProfileTable::build(&s, &BinningConfig::default()).unwrap();
        assert_eq!(t.populated_cells(), vec![(0, 0)]);
        let (cell, curve) = t.lookup(5, -3.0);
        assert_eq!(cell, (0, 0));
        assert_eq!(curve.len(), 1);
        assert!((curve[0].1.mean_dv - 4.5).abs() < 1e-12);
        assert_eq!(curve[0].1.mean_cost, 10.0);
    }

    #[test]
    fn identity_curves() {
        let mut s = Vec::new();
        for size in [3, 8, 20, 40] {
            for v in [-19.0, -12.0, -6.0, -2.0] {
                for n in DEFAULT_N_GRID {
                    for _ in 0..5 {
                        s.push(sample(size, v, n, n as f64, 1));
                    }
                }
            }
        }
        let t = ProfileTable::build(&s, &BinningConfig::default()).unwrap();
        assert_eq!(t.populated_cells().len(), 16);
        for cell in t.populated_cells() {
            for (n, c) in t.curve(cell) {
                assert!((c.mean_dv - n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_sparse_is_an_error() {
        let s = vec![sample(1, -1.0, 1, 0.0, 1)];
        assert!(matches!(
            ProfileTable::build(&s, &BinningConfig::default()),
            Err(Error::Table(_))
        ));
        assert!(ProfileTable::build(&[], &BinningConfig::default()).is_err());
    }

    #[test]
    fn nearest_populated_fallback() {
        let mut s: Vec<_> = (0..6).map(|_| sample(2, -10.0, 1, 1.0, 1)).collect();
        s.extend((0..6).map(|_| sample(50, -1.0, 1, 2.0, 1)));
        s.push(sample(50, -10.0, 1, 99.0, 1));
        let t = ProfileTable::build(&s, &BinningConfig::default()).unwrap();
        let (cell, curve) = t.lookup(50, -10.0);
        assert_ne!(cell, t.cell_of(50, -10.0));
        assert_eq!(curve.len(), 1);
    }

    #[test]
    fn text_round_trip() {
        let s: Vec<_> = (0..40)
            .map(|i| sample(i % 7, -(i as f64) / 3.0, [1, 2][i % 2], (i as f64).sqrt(), 3 + i as u64))
            .collect();
        let t = ProfileTable::build(&s, &BinningConfig { min_count: 2, ..Default::default() }).unwrap();
        let text = t.to_text();
        let back = ProfileTable::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn truncated_and_corrupt_tables() {
        let s: Vec<_> = (0..10).map(|i| sample(5, -3.0, 2, i as f64, 10)).collect();
        let text = ProfileTable::build(&s, &BinningConfig::default()).unwrap().to_text();
        assert!(ProfileTable::parse("").is_err());
        assert!(ProfileTable::parse("profile-table v2\n").is_err());
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(ProfileTable::parse(&cut).is_err());
        assert!(ProfileTable::parse(&text.replace(",10.0,", ",x,")).is_err());
    }
}
