//! Lookup table of expected improvement per execution step for each
//! strategy, conditioned on run features.

use std::collections::BTreeMap;

use crate::envelope::DeliberationStrategy;
use crate::error::{Error, Result};
use crate::stats::{bin_index, fmt_f64, parse_f64, quantile_cuts, Moments};

const HEADER: &str = "eiv-table v1";
const COLUMNS: &str = "cell,strategy,mean,variance,count";
pub const FEATURE_NAMES: [&str; 4] = ["size", "value", "fatness", "distance"];

/// Conditioning features of one strategy invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub envelope_size: f64,
    pub value: f64,
    pub fatness: f64,
    pub distance: f64,
}

impl Features {
    pub fn as_array(&self) -> [f64; 4] {
        [self.envelope_size, self.value, self.fatness, self.distance]
    }
}

/// One invocation: features, strategy (roster index) and improvement per
/// elapsed execution step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EivSample {
    pub features: Features,
    pub strategy: usize,
    pub steps: usize,
    pub ticks: u64,
    pub delta_v: f64,
}

impl EivSample {
    pub fn rate(&self) -> f64 {
        self.delta_v / self.steps.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EivBinning {
    pub bins: [usize; 4],
    /// Cells below this count defer to the marginal or global statistic.
    pub min_count: u64,
}

impl Default for EivBinning {
    fn default() -> Self {
        Self {
            bins: [3; 4],
            min_count: 5,
        }
    }
}

/// Where a lookup's statistic came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Cell,
    /// Pooled over fatness and distance within the `(|E|, V)` bin.
    Marginal,
    Global,
    Missing,
}

/// Persisted per-cell statistic of the improvement rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStat {
    pub mean: f64,
    pub variance: f64,
    pub count: u64,
}

impl CellStat {
    fn moments(&self) -> Moments {
        Moments::from_summary(self.count, self.mean, self.variance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EivTable {
    roster: Vec<DeliberationStrategy>,
    cuts: [Vec<f64>; 4],
    min_count: u64,
    /// `(cell id, strategy index)` statistics.
    cells: BTreeMap<(usize, usize), CellStat>,
}

impl EivTable {
    /// A table with no data; lookups find nothing.
    pub fn empty(roster: Vec<DeliberationStrategy>) -> Self {
        Self {
            roster,
            cuts: Default::default(),
            min_count: 1,
            cells: BTreeMap::new(),
        }
    }

    pub fn build(roster: Vec<DeliberationStrategy>, samples: &[EivSample], binning: &EivBinning) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Table("no samples to build an EIV table from".into()));
        }
        if let Some(s) = samples.iter().find(|s| s.strategy >= roster.len()) {
            return Err(Error::Table(format!("sample names strategy {} outside the roster", s.strategy)));
        }
        let cuts: [Vec<f64>; 4] = std::array::from_fn(|f| {
            let v: Vec<f64> = samples.iter().map(|s| s.features.as_array()[f]).collect();
            quantile_cuts(&v, binning.bins[f])
        });
        let mut table = Self {
            roster,
            cuts,
            min_count: binning.min_count,
            cells: BTreeMap::new(),
        };
        let mut acc: BTreeMap<(usize, usize), Moments> = BTreeMap::new();
        for s in samples {
            acc.entry((table.cell_of(&s.features), s.strategy)).or_default().push(s.rate());
        }
        table.cells = acc
            .into_iter()
            .map(|(k, m)| {
                (
                    k,
                    CellStat {
                        mean: m.mean(),
                        variance: m.variance(),
                        count: m.count(),
                    },
                )
            })
            .collect();
        Ok(table)
    }

    pub fn roster(&self) -> &[DeliberationStrategy] {
        &self.roster
    }

    pub fn cuts(&self) -> &[Vec<f64>; 4] {
        &self.cuts
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn radix(&self) -> [usize; 4] {
        std::array::from_fn(|f| self.cuts[f].len() + 1)
    }

    pub fn num_cells(&self) -> usize {
        self.radix().iter().product()
    }

    pub fn bins_of(&self, features: &Features) -> [usize; 4] {
        let x = features.as_array();
        std::array::from_fn(|f| bin_index(&self.cuts[f], x[f]))
    }

    /// Mixed-radix cell id, size bin most significant.
    pub fn cell_of(&self, features: &Features) -> usize {
        self.cell_id(self.bins_of(features))
    }

    fn cell_id(&self, bins: [usize; 4]) -> usize {
        let radix = self.radix();
        bins.iter().zip(radix).fold(0, |acc, (&b, r)| acc * r + b)
    }

    fn bins_from_id(&self, mut id: usize) -> [usize; 4] {
        let radix = self.radix();
        let mut out = [0; 4];
        for f in (0..4).rev() {
            out[f] = id % radix[f];
            id /= radix[f];
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &CellStat)> + '_ {
        self.cells.iter().map(|(&(c, s), m)| (c, s, m))
    }

    /// Statistic for `strategy` at `features`: the cell if it has enough
    /// samples, else the `(|E|, V)` marginal, else the global pool.
    pub fn statistic(&self, features: &Features, strategy: usize) -> (Moments, Resolution) {
        let bins = self.bins_of(features);
        let cell = self.cell_id(bins);
        if let Some(c) = self.cells.get(&(cell, strategy)).filter(|c| c.count >= self.min_count) {
            return (c.moments(), Resolution::Cell);
        }
        let mut marginal = Moments::default();
        let mut global = Moments::default();
        for (&(c, s), stat) in &self.cells {
            if s != strategy {
                continue;
            }
            let m = stat.moments();
            global = global.merge(&m);
            let b = self.bins_from_id(c);
            if b[0] == bins[0] && b[1] == bins[1] {
                marginal = marginal.merge(&m);
            }
        }
        if marginal.count() >= self.min_count {
            (marginal, Resolution::Marginal)
        } else if global.count() > 0 {
            (global, Resolution::Global)
        } else {
            (global, Resolution::Missing)
        }
    }

    /// Roster index with the largest expected improvement per step; ties go
    /// to the earlier strategy. `None` when no strategy has any data.
    pub fn lookup_best(&self, features: &Features) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.roster.len() {
            let (m, res) = self.statistic(features, i);
            if res == Resolution::Missing {
                continue;
            }
            if best.map_or(true, |(_, b)| m.mean() > b) {
                best = Some((i, m.mean()));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn lookup_best_strategy(&self, features: &Features) -> Option<&DeliberationStrategy> {
        self.lookup_best(features).map(|i| &self.roster[i])
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nmin_count {}\n", self.min_count);
        for (name, cuts) in FEATURE_NAMES.iter().zip(&self.cuts) {
            let v: Vec<String> = cuts.iter().map(|&x| fmt_f64(x)).collect();
            s.push_str(&format!("cuts {name} {}\n", v.join(",")).replace(" \n", "\n"));
        }
        for st in &self.roster {
            s.push_str(&format!("strategy {st}\n"));
        }
        s.push_str(COLUMNS);
        s.push('\n');
        for (&(c, i), m) in &self.cells {
            s.push_str(&format!(
                "{c},{},{},{},{}\n",
                self.roster[i],
                fmt_f64(m.mean),
                fmt_f64(m.variance),
                m.count
            ));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let line = |i: usize| -> Result<&str> {
            lines
                .get(i)
                .copied()
                .ok_or_else(|| Error::parse(i + 1, "truncated table"))
        };
        if line(0)? != HEADER {
            return Err(Error::parse(1, format!("expected {HEADER:?}")));
        }
        let min_count = line(1)?
            .strip_prefix("min_count ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(2, "expected \"min_count <int>\""))?;
        let mut cuts: [Vec<f64>; 4] = Default::default();
        for (f, name) in FEATURE_NAMES.iter().enumerate() {
            let ln = f + 3;
            let l = line(ln - 1)?;
            let prefix = format!("cuts {name}");
            let rest = l
                .strip_prefix(&prefix)
                .ok_or_else(|| Error::parse(ln, format!("expected {prefix:?}")))?;
            let rest = rest.strip_prefix(' ').unwrap_or(rest);
            if !rest.is_empty() {
                cuts[f] = rest.split(',').map(|x| parse_f64(x, ln)).collect::<Result<_>>()?;
                if cuts[f].windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::parse(ln, "cut points must increase strictly"));
                }
            }
        }
        let mut i = 7;
        let mut roster = Vec::new();
        while let Some(label) = line(i - 1)?.strip_prefix("strategy ") {
            roster.push(label.parse::<DeliberationStrategy>().map_err(|e| Error::parse(i, e.to_string()))?);
            i += 1;
        }
        if line(i - 1)? != COLUMNS {
            return Err(Error::parse(i, format!("expected column header {COLUMNS:?}")));
        }
        let mut table = Self {
            roster,
            cuts,
            min_count,
            cells: BTreeMap::new(),
        };
        let n_cells = table.num_cells();
        for (off, l) in lines[i..].iter().enumerate() {
            let ln = i + off + 1;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::parse(ln, format!("expected 5 fields, found {}", f.len())));
            }
            let cell: usize = f[0].parse().map_err(|e| Error::parse(ln, format!("bad cell id: {e}")))?;
            if cell >= n_cells {
                return Err(Error::parse(ln, format!("cell {cell} out of range")));
            }
            let strategy = table
                .roster
                .iter()
                .position(|s| s.label() == f[1])
                .ok_or_else(|| Error::parse(ln, format!("strategy {:?} not in roster", f[1])))?;
            let count: u64 = f[4].parse().map_err(|e| Error::parse(ln, format!("bad count: {e}")))?;
            let variance = parse_f64(f[3], ln)?;
            if count == 0 || variance < 0.0 {
                return Err(Error::parse(ln, "count must be positive and variance non-negative"));
            }
            let stat = CellStat {
                mean: parse_f64(f[2], ln)?,
                variance,
                count,
            };
            if table.cells.insert((cell, strategy), stat).is_some() {
                return Err(Error::parse(ln, "duplicate row"));
            }
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrent::standard_strategy_roster;

    fn f(size: f64, value: f64) -> Features {
        Features {
            envelope_size: size,
            value,
            fatness: 1.0,
            distance: 3.0,
        }
    }

    fn sample(features: Features, strategy: usize, rate: f64) -> EivSample {
        EivSample {
            features,
            strategy,
            steps: 2,
            ticks: 100,
            delta_v: 2.0 * rate,
        }
    }

    #[test]
    fn single_cell_mean() {
        let s: Vec<_> = (0..10).map(|i| sample(f(5.0, -3.0), 2, i as f64)).collect();
        let t = EivTable::build(standard_strategy_roster(), &s, &EivBinning::default()).unwrap();
        let (m, res) = t.statistic(&f(5.0, -3.0), 2);
        assert_eq!(res, Resolution::Cell);
        assert!((m.mean() - 4.5).abs() < 1e-12);
        assert_eq!(t.lookup_best(&f(5.0, -3.0)), Some(2));
    }

    #[test]
    fn dominant_strategy_everywhere() {
        let mut s = Vec::new();
        for size in [1.0, 10.0, 100.0] {
            for v in [-15.0, -8.0, -1.0] {
                for k in 0..24 {
                    for _ in 0..5 {
                        s.push(sample(f(size, v), k, if k == 7 { 1.0 } else { -(k as f64) }));
                    }
                }
            }
        }
        let t = EivTable::build(standard_strategy_roster(), &s, &EivBinning::default()).unwrap();
        for size in [1.0, 10.0, 100.0] {
            for v in [-15.0, -8.0, -1.0] {
                assert_eq!(t.lookup_best(&f(size, v)), Some(7));
            }
        }
    }

    #[test]
    fn ties_go_to_roster_order() {
        let s: Vec<_> = (0..24).flat_map(|k| (0..5).map(move |_| sample(f(1.0, -1.0), k, 0.25))).collect();
        let t = EivTable::build(standard_strategy_roster(), &s, &EivBinning::default()).unwrap();
        assert_eq!(t.lookup_best(&f(1.0, -1.0)), Some(0));
    }

    #[test]
    fn empty_table_finds_nothing() {
        let t = EivTable::empty(standard_strategy_roster());
        assert_eq!(t.lookup_best(&f(1.0, -1.0)), None);
        assert_eq!(EivTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn sparse_cell_falls_back() {
        let mut s: Vec<_> = (0..6).map(|_| sample(f(1.0, -1.0), 0, 1.0)).collect();
        s.extend((0..6).map(|_| sample(f(50.0, -9.0), 1, 1.0)));
        s.extend((0..3).map(|_| sample(f(50.0, -9.0), 0, 5.0)));
        let t = EivTable::build(standard_strategy_roster(), &s, &EivBinning::default()).unwrap();
        let (m, res) = t.statistic(&f(50.0, -9.0), 0);
        assert_eq!(res, Resolution::Global);
        assert_eq!(m.count(), 9);
        assert_eq!(t.statistic(&f(50.0, -9.0), 5).1, Resolution::Missing);
    }

    #[test]
    fn text_round_trip() {
        let s: Vec<_> = (0..300)
            .map(|i| {
                let x = i as f64;
                sample(
                    Features {
                        envelope_size: (i % 17) as f64,
                        value: -x / 7.0,
                        fatness: (i % 5) as f64 / 3.0,
                        distance: (i % 11) as f64,
                    },
                    i % 24,
                    (x * 0.37).sin(),
                )
            })
            .collect();
        let t = EivTable::build(standard_strategy_roster(), &s, &EivBinning::default()).unwrap();
        let text = t.to_text();
        let back = EivTable::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), text);
        for x in &s {
            assert_eq!(back.lookup_best(&x.features), t.lookup_best(&x.features));
        }
    }

    #[test]
    fn corrupt_tables() {
        let t = EivTable::empty(standard_strategy_roster()).to_text();
        assert!(EivTable::parse("").is_err());
        assert!(EivTable::parse(&t.replace("eiv-table v1", "eiv-table v0")).is_err());
        assert!(EivTable::parse(&format!("{t}0,FP Q O,1.0,0.0,3\n")).is_err());
        assert!(EivTable::parse(&format!("{t}0,FP O,1.0,0.0,0\n")).is_err());
        assert!(EivTable::parse(&t.lines().take(4).collect::<Vec<_>>().join("\n")).is_err());
    }
}
