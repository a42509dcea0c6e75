//! Performance profiles over bench records.
//!
//! For instance `i` and configuration `c` the ratio is
//! `m(i, c) / min_c' m(i, c')` over configurations that solved `i`; unsolved
//! runs get an infinite ratio. A configuration's curve at `tau` is the
//! fraction of instances with ratio at most `tau`.

use std::io::Write;
use std::str::FromStr;

use crate::bench::RunRecord;
use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Time,
    Iterations,
}

impl FromStr for Metric {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Metric::Time),
            "iterations" => Ok(Metric::Iterations),
            _ => Err(BenchError::Config(s.to_string())),
        }
    }
}

impl Metric {
    /// Metric value, floored so that ratios stay finite (a solve reported
    /// at 0 s or with no subproblem).
    fn value(self, r: &RunRecord) -> f64 {
        match self {
            Metric::Time => r.time_s.max(1e-6),
            Metric::Iterations => (r.iterations as f64).max(1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileTable {
    pub configs: Vec<String>,
    pub instances: Vec<String>,
    /// `ratios[c][i]`, infinite when unsolved.
    pub ratios: Vec<Vec<f64>>,
    /// Sorted distinct finite ratios; always starts at 1.
    pub grid: Vec<f64>,
}

fn position(v: &mut Vec<String>, s: &str) -> usize {
    match v.iter().position(|x| x == s) {
        Some(k) => k,
        None => {
            v.push(s.to_string());
            v.len() - 1
        }
    }
}

impl ProfileTable {
    /// Configurations and instances keep their order of first appearance.
    pub fn from_records(records: &[RunRecord], metric: Metric) -> Self {
        let mut configs = Vec::new();
        let mut instances = Vec::new();
        for r in records {
            position(&mut configs, &r.config);
            position(&mut instances, &r.instance);
        }
        let mut m = vec![vec![f64::INFINITY; instances.len()]; configs.len()];
        for r in records {
            if r.solved() {
                let c = position(&mut configs, &r.config);
                let i = position(&mut instances, &r.instance);
                m[c][i] = metric.value(r);
            }
        }
        let best: Vec<f64> = (0..instances.len())
            .map(|i| m.iter().map(|row| row[i]).fold(f64::INFINITY, f64::min))
            .collect();
        let ratios: Vec<Vec<f64>> = m
            .iter()
            .map(|row| row.iter().zip(&best).map(|(v, b)| if v.is_finite() { v / b } else { f64::INFINITY }).collect())
            .collect();
        let mut grid: Vec<f64> = ratios.iter().flatten().copied().filter(|r| r.is_finite()).collect();
        grid.push(1.0);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        ProfileTable {
            configs,
            instances,
            ratios,
            grid,
        }
    }

    pub fn fraction(&self, config: usize, tau: f64) -> f64 {
        let n = self.instances.len();
        if n == 0 {
            return 0.0;
        }
        self.ratios[config].iter().filter(|&&r| r <= tau).count() as f64 / n as f64
    }

    /// CSV with columns `config,ratio,fraction`, one row per configuration and
    /// grid point.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["config", "ratio", "fraction"])?;
        for (c, name) in self.configs.iter().enumerate() {
            for &tau in &self.grid {
                out.write_record([name.clone(), tau.to_string(), self.fraction(c, tau).to_string()])?;
            }
        }
        out.flush().map_err(|e| BenchError::Io {
            path: "csv output".into(),
            source: e,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(inst: &str, cfg: &str, t: f64, solved: bool) -> RunRecord {
        RunRecord {
            instance: inst.into(),
            config: cfg.into(),
            status: if solved { "Optimal" } else { "TimeLimit" }.into(),
            objective: 0.0,
            lb: 0.0,
            ub: 0.0,
            iterations: 1,
            time_s: t,
        }
    }

    #[test]
    fn three_instance_example() {
        let recs = vec![
            rec("i1", "A", 1.0, true),
            rec("i1", "B", 2.0, true),
            rec("i2", "A", 2.0, true),
            rec("i2", "B", 2.0, true),
            rec("i3", "A", 4.0, true),
            rec("i3", "B", 2.0, true),
        ];
        let p = ProfileTable::from_records(&recs, Metric::Time);
        assert_eq!(p.ratios[0], vec![1.0, 1.0, 2.0]);
        assert_eq!(p.ratios[1], vec![2.0, 1.0, 1.0]);
        assert_eq!(p.fraction(0, 1.0), 2.0 / 3.0);
        assert_eq!(p.fraction(1, 1.0), 2.0 / 3.0);
        assert_eq!(p.fraction(0, 2.0), 1.0);
        assert_eq!(p.grid, vec![1.0, 2.0]);
    }

    #[test]
    fn single_config_reaches_one_at_ratio_one() {
        let recs = vec![rec("i1", "A", 3.0, true), rec("i2", "A", 0.5, true)];
        let p = ProfileTable::from_records(&recs, Metric::Time);
        assert_eq!(p.grid, vec![1.0]);
        assert_eq!(p.fraction(0, 1.0), 1.0);
    }

    #[test]
    fn dominating_config_is_above_pointwise() {
        let recs = vec![
            rec("i1", "A", 1.0, true),
            rec("i1", "B", 3.0, true),
            rec("i2", "A", 2.0, true),
            rec("i2", "B", 2.5, true),
            rec("i3", "A", 1.0, true),
            rec("i3", "B", 1.0, false),
        ];
        let p = ProfileTable::from_records(&recs, Metric::Time);
        for &tau in &p.grid {
            assert!(p.fraction(0, tau) >= p.fraction(1, tau));
        }
        assert_eq!(p.fraction(1, f64::MAX), 2.0 / 3.0);
    }

    #[test]
    fn unsolved_only_in_asymptote() {
        let recs = vec![rec("i1", "A", 1.0, true), rec("i2", "A", 1.0, false)];
        let p = ProfileTable::from_records(&recs, Metric::Time);
        assert_eq!(p.fraction(0, 1e300), 0.5);
        assert_eq!(p.ratios[0][1], f64::INFINITY);
    }
}
