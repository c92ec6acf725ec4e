//! One-factor-at-a-time sweeps over the SDC delay `d` and block count `k`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::{auc, eer, MetricsError};
use crate::data::{Dataset, Manifest};
use crate::features::FeatureKind;
use crate::model::{evaluate, train, ModelConfig, ModelError};

pub const GRID_HEADER: &str = "d,k,auc,eer";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    D,
    K,
}

/// Values for one SDC parameter; the other keeps its base value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

impl FromStr for Sweep {
    type Err = MetricsError;

    /// `d=1..4` (inclusive) or `k=5,7,9`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricsError::BadSweep(s.to_string());
        let (name, spec) = s.split_once('=').ok_or_else(bad)?;
        let axis = match name.trim() {
            "d" => SweepAxis::D,
            "k" => SweepAxis::K,
            _ => return Err(bad()),
        };
        let num = |t: &str| t.trim().parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
        let values = match spec.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err(bad());
                }
                (lo..=hi).collect()
            }
            None => spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        };
        Ok(Self { axis, values })
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.axis {
            SweepAxis::D => "d",
            SweepAxis::K => "k",
        };
        let vals: Vec<String> = self.values.iter().map(usize::to_string).collect();
        write!(f, "{name}={}", vals.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub d: usize,
    pub k: usize,
    pub auc: f64,
    pub eer: f64,
}

/// Trains one SDC model per sweep value for `epochs` epochs and scores it on
/// the evaluation manifest. Rows follow the order of `sweeps` and their
/// values.
pub fn ablation_grid(
    train_manifest: &Manifest,
    eval_manifest: &Manifest,
    sweeps: &[Sweep],
    base: &ModelConfig,
    epochs: usize,
) -> Result<Vec<GridRow>, ModelError> {
    let mut rows = Vec::new();
    for sweep in sweeps {
        for &v in &sweep.values {
            let mut cfg = base.clone();
            cfg.feature = FeatureKind::Sdc;
            match sweep.axis {
                SweepAxis::D => cfg.sdc.d = v,
                SweepAxis::K => cfg.sdc.k = v,
            }
            cfg.validate()?;
            let fe = cfg.front_end();
            let train_set = Dataset::from_manifest(train_manifest, &fe)?;
            let eval_set = Dataset::from_manifest(eval_manifest, &fe)?;
            let outcome = train(&train_set, &cfg, epochs)?;
            let model = outcome.best.to_model()?;
            let all: Vec<usize> = (0..eval_set.len()).collect();
            let scores = evaluate(&model, &eval_set, &all)?.scores;
            let row = GridRow {
                d: cfg.sdc.d,
                k: cfg.sdc.k,
                auc: auc(&scores)?,
                eer: eer(&scores)?,
            };
            log::info!("sdc {}: auc {:.4} eer {:.4}", cfg.sdc, row.auc, row.eer);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = format!("{GRID_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.d, r.k, r.auc, r.eer).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_syntax() {
        let s: Sweep = "d=1..4".parse().unwrap();
        assert_eq!(s, Sweep { axis: SweepAxis::D, values: vec![1, 2, 3, 4] });
        assert_eq!("k=5..10".parse::<Sweep>().unwrap().values.len(), 6);
        assert_eq!("k=5,7".parse::<Sweep>().unwrap().values, vec![5, 7]);
        assert_eq!(s.to_string(), "d=1,2,3,4");
        for bad in ["q=1..2", "d=4..1", "d=0..2", "d", "k=", "d=1..x"] {
            assert!(bad.parse::<Sweep>().is_err(), "{bad}");
        }
    }

    #[test]
    fn csv_rows() {
        let rows = [GridRow { d: 1, k: 8, auc: 0.75, eer: 0.25 }];
        assert_eq!(grid_csv(&rows), "d,k,auc,eer\n1,8,0.75,0.25\n");
    }
}
