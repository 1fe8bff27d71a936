use std::fmt::Write as _;

use serde::Serialize;

use crate::cost::{CostLedger, Domain};
use crate::error::{Error, Result};

/// Baseline and optimized costs of one layer or one total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub name: String,
    pub domain: String,
    pub baseline_flops: u64,
    pub flops: u64,
    pub baseline_activation_bytes: u64,
    pub activation_bytes: u64,
}

fn ratio(base: u64, opt: u64) -> f64 {
    match (base, opt) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (b, o) => b as f64 / o as f64,
    }
}

impl RatioRow {
    pub fn flops_ratio(&self) -> f64 {
        ratio(self.baseline_flops, self.flops)
    }

    pub fn mem_ratio(&self) -> f64 {
        ratio(self.baseline_activation_bytes, self.activation_bytes)
    }
}

/// Compression ratios (baseline / optimized) per layer and in total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub layers: Vec<RatioRow>,
    /// `3d`, `2d`, `predictor` and `total`.
    pub totals: Vec<RatioRow>,
}

impl CostReport {
    pub fn total(&self, name: &str) -> Option<&RatioRow> {
        self.totals.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "name,domain,baseline_flops,flops,flops_ratio,baseline_activation_bytes,activation_bytes,mem_ratio\n",
        );
        for r in self.layers.iter().chain(&self.totals) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.name,
                r.domain,
                r.baseline_flops,
                r.flops,
                r.flops_ratio(),
                r.baseline_activation_bytes,
                r.activation_bytes,
                r.mem_ratio()
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>9} {:>16} {:>16} {:>9} {:>14} {:>14} {:>9}",
            "layer", "domain", "base FLOPs", "FLOPs", "FLOPs x", "base bytes", "bytes", "mem x"
        );
        let mut row = |r: &RatioRow| {
            let _ = writeln!(
                s,
                "{:<22} {:>9} {:>16} {:>16} {:>9.3} {:>14} {:>14} {:>9.3}",
                r.name,
                r.domain,
                r.baseline_flops,
                r.flops,
                r.flops_ratio(),
                r.baseline_activation_bytes,
                r.activation_bytes,
                r.mem_ratio()
            );
        };
        self.layers.iter().for_each(&mut row);
        self.totals.iter().for_each(&mut row);
        s
    }
}

/// Pairs up the backbone layers of two runs of the same pipeline. Predictor
/// entries may appear in either ledger and count toward the totals only.
pub fn report_costs(ledger: &CostLedger, baseline: &CostLedger) -> Result<CostReport> {
    let backbone = |l: &CostLedger| -> Vec<_> {
        l.entries().iter().filter(|e| e.domain != Domain::Predictor).cloned().collect()
    };
    let (opt, base) = (backbone(ledger), backbone(baseline));
    if opt.len() != base.len() || opt.iter().zip(&base).any(|(a, b)| a.name != b.name || a.domain != b.domain) {
        return Err(Error::Shape("ledgers have different layer structures".into()));
    }
    let layers = opt
        .iter()
        .zip(&base)
        .map(|(o, b)| RatioRow {
            name: o.name.clone(),
            domain: o.domain.as_str().into(),
            baseline_flops: b.flops,
            flops: o.flops,
            baseline_activation_bytes: b.activation_bytes,
            activation_bytes: o.activation_bytes,
        })
        .collect();
    let total = |name: &str, d: Option<Domain>| {
        let (o, b) = (ledger.totals(d), baseline.totals(d));
        RatioRow {
            name: name.into(),
            domain: "total".into(),
            baseline_flops: b.flops,
            flops: o.flops,
            baseline_activation_bytes: b.activation_bytes,
            activation_bytes: o.activation_bytes,
        }
    };
    Ok(CostReport {
        layers,
        totals: vec![
            total("3d", Some(Domain::Voxel)),
            total("2d", Some(Domain::Bev)),
            total("predictor", Some(Domain::Predictor)),
            total("total", None),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::LayerCost;

    fn ledger(rows: &[(&str, Domain, u64, u64)]) -> CostLedger {
        let mut l = CostLedger::new();
        for (n, d, f, a) in rows {
            let mut e = LayerCost::new(*n, *d, 100);
            e.flops = *f;
            e.activation_bytes = *a;
            l.push(e);
        }
        l
    }

    #[test]
    fn identical_ledgers() {
        let l = ledger(&[("a", Domain::Voxel, 10, 4), ("b", Domain::Bev, 7, 8)]);
        let r = report_costs(&l, &l).unwrap();
        assert!(r.layers.iter().chain(&r.totals).all(|x| x.flops_ratio() == 1.0 && x.mem_ratio() == 1.0));
    }

    #[test]
    fn two_d_memory_ratio() {
        let base = ledger(&[("a", Domain::Voxel, 10, 4), ("b", Domain::Bev, 50, 500), ("c", Domain::Bev, 50, 500)]);
        let opt = ledger(&[("a", Domain::Voxel, 10, 4), ("b", Domain::Bev, 10, 100), ("c", Domain::Bev, 10, 100)]);
        let r = report_costs(&opt, &base).unwrap();
        assert_eq!(r.total("2d").unwrap().mem_ratio(), 5.0);
        assert_eq!(r.total("3d").unwrap().mem_ratio(), 1.0);
        assert!(r.to_csv().lines().count() == 1 + 3 + 4);
        assert!(r.to_text().contains("2d"));
    }

    #[test]
    fn predictor_rows_only_count_in_totals() {
        let base = ledger(&[("a", Domain::Voxel, 100, 4)]);
        let opt = ledger(&[("a", Domain::Voxel, 40, 4), ("a_predictor", Domain::Predictor, 10, 1)]);
        let r = report_costs(&opt, &base).unwrap();
        assert_eq!(r.layers.len(), 1);
        assert_eq!(r.total("total").unwrap().flops_ratio(), 2.0);
        assert_eq!(r.total("predictor").unwrap().flops_ratio(), 0.0);
    }

    #[test]
    fn structure_mismatch() {
        let a = ledger(&[("a", Domain::Voxel, 1, 1)]);
        let b = ledger(&[("b", Domain::Voxel, 1, 1)]);
        assert!(matches!(report_costs(&a, &b), Err(Error::Shape(_))));
    }
}
