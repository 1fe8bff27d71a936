//! Analytic FLOP and activation-size accounting.
//!
//! A sparse convolution costs `2 * C_in * C_out` FLOPs per rulebook pair, so
//! only occupied neighborhoods are counted. A layer's activation size is its
//! stored output rows times channels times four bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const BYTES_PER_VALUE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "3d")]
    Voxel,
    #[serde(rename = "2d")]
    Bev,
    #[serde(rename = "predictor")]
    Predictor,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Voxel => "3d",
            Domain::Bev => "2d",
            Domain::Predictor => "predictor",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        match s {
            "3d" => Some(Domain::Voxel),
            "2d" => Some(Domain::Bev),
            "predictor" => Some(Domain::Predictor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub domain: Domain,
    pub flops: u64,
    pub activation_bytes: u64,
    pub pairs: u64,
    /// Rulebook pair storage plus the output coordinate index.
    pub rulebook_bytes: u64,
    /// Rows arriving at the layer.
    pub input_rows: u64,
    /// Rows left after spatial filtering.
    pub filtered_rows: u64,
    /// Rows the convolution consumed (after normalization, which may densify).
    pub conv_input_rows: u64,
    pub output_rows: u64,
    /// Cells of the grid the layer input lives on.
    pub grid_cells: u64,
}

impl LayerCost {
    pub fn new(name: impl Into<String>, domain: Domain, grid_cells: u64) -> Self {
        LayerCost {
            name: name.into(),
            domain,
            flops: 0,
            activation_bytes: 0,
            pairs: 0,
            rulebook_bytes: 0,
            input_rows: 0,
            filtered_rows: 0,
            conv_input_rows: 0,
            output_rows: 0,
            grid_cells,
        }
    }

    fn rate(&self, rows: u64) -> f64 {
        if self.grid_cells == 0 {
            0.0
        } else {
            rows as f64 / self.grid_cells as f64
        }
    }

    pub fn dense_rate_in(&self) -> f64 {
        self.rate(self.input_rows)
    }

    pub fn dense_rate_filtered(&self) -> f64 {
        self.rate(self.filtered_rows)
    }

    pub fn dense_rate_conv_in(&self) -> f64 {
        self.rate(self.conv_input_rows)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LayerCost>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostTotals {
    pub flops: u64,
    pub activation_bytes: u64,
    pub rulebook_bytes: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin_layer(&mut self, name: impl Into<String>, domain: Domain, grid_cells: u64) -> &mut LayerCost {
        self.entries.push(LayerCost::new(name, domain, grid_cells));
        self.entries.last_mut().unwrap()
    }

    /// The most recently begun layer; an anonymous one is opened if none exists.
    pub fn current_mut(&mut self) -> &mut LayerCost {
        if self.entries.is_empty() {
            self.entries.push(LayerCost::new("layer", Domain::Voxel, 0));
        }
        self.entries.last_mut().unwrap()
    }

    /// Adds one executed sparse convolution to the current layer.
    pub fn record_conv(&mut self, pairs: u64, c_in: usize, c_out: usize, out_rows: u64, rulebook_bytes: u64) {
        let e = self.current_mut();
        e.pairs += pairs;
        e.flops += 2 * c_in as u64 * c_out as u64 * pairs;
        e.activation_bytes += out_rows * c_out as u64 * BYTES_PER_VALUE;
        e.output_rows += out_rows;
        e.rulebook_bytes += rulebook_bytes;
    }

    pub fn entries(&self) -> &[LayerCost] {
        &self.entries
    }

    pub fn push(&mut self, entry: LayerCost) {
        self.entries.push(entry);
    }

    pub fn totals(&self, domain: Option<Domain>) -> CostTotals {
        self.entries
            .iter()
            .filter(|e| domain.is_none_or(|d| e.domain == d))
            .fold(CostTotals::default(), |mut t, e| {
                t.flops += e.flops;
                t.activation_bytes += e.activation_bytes;
                t.rulebook_bytes += e.rulebook_bytes;
                t
            })
    }

    pub fn to_csv(&self, include_rulebook: bool) -> String {
        let mut s = String::from(
            "layer,domain,flops,activation_bytes,pairs,input_rows,filtered_rows,conv_input_rows,output_rows,grid_cells,dense_rate_in,dense_rate_filtered,dense_rate_conv_in",
        );
        if include_rulebook {
            s.push_str(",rulebook_bytes");
        }
        s.push('\n');
        for e in &self.entries {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                e.name,
                e.domain.as_str(),
                e.flops,
                e.activation_bytes,
                e.pairs,
                e.input_rows,
                e.filtered_rows,
                e.conv_input_rows,
                e.output_rows,
                e.grid_cells,
                e.dense_rate_in(),
                e.dense_rate_filtered(),
                e.dense_rate_conv_in()
            );
            if include_rulebook {
                let _ = write!(s, ",{}", e.rulebook_bytes);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_are_sums_of_entries() {
        let mut l = CostLedger::new();
        l.begin_layer("a", Domain::Voxel, 100);
        l.record_conv(10, 4, 16, 5, 0);
        l.begin_layer("b", Domain::Bev, 100);
        l.record_conv(3, 16, 16, 2, 0);
        l.record_conv(1, 16, 16, 2, 0);
        assert_eq!(l.totals(Some(Domain::Voxel)).flops, 2 * 4 * 16 * 10);
        assert_eq!(l.totals(Some(Domain::Bev)).flops, 2 * 16 * 16 * 4);
        assert_eq!(l.totals(Some(Domain::Bev)).activation_bytes, 4 * 16 * 4);
        let all = l.totals(None);
        assert_eq!(all.flops, l.entries().iter().map(|e| e.flops).sum::<u64>());
    }

    #[test]
    fn csv_has_optional_rulebook_column() {
        let mut l = CostLedger::new();
        l.begin_layer("x", Domain::Bev, 4).input_rows = 1;
        let plain = l.to_csv(false);
        assert!(plain.starts_with("layer,domain,flops"));
        assert!(!plain.contains("rulebook"));
        assert!(l.to_csv(true).lines().next().unwrap().ends_with(",rulebook_bytes"));
        assert!(plain.lines().nth(1).unwrap().contains(",0.25,"));
    }
}
