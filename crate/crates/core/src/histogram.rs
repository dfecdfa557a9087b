use std::io::Write;

use crate::error::Result;

/// Bin edges (`counts.len() + 1` of them) and counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.edges.windows(2).zip(&self.counts).map(|(e, &c)| (e[0], e[1], c))
    }

    /// Writes `bin_lower,bin_upper,count` rows with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lower", "bin_upper", "count"])?;
        for (lo, hi, c) in self.bins() {
            w.write_record([lo.to_string(), hi.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evenly spaced edges from `lo` to `hi`.
pub(crate) fn linear_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}
