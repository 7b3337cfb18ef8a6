//! Pattern-frequency feature vectors for external embedding.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::tpkl::PatternDistribution;
use crate::error::{Error, Result};
use crate::grid::LevelGrid;

/// One smoothed pattern distribution per level over the patterns seen in
/// any level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub pattern_size: usize,
    /// Column pattern codes in ascending order.
    pub patterns: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
}

pub fn export_features(
    levels: &[LevelGrid],
    pattern_size: usize,
    epsilon: f64,
) -> Result<FeatureMatrix> {
    if levels.is_empty() {
        return Err(Error::Empty("no levels to export".into()));
    }
    let dists: Vec<_> = levels
        .iter()
        .map(|l| PatternDistribution::from_level(l, pattern_size))
        .collect::<Result<_>>()?;
    let mut patterns: Vec<u64> = dists
        .iter()
        .flat_map(|d| d.counts().iter().map(|&(c, _)| c))
        .collect();
    patterns.sort_unstable();
    patterns.dedup();
    let support = patterns.len() as f64;
    let rows = dists
        .iter()
        .map(|d| {
            let norm = d.total() as f64 + epsilon * support;
            patterns
                .iter()
                .map(|&p| (f64::from(d.count(p)) + epsilon) / norm)
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        pattern_size,
        patterns,
        rows,
    })
}

impl FeatureMatrix {
    /// CSV with a `level_id` column and one column per pattern code.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["level_id".to_string()];
        header.extend(self.patterns.iter().map(|p| format!("p{p}")));
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut record = vec![i.to_string()];
            record.extend(row.iter().map(|v| format!("{v:.9e}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tile::Tile;

    #[test]
    fn rows_are_distributions_on_a_shared_support() {
        let corpus = crate::vglc::synthetic_corpus(2, 5);
        let levels: Vec<_> = vec![
            corpus[0].crop(0, 0, 16, 16),
            corpus[1].crop(8, 4, 16, 16),
            LevelGrid::filled(16, 16, Tile::Brick),
            corpus[0].crop(0, 0, 16, 16),
        ];
        let f = export_features(&levels, 3, 1e-5).unwrap();
        assert_eq!(f.rows.len(), 4);
        for row in &f.rows {
            assert_eq!(row.len(), f.patterns.len());
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert_eq!(f.rows[0], f.rows[3]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
        assert!(export_features(&[], 3, 1e-5).is_err());
    }
}
