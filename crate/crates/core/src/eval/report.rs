//! JSON metrics reports and the fixed-width comparison table.

use serde::{Deserialize, Serialize};

use super::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionSplit {
    pub tail: Metrics,
    pub head: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: Metrics,
    pub direction_split: DirectionSplit,
}

/// Mean and population standard deviation over seeds, plus the per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub dataset: String,
    pub split: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub std: Metrics,
    pub per_seed: Vec<SeedMetrics>,
    pub direction_split: DirectionSplit,
}

fn mean_std(values: &[[f64; 4]]) -> ([f64; 4], [f64; 4]) {
    let n = values.len().max(1) as f64;
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for i in 0..4 {
        mean[i] = values.iter().map(|v| v[i]).sum::<f64>() / n;
        std[i] = (values.iter().map(|v| (v[i] - mean[i]).powi(2)).sum::<f64>() / n).sqrt();
    }
    (mean, std)
}

impl MetricsReport {
    pub fn from_seeds(
        dataset: impl Into<String>,
        split: impl Into<String>,
        config_hash: impl Into<String>,
        per_seed: Vec<SeedMetrics>,
    ) -> Self {
        let values: Vec<[f64; 4]> = per_seed.iter().map(|s| s.metrics.values()).collect();
        let (mean, std) = mean_std(&values);
        let tail: Vec<[f64; 4]> = per_seed.iter().map(|s| s.direction_split.tail.values()).collect();
        let head: Vec<[f64; 4]> = per_seed.iter().map(|s| s.direction_split.head.values()).collect();
        MetricsReport {
            dataset: dataset.into(),
            split: split.into(),
            config_hash: config_hash.into(),
            seeds: per_seed.iter().map(|s| s.seed).collect(),
            mrr: mean[0],
            hits1: mean[1],
            hits3: mean[2],
            hits10: mean[3],
            std: Metrics::from_values(std),
            direction_split: DirectionSplit {
                tail: Metrics::from_values(mean_std(&tail).0),
                head: Metrics::from_values(mean_std(&head).0),
            },
            per_seed,
        }
    }

    /// Merges single- or multi-seed reports of the same configuration.
    pub fn merge(reports: &[MetricsReport]) -> Option<Self> {
        let first = reports.first()?;
        let per_seed = reports.iter().flat_map(|r| r.per_seed.iter().cloned()).collect();
        Some(Self::from_seeds(
            first.dataset.clone(),
            first.split.clone(),
            first.config_hash.clone(),
            per_seed,
        ))
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            mrr: self.mrr,
            hits1: self.hits1,
            hits3: self.hits3,
            hits10: self.hits10,
        }
    }

    /// Hits@1 <= Hits@3 <= Hits@10, MRR >= Hits@1, everything in [0, 1].
    pub fn is_consistent(&self) -> bool {
        let m = self.metrics();
        let ordered = |m: &Metrics| {
            m.hits1 <= m.hits3 && m.hits3 <= m.hits10 && m.mrr >= m.hits1
                && m.values().iter().all(|v| (0.0..=1.0).contains(v))
        };
        ordered(&m) && self.per_seed.iter().all(|s| ordered(&s.metrics))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// One table line; `None` renders as `-` cells.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub label: String,
    pub report: Option<MetricsReport>,
}

impl TableRow {
    pub fn new(label: impl Into<String>, report: Option<MetricsReport>) -> Self {
        TableRow {
            label: label.into(),
            report,
        }
    }
}

fn cell(report: Option<&MetricsReport>, i: usize) -> String {
    match report {
        None => "-".into(),
        Some(r) => {
            let mean = r.metrics().values()[i] * 100.0;
            if r.seeds.len() > 1 {
                format!("{mean:.1}±{:.1}", r.std.values()[i] * 100.0)
            } else {
                format!("{mean:.1}")
            }
        }
    }
}

/// Columns MRR, Hits@1, Hits@3, Hits@10, scaled by 100 with one decimal.
pub fn render_table(rows: &[TableRow]) -> String {
    let header = ["Model", "MRR", "Hits@1", "Hits@3", "Hits@10"];
    let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let mut line = vec![row.label.clone()];
        line.extend((0..4).map(|i| cell(row.report.as_ref(), i)));
        lines.push(line);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                let pad = w - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(seed: u64, mrr: f64) -> SeedMetrics {
        SeedMetrics {
            seed,
            metrics: Metrics {
                mrr,
                hits1: mrr - 0.1,
                hits3: mrr,
                hits10: mrr + 0.1,
            },
            direction_split: DirectionSplit::default(),
        }
    }

    #[test]
    fn single_seed_cell_has_one_decimal() {
        let r = MetricsReport::from_seeds("d", "test", "h", vec![seed(0, 0.334)]);
        let table = render_table(&[TableRow::new("MLP", Some(r))]);
        assert!(table.lines().nth(1).unwrap().contains("33.4"), "{table}");
    }

    #[test]
    fn multi_seed_cell_shows_population_std() {
        let r = MetricsReport::from_seeds("d", "test", "h", vec![seed(0, 0.332), seed(1, 0.336)]);
        assert!((r.std.mrr - 0.002).abs() < 1e-12);
        let table = render_table(&[TableRow::new("MLP", Some(r))]);
        assert!(table.contains("33.4±0.2"), "{table}");
    }

    #[test]
    fn missing_rows_render_dashes() {
        let table = render_table(&[TableRow::new("N", None)]);
        assert_eq!(table.lines().nth(1).unwrap().split_whitespace().collect::<Vec<_>>(), ["N", "-", "-", "-", "-"]);
    }

    #[test]
    fn json_round_trips_exactly() {
        let r = MetricsReport::from_seeds("d", "valid", "h", vec![seed(0, 0.1 + 0.2), seed(2, 1.0 / 3.0)]);
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["mrr", "hits1", "hits3", "hits10", "per_seed", "config_hash", "dataset", "direction_split"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
