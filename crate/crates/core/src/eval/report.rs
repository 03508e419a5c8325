use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::experiment::ExperimentReport;

#[derive(Serialize)]
struct Record<'a> {
    variant: &'a str,
    seed: u64,
    precision: f64,
    stage_precision: &'a [f64],
    disabled: Vec<&'static str>,
    eval_pairs: usize,
    train_clusters: usize,
    synthetic_clusters: usize,
    /// Baseline precision on the same split, keyed by baseline name.
    baselines: BTreeMap<&'a str, f64>,
}

/// One JSON object per line, one line per (variant, seed).
pub fn to_jsonl(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for v in &report.variants {
        for s in &v.seeds {
            let baselines = report
                .baselines
                .iter()
                .filter_map(|b| {
                    b.seeds
                        .iter()
                        .find(|(seed, _)| *seed == s.seed)
                        .map(|&(_, p)| (b.name.as_str(), p))
                })
                .collect();
            let rec = Record {
                variant: &v.name,
                seed: s.seed,
                precision: s.precision,
                stage_precision: &s.stage_precision,
                disabled: v.disabled.iter().map(|m| m.name()).collect(),
                eval_pairs: s.eval_pairs,
                train_clusters: s.train_clusters,
                synthetic_clusters: s.synthetic_clusters,
                baselines,
            };
            out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
            out.push('\n');
        }
    }
    out
}

/// Fixed-width summary table with deltas against the full model.
pub fn to_table(report: &ExperimentReport) -> String {
    let full = report.full().summary.median;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<26} {:>5} {:>8} {:>8} {:>8} {:>8}",
        "variant", "seeds", "median", "mean", "stderr", "delta"
    );
    for v in &report.variants {
        let s = v.summary;
        let _ = writeln!(
            out,
            "{:<26} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>+8.4}",
            v.name,
            s.n,
            s.median,
            s.mean,
            s.stderr,
            s.median - full
        );
    }
    for b in &report.baselines {
        let s = b.summary;
        let _ = writeln!(
            out,
            "{:<26} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>+8.4}",
            format!("baseline:{}", b.name),
            s.n,
            s.median,
            s.mean,
            s.stderr,
            s.median - full
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::experiment::{BaselineReport, SeedResult, VariantKind, VariantReport};
    use crate::eval::metrics::summarize;

    fn report() -> ExperimentReport {
        let seeds = vec![
            SeedResult {
                seed: 1,
                precision: 0.9,
                stage_precision: vec![0.7, 0.9],
                eval_pairs: 10,
                train_clusters: 2,
                synthetic_clusters: 0,
            },
            SeedResult {
                seed: 2,
                precision: 0.8,
                stage_precision: vec![0.6, 0.8],
                eval_pairs: 10,
                train_clusters: 2,
                synthetic_clusters: 0,
            },
        ];
        ExperimentReport {
            variants: vec![VariantReport {
                name: "full".into(),
                kind: VariantKind::Full,
                disabled: vec![],
                summary: summarize(&[0.9, 0.8]),
                seeds,
            }],
            baselines: vec![BaselineReport {
                name: "majority-vote".into(),
                seeds: vec![(1, 0.5), (2, 0.6)],
                summary: summarize(&[0.5, 0.6]),
            }],
        }
    }

    #[test]
    fn one_record_per_seed() {
        let text = to_jsonl(&report());
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(v["seed"], 2);
        assert_eq!(v["precision"], 0.8);
        assert_eq!(v["baselines"]["majority-vote"], 0.6);
    }

    #[test]
    fn table_lists_variants_and_baselines() {
        let t = to_table(&report());
        assert!(t.contains("full"));
        assert!(t.contains("baseline:majority-vote"));
        assert!(t.contains("0.8500"));
    }
}
