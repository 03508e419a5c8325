use crate::candidates::{weak_labels, Candidates};
use crate::dataset::{Assignment, FusionDataset, GroundTruth};
use crate::error::{FusionError, Result};

/// Highest-frequency candidate per pair (index 0 by the candidate ordering).
pub fn majority_vote(candidates: &Candidates) -> Assignment {
    weak_labels(candidates, &GroundTruth::new()).expect("no labels to validate")
}

/// Laplace-smoothed source accuracy `(correct + 1) / (total + 2)` from labeled pairs.
pub fn source_accuracies(ds: &FusionDataset, truth: &GroundTruth) -> Result<Vec<f64>> {
    let sources = ds.sources().ok_or(FusionError::SourcesUnavailable("counts"))?;
    let mut correct = vec![0usize; sources.len()];
    let mut total = vec![0usize; sources.len()];
    for ((k, j), value) in truth.iter() {
        for &i in ds.members(k) {
            let s = sources.of_row(i);
            total[s] += 1;
            correct[s] += usize::from(ds.cell(i, j) == value);
        }
    }
    Ok(correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| (c as f64 + 1.0) / (t as f64 + 2.0))
        .collect())
}

/// Independent-source naive Bayes: each candidate scores the log-odds of the
/// accuracies of the sources claiming it, plus the log of its in-cluster frequency.
pub fn counts(ds: &FusionDataset, candidates: &Candidates, truth: &GroundTruth) -> Result<Assignment> {
    let acc = source_accuracies(ds, truth)?;
    let sources = ds.sources().expect("checked above");
    let logit: Vec<f64> = acc.iter().map(|a| a.ln() - (1.0 - a).ln()).collect();
    let mut out = Assignment::zeros(ds.n_attributes(), ds.n_clusters());
    for j in 0..ds.n_attributes() {
        for k in 0..ds.n_clusters() {
            let set = candidates.get(k, j);
            let total = set.total() as f64;
            let mut score: Vec<f64> = set.freqs.iter().map(|&f| (f as f64 / total).ln()).collect();
            for &i in ds.members(k) {
                score[candidates.position(i, j)] += logit[sources.of_row(i)];
            }
            let mut best = 0;
            for (idx, &s) in score.iter().enumerate().skip(1) {
                if s > score[best] {
                    best = idx;
                }
            }
            out.set(k, j, best);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::build_candidate_sets;

    fn three_sources() -> FusionDataset {
        // Cluster "x": sources a, b claim "u"; source p claims "v".
        // Cluster "t" (labeled): p is right, a and b are wrong.
        FusionDataset::new(
            vec!["A".into()],
            vec![
                vec!["u".into()],
                vec!["u".into()],
                vec!["v".into()],
                vec!["bad".into()],
                vec!["bad".into()],
                vec!["good".into()],
            ],
            ["x", "x", "x", "t", "t", "t"].map(String::from).to_vec(),
            Some(["a", "b", "p", "a", "b", "p"].map(String::from).to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn accurate_source_dominates() {
        let ds = three_sources();
        let c = build_candidate_sets(&ds);
        let mut t = GroundTruth::new();
        t.insert(1, 0, "good");
        let acc = source_accuracies(&ds, &t).unwrap();
        assert_eq!(acc, vec![1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        // u: 2·ln(1/2) + ln(2/3) ≈ −1.792; v: ln 2 + ln(1/3) ≈ −0.405
        let pred = counts(&ds, &c, &t).unwrap();
        assert_eq!(c.value(0, 0, pred.get(0, 0)), "v");
        assert_eq!(majority_vote(&c).get(0, 0), 0);
    }

    #[test]
    fn unobserved_sources_reduce_to_majority() {
        let ds = three_sources();
        let c = build_candidate_sets(&ds);
        let acc = source_accuracies(&ds, &GroundTruth::new()).unwrap();
        assert!(acc.iter().all(|&a| a == 0.5));
        assert_eq!(counts(&ds, &c, &GroundTruth::new()).unwrap(), majority_vote(&c));
    }

    #[test]
    fn counts_requires_sources() {
        let ds = FusionDataset::new(vec!["A".into()], vec![vec!["x".into()]], vec!["k".into()], None).unwrap();
        let c = build_candidate_sets(&ds);
        assert!(matches!(
            counts(&ds, &c, &GroundTruth::new()),
            Err(FusionError::SourcesUnavailable(_))
        ));
    }
}
