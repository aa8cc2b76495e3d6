//! High-loss slice selection and error-type partitioning.

use std::collections::BTreeMap;

use crate::model::{Dataset, ErrorType, EvalSlice, Provenance};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SlicingError {
    #[error("quantile must lie in [0, 1), got {0}")]
    InvalidQuantile(f64),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Number of records kept for quantile `q` out of `n`:
/// `max(1, round((1 - q) * n))`, rounding half away from zero.
pub fn selection_count(n: usize, q: f64) -> usize {
    let raw = ((1.0 - q) * n as f64).round() as usize;
    raw.clamp(1, n.max(1))
}

/// Selects the records above the `q` loss quantile as a top-count slice.
///
/// Ties in loss are broken by ascending record index, so the result is
/// fully deterministic.
pub fn slice_by_quantile(dataset: &Dataset, q: f64) -> Result<EvalSlice, SlicingError> {
    if !(0.0..1.0).contains(&q) {
        return Err(SlicingError::InvalidQuantile(q));
    }
    let n = dataset.len();
    if n == 0 {
        return Err(SlicingError::EmptyDataset);
    }
    let keep = selection_count(n, q);
    let mut order: Vec<usize> = (0..n).collect();
    let by_loss_desc = |a: &usize, b: &usize| {
        dataset.records[*b]
            .loss
            .total_cmp(&dataset.records[*a].loss)
            .then(a.cmp(b))
    };
    if keep < n {
        order.select_nth_unstable_by(keep - 1, by_loss_desc);
        order.truncate(keep);
    }
    order.sort_unstable();
    Ok(EvalSlice::new(dataset.name.clone(), order, n, Provenance::Quantile { q })
        .expect("top-count selection is non-empty and in range"))
}

/// Splits a slice into error-type buckets. Buckets are disjoint and cover
/// the slice; empty buckets are omitted.
pub fn partition_error_types(
    dataset: &Dataset,
    slice: &EvalSlice,
) -> BTreeMap<ErrorType, EvalSlice> {
    let mut buckets: BTreeMap<ErrorType, Vec<usize>> = BTreeMap::new();
    for &i in slice.members() {
        let et = ErrorType::of(&dataset.records[i], dataset.num_classes);
        buckets.entry(et).or_default().push(i);
    }
    buckets
        .into_iter()
        .map(|(et, members)| {
            let s = EvalSlice::new(
                slice.dataset_ref.clone(),
                members,
                dataset.len(),
                Provenance::ErrorType { error_type: et },
            )
            .expect("bucket of a valid slice");
            (et, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Record;

    fn ds(losses: &[f64]) -> Dataset {
        Dataset {
            name: "t".into(),
            num_classes: 2,
            embedding_dim: 1,
            records: losses
                .iter()
                .enumerate()
                .map(|(i, &l)| Record {
                    id: format!("r{i}"),
                    text: String::new(),
                    label: i % 2,
                    prediction: (i / 2) % 2,
                    loss: l,
                    embedding: vec![0.0],
                })
                .collect(),
        }
    }

    #[test]
    fn top_two_of_ten() {
        let d = ds(&(1..=10).map(f64::from).collect::<Vec<_>>());
        let s = slice_by_quantile(&d, 0.8).unwrap();
        let losses: Vec<f64> = s.members().iter().map(|&i| d.records[i].loss).collect();
        assert_eq!(losses, vec![9.0, 10.0]);
        assert_eq!(s.provenance, Provenance::Quantile { q: 0.8 });
    }

    #[test]
    fn counts() {
        assert_eq!(selection_count(200, 0.99), 2);
        assert_eq!(selection_count(200, 0.98), 4);
        assert_eq!(selection_count(1, 0.99), 1);
        assert_eq!(selection_count(10, 0.0), 10);
        // 0.5 rounds away from zero
        assert_eq!(selection_count(2, 0.75), 1);
        assert_eq!(selection_count(5, 0.9), 1);
    }

    #[test]
    fn ties_by_index() {
        let d = ds(&[0.5; 4]);
        let s = slice_by_quantile(&d, 0.5).unwrap();
        assert_eq!(s.members(), &[0, 1]);
    }

    #[test]
    fn rejects_bad_quantile() {
        let d = ds(&[1.0]);
        assert_eq!(slice_by_quantile(&d, 1.0), Err(SlicingError::InvalidQuantile(1.0)));
        assert!(slice_by_quantile(&d, -0.1).is_err());
        assert!(slice_by_quantile(&d, f64::NAN).is_err());
    }

    #[test]
    fn error_buckets() {
        // (label, prediction): r0 (0,0) r1 (1,0) r2 (0,1) r3 (1,1)
        let d = ds(&[1.0, 2.0, 3.0, 4.0]);
        let s = EvalSlice::full(&d).unwrap();
        let parts = partition_error_types(&d, &s);
        assert_eq!(parts[&ErrorType::FalseNegative].members(), &[1]);
        assert_eq!(parts[&ErrorType::FalsePositive].members(), &[2]);
        assert_eq!(parts[&ErrorType::Correct].members(), &[0, 3]);

        let only_correct = EvalSlice::new("t", vec![0, 3], 4, Provenance::Manual).unwrap();
        let parts = partition_error_types(&d, &only_correct);
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[&ErrorType::Correct].members(), &[0, 3]);
    }

    #[test]
    fn multiclass_buckets() {
        let mut d = ds(&[1.0, 2.0, 3.0]);
        d.num_classes = 3;
        d.records[0].label = 2;
        d.records[0].prediction = 0;
        d.records[1].label = 0;
        d.records[1].prediction = 2;
        d.records[2].label = 2;
        d.records[2].prediction = 0;
        let parts = partition_error_types(&d, &EvalSlice::full(&d).unwrap());
        assert_eq!(parts.len(), 2);
        assert_eq!(
            parts[&ErrorType::Confusion { label: 2, prediction: 0 }].members(),
            &[0, 2]
        );
    }
}
