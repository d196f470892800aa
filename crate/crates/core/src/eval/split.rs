use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSplit<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    /// Timestamp of the last training item.
    pub boundary_time: i64,
}

/// Number of training items for `n` items: `round(frac * n)` with ties to
/// even, clamped so both sides are non-empty.
pub fn train_size(n: usize, frac: f64) -> usize {
    ((frac * n as f64).round_ties_even() as usize).clamp(1, n - 1)
}

/// Splits time-ordered `items` into a leading training part and a trailing
/// test part. Items sharing a timestamp keep their given order, so ties are
/// split by the dataset's global tie-break.
pub fn temporal_split<T: Clone>(items: &[T], frac: f64, time: impl Fn(&T) -> i64) -> Result<TemporalSplit<T>> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Config(format!("split fraction must be in (0,1), got {frac}")));
    }
    if items.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "temporal split needs at least 2 items, got {}",
            items.len()
        )));
    }
    if items.windows(2).any(|w| time(&w[0]) > time(&w[1])) {
        return Err(Error::InvalidInput("items are not sorted by time".into()));
    }
    let k = train_size(items.len(), frac);
    Ok(TemporalSplit {
        train: items[..k].to_vec(),
        test: items[k..].to_vec(),
        boundary_time: time(&items[k - 1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventy_thirty() {
        let items: Vec<i64> = (1..=10).collect();
        let s = temporal_split(&items, 0.7, |&t| t).unwrap();
        assert_eq!(s.train, (1..=7).collect::<Vec<_>>());
        assert_eq!(s.test, vec![8, 9, 10]);
        assert_eq!(s.boundary_time, 7);
    }

    #[test]
    fn identical_timestamps_split_by_order() {
        let items: Vec<(i64, u64)> = (0..10).map(|id| (5, id)).collect();
        let s = temporal_split(&items, 0.7, |x| x.0).unwrap();
        assert_eq!(s.train.iter().map(|x| x.1).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn half_rounds_to_even() {
        assert_eq!(train_size(3, 0.5), 2);
        assert_eq!(train_size(5, 0.5), 2);
        assert_eq!(train_size(2, 0.01), 1);
        assert_eq!(train_size(2, 0.99), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(temporal_split(&[1i64], 0.7, |&t| t).is_err());
        assert!(temporal_split(&[1i64, 2], 1.0, |&t| t).is_err());
        assert!(temporal_split(&[2i64, 1], 0.5, |&t| t).is_err());
    }

    proptest! {
        #[test]
        fn train_never_after_test(mut times in prop::collection::vec(0i64..100, 2..200), frac in 0.01f64..0.99) {
            times.sort_unstable();
            let s = temporal_split(&times, frac, |&t| t).unwrap();
            prop_assert_eq!(s.train.len() + s.test.len(), times.len());
            prop_assert!(!s.train.is_empty() && !s.test.is_empty());
            let last_train = *s.train.iter().max().unwrap();
            let first_test = *s.test.iter().min().unwrap();
            prop_assert!(last_train <= first_test);
            prop_assert_eq!(s.boundary_time, last_train);
        }
    }
}
