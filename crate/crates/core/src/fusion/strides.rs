/// Period assumed when neither device yields two peaks to measure one from, s.
pub const NOMINAL_STRIDE_PERIOD_S: f64 = 0.5;

/// Fraction of the median stride period within which two devices' peaks match.
const MATCH_FRACTION: f64 = 0.4;

fn median_period(left: &[f64], right: &[f64]) -> Option<f64> {
    let mut gaps: Vec<f64> = left
        .windows(2)
        .chain(right.windows(2))
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let m = gaps.len() / 2;
    Some(if gaps.len() % 2 == 1 { gaps[m] } else { 0.5 * (gaps[m - 1] + gaps[m]) })
}

/// Merges two devices' sorted peak times: peaks are matched greedily by nearest
/// distance within `0.4 ·` the pooled median stride period, matched pairs are
/// averaged and unmatched peaks are kept.
pub fn average_stride_times(left: &[f64], right: &[f64]) -> Vec<f64> {
    let period = median_period(left, right).unwrap_or(NOMINAL_STRIDE_PERIOD_S);
    average_stride_times_within(left, right, MATCH_FRACTION * period)
}

pub fn average_stride_times_within(left: &[f64], right: &[f64], window: f64) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &a) in left.iter().enumerate() {
        // both lists are sorted, so only a window of candidates can match
        let lo = right.partition_point(|&b| b < a - window);
        for (j, &b) in right.iter().enumerate().skip(lo) {
            if b > a + window {
                break;
            }
            pairs.push(((a - b).abs(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_l = vec![false; left.len()];
    let mut used_r = vec![false; right.len()];
    let mut out = Vec::with_capacity(left.len().max(right.len()));
    for (_, i, j) in pairs {
        if !used_l[i] && !used_r[j] {
            used_l[i] = true;
            used_r[j] = true;
            out.push(0.5 * (left[i] + right[j]));
        }
    }
    out.extend(left.iter().zip(&used_l).filter(|(_, u)| !**u).map(|(t, _)| *t));
    out.extend(right.iter().zip(&used_r).filter(|(_, u)| !**u).map(|(t, _)| *t));
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pair_averaged() {
        assert_eq!(average_stride_times(&[1.0], &[1.1]), vec![1.05]);
    }

    #[test]
    fn identical_lists_unchanged() {
        let l = [0.25, 0.75, 1.25, 1.75];
        assert_eq!(average_stride_times(&l, &l), l.to_vec());
    }

    #[test]
    fn missed_step_kept() {
        let l = [0.25, 0.75, 1.25, 1.75];
        let r = [0.27, 1.27, 1.73];
        let m = average_stride_times(&l, &r);
        assert_eq!(m.len(), 4);
        assert!((m[1] - 0.75).abs() < 1e-12);
        assert!((m[0] - 0.26).abs() < 1e-12);
    }

    #[test]
    fn far_peaks_not_matched() {
        let m = average_stride_times(&[0.0, 0.5, 1.0], &[0.25]);
        assert_eq!(m, vec![0.0, 0.25, 0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn every_peak_accounted_for(l in proptest::collection::vec(0.0f64..30.0, 0..40), r in proptest::collection::vec(0.0f64..30.0, 0..40)) {
            let mut l = l; l.sort_by(f64::total_cmp);
            let mut r = r; r.sort_by(f64::total_cmp);
            let m = average_stride_times(&l, &r);
            // each merged peak consumes one or two inputs
            prop_assert!(m.len() >= l.len().max(r.len()) && m.len() <= l.len() + r.len());
            prop_assert!(m.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
