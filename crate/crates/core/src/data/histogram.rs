use super::DataError;

/// Bin edges (`bins + 1` values) and probability densities (`bins` values).
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }
}

/// Normalized histogram over the data range. A constant sample is binned over
/// a unit-width range centred on the value.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram, DataError> {
    if values.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    histogram_in_range(values, bins, lo, hi)
}

/// Normalized histogram over `[lo, hi]`; values outside the range are ignored
/// and the densities integrate to one over the values that fall inside.
pub fn histogram_in_range(
    values: &[f64],
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Histogram, DataError> {
    if values.is_empty() {
        return Err(DataError::EmptyInput);
    }
    if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(DataError::BadHistogramRange { lo, hi, bins });
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let mut idx = ((v - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        // Guard against rounding placing v one bin off its edges.
        while idx > 0 && v < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bins && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(DataError::EmptyInput);
    }
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (total as f64 * (w[1] - w[0])))
        .collect();
    Ok(Histogram { edges, densities })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_single_bin() {
        for bins in [1, 2, 5, 10] {
            let h = histogram(&[3.0; 7], bins).unwrap();
            assert_eq!(h.densities.iter().filter(|d| **d > 0.0).count(), 1);
        }
    }

    #[test]
    fn uniform_grid_two_bins() {
        let values: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let h = histogram(&values[..1000], 2).unwrap();
        assert_eq!(h.densities.len(), 2);
        for d in &h.densities {
            assert!((d - 1.0).abs() < 1e-2, "{d}");
        }
        let even: Vec<f64> = vec![0.0, 0.25, 0.5, 1.0];
        let h = histogram(&even, 2).unwrap();
        assert_eq!(h.densities, vec![1.0, 1.0]);
    }

    #[test]
    fn empty_input_is_error() {
        assert!(matches!(histogram(&[], 3), Err(DataError::EmptyInput)));
        assert!(histogram(&[1.0], 0).is_err());
    }

    #[test]
    fn normalized() {
        let values: Vec<f64> = (0..317).map(|i| ((i * 7919) % 1000) as f64 / 37.0).collect();
        let h = histogram(&values, 13).unwrap();
        let mass: f64 = h.densities.iter().zip(h.widths()).map(|(d, w)| d * w).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }
}
