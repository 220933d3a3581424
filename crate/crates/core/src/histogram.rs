// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fixed-width histogram over the real line. Bin `i` covers
/// `[i * width, (i + 1) * width)`; only occupied bins are stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `(bin index, weighted count)`, sorted by index.
    pub bins: Vec<(i64, f64)>,
}

impl Histogram {
    pub fn empty(bin_width: f64) -> Self {
        Histogram {
            bin_width,
            bins: Vec::new(),
        }
    }

    /// Builds a histogram from `(value, weight)` pairs.
    ///
    /// Contributions are sorted before summation, so the result is bitwise
    /// independent of the input order.
    pub fn from_weighted<I>(bin_width: f64, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::param("bin_width", "must be positive and finite"));
        }
        let mut keyed: Vec<(i64, f64)> = samples
            .into_iter()
            .filter(|(x, _)| x.is_finite())
            .map(|(x, w)| ((x / bin_width).floor() as i64, w))
            .collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut bins: Vec<(i64, f64)> = Vec::new();
        for (k, w) in keyed {
            match bins.last_mut() {
                Some((last, acc)) if *last == k => *acc += w,
                _ => bins.push((k, w)),
            }
        }
        Ok(Histogram { bin_width, bins })
    }

    pub fn from_values<I: IntoIterator<Item = f64>>(bin_width: f64, values: I) -> Result<Self> {
        Self::from_weighted(bin_width, values.into_iter().map(|x| (x, 1.0)))
    }

    pub fn center(&self, index: i64) -> f64 {
        (index as f64 + 0.5) * self.bin_width
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().map(|(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    /// `(center, count)` pairs with empty bins between the first and last
    /// occupied bin filled in as zero.
    pub fn dense(&self) -> Vec<(f64, f64)> {
        let (Some(first), Some(last)) = (self.bins.first(), self.bins.last()) else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity((last.0 - first.0 + 1) as usize);
        let mut it = self.bins.iter().peekable();
        for k in first.0..=last.0 {
            let c = match it.peek() {
                Some((idx, c)) if *idx == k => {
                    it.next();
                    *c
                }
                _ => 0.0,
            };
            out.push((self.center(k), c));
        }
        out
    }

    /// Merges another histogram with the same bin width (order independent).
    pub fn merge(&self, other: &Histogram) -> Result<Histogram> {
        if self.bin_width != other.bin_width {
            return Err(Error::param(
                "bin_width",
                "histograms must share a bin width",
            ));
        }
        let mut bins = self.bins.clone();
        bins.extend_from_slice(&other.bins);
        bins.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut out: Vec<(i64, f64)> = Vec::new();
        for (k, w) in bins {
            match out.last_mut() {
                Some((last, acc)) if *last == k => *acc += w,
                _ => out.push((k, w)),
            }
        }
        Ok(Histogram {
            bin_width: self.bin_width,
            bins: out,
        })
    }

    pub fn to_csv(&self, x_name: &str, y_name: &str) -> String {
        let mut s = format!("{x_name},{y_name}\n");
        for (c, n) in self.dense() {
            s.push_str(&format!("{c},{n}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_and_totals() {
        let h = Histogram::from_values(1.0, [0.2, 0.7, 1.5, -0.5]).unwrap();
        assert_eq!(h.bins, vec![(-1, 1.0), (0, 2.0), (1, 1.0)]);
        assert_eq!(h.total(), 4.0);
        assert_eq!(h.center(0), 0.5);
    }

    #[test]
    fn dense_fills_gaps() {
        let h = Histogram::from_values(1.0, [0.5, 3.5]).unwrap();
        let d = h.dense();
        assert_eq!(d.len(), 4);
        assert_eq!(d[1], (1.5, 0.0));
    }

    #[test]
    fn rejects_bad_width() {
        assert!(Histogram::from_values(0.0, [1.0]).is_err());
        assert!(Histogram::from_values(-1.0, [1.0]).is_err());
    }
}
