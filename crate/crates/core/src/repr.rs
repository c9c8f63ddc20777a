//! Ordered, prefix-refinable representations.
//!
//! A representation is an `N × d` token matrix split into `K` contiguous
//! chunks by a strictly increasing list of token counts. Level `ℓ` (1-based)
//! means the first `ℓ` chunks are available; level 0 exists only as the
//! receiver's empty starting state.

use crate::kernel::Matrix;
use crate::{Error, Result};

/// Cumulative token counts for `k_levels` near-equal chunks of `n_tokens`.
///
/// Earlier chunks absorb the remainder, so `(10, 4) -> [3, 6, 8, 10]`.
pub fn make_boundaries(n_tokens: usize, k_levels: usize) -> Result<Vec<usize>> {
    if k_levels == 0 || k_levels > n_tokens {
        return Err(Error::config(format!(
            "cannot split {n_tokens} tokens into {k_levels} levels"
        )));
    }
    let base = n_tokens / k_levels;
    let extra = n_tokens % k_levels;
    let mut acc = 0;
    Ok((0..k_levels)
        .map(|i| {
            acc += base + usize::from(i < extra);
            acc
        })
        .collect())
}

fn validate_boundaries(boundaries: &[usize], n_tokens: usize) -> Result<()> {
    if boundaries.is_empty() {
        return Err(Error::config("at least one level boundary is required"));
    }
    if boundaries.last() != Some(&n_tokens) {
        return Err(Error::config(format!(
            "last boundary {:?} must equal token count {n_tokens}",
            boundaries.last()
        )));
    }
    let mut prev = 0;
    for &b in boundaries {
        if b <= prev {
            return Err(Error::config(format!(
                "boundaries must be strictly increasing and positive: {boundaries:?}"
            )));
        }
        prev = b;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderedRepr {
    tokens: Matrix,
    boundaries: Vec<usize>,
}

impl OrderedRepr {
    pub fn new(tokens: Matrix, boundaries: Vec<usize>) -> Result<Self> {
        validate_boundaries(&boundaries, tokens.rows())?;
        if !tokens.is_finite() {
            return Err(Error::argument("representation contains non-finite values"));
        }
        Ok(OrderedRepr { tokens, boundaries })
    }

    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn levels(&self) -> usize {
        self.boundaries.len()
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels() {
            return Err(Error::argument(format!(
                "level {level} outside 1..={}",
                self.levels()
            )));
        }
        Ok(())
    }

    /// Token matrix with every row at or beyond the level-`ℓ` boundary zeroed.
    pub fn prefix_mask(&self, level: usize) -> Result<Matrix> {
        self.check_level(level)?;
        Ok(mask_rows(&self.tokens, self.boundaries[level - 1]))
    }

    /// Rows of the `ℓ`-th chunk.
    pub fn chunk_at(&self, level: usize) -> Result<Matrix> {
        self.check_level(level)?;
        let (start, end) = chunk_range(&self.boundaries, level);
        Ok(self.tokens.slice_rows(start, end))
    }

    /// Rows of chunks `first..=last` concatenated.
    pub fn chunks(&self, first: usize, last: usize) -> Result<Matrix> {
        self.check_level(first)?;
        self.check_level(last)?;
        if first > last {
            return Err(Error::argument(format!("empty chunk range {first}..={last}")));
        }
        let start = chunk_range(&self.boundaries, first).0;
        let end = self.boundaries[last - 1];
        Ok(self.tokens.slice_rows(start, end))
    }
}

/// `[start, end)` token rows of chunk `level` (1-based).
pub fn chunk_range(boundaries: &[usize], level: usize) -> (usize, usize) {
    let start = if level == 1 { 0 } else { boundaries[level - 2] };
    (start, boundaries[level - 1])
}

/// Copy of `tokens` with rows `keep..` set to exactly zero.
pub fn mask_rows(tokens: &Matrix, keep: usize) -> Matrix {
    let mut out = tokens.clone();
    let cols = out.cols();
    out.data_mut()[keep * cols..].iter_mut().for_each(|v| *v = 0.0);
    out
}

/// Receiver-side accumulation of chunks.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialRepr {
    level: usize,
    width: usize,
    received: Matrix,
    boundaries: Vec<usize>,
}

impl PartialRepr {
    pub fn empty(boundaries: Vec<usize>, width: usize) -> Result<Self> {
        let n = *boundaries
            .last()
            .ok_or_else(|| Error::config("at least one level boundary is required"))?;
        validate_boundaries(&boundaries, n)?;
        Ok(PartialRepr {
            level: 0,
            width,
            received: Matrix::zeros(0, width),
            boundaries,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn levels(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn received(&self) -> &Matrix {
        &self.received
    }

    pub fn is_complete(&self) -> bool {
        self.level == self.levels()
    }

    /// Appends the next chunk. Its row count must equal the next level's increment.
    pub fn accumulate(&self, chunk: &Matrix) -> Result<PartialRepr> {
        if self.is_complete() {
            return Err(Error::protocol(format!(
                "all {} levels already received",
                self.levels()
            )));
        }
        let next = self.level + 1;
        let (start, end) = chunk_range(&self.boundaries, next);
        if chunk.rows() != end - start || chunk.cols() != self.width {
            return Err(Error::protocol(format!(
                "chunk for level {next} must be {}x{}, got {}x{}",
                end - start,
                self.width,
                chunk.rows(),
                chunk.cols()
            )));
        }
        Ok(PartialRepr {
            level: next,
            width: self.width,
            received: Matrix::vstack(&[&self.received, chunk]),
            boundaries: self.boundaries.clone(),
        })
    }

    /// Accepts a chunk labelled with its level; anything but `level + 1` is
    /// an ordering violation.
    pub fn accept(&self, level: usize, chunk: &Matrix) -> Result<PartialRepr> {
        if level != self.level + 1 {
            return Err(Error::protocol(format!(
                "expected chunk for level {}, got level {level}",
                self.level + 1
            )));
        }
        self.accumulate(chunk)
    }

    /// Full-length `N × d` decoder input: received rows then zero padding.
    pub fn masked_input(&self) -> Result<Matrix> {
        if self.level == 0 {
            return Err(Error::protocol("nothing received yet"));
        }
        let n = *self.boundaries.last().unwrap();
        let pad = Matrix::zeros(n - self.received.rows(), self.width);
        Ok(Matrix::vstack(&[&self.received, &pad]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn repr(n: usize, d: usize, k: usize) -> OrderedRepr {
        let tokens = Matrix::from_fn(n, d, |r, c| (r * d + c) as f64 + 1.0);
        OrderedRepr::new(tokens, make_boundaries(n, k).unwrap()).unwrap()
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(make_boundaries(64, 4).unwrap(), vec![16, 32, 48, 64]);
        assert_eq!(make_boundaries(7, 1).unwrap(), vec![7]);
        assert_eq!(make_boundaries(10, 4).unwrap(), vec![3, 6, 8, 10]);
        assert!(make_boundaries(3, 4).is_err());
        assert!(make_boundaries(3, 0).is_err());
    }

    #[test]
    fn invalid_boundaries_rejected() {
        let t = Matrix::zeros(4, 2);
        assert!(OrderedRepr::new(t.clone(), vec![2, 2, 4]).is_err());
        assert!(OrderedRepr::new(t.clone(), vec![1, 3]).is_err());
        assert!(OrderedRepr::new(t, vec![]).is_err());
    }

    #[test]
    fn prefix_mask_semantics() {
        let r = repr(4, 3, 4);
        assert_eq!(&r.prefix_mask(4).unwrap(), r.tokens());
        let m = r.prefix_mask(2).unwrap();
        assert_eq!(m.row(0), r.tokens().row(0));
        assert_eq!(m.row(1), r.tokens().row(1));
        assert!(m.row(2).iter().chain(m.row(3)).all(|&v| v == 0.0));
        assert!(r.prefix_mask(0).is_err());
        assert!(r.prefix_mask(5).is_err());
    }

    #[test]
    fn chunk_at_quartiles() {
        let r = repr(64, 2, 4);
        let c = r.chunk_at(3).unwrap();
        assert_eq!(c, r.tokens().slice_rows(32, 48));
        let single = repr(5, 2, 1);
        assert_eq!(&single.chunk_at(1).unwrap(), single.tokens());
        assert!(r.chunk_at(5).is_err());
        assert_eq!(r.chunks(1, 2).unwrap(), r.tokens().slice_rows(0, 32));
    }

    #[test]
    fn out_of_order_chunk_is_protocol_error() {
        let r = repr(8, 2, 4);
        let p = PartialRepr::empty(r.boundaries().to_vec(), 2).unwrap();
        let p1 = p.accept(1, &r.chunk_at(1).unwrap()).unwrap();
        assert_eq!(p1.level(), 1);
        assert!(matches!(p1.accept(3, &r.chunk_at(3).unwrap()), Err(Error::Protocol(_))));
        assert!(matches!(p1.accept(1, &r.chunk_at(1).unwrap()), Err(Error::Protocol(_))));
        assert!(matches!(
            p1.accumulate(&Matrix::zeros(3, 2)),
            Err(Error::Protocol(_))
        ));
        assert!(p.masked_input().is_err());
    }

    proptest! {
        #[test]
        fn reassembly_matches_prefix_mask(n in 1usize..40, k_frac in 0.0f64..1.0, d in 1usize..5) {
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let r = repr(n, d, k);
            let mut p = PartialRepr::empty(r.boundaries().to_vec(), d).unwrap();
            let mut prev_rows: Option<Matrix> = None;
            for level in 1..=k {
                p = p.accumulate(&r.chunk_at(level).unwrap()).unwrap();
                prop_assert_eq!(p.masked_input().unwrap(), r.prefix_mask(level).unwrap());
                if let Some(prev) = &prev_rows {
                    prop_assert_eq!(&p.received().slice_rows(0, prev.rows()), prev);
                }
                prev_rows = Some(p.received().clone());
            }
            prop_assert_eq!(p.received(), r.tokens());
            prop_assert!(p.is_complete());
        }

        #[test]
        fn boundaries_are_balanced(n in 1usize..200, k_frac in 0.0f64..1.0) {
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let b = make_boundaries(n, k).unwrap();
            prop_assert_eq!(b.len(), k);
            prop_assert_eq!(*b.last().unwrap(), n);
            let incs: Vec<usize> = b.iter().scan(0, |prev, &x| { let d = x - *prev; *prev = x; Some(d) }).collect();
            let (lo, hi) = (incs.iter().min().unwrap(), incs.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert!(incs.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn masked_output_ignores_tail(level in 1usize..=4, bump in -5.0f64..5.0, row in 0usize..8) {
            let r = repr(8, 3, 4);
            let keep = r.boundaries()[level - 1];
            let mut t = r.tokens().clone();
            for v in t.row_mut(row) { *v += bump; }
            let perturbed = OrderedRepr::new(t, r.boundaries().to_vec()).unwrap();
            if row >= keep {
                prop_assert_eq!(perturbed.prefix_mask(level).unwrap(), r.prefix_mask(level).unwrap());
            }
        }
    }
}
