//! Fixed-size subset enumeration in colexicographic order.

/// Enumerates the `k`-subsets of `0..n` as index slices, in colex order
/// (ordered by largest element first): for `k = 2`, `{0,1}, {0,2}, {1,2},
/// {0,3}, ...`. Yields exactly one empty subset when `k = 0`.
#[derive(Debug, Clone)]
pub struct Colex {
    n: usize,
    idx: Vec<usize>,
    started: bool,
    done: bool,
}

impl Colex {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, idx: (0..k).collect(), started: false, done: k > n }
    }

    /// Advances to the next subset; `None` once exhausted.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.idx);
        }
        let k = self.idx.len();
        let mut t = 0;
        while t < k {
            let limit = if t + 1 < k { self.idx[t + 1] } else { self.n };
            if self.idx[t] + 1 < limit {
                self.idx[t] += 1;
                for (r, v) in self.idx[..t].iter_mut().enumerate() {
                    *v = r;
                }
                return Some(&self.idx);
            }
            t += 1;
        }
        self.done = true;
        None
    }
}

/// Binomial coefficient saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut c = Colex::new(n, k);
        let mut out = Vec::new();
        while let Some(s) = c.next() {
            out.push(s.to_vec());
        }
        out
    }

    #[test]
    fn colex_order_pairs() {
        assert_eq!(
            collect(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 3], vec![1, 3], vec![2, 3]]
        );
    }

    #[test]
    fn counts_match_binomial() {
        for n in 0..8 {
            for k in 0..=n + 1 {
                assert_eq!(collect(n, k).len() as u128, binomial(n, k), "n={n} k={k}");
            }
        }
        assert_eq!(collect(0, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(18, 2), 153);
        assert_eq!(binomial(30, 15), 155_117_520);
        assert_eq!(binomial(3, 5), 0);
    }
}
