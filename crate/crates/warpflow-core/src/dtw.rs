//! Dynamic time warping over scalar sequences.
//!
//! The distance is the classic symmetric three-way recurrence with unit
//! weights and absolute-difference local cost:
//!
//! ```text
//! D(i,j) = |x[i] - y[j]| + min(D(i-1,j), D(i,j-1), D(i-1,j-1))
//! ```
//!
//! with `D(0,0) = |x[0] - y[0]|` and out-of-range predecessors treated as
//! infinite. Distances are reported unnormalized (no division by path
//! length). An optional Sakoe-Chiba band restricts admissible cells to
//! `|i - j| <= radius`.
//!
//! [`dtw_distance`] uses a two-row rolling buffer; [`cost_matrix`] and
//! [`warp_path`] materialize the full grid. [`dtw_bruteforce`] enumerates
//! every admissible path and exists purely as an independent check for
//! small inputs.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DtwError {
    #[error("dynamic time warping requires non-empty series")]
    EmptySeries,
    #[error("band radius {radius} cannot connect series of lengths {n} and {m} (needs radius >= {})", n.abs_diff(*m))]
    InfeasibleBand { radius: usize, n: usize, m: usize },
    #[error("brute-force enumeration is limited to series of length <= {limit}, got {n} x {m}")]
    TooLarge { n: usize, m: usize, limit: usize },
}

/// Global path constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandConstraint {
    /// Every cell admissible (the default; aligned series here are short).
    #[default]
    None,
    /// Only cells with `|i - j| <= radius` are admissible.
    SakoeChiba { radius: usize },
}

impl BandConstraint {
    pub fn sakoe_chiba(radius: usize) -> Self {
        BandConstraint::SakoeChiba { radius }
    }

    /// A valid path from (0,0) to (n-1,m-1) must exist inside the band.
    fn check(&self, n: usize, m: usize) -> Result<(), DtwError> {
        if n == 0 || m == 0 {
            return Err(DtwError::EmptySeries);
        }
        if let BandConstraint::SakoeChiba { radius } = *self {
            if radius < n.abs_diff(m) {
                return Err(DtwError::InfeasibleBand { radius, n, m });
            }
        }
        Ok(())
    }

    /// Admissible column indices for row `i` (never empty for a feasible band).
    fn column_range(&self, i: usize, m: usize) -> std::ops::Range<usize> {
        match *self {
            BandConstraint::None => 0..m,
            BandConstraint::SakoeChiba { radius } => {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius + 1).min(m);
                lo..hi
            }
        }
    }
}

/// Pointwise cost: absolute difference.
pub fn local_distance(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// Accumulated-cost grid. Cells excluded by the band hold `+inf`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    n: usize,
    m: usize,
    cells: Vec<f64>,
}

impl CostMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.m + j]
    }

    /// The DTW distance: accumulated cost at the terminal cell.
    pub fn distance(&self) -> f64 {
        self.get(self.n - 1, self.m - 1)
    }

    /// Row-major cells, `+inf` where the band excludes a cell.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }
}

/// Monotone, continuous alignment from (0,0) to (n-1,m-1); each step is
/// (+1,0), (0,+1) or (+1,+1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpPath(Vec<(usize, usize)>);

impl WarpPath {
    pub fn steps(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of local distances along the path; equals the DTW distance for
    /// an optimal path.
    pub fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        self.0
            .iter()
            .fold(0.0, |acc, &(i, j)| acc + local_distance(x[i], y[j]))
    }
}

/// DTW distance via the standard recurrence, using a two-row rolling buffer.
pub fn dtw_distance(x: &[f64], y: &[f64], band: BandConstraint) -> Result<f64, DtwError> {
    let (n, m) = (x.len(), y.len());
    band.check(n, m)?;

    let mut prev = vec![f64::INFINITY; m];
    let mut curr = vec![f64::INFINITY; m];

    for i in 0..n {
        curr.fill(f64::INFINITY);
        for j in band.column_range(i, m) {
            let d = local_distance(x[i], y[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let vertical = prev[j];
                let horizontal = if j > 0 { curr[j - 1] } else { f64::INFINITY };
                let diagonal = if j > 0 { prev[j - 1] } else { f64::INFINITY };
                diagonal.min(vertical).min(horizontal)
            };
            curr[j] = d + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m - 1])
}

/// Full accumulated-cost matrix (needed for path extraction and diagnostics).
/// Its terminal cell is bit-identical to [`dtw_distance`].
pub fn cost_matrix(x: &[f64], y: &[f64], band: BandConstraint) -> Result<CostMatrix, DtwError> {
    Ok(forward_pass(x, y, band)?.0)
}

// Predecessor direction chosen during the forward pass. Ties prefer the
// diagonal, then vertical (i-1, j), then horizontal (i, j-1).
const DIR_DIAGONAL: u8 = 0;
const DIR_VERTICAL: u8 = 1;
const DIR_HORIZONTAL: u8 = 2;
const DIR_START: u8 = 3;

fn forward_pass(
    x: &[f64],
    y: &[f64],
    band: BandConstraint,
) -> Result<(CostMatrix, Vec<u8>), DtwError> {
    let (n, m) = (x.len(), y.len());
    band.check(n, m)?;

    let mut cells = vec![f64::INFINITY; n * m];
    let mut dirs = vec![DIR_START; n * m];

    for i in 0..n {
        for j in band.column_range(i, m) {
            let d = local_distance(x[i], y[j]);
            let idx = i * m + j;
            if i == 0 && j == 0 {
                cells[idx] = d;
                continue;
            }
            let vertical = if i > 0 { cells[idx - m] } else { f64::INFINITY };
            let horizontal = if j > 0 { cells[idx - 1] } else { f64::INFINITY };
            let diagonal = if i > 0 && j > 0 {
                cells[idx - m - 1]
            } else {
                f64::INFINITY
            };
            let (best, dir) = if diagonal <= vertical && diagonal <= horizontal {
                (diagonal, DIR_DIAGONAL)
            } else if vertical <= horizontal {
                (vertical, DIR_VERTICAL)
            } else {
                (horizontal, DIR_HORIZONTAL)
            };
            cells[idx] = d + best;
            dirs[idx] = dir;
        }
    }
    Ok((CostMatrix { n, m, cells }, dirs))
}

/// An optimal warping path realizing [`dtw_distance`].
pub fn warp_path(x: &[f64], y: &[f64], band: BandConstraint) -> Result<WarpPath, DtwError> {
    let (matrix, dirs) = forward_pass(x, y, band)?;
    let (n, m) = (matrix.n, matrix.m);

    let mut path = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        path.push((i, j));
        match dirs[i * m + j] {
            DIR_DIAGONAL => {
                i -= 1;
                j -= 1;
            }
            DIR_VERTICAL => i -= 1,
            DIR_HORIZONTAL => j -= 1,
            _ => break, // reached (0,0)
        }
    }
    path.reverse();
    Ok(WarpPath(path))
}

/// Maximum length per series accepted by [`dtw_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 8;

/// Exhaustively enumerate every monotone, continuous, boundary-respecting
/// path and return the minimum summed cost. Deliberately naive; this is the
/// oracle the dynamic program is checked against.
pub fn dtw_bruteforce(x: &[f64], y: &[f64]) -> Result<f64, DtwError> {
    let (n, m) = (x.len(), y.len());
    if n == 0 || m == 0 {
        return Err(DtwError::EmptySeries);
    }
    if n > BRUTEFORCE_LIMIT || m > BRUTEFORCE_LIMIT {
        return Err(DtwError::TooLarge {
            n,
            m,
            limit: BRUTEFORCE_LIMIT,
        });
    }

    fn explore(x: &[f64], y: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + local_distance(x[i], y[j]);
        if i == x.len() - 1 && j == y.len() - 1 {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < x.len() && j + 1 < y.len() {
            explore(x, y, i + 1, j + 1, acc, best);
        }
        if i + 1 < x.len() {
            explore(x, y, i + 1, j, acc, best);
        }
        if j + 1 < y.len() {
            explore(x, y, i, j + 1, acc, best);
        }
    }

    let mut best = f64::INFINITY;
    explore(x, y, 0, 0, 0.0, &mut best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NO_BAND: BandConstraint = BandConstraint::None;

    #[test]
    fn local_distance_is_absolute_difference() {
        assert_eq!(local_distance(0.3, 0.3), 0.0);
        assert_eq!(local_distance(0.0, 1.0), 1.0);
        assert_eq!(local_distance(0.25, 0.75), 0.5);
    }

    #[test]
    fn identical_series_have_zero_distance() {
        let x = [0.0, 0.5, 1.0];
        assert_eq!(dtw_distance(&x, &x, NO_BAND).unwrap(), 0.0);
    }

    #[test]
    fn single_element_series() {
        assert_eq!(dtw_distance(&[4.0], &[9.0], NO_BAND).unwrap(), 5.0);
        assert_eq!(warp_path(&[4.0], &[9.0], NO_BAND).unwrap().steps(), &[(0, 0)]);
    }

    #[test]
    fn shifted_step_aligns_for_free() {
        // [0,0,1] vs [0,1,1]: the warp (0,0),(1,0),(2,1),(2,2) costs 0.
        let x = [0.0, 0.0, 1.0];
        let y = [0.0, 1.0, 1.0];
        assert_eq!(dtw_distance(&x, &y, NO_BAND).unwrap(), 0.0);
        let path = warp_path(&x, &y, NO_BAND).unwrap();
        assert_eq!(path.cost(&x, &y), 0.0);
    }

    #[test]
    fn crossed_pair_costs_two() {
        // [0,1] vs [1,0]: all three admissible paths cost 2.
        assert_eq!(dtw_distance(&[0.0, 1.0], &[1.0, 0.0], NO_BAND).unwrap(), 2.0);
        assert_eq!(dtw_bruteforce(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn empty_series_rejected() {
        assert_eq!(dtw_distance(&[], &[1.0], NO_BAND), Err(DtwError::EmptySeries));
        assert_eq!(dtw_bruteforce(&[1.0], &[]), Err(DtwError::EmptySeries));
    }

    #[test]
    fn infeasible_band_rejected() {
        let err = dtw_distance(&[0.0; 5], &[0.0; 2], BandConstraint::sakoe_chiba(1)).unwrap_err();
        assert_eq!(err, DtwError::InfeasibleBand { radius: 1, n: 5, m: 2 });
    }

    #[test]
    fn bruteforce_rejects_large_inputs() {
        let long = vec![0.0; 9];
        assert!(matches!(
            dtw_bruteforce(&long, &[0.0]),
            Err(DtwError::TooLarge { .. })
        ));
    }

    #[test]
    fn bruteforce_agrees_with_dp_on_small_grid() {
        // Exhaustive over all pairs of lengths 1..=3 with values {0, 0.5, 1};
        // the acceptance suite extends this to lengths 1..=5.
        let values = [0.0, 0.5, 1.0];
        let mut seqs: Vec<Vec<f64>> = Vec::new();
        for len in 1..=3usize {
            let mut idx = vec![0usize; len];
            loop {
                seqs.push(idx.iter().map(|&k| values[k]).collect());
                let mut pos = 0;
                loop {
                    if pos == len {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < values.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == len {
                    break;
                }
            }
        }
        for x in &seqs {
            for y in &seqs {
                let dp = dtw_distance(x, y, NO_BAND).unwrap();
                let brute = dtw_bruteforce(x, y).unwrap();
                assert_eq!(dp, brute, "mismatch for {x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn two_row_and_full_matrix_agree() {
        let x = [0.1, 0.9, 0.4, 0.7, 0.2, 0.55];
        let y = [0.3, 0.8, 0.35, 0.6];
        for band in [NO_BAND, BandConstraint::sakoe_chiba(2), BandConstraint::sakoe_chiba(3)] {
            let rolling = dtw_distance(&x, &y, band).unwrap();
            let full = cost_matrix(&x, &y, band).unwrap().distance();
            assert_eq!(rolling, full);
        }
    }

    #[test]
    fn diagonal_preferred_on_ties() {
        let x = [0.2, 0.4, 0.6, 0.8];
        let path = warp_path(&x, &x, NO_BAND).unwrap();
        let expected: Vec<(usize, usize)> = (0..x.len()).map(|i| (i, i)).collect();
        assert_eq!(path.steps(), expected.as_slice());
    }

    #[test]
    fn path_is_monotone_and_continuous() {
        let x = [0.0, 0.3, 1.0, 0.2, 0.5, 0.5, 0.9];
        let y = [0.1, 0.2, 0.9, 0.8, 0.4];
        let path = warp_path(&x, &y, NO_BAND).unwrap();
        let steps = path.steps();
        assert_eq!(steps.first(), Some(&(0, 0)));
        assert_eq!(steps.last(), Some(&(x.len() - 1, y.len() - 1)));
        for w in steps.windows(2) {
            let di = w[1].0 - w[0].0;
            let dj = w[1].1 - w[0].1;
            assert!(di <= 1 && dj <= 1 && di + dj >= 1, "bad step {w:?}");
        }
    }

    #[test]
    fn path_cost_matches_distance() {
        let x = [0.0, 0.7, 0.2, 1.0, 0.4];
        let y = [0.5, 0.1, 0.8, 0.3];
        let dist = dtw_distance(&x, &y, NO_BAND).unwrap();
        let path = warp_path(&x, &y, NO_BAND).unwrap();
        assert!((path.cost(&x, &y) - dist).abs() <= 1e-9);
    }

    #[test]
    fn widening_band_never_increases_distance() {
        let x = [0.9, 0.1, 0.8, 0.2, 0.7, 0.3];
        let y = [0.1, 0.9, 0.2, 0.8, 0.3, 0.7];
        let unconstrained = dtw_distance(&x, &y, NO_BAND).unwrap();
        let mut last = f64::INFINITY;
        for radius in 0..x.len() {
            let banded = dtw_distance(&x, &y, BandConstraint::sakoe_chiba(radius)).unwrap();
            assert!(banded <= last + 1e-12, "radius {radius} increased the distance");
            assert!(banded + 1e-12 >= unconstrained);
            last = banded;
        }
        // Radius max(n,m)-1 admits every cell.
        let full = dtw_distance(&x, &y, BandConstraint::sakoe_chiba(x.len() - 1)).unwrap();
        assert_eq!(full, unconstrained);
    }

    #[test]
    fn equal_length_diagonal_is_an_upper_bound() {
        let x = [0.2, 0.9, 0.1, 0.6];
        let y = [0.4, 0.3, 0.8, 0.5];
        let diag: f64 = x.iter().zip(&y).map(|(a, b)| local_distance(*a, *b)).sum();
        assert!(dtw_distance(&x, &y, NO_BAND).unwrap() <= diag + 1e-12);
    }
}
