//! Gated minimum-cost bipartite assignment (Kuhn–Munkres with potentials).

use crate::error::{Error, Result};

/// Marker for pairs that must never be matched.
pub const INADMISSIBLE: f64 = f64::INFINITY;

/// Dense row-major cost matrix; rows are tracks, columns detections.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![INADMISSIBLE; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidValue("ragged cost matrix".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn validate(&self) -> Result<()> {
        match self.data.iter().find(|v| !(**v == INADMISSIBLE || (v.is_finite() && **v >= 0.0))) {
            Some(bad) => Err(Error::InvalidValue(format!("cost entry {bad} is neither >= 0 nor inadmissible"))),
            None => Ok(()),
        }
    }
}

/// Matched pairs and leftovers of one assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationResult {
    /// `(row, col, cost)`, ascending by row.
    pub matches: Vec<(usize, usize, f64)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl AssociationResult {
    pub fn all_unmatched(rows: usize, cols: usize) -> Self {
        Self {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        }
    }

    /// Sum of matched costs, accumulated in row order.
    pub fn total_cost(&self) -> f64 {
        self.matches.iter().map(|m| m.2).sum()
    }
}

/// Minimum-cost assignment over the entries not exceeding `gate`.
///
/// Entries above the gate become inadmissible. Among all matchings that use
/// only admissible pairs, the result has the largest number of pairs and,
/// among those, the smallest total cost.
pub fn solve_gated_assignment(costs: &CostMatrix, gate: f64) -> Result<AssociationResult> {
    if !(gate > 0.0 && gate.is_finite()) {
        return Err(Error::InvalidValue(format!("gate {gate} must be finite and > 0")));
    }
    costs.validate()?;
    let (n, m) = (costs.rows, costs.cols);
    if n == 0 || m == 0 {
        return Ok(AssociationResult::all_unmatched(n, m));
    }

    let admissible = |v: f64| v <= gate;
    let max_admissible = costs.data.iter().copied().filter(|v| admissible(*v)).fold(0.0, f64::max);
    // larger than the cost of any matching made of admissible pairs, so
    // adding an admissible pair always beats any cost saving
    let sentinel = (n.min(m) as f64 + 1.0) * max_admissible.max(1.0) + 1.0;
    let gated = |r: usize, c: usize| {
        let v = costs.get(r, c);
        if admissible(v) {
            v
        } else {
            sentinel
        }
    };

    let transposed = n > m;
    let assignment = if transposed {
        kuhn_munkres(m, n, |r, c| gated(c, r))
    } else {
        kuhn_munkres(n, m, gated)
    };

    let mut row_match = vec![None; n];
    for (a, b) in assignment.into_iter().enumerate() {
        let (r, c) = if transposed { (b, a) } else { (a, b) };
        if admissible(costs.get(r, c)) {
            row_match[r] = Some(c);
        }
    }
    let mut col_used = vec![false; m];
    let mut result = AssociationResult::default();
    for (r, slot) in row_match.iter().enumerate() {
        match slot {
            Some(c) => {
                col_used[*c] = true;
                result.matches.push((r, *c, costs.get(r, *c)));
            }
            None => result.unmatched_rows.push(r),
        }
    }
    result.unmatched_cols = (0..m).filter(|c| !col_used[*c]).collect();
    Ok(result)
}

/// Shortest-augmenting-path Hungarian method for `rows <= cols`.
/// Returns the column assigned to each row.
fn kuhn_munkres(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(rows <= cols);
    // 1-based with index 0 as the virtual root, as in the textbook layout
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}
