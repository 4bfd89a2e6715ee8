/// Sparse coupling between the atoms of one measure (rows) and a set of
/// target points (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    /// Keeps entries with mass above `threshold`, sorted by (row, col).
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>, threshold: f64) -> Self {
        entries.retain(|e| e.2 > threshold);
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        debug_assert!(entries.iter().all(|e| e.0 < rows && e.1 < cols));
        Self { rows, cols, entries }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(j, _, m) in &self.entries {
            s[j] += m;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, k, m) in &self.entries {
            s[k] += m;
        }
        s
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// `Σ c[j, k] γ[j, k]` for a dense row-major cost matrix.
    pub fn cost(&self, matrix: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, k, m)| matrix[j * self.cols + k] * m).sum()
    }
}
