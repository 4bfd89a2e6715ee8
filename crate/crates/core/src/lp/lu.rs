//! Sparse LU factorization of the simplex basis with product-form updates.
//!
//! The basis `B` (columns indexed by basis position, rows by constraint) is
//! reduced by Gaussian elimination with Markowitz pivot selection under a
//! threshold test. Singletons are taken first, so triangular bases produce no
//! fill. Basis changes are appended as eta columns until the next refactor.

/// Entries smaller than this are treated as structural zeros.
const DROP_TOL: f64 = 1e-14;
/// A pivot candidate must be at least this fraction of its column maximum.
const MARKOWITZ_THRESHOLD: f64 = 0.1;
const SINGLETON_THRESHOLD: f64 = 0.01;
/// Below this the basis is declared numerically singular.
const SINGULAR_TOL: f64 = 1e-11;
/// Number of smallest columns examined during a Markowitz search.
const SEARCH_COLS: usize = 4;

#[derive(Debug)]
pub(crate) struct Singular {
    /// Rows left without a pivot.
    pub rows: Vec<usize>,
    /// Basis positions whose columns could not be pivoted.
    pub positions: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
struct SparseSeq {
    start: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseSeq {
    fn with_capacity(n: usize) -> Self {
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        Self { start, idx: Vec::new(), val: Vec::new() }
    }

    fn push(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (i, v) in entries {
            self.idx.push(i);
            self.val.push(v);
        }
        self.start.push(self.idx.len());
    }

    #[inline]
    fn get(&self, s: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.start[s], self.start[s + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }

    fn nnz(&self) -> usize {
        self.idx.len()
    }

    fn len(&self) -> usize {
        self.start.len() - 1
    }
}

pub(crate) struct BasisFactor {
    m: usize,
    /// Pivot row per elimination step.
    piv_row: Vec<usize>,
    /// Pivot basis position per elimination step.
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    /// Multipliers of step `s`: `(row, l)` with `x[row] -= l · x[piv_row[s]]`.
    lower: SparseSeq,
    /// Off-diagonal entries of U row `s`, keyed by basis position.
    upper: SparseSeq,
    /// Eta file: replaced position, pivot entry, other entries.
    eta_pos: Vec<usize>,
    eta_piv: Vec<f64>,
    etas: SparseSeq,
}

impl BasisFactor {
    /// Factorizes the `m × m` basis whose column at position `p` is
    /// `column(p)` as `(row, value)` pairs.
    pub fn factorize<'c, F>(m: usize, column: F) -> Result<Self, Singular>
    where
        F: Fn(usize) -> &'c [(usize, f64)],
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for p in 0..m {
            for &(r, v) in column(p) {
                if v.abs() > DROP_TOL {
                    rows[r].push((p, v));
                    cols[p].push(r);
                }
            }
        }

        let mut f = Self {
            m,
            piv_row: Vec::with_capacity(m),
            piv_col: Vec::with_capacity(m),
            piv_val: Vec::with_capacity(m),
            lower: SparseSeq::with_capacity(m),
            upper: SparseSeq::with_capacity(m),
            eta_pos: Vec::new(),
            eta_piv: Vec::new(),
            etas: SparseSeq::with_capacity(16),
        };

        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut bad_cols = Vec::new();
        let mut active_cols: Vec<usize> = (0..m).collect();
        let mut active_rows: Vec<usize> = (0..m).collect();
        let mut slot = vec![usize::MAX; m];

        let value_at = |rows: &[Vec<(usize, f64)>], r: usize, c: usize| -> f64 {
            rows[r].iter().find(|e| e.0 == c).map_or(0.0, |e| e.1)
        };

        while !active_cols.is_empty() {
            active_cols.retain(|&c| col_active[c]);
            active_rows.retain(|&r| row_active[r]);
            if active_cols.is_empty() {
                break;
            }

            // smallest columns, ascending by count then index
            let mut best: Vec<usize> = Vec::with_capacity(SEARCH_COLS);
            for &c in &active_cols {
                let key = (cols[c].len(), c);
                let pos = best.iter().position(|&b| (cols[b].len(), b) > key).unwrap_or(best.len());
                if pos < SEARCH_COLS {
                    best.insert(pos, c);
                    best.truncate(SEARCH_COLS);
                }
            }

            let c0 = best[0];
            let mut pivot: Option<(usize, usize)> = None;
            if cols[c0].is_empty() {
                col_active[c0] = false;
                bad_cols.push(c0);
                continue;
            }
            if cols[c0].len() == 1 {
                let r = cols[c0][0];
                if value_at(&rows, r, c0).abs() > SINGULAR_TOL {
                    pivot = Some((r, c0));
                } else {
                    col_active[c0] = false;
                    bad_cols.push(c0);
                    remove_col(&mut rows, &mut cols, c0);
                    continue;
                }
            }
            if pivot.is_none() {
                for &r in &active_rows {
                    if rows[r].len() == 1 {
                        let (c, v) = rows[r][0];
                        let cmax = cols[c].iter().map(|&i| value_at(&rows, i, c).abs()).fold(0.0, f64::max);
                        if v.abs() > SINGULAR_TOL && v.abs() >= SINGLETON_THRESHOLD * cmax {
                            pivot = Some((r, c));
                            break;
                        }
                    }
                }
            }
            if pivot.is_none() {
                let mut best_cost = usize::MAX;
                let mut best_mag = 0.0;
                for &c in &best {
                    let cmax = cols[c].iter().map(|&i| value_at(&rows, i, c).abs()).fold(0.0, f64::max);
                    if cmax <= SINGULAR_TOL {
                        continue;
                    }
                    let cc = cols[c].len() - 1;
                    for &r in &cols[c] {
                        let v = value_at(&rows, r, c).abs();
                        if v < MARKOWITZ_THRESHOLD * cmax {
                            continue;
                        }
                        let cost = (rows[r].len() - 1) * cc;
                        if cost < best_cost || (cost == best_cost && v > best_mag) {
                            best_cost = cost;
                            best_mag = v;
                            pivot = Some((r, c));
                        }
                    }
                }
                if pivot.is_none() {
                    // every examined column is numerically empty
                    for &c in &best {
                        let cmax = cols[c].iter().map(|&i| value_at(&rows, i, c).abs()).fold(0.0, f64::max);
                        if cmax <= SINGULAR_TOL {
                            col_active[c] = false;
                            bad_cols.push(c);
                            remove_col(&mut rows, &mut cols, c);
                        }
                    }
                    continue;
                }
            }

            let (r, c) = pivot.expect("pivot chosen");
            f.eliminate(r, c, &mut rows, &mut cols, &mut slot);
            row_active[r] = false;
            col_active[c] = false;
        }

        if !bad_cols.is_empty() {
            let rows_left = (0..m).filter(|&r| row_active[r]).collect();
            bad_cols.sort_unstable();
            return Err(Singular { rows: rows_left, positions: bad_cols });
        }
        Ok(f)
    }

    fn eliminate(
        &mut self,
        r: usize,
        c: usize,
        rows: &mut [Vec<(usize, f64)>],
        cols: &mut [Vec<usize>],
        slot: &mut [usize],
    ) {
        let prow = std::mem::take(&mut rows[r]);
        for &(cc, _) in &prow {
            let list = &mut cols[cc];
            if let Some(pos) = list.iter().position(|&i| i == r) {
                list.swap_remove(pos);
            }
        }
        let p = prow.iter().find(|e| e.0 == c).map(|e| e.1).expect("pivot entry");
        let urow: Vec<(usize, f64)> = prow.into_iter().filter(|e| e.0 != c).collect();

        let targets = std::mem::take(&mut cols[c]);
        let mut lentries = Vec::with_capacity(targets.len());
        for i in targets {
            let row = &mut rows[i];
            let at = row.iter().position(|e| e.0 == c).expect("column entry");
            let a_ic = row.swap_remove(at).1;
            let l = a_ic / p;
            lentries.push((i, l));
            for (k, e) in row.iter().enumerate() {
                slot[e.0] = k;
            }
            for &(cc, u) in &urow {
                let s = slot[cc];
                if s != usize::MAX {
                    row[s].1 -= l * u;
                } else {
                    slot[cc] = row.len();
                    row.push((cc, -l * u));
                    cols[cc].push(i);
                }
            }
            for e in row.iter() {
                slot[e.0] = usize::MAX;
            }
            if row.iter().any(|e| e.1.abs() <= DROP_TOL) {
                let (keep, drop): (Vec<_>, Vec<_>) = row.drain(..).partition(|e| e.1.abs() > DROP_TOL);
                *row = keep;
                for (cc, _) in drop {
                    let list = &mut cols[cc];
                    if let Some(pos) = list.iter().position(|&x| x == i) {
                        list.swap_remove(pos);
                    }
                }
            }
        }

        self.piv_row.push(r);
        self.piv_col.push(c);
        self.piv_val.push(p);
        self.lower.push(lentries);
        self.upper.push(urow);
    }

    pub fn num_etas(&self) -> usize {
        self.eta_pos.len()
    }

    pub fn eta_nnz(&self) -> usize {
        self.etas.nnz()
    }

    pub fn factor_nnz(&self) -> usize {
        self.lower.nnz() + self.upper.nnz() + self.m
    }

    /// Solves `B x = a` in place: `a` is indexed by row on entry and by basis
    /// position on exit.
    pub fn ftran(&self, a: &mut [f64], work: &mut [f64]) {
        for s in 0..self.m {
            let v = a[self.piv_row[s]];
            if v != 0.0 {
                let (idx, val) = self.lower.get(s);
                for (&i, &l) in idx.iter().zip(val) {
                    a[i] -= l * v;
                }
            }
        }
        for s in (0..self.m).rev() {
            let (idx, val) = self.upper.get(s);
            let mut acc = a[self.piv_row[s]];
            for (&c, &u) in idx.iter().zip(val) {
                acc -= u * work[c];
            }
            work[self.piv_col[s]] = acc / self.piv_val[s];
        }
        a.copy_from_slice(work);
        for e in 0..self.eta_pos.len() {
            let r = self.eta_pos[e];
            let xr = a[r] / self.eta_piv[e];
            a[r] = xr;
            if xr != 0.0 {
                let (idx, val) = self.etas.get(e);
                for (&i, &w) in idx.iter().zip(val) {
                    a[i] -= w * xr;
                }
            }
        }
    }

    /// Solves `yᵀ B = cᵀ` in place: `c` is indexed by basis position on entry
    /// and by row on exit.
    pub fn btran(&self, c: &mut [f64], work: &mut [f64]) {
        for e in (0..self.eta_pos.len()).rev() {
            let r = self.eta_pos[e];
            let (idx, val) = self.etas.get(e);
            let mut acc = c[r];
            for (&i, &w) in idx.iter().zip(val) {
                acc -= w * c[i];
            }
            c[r] = acc / self.eta_piv[e];
        }
        // wᵀ U = cᵀ, with U rows scattered forward
        for s in 0..self.m {
            let ws = c[self.piv_col[s]] / self.piv_val[s];
            work[self.piv_row[s]] = ws;
            if ws != 0.0 {
                let (idx, val) = self.upper.get(s);
                for (&cc, &u) in idx.iter().zip(val) {
                    c[cc] -= ws * u;
                }
            }
        }
        for s in (0..self.m).rev() {
            let (idx, val) = self.lower.get(s);
            let mut acc = 0.0;
            for (&i, &l) in idx.iter().zip(val) {
                acc += l * work[i];
            }
            work[self.piv_row[s]] -= acc;
        }
        c.copy_from_slice(work);
    }

    /// Records that position `r` now holds the column whose FTRAN image
    /// (against the previous basis) is `w`.
    pub fn update(&mut self, r: usize, w: &[f64]) {
        self.eta_pos.push(r);
        self.eta_piv.push(w[r]);
        self.etas.push(w.iter().enumerate().filter(|&(i, v)| i != r && v.abs() > DROP_TOL).map(|(i, &v)| (i, v)));
        debug_assert_eq!(self.etas.len(), self.eta_pos.len());
    }
}

fn remove_col(rows: &mut [Vec<(usize, f64)>], cols: &mut [Vec<usize>], c: usize) {
    for i in std::mem::take(&mut cols[c]) {
        rows[i].retain(|e| e.0 != c);
    }
}
