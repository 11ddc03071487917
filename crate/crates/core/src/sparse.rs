//! Compressed sparse column storage with a fixed, structurally symmetric
//! pattern built once per mesh.

use std::sync::Arc;

use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
}

impl SparsePattern {
    /// Pattern coupling every pair of dofs that share an element.
    pub fn from_elements(n: usize, elements: &[Vec<usize>]) -> Self {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for dofs in elements {
            for &j in dofs {
                cols[j].extend_from_slice(dofs);
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut c in cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(&c);
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Storage position of entry `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let rows = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        rows.binary_search(&i).ok().map(|k| self.col_ptr[j] + k)
    }

    /// Sub-pattern on the index subset `keep` (ascending). Returns the pattern
    /// and, for each stored entry, its position in `self`.
    pub fn restrict(&self, keep: &[usize]) -> (SparsePattern, Vec<usize>) {
        let mut new_index = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            new_index[i] = k;
        }
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut src = Vec::new();
        for &j in keep {
            for pos in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = new_index[self.row_idx[pos]];
                if r != usize::MAX {
                    row_idx.push(r);
                    src.push(pos);
                }
            }
            col_ptr.push(row_idx.len());
        }
        (
            SparsePattern {
                n: keep.len(),
                col_ptr,
                row_idx,
            },
            src,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub pattern: Arc<SparsePattern>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let vals = vec![0.0; pattern.nnz()];
        Self { pattern, vals }
    }

    pub fn from_dense(a: &nalgebra::DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if a[(i, j)] != 0.0 || a[(j, i)] != 0.0 {
                    row_idx.push(i);
                    vals.push(a[(i, j)]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            pattern: Arc::new(SparsePattern {
                n,
                col_ptr,
                row_idx,
            }),
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.vals[p])
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = &self.pattern;
        let mut y = DVector::zeros(p.n);
        for j in 0..p.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for pos in p.col_ptr[j]..p.col_ptr[j + 1] {
                y[p.row_idx[pos]] += self.vals[pos] * xj;
            }
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let p = &self.pattern;
        let mut a = nalgebra::DMatrix::zeros(p.n, p.n);
        for j in 0..p.n {
            for pos in p.col_ptr[j]..p.col_ptr[j + 1] {
                a[(p.row_idx[pos], j)] = self.vals[pos];
            }
        }
        a
    }

    pub fn frobenius(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `||A - A^T||_F`, valid because the pattern is structurally symmetric.
    pub fn asymmetry(&self) -> f64 {
        let p = &self.pattern;
        let mut s = 0.0;
        for j in 0..p.n {
            for pos in p.col_ptr[j]..p.col_ptr[j + 1] {
                let i = p.row_idx[pos];
                let d = self.vals[pos] - self.get(j, i);
                s += d * d;
            }
        }
        s.sqrt()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| self.get(i, i))
    }

    /// Restriction to a sub-pattern produced by [`SparsePattern::restrict`].
    pub fn restrict(&self, sub: &Arc<SparsePattern>, src: &[usize]) -> SparseMatrix {
        SparseMatrix {
            pattern: sub.clone(),
            vals: src.iter().map(|&p| self.vals[p]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_and_matvec() {
        let pat = Arc::new(SparsePattern::from_elements(
            4,
            &[vec![0, 1], vec![1, 2, 3]],
        ));
        assert_eq!(pat.position(0, 2), None);
        assert!(pat.position(3, 1).is_some());
        let mut a = SparseMatrix::zeros(pat.clone());
        for (i, j, v) in [
            (0, 0, 2.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (1, 1, 2.0),
            (2, 3, 4.0),
            (3, 2, 4.0),
        ] {
            let p = pat.position(i, j).unwrap();
            a.vals[p] += v;
        }
        let y = a.matvec(&DVector::from_vec(vec![1.0, 1.0, 1.0, 2.0]));
        assert_eq!(y.as_slice(), &[1.0, 1.0, 8.0, 4.0]);
        assert_eq!(a.asymmetry(), 0.0);
        assert_eq!(
            a.to_dense(),
            SparseMatrix::from_dense(&a.to_dense()).to_dense()
        );

        let (sub, src) = pat.restrict(&[1, 3]);
        let r = a.restrict(&Arc::new(sub), &src);
        assert_eq!(r.get(0, 0), 2.0);
        assert_eq!(r.get(0, 1), 0.0);
    }
}
