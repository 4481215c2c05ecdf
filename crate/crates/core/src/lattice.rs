//! Integer boxes in `Z^d` and dense real arrays over them.
//!
//! Storage is row-major with the last axis contiguous, so every hot loop in
//! the crate runs over "rows": all coordinates fixed except the last one.

use serde::{Deserialize, Serialize};

/// Axis-aligned box `[lo, hi]` in `Z^d`, bounds inclusive. Empty when any
/// `hi[i] < lo[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box corners differ in dimension");
        assert!(!lo.is_empty(), "zero-dimensional box");
        LatticeBox { lo, hi }
    }

    /// One-dimensional interval `[lo, hi]`.
    pub fn interval(lo: i64, hi: i64) -> Self {
        LatticeBox::new(vec![lo], vec![hi])
    }

    pub fn cube(dim: usize, lo: i64, hi: i64) -> Self {
        LatticeBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn point(x: &[i64]) -> Self {
        LatticeBox::new(x.to_vec(), x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| h < l)
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1).max(0) as usize
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn contains_point(&self, x: &[i64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(c, (l, h))| l <= c && c <= h)
    }

    /// True when `other` lies inside `self`. Empty boxes are contained everywhere.
    pub fn contains(&self, other: &LatticeBox) -> bool {
        other.is_empty() || (0..self.dim()).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.extent(a + 1);
        }
        s
    }

    /// Flat row-major index of `x`, if inside.
    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if !self.contains_point(x) {
            return None;
        }
        let mut idx = 0usize;
        for a in 0..self.dim() {
            idx = idx * self.extent(a) + (x[a] - self.lo[a]) as usize;
        }
        Some(idx)
    }

    /// Coordinates of the flat index `idx`.
    pub fn coords(&self, mut idx: usize) -> Vec<i64> {
        let d = self.dim();
        let mut x = vec![0i64; d];
        for a in (0..d).rev() {
            let e = self.extent(a);
            x[a] = self.lo[a] + (idx % e) as i64;
            idx /= e;
        }
        x
    }

    /// `[lo + lo_shift, hi + hi_shift]` per axis.
    pub fn expand(&self, lo_shift: &[i64], hi_shift: &[i64]) -> LatticeBox {
        LatticeBox::new(
            self.lo.iter().zip(lo_shift).map(|(l, s)| l + s).collect(),
            self.hi.iter().zip(hi_shift).map(|(h, s)| h + s).collect(),
        )
    }

    pub fn translate(&self, by: &[i64]) -> LatticeBox {
        self.expand(by, by)
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &LatticeBox) -> LatticeBox {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        LatticeBox::new(
            self.lo.iter().zip(&other.lo).map(|(a, b)| *a.min(b)).collect(),
            self.hi.iter().zip(&other.hi).map(|(a, b)| *a.max(b)).collect(),
        )
    }

    pub fn intersect(&self, other: &LatticeBox) -> LatticeBox {
        LatticeBox::new(
            self.lo.iter().zip(&other.lo).map(|(a, b)| *a.max(b)).collect(),
            self.hi.iter().zip(&other.hi).map(|(a, b)| *a.min(b)).collect(),
        )
    }

    /// Every lattice point, row-major.
    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |i| self.coords(i))
    }

    /// Row prefixes (all coordinates except the last), row-major. A 1-D box
    /// has exactly one empty prefix.
    pub fn row_prefixes(&self) -> Vec<Vec<i64>> {
        let d = self.dim();
        if self.is_empty() {
            return Vec::new();
        }
        if d == 1 {
            return vec![Vec::new()];
        }
        let head = LatticeBox::new(self.lo[..d - 1].to_vec(), self.hi[..d - 1].to_vec());
        head.points().collect()
    }

    pub fn row_len(&self) -> usize {
        self.extent(self.dim() - 1)
    }
}

/// Dense real values over a [`LatticeBox`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bx: LatticeBox,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(bx: LatticeBox) -> Self {
        let n = bx.len();
        Grid { bx, data: vec![0.0; n] }
    }

    pub fn constant(bx: LatticeBox, c: f64) -> Self {
        let n = bx.len();
        Grid { bx, data: vec![c; n] }
    }

    pub fn from_fn(bx: LatticeBox, mut f: impl FnMut(&[i64]) -> f64) -> Self {
        let data = bx.points().map(|x| f(&x)).collect();
        Grid { bx, data }
    }

    pub fn from_vec(bx: LatticeBox, data: Vec<f64>) -> Self {
        assert_eq!(bx.len(), data.len(), "grid data length mismatch");
        Grid { bx, data }
    }

    pub fn bounds(&self) -> &LatticeBox {
        &self.bx
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: &[i64]) -> Option<f64> {
        self.bx.index(x).map(|i| self.data[i])
    }

    /// Value at `x`; panics outside the box.
    pub fn at(&self, x: &[i64]) -> f64 {
        match self.get(x) {
            Some(v) => v,
            None => panic!("point {x:?} outside grid box {:?}", self.bx),
        }
    }

    pub fn set(&mut self, x: &[i64], v: f64) {
        let i = self
            .bx
            .index(x)
            .unwrap_or_else(|| panic!("point {x:?} outside grid box {:?}", self.bx));
        self.data[i] = v;
    }

    /// Flat offset of the start of the row with this prefix and last
    /// coordinate `last`.
    pub(crate) fn row_offset(&self, prefix: &[i64], last: i64) -> usize {
        let d = self.bx.dim();
        let mut idx = 0usize;
        for a in 0..d - 1 {
            idx = idx * self.bx.extent(a) + (prefix[a] - self.bx.lo[a]) as usize;
        }
        idx * self.bx.extent(d - 1) + (last - self.bx.lo[d - 1]) as usize
    }

    /// Copy of the values on `sub`, which must lie inside this grid.
    pub fn restrict(&self, sub: &LatticeBox) -> Option<Grid> {
        if !self.bx.contains(sub) {
            return None;
        }
        let mut out = Grid::zeros(sub.clone());
        if sub.is_empty() {
            return Some(out);
        }
        let len = sub.row_len();
        let last_lo = sub.lo()[sub.dim() - 1];
        for (r, prefix) in sub.row_prefixes().iter().enumerate() {
            let src = self.row_offset(prefix, last_lo);
            out.data[r * len..(r + 1) * len].copy_from_slice(&self.data[src..src + len]);
        }
        Some(out)
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        assert_eq!(self.bx, other.bx, "grids over different boxes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
