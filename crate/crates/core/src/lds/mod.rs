//! Sobol low-discrepancy points in the unit cube, Gray-code ordered.
//!
//! Coordinates are carried as 52-bit fixed-point integers and converted to
//! `f64` on emission, which is exact, so sequences are bit-identical across
//! platforms. The sequence starts at the origin (index 0): every prefix whose
//! length is a power of two is then a (0, m, 1)-net in each coordinate.

mod joe_kuo;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest supported dimension.
pub const MAX_DIM: usize = joe_kuo::TABLE.len() + 1;

/// Bits of fixed-point precision per coordinate.
const BITS: usize = 52;
const SCALE: f64 = (1u64 << BITS) as f64;

/// Direction numbers `v[k]` for one coordinate, already shifted into the
/// 52-bit fixed-point frame.
fn directions(coord: usize) -> [u64; BITS] {
    let mut v = [0u64; BITS];
    if coord == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1u64 << (BITS - 1 - k);
        }
        return v;
    }
    let (degree, coeffs, m) = joe_kuo::TABLE[coord - 1];
    let s = degree as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (coeffs >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::UnsupportedDimension { dim, max: MAX_DIM });
    }
    Ok(())
}

/// Incremental Gray-code Sobol generator.
///
/// Each call to [`SobolGenerator::next_point`] flips one direction number per
/// coordinate. A generator is single-owner; create one per thread.
#[derive(Clone, Debug)]
pub struct SobolGenerator {
    dim: usize,
    dirs: Vec<[u64; BITS]>,
    state: Vec<u64>,
    index: u64,
}

impl SobolGenerator {
    pub fn new(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            dirs: (0..dim).map(directions).collect(),
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the point the next call will return.
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = 0);
        self.index = 0;
    }

    /// Writes the current point into `out` and advances.
    pub fn next_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if self.index > 0 {
            let c = self.index.trailing_zeros() as usize;
            assert!(c < BITS, "Sobol sequence exhausted at 2^52 points");
            for (s, v) in self.state.iter_mut().zip(&self.dirs) {
                *s ^= v[c];
            }
        }
        for (o, &s) in out.iter_mut().zip(&self.state) {
            *o = s as f64 / SCALE;
        }
        self.index += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.next_into(&mut out);
        out
    }

    /// Random access: the `index`-th point, computed from the Gray code of
    /// `index` without touching the generator state.
    pub fn point_at(&self, index: u64) -> Vec<f64> {
        let gray = index ^ (index >> 1);
        self.dirs
            .iter()
            .map(|v| {
                let mut x = 0u64;
                let mut g = gray;
                let mut k = 0;
                while g != 0 {
                    if g & 1 == 1 {
                        x ^= v[k];
                    }
                    g >>= 1;
                    k += 1;
                }
                x as f64 / SCALE
            })
            .collect()
    }
}

/// The first `n` points of the `dim`-dimensional sequence, one per row.
pub fn sobol_prefix(n: usize, dim: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::invalid("sobol_prefix needs n >= 1"));
    }
    let mut gen = SobolGenerator::new(dim)?;
    let mut out = Matrix::zeros(n, dim);
    for i in 0..n {
        gen.next_into(out.row_mut(i));
    }
    Ok(out)
}

/// The `index`-th point of the `dim`-dimensional sequence.
pub fn sobol_point(index: u64, dim: usize) -> Result<Vec<f64>> {
    Ok(SobolGenerator::new(dim)?.point_at(index))
}
