use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

/// Anderson mixing for fixed-point maps `x -> g(x)`.
///
/// Keeps the last `depth` differences of iterates and residuals and returns
/// the least-squares extrapolated update. `depth = 0` is plain Picard.
#[derive(Clone, Debug)]
pub struct Anderson {
    depth: usize,
    damping: f64,
    last: Option<(DVector<f64>, DVector<f64>)>,
    d_res: VecDeque<DVector<f64>>,
    d_out: VecDeque<DVector<f64>>,
}

impl Anderson {
    pub fn new(depth: usize, damping: f64) -> Self {
        Self {
            depth,
            damping,
            last: None,
            d_res: VecDeque::with_capacity(depth),
            d_out: VecDeque::with_capacity(depth),
        }
    }

    /// Next iterate from the current `x` and `gx = g(x)`.
    pub fn next(&mut self, x: &DVector<f64>, gx: &DVector<f64>) -> DVector<f64> {
        let res = gx - x;
        // damped output x + w (g(x) - x)
        let out = x + &res * self.damping;
        if self.depth == 0 {
            return out;
        }
        if let Some((r0, o0)) = self.last.take() {
            if self.d_res.len() == self.depth {
                self.d_res.pop_front();
                self.d_out.pop_front();
            }
            self.d_res.push_back(&res - r0);
            self.d_out.push_back(&out - o0);
        }
        self.last = Some((res.clone(), out.clone()));
        if self.d_res.is_empty() {
            return out;
        }
        let cols = self.d_res.len();
        let f = DMatrix::from_fn(res.len(), cols, |i, j| self.d_res[j][i]);
        let gamma = match f.svd(true, true).solve(&res, 1e-12) {
            Ok(g) => g,
            Err(_) => return out,
        };
        let mut next = out;
        for (j, g) in gamma.iter().enumerate() {
            next.axpy(-g, &self.d_out[j], 1.0);
        }
        next
    }
}
