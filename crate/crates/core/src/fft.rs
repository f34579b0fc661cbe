//! Thin multi-dimensional wrapper over `rustfft` for row-major tensor data.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many points a 2D pass stays on the calling thread.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 15;

struct AxisPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Unnormalized forward/inverse transforms over a fixed shape of one or two axes.
///
/// Forward uses `exp(-i...)`, inverse `exp(+i...)`; neither scales.
pub struct FftNd {
    dims: Vec<usize>,
    axes: Vec<AxisPlans>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let axes = dims
            .iter()
            .map(|&n| AxisPlans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
            .collect::<Vec<_>>();
        let scratch_len = axes
            .iter()
            .map(|p| {
                p.forward
                    .get_inplace_scratch_len()
                    .max(p.inverse.get_inplace_scratch_len())
            })
            .max()
            .unwrap_or(0);
        let transpose = if dims.len() > 1 {
            vec![Complex64::default(); dims.iter().product()]
        } else {
            Vec::new()
        };
        Self {
            dims: dims.to_vec(),
            axes,
            scratch: vec![Complex64::default(); scratch_len],
            transpose,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.run(data, FftDirection::Forward);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.run(data, FftDirection::Inverse);
    }

    fn run(&mut self, data: &mut [Complex64], dir: FftDirection) {
        assert_eq!(data.len(), self.len(), "buffer does not match transform shape");
        match self.dims.len() {
            1 => {
                let plan = self.plan(0, dir);
                plan.process_with_scratch(data, &mut self.scratch);
            }
            2 => {
                let (nx, ny) = (self.dims[0], self.dims[1]);
                // rows (contiguous y lines)
                let plan_y = self.plan(1, dir);
                lines(&plan_y, data, ny, &mut self.scratch);
                // columns via transpose
                transpose(data, &mut self.transpose, nx, ny);
                let plan_x = self.plan(0, dir);
                lines(&plan_x, &mut self.transpose, nx, &mut self.scratch);
                transpose(&self.transpose, data, ny, nx);
            }
            d => unreachable!("unsupported dimension {d}"),
        }
    }

    fn plan(&self, axis: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
        match dir {
            FftDirection::Forward => self.axes[axis].forward.clone(),
            FftDirection::Inverse => self.axes[axis].inverse.clone(),
        }
    }
}

fn lines(plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64], len: usize, scratch: &mut [Complex64]) {
    #[cfg(feature = "parallel")]
    if data.len() >= PAR_THRESHOLD && data.len() / len > 1 {
        let rows_per_chunk = (data.len() / len / rayon::current_num_threads().max(1)).max(1);
        data.par_chunks_mut(rows_per_chunk * len).for_each_init(
            || vec![Complex64::default(); plan.get_inplace_scratch_len()],
            |scratch, chunk| plan.process_with_scratch(chunk, scratch),
        );
        return;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = len;
    plan.process_with_scratch(data, scratch);
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for (c, v) in row.iter().enumerate() {
            dst[c * rows + r] = *v;
        }
    }
}
