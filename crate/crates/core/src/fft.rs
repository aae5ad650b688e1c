//! Cached 3D complex FFTs on n³ row-major arrays (index (i*n + j)*n + k).
//!
//! Transforms here are unnormalized; callers fold the 1/n³ into whatever
//! multiplier they apply.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::par;

pub(crate) struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();

pub(crate) fn plan_1d(n: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let planner = PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()));
    planner.lock().unwrap().plan_fft(n, dir)
}

impl Fft3 {
    pub(crate) fn get(n: usize) -> Arc<Fft3> {
        let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        guard
            .entry(n)
            .or_insert_with(|| {
                Arc::new(Fft3 {
                    n,
                    fwd: plan_1d(n, FftDirection::Forward),
                    inv: plan_1d(n, FftDirection::Inverse),
                })
            })
            .clone()
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        // Axis 2 (contiguous) and axis 1, one x-plane at a time.
        par::for_each_chunk(data, n * n, |_, plane| {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(plane, &mut scratch);
            let mut buf = vec![Complex64::default(); n * n];
            transpose(plane, &mut buf, n, n);
            plan.process_with_scratch(&mut buf, &mut scratch);
            transpose(&buf, plane, n, n);
        });
        axis0(data, n, |lines| {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(lines, &mut scratch);
        });
    }
}

/// Transpose a `rows × cols` block from `src` into `dst` (`cols × rows`).
pub(crate) fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Apply `f` to the lines running along axis 0 of an `n0 × n1 × n2`
/// array (here n0 = n1 = n2 = n). For each fixed j the lines are gathered
/// into a contiguous `n2 × n0` buffer.
pub(crate) fn axis0<F>(data: &mut [Complex64], n: usize, f: F)
where
    F: Fn(&mut [Complex64]) + Sync + Send,
{
    let mut buf = vec![Complex64::default(); n * n];
    for j in 0..n {
        for i in 0..n {
            let row = &data[(i * n + j) * n..(i * n + j) * n + n];
            for (k, v) in row.iter().enumerate() {
                buf[k * n + i] = *v;
            }
        }
        f(&mut buf);
        for i in 0..n {
            let row = &mut data[(i * n + j) * n..(i * n + j) * n + n];
            for (k, v) in row.iter_mut().enumerate() {
                *v = buf[k * n + i];
            }
        }
    }
}

/// Signed integer frequency of FFT bin `m` for length `n`.
#[inline]
pub(crate) fn signed_freq(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}
