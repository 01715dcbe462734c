//! Unsynchronized shared matrix views for multi-worker embedding training.
//!
//! With more than one worker, rows are read and written without locks;
//! concurrent updates may interleave per element. That is the hogwild
//! contract: training becomes nondeterministic but the objective still
//! descends because touched rows rarely collide on sparse updates. Single
//! worker keeps exclusive access and stays bit-reproducible.

use std::marker::PhantomData;

use crate::mat::Mat;
use crate::scalar::Scalar;

pub(crate) struct SharedMat<'a, F> {
    ptr: *mut F,
    cols: usize,
    _marker: PhantomData<&'a mut Mat<F>>,
}

unsafe impl<F: Scalar> Send for SharedMat<'_, F> {}
unsafe impl<F: Scalar> Sync for SharedMat<'_, F> {}

impl<'a, F: Scalar> SharedMat<'a, F> {
    pub fn new(mat: &'a mut Mat<F>) -> Self {
        let cols = mat.cols();
        SharedMat { ptr: mat.as_mut_slice().as_mut_ptr(), cols, _marker: PhantomData }
    }

    /// Racy mutable view of one row. Callers must not hold two views of the
    /// same row at once within a single worker.
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn row(&self, i: usize) -> &mut [F] {
        std::slice::from_raw_parts_mut(self.ptr.add(i * self.cols), self.cols)
    }
}
