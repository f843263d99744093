//! Flat parameter storage with named entries.
//!
//! All weights live in one `Vec<f64>` arena; layers hold `ParamId` handles.
//! Gradients are a parallel buffer with identical layout, which keeps the
//! optimizer, checkpointing, and finite-difference probing trivial.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone)]
pub struct Params {
    entries: Vec<ParamEntry>,
    data: Vec<f64>,
}

pub struct ParamBuilder {
    entries: Vec<ParamEntry>,
    len: usize,
}

impl ParamBuilder {
    pub fn new() -> Self {
        ParamBuilder { entries: Vec::new(), len: 0 }
    }

    /// Registers a matrix parameter. Vectors use `rows == 1`.
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        let entry = ParamEntry { name: name.into(), offset: self.len, rows, cols };
        self.len += entry.len();
        self.entries.push(entry);
        ParamId(self.entries.len() - 1)
    }

    pub fn finish(self) -> Params {
        Params { data: vec![0.0; self.len], entries: self.entries }
    }
}

impl Params {
    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    /// Id lookup by name; O(n), used by checkpoint loading and tests.
    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn total_len(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let e = &self.entries[id.0];
        ArrayView2::from_shape((e.rows, e.cols), &self.data[e.offset..e.offset + e.len()])
            .expect("entry shape matches slice")
    }

    pub fn vec1(&self, id: ParamId) -> ArrayView1<'_, f64> {
        let e = &self.entries[id.0];
        debug_assert_eq!(e.rows, 1);
        ArrayView1::from_shape(e.cols, &self.data[e.offset..e.offset + e.cols])
            .expect("entry shape matches slice")
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [f64] {
        let e = &self.entries[id.0];
        let (off, len) = (e.offset, e.len());
        &mut self.data[off..off + len]
    }

    pub fn init_normal(&mut self, id: ParamId, std: f64, rng: &mut ChaCha8Rng) {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, std).expect("std is finite");
        for v in self.slice_mut(id) {
            *v = normal.sample(rng);
        }
    }

    pub fn init_const(&mut self, id: ParamId, value: f64) {
        for v in self.slice_mut(id) {
            *v = value;
        }
    }

    pub fn init_uniform(&mut self, id: ParamId, bound: f64, rng: &mut ChaCha8Rng) {
        for v in self.slice_mut(id) {
            *v = rng.random_range(-bound..bound);
        }
    }

    /// Copies every `src_prefix.*` entry onto its `dst_prefix.*` counterpart.
    /// Panics if shapes disagree; used to share initialization between the
    /// encoder and the style extractor.
    pub fn copy_prefixed(&mut self, src_prefix: &str, dst_prefix: &str) {
        let pairs: Vec<(usize, usize, usize)> = self
            .entries
            .iter()
            .filter(|e| e.name.starts_with(src_prefix))
            .map(|src| {
                let suffix = &src.name[src_prefix.len()..];
                let dst_name = format!("{dst_prefix}{suffix}");
                let dst = self
                    .entries
                    .iter()
                    .find(|e| e.name == dst_name)
                    .unwrap_or_else(|| panic!("no twin entry {dst_name}"));
                assert_eq!((src.rows, src.cols), (dst.rows, dst.cols), "{dst_name}");
                (src.offset, dst.offset, src.len())
            })
            .collect();
        for (src_off, dst_off, len) in pairs {
            let src: Vec<f64> = self.data[src_off..src_off + len].to_vec();
            self.data[dst_off..dst_off + len].copy_from_slice(&src);
        }
    }
}

/// Gradient buffer matching a `Params` layout.
#[derive(Debug, Clone)]
pub struct Grads {
    data: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(params: &Params) -> Grads {
        Grads { data: vec![0.0; params.total_len()] }
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mat_mut(&mut self, params: &Params, id: ParamId) -> ArrayViewMut2<'_, f64> {
        let e = params.entry(id);
        ArrayViewMut2::from_shape((e.rows, e.cols), &mut self.data[e.offset..e.offset + e.len()])
            .expect("entry shape matches slice")
    }

    pub fn slice_mut(&mut self, params: &Params, id: ParamId) -> &mut [f64] {
        let e = params.entry(id);
        &mut self.data[e.offset..e.offset + e.len()]
    }
}
