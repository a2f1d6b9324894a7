//! Batched forward and backward passes.
//!
//! A mini-batch is processed time step by time step with all samples side
//! by side, so every gate computation is one matrix product. Buffers are
//! time-major: `[t][b][unit]`.

use std::cell::RefCell;

use rand::{Rng, RngCore};

use super::act;
use super::arch::{ArchKind, ArchSpec};
use super::params::{LayerPartition, ParamVector};
use crate::data::{FeatureVector, WindowedDataset};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train,
}

/// Dropout source for a gradient call: off, or masks drawn from a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dropout {
    Off,
    Seeded(u64),
}

/// Inverted dropout: zeroes each entry with probability `p` and scales the
/// survivors by `1 / (1 - p)`. The mask is written to `mask`.
pub fn dropout_in_place<R: RngCore + ?Sized>(
    x: &mut [f64],
    mask: &mut Vec<f64>,
    p: f64,
    rng: &mut R,
) {
    mask.clear();
    mask.resize(x.len(), 0.0);
    draw_mask(mask, p, rng);
    for (v, m) in x.iter_mut().zip(mask.iter()) {
        *v *= m;
    }
}

fn draw_mask<R: RngCore + ?Sized>(mask: &mut [f64], p: f64, rng: &mut R) {
    let keep = 1.0 / (1.0 - p);
    for m in mask {
        *m = if rng.gen::<f64>() >= p { keep } else { 0.0 };
    }
}

/// Evaluation rows per forward call when no gradient is needed.
const EVAL_CHUNK: usize = 128;

/// Strided read-only matrix operand.
#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    rs: usize,
    cs: usize,
}

fn mat(data: &[f64], rs: usize, cs: usize) -> Mat<'_> {
    Mat { data, rs, cs }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    (rows - 1) * rs + (cols - 1) * cs + 1
}

/// `C (m x n) = A (m x k) * B (k x n) + beta * C`.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: Mat<'_>,
    b: Mat<'_>,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(
        a.data.len() >= span(m, k, a.rs, a.cs),
        "gemm: A out of bounds"
    );
    assert!(
        b.data.len() >= span(k, n, b.rs, b.cs),
        "gemm: B out of bounds"
    );
    assert!(c.len() >= span(m, n, rsc, csc), "gemm: C out of bounds");
    // SAFETY: the assertions above keep every strided access of the three
    // operands inside their slices, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn reset(v: &mut Vec<f64>, n: usize) {
    v.clear();
    v.resize(n, 0.0);
}

/// Sizes `v` to `n` without clearing; for buffers that are fully overwritten.
fn fit(v: &mut Vec<f64>, n: usize) {
    v.resize(n, 0.0);
}

/// Adds `sum_b rows[b]` to `acc` for a `[batch][width]` block with row stride `rs`.
fn add_column_sums(acc: &mut [f64], rows: &[f64], batch: usize, rs: usize) {
    let width = acc.len();
    for b in 0..batch {
        for (a, v) in acc.iter_mut().zip(&rows[b * rs..b * rs + width]) {
            *a += v;
        }
    }
}

#[derive(Debug, Clone)]
struct LayerLayout {
    input: usize,
    hidden: usize,
    /// Offset of the weight matrix; the bias follows it directly.
    w: usize,
    /// Weight rows: `gates * hidden`.
    rows: usize,
    /// Weight columns: `input` (dense) or `input + hidden` (recurrent).
    cols: usize,
}

impl LayerLayout {
    fn w_len(&self) -> usize {
        self.rows * self.cols
    }

    fn b(&self) -> usize {
        self.w + self.w_len()
    }

    fn end(&self) -> usize {
        self.b() + self.rows
    }
}

/// Forward caches of one layer for one batch.
#[derive(Debug, Default, Clone)]
struct LayerCache {
    /// Activated gates per step.
    gates: Vec<f64>,
    /// LSTM cell state and its tanh.
    c: Vec<f64>,
    tc: Vec<f64>,
    /// GRU `r * h_{t-1}` per step.
    rh: Vec<f64>,
    /// Layer output.
    h: Vec<f64>,
    /// Output after dropout, fed to the next layer.
    out: Vec<f64>,
    /// Dropout mask applied to `h`; empty when no dropout was applied.
    mask: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
struct Workspace {
    input: Vec<f64>,
    caches: Vec<LayerCache>,
    dh: Vec<f64>,
    dx: Vec<f64>,
    dh_next: Vec<f64>,
    dc_next: Vec<f64>,
    dprev: Vec<f64>,
    da: Vec<f64>,
    drh: Vec<f64>,
}

thread_local! {
    /// Scratch buffers reused across calls on the same thread.
    static SCRATCH: RefCell<Workspace> = RefCell::default();
}

fn with_workspace<T>(f: impl FnOnce(&mut Workspace) -> T) -> T {
    SCRATCH.with(|cell| match cell.try_borrow_mut() {
        Ok(mut ws) => f(&mut ws),
        Err(_) => f(&mut Workspace::default()),
    })
}

/// Where train-mode dropout masks come from.
enum Masks<'a> {
    Off,
    /// One stream shared by a single-sample call.
    Shared(&'a mut dyn RngCore),
    /// One stream per sample of the batch.
    PerSample(Vec<seed::Rng>),
}

impl Masks<'_> {
    fn active(&self) -> bool {
        !matches!(self, Masks::Off)
    }

    fn rng(&mut self, b: usize) -> &mut dyn RngCore {
        match self {
            Masks::Off => unreachable!("no dropout source"),
            Masks::Shared(r) => &mut **r,
            Masks::PerSample(v) => &mut v[b],
        }
    }
}

/// Compiled view of an [`ArchSpec`]: offsets of every layer into the flat
/// parameter array.
#[derive(Debug, Clone)]
pub struct Model {
    arch: ArchSpec,
    layers: Vec<LayerLayout>,
    out_w: usize,
    total: usize,
}

impl Model {
    pub fn new(arch: &ArchSpec) -> Result<Self> {
        arch.validate()?;
        let partition = LayerPartition::for_arch(arch);
        let (gates, suffix) = match arch.kind {
            ArchKind::Ann => (1, "W"),
            ArchKind::Gru => (3, "W_zrn"),
            ArchKind::Lstm => (4, "W_ifgo"),
        };
        let mut input = arch.input_width();
        let mut layers = Vec::with_capacity(arch.hidden.len());
        for (l, &h) in arch.hidden.iter().enumerate() {
            let name = format!("{}.{suffix}", arch.layer_name(l));
            let seg = partition.segment(&name).expect("partition built from arch");
            let cols = if arch.kind.is_recurrent() {
                input + h
            } else {
                input
            };
            let ly = LayerLayout {
                input,
                hidden: h,
                w: seg.offset,
                rows: gates * h,
                cols,
            };
            debug_assert_eq!(ly.w_len(), seg.len);
            layers.push(ly);
            input = h;
        }
        let out_w = partition.segment("out.W").expect("head").offset;
        Ok(Self {
            arch: arch.clone(),
            layers,
            out_w,
            total: partition.total(),
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    fn steps(&self) -> usize {
        if self.arch.kind.is_recurrent() {
            self.arch.window_len
        } else {
            1
        }
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.total {
            return Err(Error::PartitionMismatch(format!(
                "model expects {} parameters, got {}",
                self.total,
                params.len()
            )));
        }
        Ok(())
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        let want = self.arch.window_len * self.arch.n_features;
        if window.len() != want {
            return Err(Error::Shape(format!(
                "window has {} values, model expects {} ({} x {})",
                window.len(),
                want,
                self.arch.window_len,
                self.arch.n_features
            )));
        }
        Ok(())
    }

    fn gather<'d>(&self, ds: &'d WindowedDataset, idx: &[usize]) -> Result<Vec<&'d [f64]>> {
        idx.iter()
            .map(|&k| {
                if k >= ds.len() {
                    return Err(Error::Shape(format!(
                        "window {k} out of range ({} windows)",
                        ds.len()
                    )));
                }
                let w = ds.window_flat(k);
                self.check_window(w)?;
                Ok(w)
            })
            .collect()
    }

    /// Prediction for one `m x 5` window. In train mode inverted dropout is
    /// drawn from `rng`; eval mode never touches it.
    pub fn forward<R: RngCore>(
        &self,
        params: &ParamVector,
        window: &[FeatureVector],
        mode: Mode,
        rng: &mut R,
    ) -> Result<f64> {
        self.check_params(params)?;
        let flat = window.as_flattened();
        self.check_window(flat)?;
        let mut ws = Workspace::default();
        let mut masks = match mode {
            Mode::Eval => Masks::Off,
            Mode::Train => Masks::Shared(rng),
        };
        Ok(self.forward_batch(params.values(), &[flat], &mut ws, &mut masks)[0])
    }

    /// Eval-mode predictions for every window of `ds`.
    pub fn predict_all(&self, params: &ParamVector, ds: &WindowedDataset) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let all: Vec<usize> = (0..ds.len()).collect();
        with_workspace(|ws| {
            let mut out = Vec::with_capacity(ds.len());
            for chunk in all.chunks(EVAL_CHUNK) {
                let windows = self.gather(ds, chunk)?;
                out.extend(self.forward_batch(params.values(), &windows, ws, &mut Masks::Off));
            }
            Ok(out)
        })
    }

    /// Eval-mode batch MAE over the windows `idx` of `ds`.
    pub fn batch_loss(
        &self,
        params: &ParamVector,
        ds: &WindowedDataset,
        idx: &[usize],
    ) -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_params(params)?;
        with_workspace(|ws| {
            let mut total = 0.0;
            for chunk in idx.chunks(EVAL_CHUNK) {
                let windows = self.gather(ds, chunk)?;
                let preds = self.forward_batch(params.values(), &windows, ws, &mut Masks::Off);
                total += preds
                    .iter()
                    .zip(chunk)
                    .map(|(p, &k)| (p - ds.label(k)).abs())
                    .sum::<f64>();
            }
            Ok(total / idx.len() as f64)
        })
    }

    /// Batch MAE and its exact gradient by backpropagation through time.
    ///
    /// The subgradient of `|r|` at `r = 0` is taken as 0. With
    /// [`Dropout::Seeded`], sample `j` of the batch draws its masks from
    /// `derive(seed, "mask", [j])`, and the same masks are used in its
    /// forward and backward passes.
    pub fn loss_and_grad(
        &self,
        params: &ParamVector,
        ds: &WindowedDataset,
        idx: &[usize],
        dropout: Dropout,
    ) -> Result<(f64, ParamVector)> {
        if idx.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_params(params)?;
        let windows = self.gather(ds, idx)?;
        let p = params.values();
        let mut masks = match dropout {
            Dropout::Seeded(s) if self.arch.dropout.iter().any(|&r| r > 0.0) => Masks::PerSample(
                (0..idx.len())
                    .map(|j| seed::rng(seed::derive(s, "mask", &[j as u64])))
                    .collect(),
            ),
            _ => Masks::Off,
        };
        with_workspace(|ws| {
            let preds = self.forward_batch(p, &windows, ws, &mut masks);
            let scale = 1.0 / idx.len() as f64;
            let mut loss = 0.0;
            let dys: Vec<f64> = preds
                .iter()
                .zip(idx)
                .map(|(y, &k)| {
                    let r = y - ds.label(k);
                    loss += r.abs();
                    if r > 0.0 {
                        scale
                    } else if r < 0.0 {
                        -scale
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut grad = ParamVector::zeros(params.partition().clone());
            if dys.iter().any(|&d| d != 0.0) {
                self.backward_batch(p, grad.values_mut(), ws, &dys);
            }
            Ok((loss * scale, grad))
        })
    }

    fn forward_batch(
        &self,
        p: &[f64],
        windows: &[&[f64]],
        ws: &mut Workspace,
        masks: &mut Masks<'_>,
    ) -> Vec<f64> {
        let steps = self.steps();
        let batch = windows.len();
        let n_layers = self.layers.len();
        let i0 = self.layers[0].input;
        fit(&mut ws.input, steps * batch * i0);
        for (b, w) in windows.iter().enumerate() {
            for t in 0..steps {
                let dst = (t * batch + b) * i0;
                ws.input[dst..dst + i0].copy_from_slice(&w[t * i0..(t + 1) * i0]);
            }
        }
        ws.caches.resize_with(n_layers, LayerCache::default);
        let Workspace { input, caches, .. } = ws;
        for l in 0..n_layers {
            let (prev, cur) = caches.split_at_mut(l);
            let cache = &mut cur[0];
            let x: &[f64] = if l == 0 { input } else { &prev[l - 1].out };
            let ly = &self.layers[l];
            match self.arch.kind {
                ArchKind::Ann => dense_forward(p, ly, batch, x, cache),
                ArchKind::Lstm => lstm_forward(p, ly, steps, batch, x, cache),
                ArchKind::Gru => gru_forward(p, ly, steps, batch, x, cache),
            }
            if l + 1 < n_layers {
                cache.out.clear();
                cache.out.extend_from_slice(&cache.h);
                cache.mask.clear();
                let rate = self.arch.dropout[l];
                if rate > 0.0 && masks.active() {
                    let h = ly.hidden;
                    reset(&mut cache.mask, steps * batch * h);
                    for b in 0..batch {
                        let rng = masks.rng(b);
                        for t in 0..steps {
                            let at = (t * batch + b) * h;
                            draw_mask(&mut cache.mask[at..at + h], rate, rng);
                        }
                    }
                    for (v, m) in cache.out.iter_mut().zip(&cache.mask) {
                        *v *= m;
                    }
                }
            }
        }
        let h = self.layers[n_layers - 1].hidden;
        let last = &caches[n_layers - 1].h[(steps - 1) * batch * h..];
        let out_w = &p[self.out_w..self.out_w + h];
        let out_b = p[self.out_w + h];
        (0..batch)
            .map(|b| {
                let row = &last[b * h..(b + 1) * h];
                let s: f64 = row.iter().zip(out_w).map(|(a, w)| a * w).sum();
                self.arch.output_scale * (s + out_b)
            })
            .collect()
    }

    /// Accumulates `sum_b dys[b] * d(prediction_b)/d(params)` into `grad`;
    /// requires the caches of the matching `forward_batch` call.
    fn backward_batch(&self, p: &[f64], grad: &mut [f64], ws: &mut Workspace, dys: &[f64]) {
        let steps = self.steps();
        let batch = dys.len();
        let n_layers = self.layers.len();
        let top = self.layers[n_layers - 1].hidden;
        let last_off = (steps - 1) * batch * top;
        let Workspace {
            input,
            caches,
            dh,
            dx,
            dh_next,
            dc_next,
            dprev,
            da,
            drh,
        } = ws;
        reset(dh, steps * batch * top);
        {
            let last = &caches[n_layers - 1].h[last_off..];
            let out_w = &p[self.out_w..self.out_w + top];
            for (b, &dy) in dys.iter().enumerate() {
                let d = dy * self.arch.output_scale;
                if d == 0.0 {
                    continue;
                }
                let row = &last[b * top..(b + 1) * top];
                for (g, v) in grad[self.out_w..self.out_w + top].iter_mut().zip(row) {
                    *g += d * v;
                }
                grad[self.out_w + top] += d;
                for (g, w) in dh[last_off + b * top..last_off + (b + 1) * top]
                    .iter_mut()
                    .zip(out_w)
                {
                    *g = d * w;
                }
            }
        }
        for l in (0..n_layers).rev() {
            let ly = &self.layers[l];
            let need_dx = l > 0;
            let x: &[f64] = if l == 0 { input } else { &caches[l - 1].out };
            let mut bufs = Buffers {
                dh,
                dx,
                dh_next,
                dc_next,
                dprev,
                da,
                drh,
            };
            let g = &mut grad[ly.w..ly.end()];
            let cache = &caches[l];
            match self.arch.kind {
                ArchKind::Ann => dense_backward(p, g, ly, batch, x, cache, &mut bufs, need_dx),
                ArchKind::Lstm => {
                    lstm_backward(p, g, ly, steps, batch, x, cache, &mut bufs, need_dx)
                }
                ArchKind::Gru => gru_backward(p, g, ly, steps, batch, x, cache, &mut bufs, need_dx),
            }
            if need_dx {
                let mask = &caches[l - 1].mask;
                if !mask.is_empty() {
                    for (d, m) in dx.iter_mut().zip(mask) {
                        *d *= m;
                    }
                }
                std::mem::swap(dh, dx);
            }
        }
    }
}

struct Buffers<'a> {
    /// Gradient w.r.t. the layer outputs, `[t][b][H]`.
    dh: &'a [f64],
    /// Gradient w.r.t. the layer inputs, `[t][b][I]` (written when requested).
    dx: &'a mut Vec<f64>,
    dh_next: &'a mut Vec<f64>,
    dc_next: &'a mut Vec<f64>,
    dprev: &'a mut Vec<f64>,
    /// Gate pre-activation gradients for all steps, `[t][b][gates * H]`.
    da: &'a mut Vec<f64>,
    drh: &'a mut Vec<f64>,
}

fn dense_forward(p: &[f64], ly: &LayerLayout, batch: usize, x: &[f64], c: &mut LayerCache) {
    let (ni, h) = (ly.input, ly.hidden);
    let w = &p[ly.w..ly.b()];
    let bias = &p[ly.b()..ly.end()];
    fit(&mut c.h, batch * h);
    gemm(
        batch,
        ni,
        h,
        mat(x, ni, 1),
        mat(w, 1, ni),
        0.0,
        &mut c.h,
        h,
        1,
    );
    for row in c.h.chunks_exact_mut(h) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v = act::tanh(*v + b);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    p: &[f64],
    g: &mut [f64],
    ly: &LayerLayout,
    batch: usize,
    x: &[f64],
    c: &LayerCache,
    bufs: &mut Buffers<'_>,
    need_dx: bool,
) {
    let (ni, h) = (ly.input, ly.hidden);
    let w = &p[ly.w..ly.b()];
    let (gw, gb) = g.split_at_mut(ly.w_len());
    reset(bufs.da, batch * h);
    for ((da, dh), y) in bufs.da.iter_mut().zip(bufs.dh).zip(&c.h) {
        *da = dh * (1.0 - y * y);
    }
    gemm(
        h,
        batch,
        ni,
        mat(bufs.da, 1, h),
        mat(x, ni, 1),
        1.0,
        gw,
        ni,
        1,
    );
    add_column_sums(gb, bufs.da, batch, h);
    if need_dx {
        reset(bufs.dx, batch * ni);
        gemm(
            batch,
            h,
            ni,
            mat(bufs.da, h, 1),
            mat(w, ni, 1),
            0.0,
            bufs.dx,
            ni,
            1,
        );
    }
}

// Recurrent layers split `W = [W_x | W_h]` by columns. The input products
// and all weight gradients are computed over the whole sequence at once;
// only the `h_{t-1}` products run per step.

fn lstm_forward(
    p: &[f64],
    ly: &LayerLayout,
    steps: usize,
    batch: usize,
    x: &[f64],
    c: &mut LayerCache,
) {
    let (ni, h) = (ly.input, ly.hidden);
    let zw = ly.cols;
    let g4 = 4 * h;
    let rows = steps * batch;
    let w = &p[ly.w..ly.b()];
    let bias = &p[ly.b()..ly.end()];
    fit(&mut c.gates, rows * g4);
    fit(&mut c.c, rows * h);
    fit(&mut c.tc, rows * h);
    fit(&mut c.h, rows * h);
    gemm(
        rows,
        ni,
        g4,
        mat(x, ni, 1),
        mat(w, 1, zw),
        0.0,
        &mut c.gates,
        g4,
        1,
    );
    for t in 0..steps {
        let base = t * batch;
        let gt = &mut c.gates[base * g4..(base + batch) * g4];
        if t > 0 {
            let h_prev = &c.h[(base - batch) * h..base * h];
            gemm(
                batch,
                h,
                g4,
                mat(h_prev, h, 1),
                mat(&w[ni..], 1, zw),
                1.0,
                gt,
                g4,
                1,
            );
        }
        for b in 0..batch {
            let row = &mut gt[b * g4..(b + 1) * g4];
            for (v, bb) in row.iter_mut().zip(bias) {
                *v += bb;
            }
            let (ifg, rest) = row.split_at_mut(2 * h);
            let (gg, og) = rest.split_at_mut(h);
            act::sigmoid_slice(ifg);
            act::tanh_slice(gg);
            act::sigmoid_slice(og);
            let (ig, fg) = ifg.split_at(h);
            let at = (base + b) * h;
            let (done, cur) = c.c.split_at_mut(at);
            let cell = &mut cur[..h];
            if t > 0 {
                let c_prev = &done[at - batch * h..];
                for j in 0..h {
                    cell[j] = fg[j] * c_prev[j] + ig[j] * gg[j];
                }
            } else {
                for j in 0..h {
                    cell[j] = ig[j] * gg[j];
                }
            }
            let tc = &mut c.tc[at..at + h];
            tc.copy_from_slice(cell);
            act::tanh_slice(tc);
            for ((hv, o), v) in c.h[at..at + h].iter_mut().zip(og.iter()).zip(tc.iter()) {
                *hv = o * v;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    p: &[f64],
    g: &mut [f64],
    ly: &LayerLayout,
    steps: usize,
    batch: usize,
    x: &[f64],
    c: &LayerCache,
    bufs: &mut Buffers<'_>,
    need_dx: bool,
) {
    let (ni, h) = (ly.input, ly.hidden);
    let zw = ly.cols;
    let g4 = 4 * h;
    let rows = steps * batch;
    let w = &p[ly.w..ly.b()];
    let (gw, gb) = g.split_at_mut(ly.w_len());
    reset(bufs.dh_next, batch * h);
    reset(bufs.dc_next, batch * h);
    fit(bufs.da, rows * g4);
    for t in (0..steps).rev() {
        let base = t * batch;
        let da_t = &mut bufs.da[base * g4..(base + batch) * g4];
        for b in 0..batch {
            let gates = &c.gates[(base + b) * g4..(base + b + 1) * g4];
            let da = &mut da_t[b * g4..(b + 1) * g4];
            let at = (base + b) * h;
            for j in 0..h {
                let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = c.tc[at + j];
                let dh = bufs.dh[at + j] + bufs.dh_next[b * h + j];
                let dc = bufs.dc_next[b * h + j] + dh * og * (1.0 - tc * tc);
                let c_prev = if t > 0 { c.c[at - batch * h + j] } else { 0.0 };
                da[j] = dc * gg * ig * (1.0 - ig);
                da[h + j] = dc * c_prev * fg * (1.0 - fg);
                da[2 * h + j] = dc * ig * (1.0 - gg * gg);
                da[3 * h + j] = dh * tc * og * (1.0 - og);
                bufs.dc_next[b * h + j] = dc * fg;
            }
        }
        if t > 0 {
            gemm(
                batch,
                g4,
                h,
                mat(da_t, g4, 1),
                mat(&w[ni..], zw, 1),
                0.0,
                bufs.dh_next,
                h,
                1,
            );
        }
    }
    let da: &[f64] = bufs.da;
    gemm(g4, rows, ni, mat(da, 1, g4), mat(x, ni, 1), 1.0, gw, zw, 1);
    if steps > 1 {
        let tail = &da[batch * g4..];
        gemm(
            g4,
            rows - batch,
            h,
            mat(tail, 1, g4),
            mat(&c.h, h, 1),
            1.0,
            &mut gw[ni..],
            zw,
            1,
        );
    }
    add_column_sums(gb, da, rows, g4);
    if need_dx {
        fit(bufs.dx, rows * ni);
        gemm(
            rows,
            g4,
            ni,
            mat(da, g4, 1),
            mat(w, zw, 1),
            0.0,
            bufs.dx,
            ni,
            1,
        );
    }
}

fn gru_forward(
    p: &[f64],
    ly: &LayerLayout,
    steps: usize,
    batch: usize,
    x: &[f64],
    c: &mut LayerCache,
) {
    let (ni, h) = (ly.input, ly.hidden);
    let zw = ly.cols;
    let g3 = 3 * h;
    let rows = steps * batch;
    let w = &p[ly.w..ly.b()];
    let w_hn = &w[2 * h * zw + ni..];
    let bias = &p[ly.b()..ly.end()];
    fit(&mut c.gates, rows * g3);
    fit(&mut c.rh, rows * h);
    fit(&mut c.h, rows * h);
    gemm(
        rows,
        ni,
        g3,
        mat(x, ni, 1),
        mat(w, 1, zw),
        0.0,
        &mut c.gates,
        g3,
        1,
    );
    for t in 0..steps {
        let base = t * batch;
        let gt = &mut c.gates[base * g3..(base + batch) * g3];
        let rh = &mut c.rh[base * h..(base + batch) * h];
        let (done, cur) = c.h.split_at_mut(base * h);
        let h_prev = if t > 0 {
            Some(&done[(base - batch) * h..])
        } else {
            None
        };
        if let Some(hp) = h_prev {
            gemm(
                batch,
                h,
                2 * h,
                mat(hp, h, 1),
                mat(&w[ni..], 1, zw),
                1.0,
                gt,
                g3,
                1,
            );
        }
        for b in 0..batch {
            let row = &mut gt[b * g3..(b + 1) * g3];
            for (v, bb) in row[..2 * h].iter_mut().zip(bias) {
                *v += bb;
            }
            act::sigmoid_slice(&mut row[..2 * h]);
            for j in 0..h {
                rh[b * h + j] = h_prev.map_or(0.0, |hp| row[h + j] * hp[b * h + j]);
            }
        }
        if t > 0 {
            gemm(
                batch,
                h,
                h,
                mat(rh, h, 1),
                mat(w_hn, 1, zw),
                1.0,
                &mut gt[2 * h..],
                g3,
                1,
            );
        }
        for b in 0..batch {
            let row = &mut gt[b * g3..(b + 1) * g3];
            for (v, bb) in row[2 * h..].iter_mut().zip(&bias[2 * h..]) {
                *v += bb;
            }
            act::tanh_slice(&mut row[2 * h..]);
            for j in 0..h {
                let n = row[2 * h + j];
                let z = row[j];
                let hp = h_prev.map_or(0.0, |hp| hp[b * h + j]);
                cur[b * h + j] = (1.0 - z) * n + z * hp;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gru_backward(
    p: &[f64],
    g: &mut [f64],
    ly: &LayerLayout,
    steps: usize,
    batch: usize,
    x: &[f64],
    c: &LayerCache,
    bufs: &mut Buffers<'_>,
    need_dx: bool,
) {
    let (ni, h) = (ly.input, ly.hidden);
    let zw = ly.cols;
    let g3 = 3 * h;
    let rows = steps * batch;
    let w = &p[ly.w..ly.b()];
    let w_hn = &w[2 * h * zw + ni..];
    let (gw, gb) = g.split_at_mut(ly.w_len());
    reset(bufs.dh_next, batch * h);
    fit(bufs.dprev, batch * h);
    fit(bufs.drh, batch * h);
    fit(bufs.da, rows * g3);
    for t in (0..steps).rev() {
        let base = t * batch;
        let h_prev = if t > 0 {
            Some(&c.h[(base - batch) * h..base * h])
        } else {
            None
        };
        let da_t = &mut bufs.da[base * g3..(base + batch) * g3];
        for b in 0..batch {
            let gates = &c.gates[(base + b) * g3..(base + b + 1) * g3];
            for j in 0..h {
                let (z, n) = (gates[j], gates[2 * h + j]);
                let hp = h_prev.map_or(0.0, |hp| hp[b * h + j]);
                let dh = bufs.dh[(base + b) * h + j] + bufs.dh_next[b * h + j];
                da_t[b * g3 + 2 * h + j] = dh * (1.0 - z) * (1.0 - n * n);
                da_t[b * g3 + j] = dh * (hp - n) * z * (1.0 - z);
                da_t[b * g3 + h + j] = 0.0;
                bufs.dprev[b * h + j] = dh * z;
            }
        }
        let Some(hp) = h_prev else { break };
        gemm(
            batch,
            h,
            h,
            mat(&da_t[2 * h..], g3, 1),
            mat(w_hn, zw, 1),
            0.0,
            bufs.drh,
            h,
            1,
        );
        for b in 0..batch {
            let gates = &c.gates[(base + b) * g3..(base + b + 1) * g3];
            for j in 0..h {
                let r = gates[h + j];
                let d_rh = bufs.drh[b * h + j];
                da_t[b * g3 + h + j] = d_rh * hp[b * h + j] * r * (1.0 - r);
                bufs.dprev[b * h + j] += d_rh * r;
            }
        }
        bufs.dh_next.copy_from_slice(bufs.dprev);
        gemm(
            batch,
            2 * h,
            h,
            mat(da_t, g3, 1),
            mat(&w[ni..], zw, 1),
            1.0,
            bufs.dh_next,
            h,
            1,
        );
    }
    let da: &[f64] = bufs.da;
    gemm(g3, rows, ni, mat(da, 1, g3), mat(x, ni, 1), 1.0, gw, zw, 1);
    if steps > 1 {
        let tail = &da[batch * g3..];
        gemm(
            2 * h,
            rows - batch,
            h,
            mat(tail, 1, g3),
            mat(&c.h, h, 1),
            1.0,
            &mut gw[ni..],
            zw,
            1,
        );
    }
    gemm(
        h,
        rows,
        h,
        mat(&da[2 * h..], 1, g3),
        mat(&c.rh, h, 1),
        1.0,
        &mut gw[2 * h * zw + ni..],
        zw,
        1,
    );
    add_column_sums(gb, da, rows, g3);
    if need_dx {
        fit(bufs.dx, rows * ni);
        gemm(
            rows,
            g3,
            ni,
            mat(da, g3, 1),
            mat(w, zw, 1),
            0.0,
            bufs.dx,
            ni,
            1,
        );
    }
}
