//! Exact finite-window simulation of heights and increments.
//!
//! With jump offsets in `[omin, omax]`, one step maps heights valid on
//! `[lo, hi]` to heights valid on `[lo - omin, hi - omax]`. Running `T`
//! steps from a window that contains the evaluation box dilated by
//! `[T*omin, T*omax]` therefore reproduces the infinite-lattice values
//! exactly. Each step is computed only on the part of the cone still needed.

use crate::error::{HarnessError, Result};
use crate::kernel::{Jump, KernelAnalysis, Walk};
use crate::lattice::{Grid, LatticeBox};
use crate::noise::NoiseField;

/// Heights on a window at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub grid: Grid,
    pub time: i64,
}

impl HeightField {
    pub fn new(grid: Grid, time: i64) -> Self {
        HeightField { grid, time }
    }

    pub fn window(&self) -> &LatticeBox {
        self.grid.bounds()
    }

    pub fn at(&self, x: &[i64]) -> f64 {
        self.grid.at(x)
    }

    pub fn restrict(&self, bx: &LatticeBox) -> Option<HeightField> {
        self.grid.restrict(bx).map(|grid| HeightField { grid, time: self.time })
    }
}

/// Nearest-neighbour increments `eta(x - e_i, x) = h(x) - h(x - e_i)`:
/// component `i` is stored as a grid indexed by the endpoint `x`, all
/// components over the same window.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementField {
    pub comps: Vec<Grid>,
    pub time: i64,
}

impl IncrementField {
    pub fn new(comps: Vec<Grid>, time: i64) -> Self {
        assert!(!comps.is_empty());
        assert!(comps.iter().all(|c| c.bounds() == comps[0].bounds()));
        assert_eq!(comps.len(), comps[0].bounds().dim());
        IncrementField { comps, time }
    }

    /// One-dimensional field from values on `[lo, lo + values.len() - 1]`.
    pub fn from_1d(lo: i64, values: Vec<f64>, time: i64) -> Self {
        let hi = lo + values.len() as i64 - 1;
        IncrementField::new(vec![Grid::from_vec(LatticeBox::interval(lo, hi), values)], time)
    }

    pub fn window(&self) -> &LatticeBox {
        self.comps[0].bounds()
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    /// `eta(x - e_i, x)`.
    pub fn at(&self, i: usize, x: &[i64]) -> f64 {
        self.comps[i].at(x)
    }

    /// Differences of `h` on the largest window where every component is
    /// defined: `h`'s window with each lower bound raised by one.
    pub fn from_height(h: &HeightField) -> Self {
        let d = h.window().dim();
        let bx = h.window().expand(&vec![1; d], &vec![0; d]);
        let comps = (0..d)
            .map(|i| {
                Grid::from_fn(bx.clone(), |x| {
                    let mut y = x.to_vec();
                    y[i] -= 1;
                    h.at(x) - h.at(&y)
                })
            })
            .collect();
        IncrementField { comps, time: h.time }
    }

    /// Partial sums in one dimension: heights on `[lo - 1, hi]` with
    /// `h(base) = 0`.
    pub fn heights_1d(&self, base: i64) -> HeightField {
        assert_eq!(self.dim(), 1, "partial sums are one-dimensional");
        let bx = self.window();
        let (lo, hi) = (bx.lo()[0], bx.hi()[0]);
        assert!((lo - 1..=hi).contains(&base), "base site outside window");
        let eta = self.comps[0].data();
        let mut h = Vec::with_capacity(eta.len() + 1);
        let mut acc = 0.0;
        h.push(0.0);
        for v in eta {
            acc += v;
            h.push(acc);
        }
        let shift = h[(base - (lo - 1)) as usize];
        h.iter_mut().for_each(|v| *v -= shift);
        HeightField::new(Grid::from_vec(LatticeBox::interval(lo - 1, hi), h), self.time)
    }

    /// Largest plaquette sum `eta_i(y+e_i) + eta_j(y+e_i+e_j) - eta_i(y+e_i+e_j) - eta_j(y+e_j)`
    /// over the window; zero for a field of true height differences.
    pub fn loop_residual(&self) -> f64 {
        let d = self.dim();
        let bx = self.window();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i + 1..d {
                for y in bx.points() {
                    let mut yi = y.clone();
                    yi[i] += 1;
                    let mut yj = y.clone();
                    yj[j] += 1;
                    let mut yij = yi.clone();
                    yij[j] += 1;
                    if !bx.contains_point(&yij) {
                        continue;
                    }
                    let s = self.at(i, &yi) + self.at(j, &yij) - self.at(i, &yij) - self.at(j, &yj);
                    worst = worst.max(s.abs());
                }
            }
        }
        worst
    }

    /// `self + other` on the common window.
    pub fn add(&self, other: &IncrementField) -> IncrementField {
        assert_eq!(self.window(), other.window());
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| {
                Grid::from_vec(
                    a.bounds().clone(),
                    a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
                )
            })
            .collect();
        IncrementField { comps, time: self.time }
    }

    pub fn restrict(&self, bx: &LatticeBox) -> Option<IncrementField> {
        let comps: Option<Vec<Grid>> = self.comps.iter().map(|c| c.restrict(bx)).collect();
        comps.map(|comps| IncrementField { comps, time: self.time })
    }
}

/// Window needed at time 0 to evaluate `eval` exactly after `steps` steps.
pub fn required_window(kernel: &KernelAnalysis, eval: &LatticeBox, steps: usize) -> LatticeBox {
    let (omin, omax) = kernel.offset_extent(Walk::P);
    let s = steps as i64;
    let lo: Vec<i64> = omin.iter().map(|o| o * s).collect();
    let hi: Vec<i64> = omax.iter().map(|o| o * s).collect();
    eval.expand(&lo, &hi)
}

fn check_window(have: &LatticeBox, need: &LatticeBox) -> Result<()> {
    if have.contains(need) {
        Ok(())
    } else {
        Err(HarnessError::WindowTooSmall(format!(
            "window {have:?} does not contain light cone {need:?}"
        )))
    }
}

/// How the noise enters a step.
#[derive(Clone, Copy)]
enum Forcing {
    /// `+ xi_t(x)`.
    Height,
    /// `+ xi_t(x) - xi_t(x - e_axis)`.
    Increment(usize),
}

/// One pull step `out(x) = sum_o w_o src(x + o) + forcing`, computed on
/// `out_box` into a recycled buffer.
#[allow(clippy::too_many_arguments)]
fn step_into(
    src: &Grid,
    jumps: &[Jump],
    noise: &NoiseField,
    t: i64,
    replica: u64,
    forcing: Forcing,
    out_box: LatticeBox,
    mut buf: Vec<f64>,
    scratch: &mut Vec<f64>,
) -> Grid {
    let n = out_box.len();
    buf.clear();
    buf.resize(n, 0.0);
    let mut out = Grid::from_vec(out_box, buf);
    if n == 0 {
        return out;
    }
    let d = out.bounds().dim();
    let len = out.bounds().row_len();
    let last_lo = out.bounds().lo()[d - 1];
    let prefixes = out.bounds().row_prefixes();
    for prefix in &prefixes {
        let start = out.row_offset(prefix, last_lo);
        let row = &mut out.data_mut()[start..start + len];
        match forcing {
            Forcing::Height => noise.fill_row(t, prefix, last_lo, replica, row),
            Forcing::Increment(axis) if axis == d - 1 => {
                scratch.resize(len + 1, 0.0);
                noise.fill_row(t, prefix, last_lo - 1, replica, scratch);
                for (i, v) in row.iter_mut().enumerate() {
                    *v = scratch[i + 1] - scratch[i];
                }
            }
            Forcing::Increment(axis) => {
                noise.fill_row(t, prefix, last_lo, replica, row);
                let mut back = prefix.clone();
                back[axis] -= 1;
                scratch.resize(len, 0.0);
                noise.fill_row(t, &back, last_lo, replica, scratch);
                for (v, s) in row.iter_mut().zip(scratch.iter()) {
                    *v -= s;
                }
            }
        }
        for j in jumps {
            let shifted: Vec<i64> = prefix.iter().zip(&j.offset).map(|(c, o)| c + o).collect();
            let s = src.row_offset(&shifted, last_lo + j.offset[d - 1]);
            let src_row = &src.data()[s..s + len];
            let w = j.prob;
            for (o, v) in row.iter_mut().zip(src_row) {
                *o += w * v;
            }
        }
    }
    out
}

/// Box still needed at step `s` to serve every `(t, box)` request with `t >= s`.
fn needed_box(requests: &[(usize, LatticeBox)], s: usize, omin: &[i64], omax: &[i64]) -> Option<LatticeBox> {
    requests
        .iter()
        .filter(|(t, _)| *t >= s)
        .map(|(t, bx)| {
            let k = (*t - s) as i64;
            bx.expand(
                &omin.iter().map(|o| o * k).collect::<Vec<_>>(),
                &omax.iter().map(|o| o * k).collect::<Vec<_>>(),
            )
        })
        .reduce(|a, b| a.hull(&b))
}

/// Evolve a grid through the requested `(steps, box)` snapshots; shared by
/// the height and increment drivers.
fn evolve_requests(
    start: &Grid,
    time0: i64,
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    replica: u64,
    forcing: Forcing,
    requests: &[(usize, LatticeBox)],
) -> Result<Vec<Grid>> {
    let (omin, omax) = kernel.offset_extent(Walk::P);
    let Some(first) = needed_box(requests, 0, &omin, &omax) else {
        return Ok(Vec::new());
    };
    check_window(start.bounds(), &first)?;
    let jumps = kernel.jumps(Walk::P);
    let t_max = requests.iter().map(|(t, _)| *t).max().unwrap_or(0);
    let mut out: Vec<Option<Grid>> = vec![None; requests.len()];
    let mut current = start.restrict(&first).expect("checked");
    let mut spare = Vec::new();
    let mut scratch = Vec::new();
    for s in 0..=t_max {
        for (slot, (t, bx)) in out.iter_mut().zip(requests) {
            if *t == s {
                *slot = Some(current.restrict(bx).expect("request inside cone"));
            }
        }
        if s == t_max {
            break;
        }
        let next_box = needed_box(requests, s + 1, &omin, &omax).expect("requests remain");
        let next = step_into(
            &current,
            jumps,
            noise,
            time0 + s as i64 + 1,
            replica,
            forcing,
            next_box,
            spare,
            &mut scratch,
        );
        spare = std::mem::replace(&mut current, next).into_data();
    }
    Ok(out.into_iter().map(|g| g.expect("every request served")).collect())
}

/// Heights after `steps` steps on `eval`, driven by `noise` for `replica`.
/// Step `s` (1-based) uses `xi_{h0.time + s}`.
pub fn evolve_height(
    h0: &HeightField,
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    replica: u64,
    steps: usize,
    eval: &LatticeBox,
) -> Result<HeightField> {
    let mut v = evolve_height_snapshots(h0, kernel, noise, replica, &[(steps, eval.clone())])?;
    Ok(v.pop().unwrap())
}

/// One trajectory, several `(steps, box)` snapshots.
pub fn evolve_height_snapshots(
    h0: &HeightField,
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    replica: u64,
    requests: &[(usize, LatticeBox)],
) -> Result<Vec<HeightField>> {
    let grids = evolve_requests(&h0.grid, h0.time, kernel, noise, replica, Forcing::Height, requests)?;
    Ok(grids
        .into_iter()
        .zip(requests)
        .map(|(grid, (t, _))| HeightField::new(grid, h0.time + *t as i64))
        .collect())
}

/// Increments after `steps` steps on `eval`, using the same noise keys as
/// [`evolve_height`].
pub fn evolve_increment(
    eta0: &IncrementField,
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    replica: u64,
    steps: usize,
    eval: &LatticeBox,
) -> Result<IncrementField> {
    let req = [(steps, eval.clone())];
    let comps = eta0
        .comps
        .iter()
        .enumerate()
        .map(|(i, g)| {
            evolve_requests(g, eta0.time, kernel, noise, replica, Forcing::Increment(i), &req)
                .map(|mut v| v.pop().unwrap())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IncrementField::new(comps, eta0.time + steps as i64))
}

/// `h_t(site)` from the backward random-walk representation
/// `sum_y p^t(site, y) h0(y) + sum_{k=1}^t sum_x p^{t-k}(site, x) xi_k(x)`,
/// using cached power tables.
pub fn dual_evaluate(
    h0: &HeightField,
    kernel: &KernelAnalysis,
    noise: &NoiseField,
    replica: u64,
    steps: usize,
    site: &[i64],
) -> Result<f64> {
    check_window(h0.window(), &required_window(kernel, &LatticeBox::point(site), steps))?;
    let pt = kernel.convolve_power(Walk::P, steps)?;
    let mut value: f64 = pt
        .bounds()
        .points()
        .zip(pt.grid().data())
        .map(|(o, w)| {
            let y: Vec<i64> = site.iter().zip(&o).map(|(s, o)| s + o).collect();
            w * h0.at(&y)
        })
        .sum();
    for k in 1..=steps {
        let pk = kernel.convolve_power(Walk::P, steps - k)?;
        value += noise_dot(noise, h0.time + k as i64, pk.grid(), site, replica);
    }
    Ok(value)
}

/// `sum_o table(o) xi_t(shift + o)`, reading the noise a row at a time.
pub(crate) fn noise_dot(noise: &NoiseField, t: i64, table: &Grid, shift: &[i64], replica: u64) -> f64 {
    let bx = table.bounds();
    if bx.is_empty() {
        return 0.0;
    }
    let d = bx.dim();
    let len = bx.row_len();
    let last_lo = bx.lo()[d - 1];
    let mut buf = vec![0.0; len];
    let mut total = 0.0;
    for prefix in bx.row_prefixes() {
        let at: Vec<i64> = prefix.iter().zip(shift).map(|(p, s)| p + s).collect();
        noise.fill_row(t, &at, last_lo + shift[d - 1], replica, &mut buf);
        let start = table.row_offset(&prefix, last_lo);
        total += table.data()[start..start + len]
            .iter()
            .zip(&buf)
            .map(|(w, v)| w * v)
            .sum::<f64>();
    }
    total
}

/// Exact `Var h_t(x)` from a flat start: `sigma_xi^2 sum_{k<t} q^k(0,0)`.
pub fn variance_flat(kernel: &KernelAnalysis, noise_variance: f64, t: usize) -> f64 {
    noise_variance * kernel.return_sum(t)
}
