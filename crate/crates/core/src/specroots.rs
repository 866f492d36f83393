//! Rightmost roots of the characteristic quasi-polynomials.
//!
//! This is the numerical oracle the closed-form boundaries in
//! [`crate::linear`] are checked against, so it shares no algebra with them.
//! Roots are located in two phases:
//!
//! 1. `f` is sampled on a grid over the search box (cell side at most
//!    [`MAX_CELL`]) and the winding number of `f` around every cell is
//!    accumulated from the phase increments along its edges. A cell with
//!    winding `w > 0` holds `w` roots counted with multiplicity.
//! 2. Newton's method with the analytic derivative polishes from the cell
//!    centre. Cells with `w > 1` deflate the roots already found in them;
//!    roots that coincide to [`MULTIPLICITY_TOL`] are reported as one
//!    multiple root, listed once per multiplicity.
//!
//! The grid is shifted by a fixed irrational fraction of a cell so roots at
//! round coordinates (the real axis, `-1`, `i pi/2`) never sit on an edge.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check, Error, Result};
use crate::scalar::{as_f64, from_usize, lit, Scalar};

/// Largest grid cell side used by the phase scan.
pub const MAX_CELL: f64 = 0.05;
/// Distinct Newton limits closer than this are the same simple root.
pub const DEDUP_TOL: f64 = 1e-8;
/// Roots found in one cell that agree to this are one multiple root.
pub const MULTIPLICITY_TOL: f64 = 1e-6;
/// Residual a polished root must reach.
pub const RESIDUAL_TOL: f64 = 1e-12;

const GRID_SHIFT_RE: f64 = 0.318_309_886_183_790_7;
const GRID_SHIFT_IM: f64 = 0.271_828_182_845_904_5;
const NEWTON_MAX_ITER: usize = 200;
const EDGE_PHASE_MAX: f64 = 1.0;
const EDGE_MAX_DEPTH: u32 = 12;

/// Characteristic equation in the time unit of one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CharEq<T> {
    /// `lambda^2 e^lambda + a lambda + beta = 0`
    ModelAFull { a: T, beta: T },
    /// `lambda e^lambda + a = 0`
    ModelANoQueue { a: T },
    /// `lambda + kappa_tau e^{-lambda} = 0`
    ScalarDelay { kappa_tau: T },
}

impl<T: Scalar> CharEq<T> {
    pub fn model_a_full(a: T, beta: T) -> Result<Self> {
        check(a >= T::zero() && a.is_finite(), "a", as_f64(a), "finite and >= 0")?;
        check(beta >= T::zero() && beta.is_finite(), "beta", as_f64(beta), "finite and >= 0")?;
        Ok(CharEq::ModelAFull { a, beta })
    }

    pub fn model_a_no_queue(a: T) -> Result<Self> {
        check(a >= T::zero() && a.is_finite(), "a", as_f64(a), "finite and >= 0")?;
        Ok(CharEq::ModelANoQueue { a })
    }

    pub fn scalar_delay(kappa_tau: T) -> Result<Self> {
        check(
            kappa_tau >= T::zero() && kappa_tau.is_finite(),
            "kappa_tau",
            as_f64(kappa_tau),
            "finite and >= 0",
        )?;
        Ok(CharEq::ScalarDelay { kappa_tau })
    }

    pub fn eval(&self, z: Complex<T>) -> Complex<T> {
        match *self {
            CharEq::ModelAFull { a, beta } => z * z * z.exp() + z * a + beta,
            CharEq::ModelANoQueue { a } => z * z.exp() + a,
            CharEq::ScalarDelay { kappa_tau } => z + (-z).exp() * kappa_tau,
        }
    }

    pub fn derivative(&self, z: Complex<T>) -> Complex<T> {
        let one = Complex::new(T::one(), T::zero());
        match *self {
            CharEq::ModelAFull { a, .. } => (z * z + z * lit::<T>(2.0)) * z.exp() + a,
            CharEq::ModelANoQueue { .. } => (z + one) * z.exp(),
            CharEq::ScalarDelay { kappa_tau } => one - (-z).exp() * kappa_tau,
        }
    }

    /// A box (upper half plane) containing every root with `Re >= re_floor`.
    ///
    /// - `lambda + k e^{-lambda}`, `lambda e^lambda + k`: `|lambda| = k e^{-Re}`,
    ///   so `|Im| <= k e^{-re_floor}` and `Re <= k`.
    /// - `lambda^2 e^lambda + a lambda + beta`: `|lambda|^2 e^{Re} <= a|lambda| + beta`
    ///   bounds `|lambda|` by the positive root of `x^2 = e^{-Re}(a x + beta)`.
    pub fn certified_box(&self, re_floor: T) -> SearchBox<T> {
        let pad = lit::<T>(0.25);
        let decay = (-re_floor).exp();
        let (re_top, im_top) = match *self {
            CharEq::ModelANoQueue { a: k } | CharEq::ScalarDelay { kappa_tau: k } => (k, k * decay),
            CharEq::ModelAFull { a, beta } => {
                let radius = |scale: T| {
                    let (p, q) = (a * scale, beta * scale);
                    (p + (p * p + lit::<T>(4.0) * q).sqrt()) / lit(2.0)
                };
                (radius(T::one()), radius(decay))
            }
        };
        SearchBox {
            re_min: re_floor,
            re_max: re_top.max(re_floor) + pad,
            im_min: T::zero(),
            im_max: im_top + pad,
        }
    }
}

/// Rectangle in the complex plane; `im_min = 0` scans the upper half plane
/// and infers the conjugates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchBox<T> {
    pub re_min: T,
    pub re_max: T,
    pub im_min: T,
    pub im_max: T,
}

impl<T: Scalar> Default for SearchBox<T> {
    /// `Re in [-10, 5]`, `Im in [0, 40]`.
    fn default() -> Self {
        Self {
            re_min: lit(-10.0),
            re_max: lit(5.0),
            im_min: T::zero(),
            im_max: lit(40.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root<T> {
    pub value: Complex<T>,
    pub residual: T,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumResult<T> {
    /// Sorted by descending real part, then descending imaginary part.
    pub roots: Vec<Root<T>>,
    pub search_box: SearchBox<T>,
    pub requested: usize,
}

impl<T: Scalar> SpectrumResult<T> {
    /// False when the box held fewer roots than requested.
    pub fn is_complete(&self) -> bool {
        self.roots.len() >= self.requested
    }

    pub fn rightmost(&self) -> Option<&Root<T>> {
        self.roots.first()
    }
}

/// The `count` rightmost roots of `eq` inside `bx`.
///
/// When the box holds fewer, the result carries what was found and a warning
/// is logged.
pub fn rightmost_roots<T: Scalar>(eq: &CharEq<T>, count: usize, bx: &SearchBox<T>) -> Result<SpectrumResult<T>> {
    check(count >= 1, "count", count as f64, ">= 1")?;
    let finite = [bx.re_min, bx.re_max, bx.im_min, bx.im_max].iter().all(|v| v.is_finite());
    if !finite || bx.re_max <= bx.re_min || bx.im_max <= bx.im_min {
        return Err(Error::Config(format!(
            "degenerate search box Re [{}, {}] x Im [{}, {}]",
            bx.re_min, bx.re_max, bx.im_min, bx.im_max
        )));
    }
    let mut roots = roots_in_box(eq, bx);
    if roots.len() < count {
        log::warn!(
            "found {} of {} requested roots of {:?} in the search box",
            roots.len(),
            count,
            eq
        );
    }
    roots.truncate(count);
    Ok(SpectrumResult {
        roots,
        search_box: *bx,
        requested: count,
    })
}

/// Real part of the rightmost root.
///
/// Scans the certified box for roots with `Re >= -2` first, which is complete
/// for that half plane; falls back to the default box when the rightmost
/// root lies further left.
pub fn rightmost_real_part<T: Scalar>(eq: &CharEq<T>) -> Result<T> {
    for bx in [eq.certified_box(lit(-2.0)), SearchBox::default()] {
        let result = rightmost_roots(eq, 1, &bx)?;
        if let Some(root) = result.rightmost() {
            return Ok(root.value.re);
        }
    }
    Err(Error::NoRoots)
}

struct Grid<T> {
    re0: T,
    im0: T,
    h_re: T,
    h_im: T,
    nx: usize,
    ny: usize,
}

impl<T: Scalar> Grid<T> {
    fn covering(bx: &SearchBox<T>) -> Self {
        let cell = lit::<T>(MAX_CELL);
        let cells = |span: T| (span / cell).ceil().to_usize().unwrap_or(1).max(1);
        let (cx, cy) = (cells(bx.re_max - bx.re_min), cells(bx.im_max - bx.im_min));
        let h_re = (bx.re_max - bx.re_min) / from_usize(cx);
        let h_im = (bx.im_max - bx.im_min) / from_usize(cy);
        Self {
            re0: bx.re_min - lit::<T>(GRID_SHIFT_RE) * h_re,
            im0: bx.im_min - lit::<T>(GRID_SHIFT_IM) * h_im,
            h_re,
            h_im,
            nx: cx + 2,
            ny: cy + 2,
        }
    }

    fn node(&self, i: usize, j: usize) -> Complex<T> {
        Complex::new(
            self.re0 + from_usize::<T>(i) * self.h_re,
            self.im0 + from_usize::<T>(j) * self.h_im,
        )
    }

    fn centre(&self, i: usize, j: usize) -> Complex<T> {
        let half = lit::<T>(0.5);
        self.node(i, j) + Complex::new(half * self.h_re, half * self.h_im)
    }

    fn contains(&self, z: Complex<T>) -> bool {
        let hi = self.node(self.nx - 1, self.ny - 1);
        z.re >= self.re0 && z.re <= hi.re && z.im >= self.im0 && z.im <= hi.im
    }

    fn in_cell(&self, i: usize, j: usize, z: Complex<T>, slack: T) -> bool {
        let lo = self.node(i, j);
        (z.re - lo.re) >= -slack * self.h_re
            && (z.re - lo.re) <= (T::one() + slack) * self.h_re
            && (z.im - lo.im) >= -slack * self.h_im
            && (z.im - lo.im) <= (T::one() + slack) * self.h_im
    }
}

/// Principal argument of `b / a`.
fn phase_step<T: Scalar>(a: Complex<T>, b: Complex<T>) -> T {
    (b * a.conj()).arg()
}

/// Phase change of `f` along the segment `a -> b`, bisected until every
/// step is well below a half turn.
fn edge_phase<T: Scalar>(eq: &CharEq<T>, a: Complex<T>, b: Complex<T>, fa: Complex<T>, fb: Complex<T>, depth: u32) -> T {
    let step = phase_step(fa, fb);
    if depth == 0 || step.abs() < lit::<T>(EDGE_PHASE_MAX) {
        return step;
    }
    let m = (a + b) * lit::<T>(0.5);
    let fm = eq.eval(m);
    edge_phase(eq, a, m, fa, fm, depth - 1) + edge_phase(eq, m, b, fm, fb, depth - 1)
}

/// Cells with positive winding, as `(i, j, winding)`.
fn flagged_cells<T: Scalar>(eq: &CharEq<T>, grid: &Grid<T>) -> Vec<(usize, usize, u32)> {
    let (nx, ny) = (grid.nx, grid.ny);
    let values: Vec<Complex<T>> = (0..ny)
        .into_par_iter()
        .flat_map_iter(|j| (0..nx).map(move |i| eq.eval(grid.node(i, j))))
        .collect();
    let at = |i: usize, j: usize| values[j * nx + i];
    let along = |i0: usize, j0: usize, i1: usize, j1: usize| {
        edge_phase(eq, grid.node(i0, j0), grid.node(i1, j1), at(i0, j0), at(i1, j1), EDGE_MAX_DEPTH)
    };
    // Edges are shared between neighbouring cells, so compute each once.
    let horizontal: Vec<T> = (0..ny)
        .into_par_iter()
        .flat_map_iter(|j| (0..nx - 1).map(move |i| along(i, j, i + 1, j)))
        .collect();
    let vertical: Vec<T> = (0..ny - 1)
        .into_par_iter()
        .flat_map_iter(|j| (0..nx).map(move |i| along(i, j, i, j + 1)))
        .collect();
    let h = |i: usize, j: usize| horizontal[j * (nx - 1) + i];
    let v = |i: usize, j: usize| vertical[j * nx + i];
    let two_pi = T::PI() + T::PI();

    (0..ny - 1)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..nx - 1).filter_map(move |i| {
                let total = h(i, j) + v(i + 1, j) - h(i, j + 1) - v(i, j);
                let w = (total / two_pi).round().to_i64().unwrap_or(0);
                (w > 0).then_some((i, j, w as u32))
            })
        })
        .collect()
}

/// Newton iteration on `f / prod(z - r)` for the deflated roots `known`.
fn newton<T: Scalar>(eq: &CharEq<T>, start: Complex<T>, known: &[Complex<T>]) -> Option<Complex<T>> {
    let tol = lit::<T>(RESIDUAL_TOL).max(lit::<T>(1e3) * T::epsilon());
    let step_tol = lit::<T>(4.0) * T::epsilon();
    let max_step = T::one();
    let mut z = start;
    for _ in 0..NEWTON_MAX_ITER {
        let f = eq.eval(z);
        if f.norm() == T::zero() {
            return Some(z);
        }
        let mut log_deriv = eq.derivative(z) / f;
        for &r in known {
            log_deriv = log_deriv - (z - r).inv();
        }
        let mut step = log_deriv.inv();
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        let len = step.norm();
        if len > max_step {
            step = step * (max_step / len);
        }
        z = z - step;
        if len <= step_tol * (T::one() + z.norm()) {
            break;
        }
    }
    (eq.eval(z).norm() <= tol).then_some(z)
}

struct Candidate<T> {
    z: Complex<T>,
    cell: usize,
}

/// Every root in the scanned region, conjugates included, multiple roots
/// repeated, sorted rightmost first.
fn roots_in_box<T: Scalar>(eq: &CharEq<T>, bx: &SearchBox<T>) -> Vec<Root<T>> {
    let grid = Grid::covering(bx);
    let cells = flagged_cells(eq, &grid);

    let per_cell: Vec<Vec<Candidate<T>>> = cells
        .par_iter()
        .enumerate()
        .map(|(id, &(i, j, w))| polish_cell(eq, &grid, id, i, j, w))
        .collect();
    let candidates: Vec<Candidate<T>> = per_cell.into_iter().flatten().collect();

    let imag_snap = lit::<T>(1e-9);
    let mut roots = Vec::new();
    for (value, multiplicity) in cluster(&candidates) {
        let value = if value.im.abs() <= imag_snap * (T::one() + value.norm()) {
            Complex::new(value.re, T::zero())
        } else {
            value
        };
        // The scan straddles the real axis; lower-half roots are conjugates
        // of upper-half ones that were also scanned.
        if value.im < T::zero() || !grid.contains(value) {
            continue;
        }
        let residual = eq.eval(value).norm();
        let mut push = |v: Complex<T>| {
            for _ in 0..multiplicity {
                roots.push(Root {
                    value: v,
                    residual,
                    multiplicity,
                });
            }
        };
        push(value);
        if value.im > T::zero() && bx.im_min <= T::zero() {
            push(value.conj());
        }
    }
    roots.sort_by(|x, y| {
        y.value
            .re
            .partial_cmp(&x.value.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y.value.im.partial_cmp(&x.value.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    roots
}

fn polish_cell<T: Scalar>(eq: &CharEq<T>, grid: &Grid<T>, id: usize, i: usize, j: usize, winding: u32) -> Vec<Candidate<T>> {
    let centre = grid.centre(i, j);
    let corners = [grid.node(i, j), grid.node(i + 1, j), grid.node(i + 1, j + 1), grid.node(i, j + 1)];
    let slack = lit::<T>(0.5);
    let mut found: Vec<Complex<T>> = Vec::new();
    for k in 0..winding {
        // Deflated searches start off-centre so they do not sit on the pole
        // introduced by a root found right at the centre.
        let offset = Complex::from_polar(lit::<T>(0.2) * grid.h_re, lit::<T>(2.1) * from_usize::<T>(k as usize));
        let first = if k == 0 { centre } else { centre + offset };
        let starts = std::iter::once(first).chain(corners.iter().copied());
        let mut fallback = None;
        let mut accepted = None;
        for start in starts {
            if let Some(z) = newton(eq, start, &found) {
                if grid.in_cell(i, j, z, slack) {
                    accepted = Some(z);
                    break;
                }
                fallback.get_or_insert(z);
            }
        }
        match accepted.or(fallback) {
            Some(z) => found.push(z),
            None => break,
        }
    }
    found.into_iter().map(|z| Candidate { z, cell: id }).collect()
}

/// Groups Newton limits into distinct roots with multiplicities.
///
/// Limits within [`MULTIPLICITY_TOL`] form a cluster. Limits from different
/// cells are the same root found twice; limits from one cell were separated
/// by deflation, so their count in that cell is the multiplicity.
fn cluster<T: Scalar>(candidates: &[Candidate<T>]) -> Vec<(Complex<T>, u32)> {
    let tol = lit::<T>(MULTIPLICITY_TOL);
    let dedup = lit::<T>(DEDUP_TOL);
    let mut groups: Vec<Vec<&Candidate<T>>> = Vec::new();
    for c in candidates {
        match groups.iter_mut().find(|g| (g[0].z - c.z).norm() <= tol) {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let mut best: Vec<&Candidate<T>> = Vec::new();
            for c in &g {
                let same_cell: Vec<&Candidate<T>> = g.iter().copied().filter(|o| o.cell == c.cell).collect();
                if same_cell.len() > best.len() {
                    best = same_cell;
                }
            }
            let spread = best.iter().map(|c| (c.z - best[0].z).norm()).fold(T::zero(), T::max);
            if best.len() > 1 || spread > dedup {
                let n = from_usize::<T>(best.len());
                let mean = best.iter().fold(Complex::new(T::zero(), T::zero()), |s, c| s + c.z) / n;
                (mean, best.len() as u32)
            } else {
                (best[0].z, 1)
            }
        })
        .collect()
}
