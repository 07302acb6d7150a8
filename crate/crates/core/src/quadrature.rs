//! Numerical integration: adaptive Gauss-Kronrod (7/15) on finite
//! intervals and composite Simpson with a Richardson error check.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes (indices 1, 3, 5, 7).
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the segment with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    const MAX_SEGMENTS: usize = 4000;
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut evals = 15;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                estimate: err,
                tolerance: abs_tol.max(rel_tol * total.abs()),
            });
        }
        let s = heap.pop().expect("heap is never empty");
        let m = 0.5 * (s.a + s.b);
        if m <= s.a || m >= s.b {
            // interval exhausted at machine precision
            return Err(Error::Quadrature {
                estimate: err,
                tolerance: abs_tol.max(rel_tol * total.abs()),
            });
        }
        let (v1, e1) = gk15(&f, s.a, m);
        let (v2, e2) = gk15(&f, m, s.b);
        evals += 30;
        total += v1 + v2 - s.value;
        err += e1 + e2 - s.error;
        heap.push(Segment { a: s.a, b: m, value: v1, error: e1 });
        heap.push(Segment { a: m, b: s.b, value: v2, error: e2 });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Integral {
        value,
        error,
        evaluations: evals,
    })
}

/// Values, absolute-value integrals and error estimates from
/// [`integrate_many`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralSet<const N: usize> {
    pub values: [f64; N],
    /// `int |f_i|`, the natural scale for integrals that cancel to zero.
    pub magnitudes: [f64; N],
    pub errors: [f64; N],
}

fn gk15_many<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> ([f64; N], [f64; N], [f64; N]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    let mut m = [0.0; N];
    for i in 0..N {
        k[i] = fc[i] * WGK[7];
        g[i] = fc[i] * WG[3];
        m[i] = fc[i].abs() * WGK[7];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let lo = f(c - dx);
        let hi = f(c + dx);
        for i in 0..N {
            let s = lo[i] + hi[i];
            k[i] += WGK[j] * s;
            m[i] += WGK[j] * (lo[i].abs() + hi[i].abs());
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let mut e = [0.0; N];
    for i in 0..N {
        e[i] = ((k[i] - g[i]) * h).abs();
        k[i] *= h;
        m[i] *= h.abs();
    }
    (k, m, e)
}

/// Adaptive Gauss-Kronrod for several integrands sharing one subdivision.
///
/// Each component must satisfy `error_i <= rel_tol * int |f_i|`, so
/// integrals that cancel to zero converge against their own magnitude.
pub fn integrate_many<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<IntegralSet<N>> {
    const MAX_SEGMENTS: usize = 4000;
    struct Seg<const N: usize> {
        a: f64,
        b: f64,
        v: [f64; N],
        m: [f64; N],
        e: [f64; N],
    }
    let (v, m, e) = gk15_many(&f, a, b);
    let mut segs = vec![Seg { a, b, v, m, e }];
    loop {
        let mut values = [0.0; N];
        let mut mags = [0.0; N];
        let mut errs = [0.0; N];
        for s in &segs {
            for i in 0..N {
                values[i] += s.v[i];
                mags[i] += s.m[i];
                errs[i] += s.e[i];
            }
        }
        // worst component relative to its tolerance
        let mut worst = 0usize;
        let mut ratio = 0.0;
        for i in 0..N {
            let tol = rel_tol * mags[i] + f64::MIN_POSITIVE;
            if errs[i] / tol > ratio {
                ratio = errs[i] / tol;
                worst = i;
            }
        }
        if ratio <= 1.0 {
            return Ok(IntegralSet {
                values,
                magnitudes: mags,
                errors: errs,
            });
        }
        if segs.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                estimate: errs[worst],
                tolerance: rel_tol * mags[worst],
            });
        }
        let idx = (0..segs.len())
            .max_by(|&p, &q| segs[p].e[worst].total_cmp(&segs[q].e[worst]))
            .expect("non-empty");
        let s = segs.swap_remove(idx);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::Quadrature {
                estimate: errs[worst],
                tolerance: rel_tol * mags[worst],
            });
        }
        let (v1, m1, e1) = gk15_many(&f, s.a, mid);
        let (v2, m2, e2) = gk15_many(&f, mid, s.b);
        segs.push(Seg { a: s.a, b: mid, v: v1, m: m1, e: e1 });
        segs.push(Seg { a: mid, b: s.b, v: v2, m: m2, e: e2 });
    }
}

/// Simpson rule on uniformly spaced samples (odd count) with the
/// Richardson estimate obtained from every other sample.
pub fn simpson_samples(ys: &[f64], h: f64) -> Result<Integral> {
    let n = ys.len();
    if n < 5 || !(n - 1).is_multiple_of(4) {
        return Err(crate::error::invalid(
            "samples",
            format!("need 4m + 1 uniform samples, got {n}"),
        ));
    }
    let fine = simpson_on(ys.iter().copied(), n, h);
    let coarse = simpson_on(ys.iter().copied().step_by(2), n.div_ceil(2), 2.0 * h);
    Ok(Integral {
        value: fine,
        error: (fine - coarse).abs() / 15.0,
        evaluations: n,
    })
}

fn simpson_on(ys: impl Iterator<Item = f64>, n: usize, h: f64) -> f64 {
    let mut s = 0.0;
    for (i, y) in ys.enumerate() {
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * y;
    }
    s * h / 3.0
}

/// Composite Simpson rule on `panels` uniform panels (rounded up to even),
/// with the Richardson estimate `|S(2n) - S(n)| / 15` as error.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> Integral {
    let n = panels.max(2).next_multiple_of(2);
    let fine = simpson_raw(&f, a, b, 2 * n);
    let coarse = simpson_raw(&f, a, b, n);
    Integral {
        value: fine,
        error: (fine - coarse).abs() / 15.0,
        evaluations: 3 * n + 2,
    }
}

fn simpson_raw<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Cumulative trapezoid integral of samples `ys` on abscissae `xs`,
/// starting from zero at `xs[0]`.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
        out.push(acc);
    }
    out
}
