//! Gauss–Legendre rules and adaptive Gauss–Kronrod integration.

use crate::Real;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussRule<T> {
    /// `n`-point rule, computed by Newton iteration on the Legendre
    /// recurrence in `f64` and rounded to `T`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] → [0, 1]
            nodes[i] = T::lit(0.5 * (1.0 - x));
            nodes[n - 1 - i] = T::lit(0.5 * (1.0 + x));
            weights[i] = T::lit(0.5 * w);
            weights[n - 1 - i] = T::lit(0.5 * w);
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f` with the rule mapped onto `[a, b]`.
    pub fn integrate(&self, a: T, b: T, mut f: impl FnMut(T) -> T) -> T {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(a + h * x))
            * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_870_6,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Real>(f: &mut impl FnMut(T) -> T, a: T, b: T) -> (T, T) {
    let c = (a + b) * T::lit(0.5);
    let h = (b - a) * T::lit(0.5);
    let fc = f(c);
    let mut kron = fc * T::lit(KRONROD_WEIGHTS[7]);
    let mut gauss = fc * T::lit(GAUSS7_WEIGHTS[3]);
    for i in 0..7 {
        let dx = h * T::lit(KRONROD_NODES[i]);
        let s = f(c - dx) + f(c + dx);
        kron += s * T::lit(KRONROD_WEIGHTS[i]);
        if i % 2 == 1 {
            gauss += s * T::lit(GAUSS7_WEIGHTS[i / 2]);
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive 15-point Gauss–Kronrod integration to relative tolerance `rtol`.
pub fn adaptive_gk<T: Real>(mut f: impl FnMut(T) -> T, a: T, b: T, rtol: T) -> T {
    let mut stack = vec![(a, b, 0usize)];
    let (whole, _) = gk15(&mut f, a, b);
    let scale = whole.abs().max(T::min_positive_value());
    let mut total = T::zero();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        let width = (hi - lo) / (b - a);
        if err <= rtol * scale * width.max(T::lit(1e-3)) || depth >= 40 {
            total += val;
        } else {
            let mid = (lo + hi) * T::lit(0.5);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}
