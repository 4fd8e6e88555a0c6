//! Adaptive Gauss–Kronrod (7/15) quadrature, 1-D and nested 2-D.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
    let (k, err) = whole;
    if err <= tol || depth == 0 || (b - a).abs() < 1e-14 * (a.abs() + b.abs()).max(1e-300) {
        return k;
    }
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    adapt(f, a, m, left, 0.5 * tol, depth - 1) + adapt(f, m, b, right, 0.5 * tol, depth - 1)
}

/// `∫ₐᵇ f` to roughly `rel_tol` relative accuracy (absolute floor `abs_tol`).
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gk15(&mut f, a, b);
    let tol = (rel_tol * whole.0.abs()).max(abs_tol);
    adapt(&mut f, a, b, whole, tol, MAX_DEPTH)
}

/// `∫∫ f(x, y) dy dx` over a rectangle; the inner integral is solved 10x
/// tighter than the outer one.
pub fn integrate_2d(mut f: impl FnMut(f64, f64) -> f64, x: (f64, f64), y: (f64, f64), rel_tol: f64) -> f64 {
    integrate(
        |xv| integrate(|yv| f(xv, yv), y.0, y.1, 0.1 * rel_tol, 1e-300),
        x.0,
        x.1,
        rel_tol,
        1e-300,
    )
}
