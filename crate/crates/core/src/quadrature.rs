//! Symmetric quadrature rules on triangles, in barycentric coordinates.
//!
//! Weights sum to one; multiply by the element area to integrate.

/// A single quadrature point: barycentric coordinates and weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Three interior points, exact for quadratics.
pub fn degree2() -> &'static [QuadPoint] {
    const A: f64 = 2.0 / 3.0;
    const B: f64 = 1.0 / 6.0;
    const W: f64 = 1.0 / 3.0;
    static RULE: [QuadPoint; 3] = [
        QuadPoint { bary: [A, B, B], weight: W },
        QuadPoint { bary: [B, A, B], weight: W },
        QuadPoint { bary: [B, B, A], weight: W },
    ];
    &RULE
}

/// Six-point Dunavant rule, exact for polynomials of degree four.
pub fn degree4() -> &'static [QuadPoint] {
    const A1: f64 = 0.445_948_490_915_964_886_318_329_253_883_05;
    const B1: f64 = 1.0 - 2.0 * A1;
    const W1: f64 = 0.223_381_589_678_011_465_695_007_008_433_12;
    const A2: f64 = 0.091_576_213_509_770_743_459_571_463_402_20;
    const B2: f64 = 1.0 - 2.0 * A2;
    const W2: f64 = 0.109_951_743_655_321_867_638_326_324_900_21;
    static RULE: [QuadPoint; 6] = [
        QuadPoint { bary: [A1, A1, B1], weight: W1 },
        QuadPoint { bary: [A1, B1, A1], weight: W1 },
        QuadPoint { bary: [B1, A1, A1], weight: W1 },
        QuadPoint { bary: [A2, A2, B2], weight: W2 },
        QuadPoint { bary: [A2, B2, A2], weight: W2 },
        QuadPoint { bary: [B2, A2, A2], weight: W2 },
    ];
    &RULE
}

/// Maps barycentric coordinates to a physical point of the triangle `p`.
#[inline]
pub fn to_physical(p: &[[f64; 2]; 3], bary: &[f64; 3]) -> [f64; 2] {
    [
        bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
        bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
    ]
}

/// Integrates `f` over the triangle `p` (area `area`) with the degree-4 rule.
pub fn integrate4(p: &[[f64; 2]; 3], area: f64, mut f: impl FnMut([f64; 2], &[f64; 3]) -> f64) -> f64 {
    degree4()
        .iter()
        .map(|q| q.weight * f(to_physical(p, &q.bary), &q.bary))
        .sum::<f64>()
        * area
}
