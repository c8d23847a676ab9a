//! Symmetric triangle rules (barycentric points) and Gauss rules on [0, 1].

/// A rule on the reference triangle with vertices (0,0), (1,0), (0,1).
/// Points are given as (ξ, η); weights sum to the reference area ½.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn push_orbit3(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for bary in [[a, a, b], [a, b, a], [b, a, a]] {
        points.push([bary[1], bary[2]]);
        weights.push(0.5 * w);
    }
}

fn push_orbit6(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for bary in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push([bary[1], bary[2]]);
        weights.push(0.5 * w);
    }
}

impl TriangleRule {
    /// Six-point rule, exact for polynomials of degree 4.
    pub fn degree4() -> Self {
        let mut p = Vec::new();
        let mut w = Vec::new();
        push_orbit3(&mut p, &mut w, 0.445_948_490_915_965, 0.223_381_589_678_011);
        push_orbit3(&mut p, &mut w, 0.091_576_213_509_771, 0.109_951_743_655_322);
        Self { points: p, weights: w, degree: 4 }
    }

    /// Twelve-point rule, exact for polynomials of degree 6.
    pub fn degree6() -> Self {
        let mut p = Vec::new();
        let mut w = Vec::new();
        push_orbit3(&mut p, &mut w, 0.249_286_745_170_910, 0.116_786_275_726_379);
        push_orbit3(&mut p, &mut w, 0.063_089_014_491_502, 0.050_844_906_370_207);
        push_orbit6(
            &mut p,
            &mut w,
            0.053_145_049_844_817,
            0.310_352_451_033_784,
            0.082_851_075_618_374,
        );
        Self { points: p, weights: w, degree: 6 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre rule on [0, 1]; weights sum to 1.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    /// Three points, exact through degree 5.
    pub fn gauss3() -> Self {
        let d = 0.15f64.sqrt();
        Self { points: vec![0.5 - d, 0.5, 0.5 + d], weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0] }
    }
}
