//! Mobius geometry of the unit ball: the `[x,y]` bracket, the involutions
//! `phi_a`, pseudo-hyperbolic and hyperbolic distances, and pseudo-hyperbolic
//! balls.

use crate::error::{Error, Result};

/// Points are rejected once `|x|` exceeds `1 - BOUNDARY_MARGIN`.
pub const BOUNDARY_MARGIN: f64 = 1e-9;

/// A point of the open unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

/// A point of the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    coords: Vec<f64>,
}

/// A Euclidean ball inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

fn check_dim(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Input(format!("dimension {} < 2", coords.len())));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("non-finite coordinate".into()));
        }
        let r = norm(&coords);
        if r > 1.0 - BOUNDARY_MARGIN {
            return Err(Error::Input(format!(
                "|x| = {r} is outside the admissible ball |x| <= 1 - {BOUNDARY_MARGIN:e}"
            )));
        }
        Ok(Point { coords })
    }

    pub fn origin(n: usize) -> Self {
        Point { coords: vec![0.0; n] }
    }

    /// `r * e_1` in dimension `n`.
    pub fn on_axis(n: usize, r: f64) -> Result<Self> {
        let mut c = vec![0.0; n];
        c[0] = r;
        Point::new(c)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

impl BoundaryPoint {
    /// Normalizes `coords` onto the sphere.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Input(format!("dimension {} < 2", coords.len())));
        }
        let r = norm(&coords);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Input("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(BoundaryPoint {
            coords: coords.into_iter().map(|c| c / r).collect(),
        })
    }

    pub fn e1(n: usize) -> Self {
        let mut c = vec![0.0; n];
        c[0] = 1.0;
        BoundaryPoint { coords: c }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl AsRef<[f64]> for BoundaryPoint {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

impl EuclideanBall {
    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2 < self.radius * self.radius
    }
}

/// `[x,y]^2 = |x - y|^2 + (1 - |x|^2)(1 - |y|^2)`, clamped at zero.
#[inline]
pub fn bracket_sq_unchecked(x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
    (d2 + (1.0 - norm_sq(x)) * (1.0 - norm_sq(y))).max(0.0)
}

#[inline]
pub fn bracket_unchecked(x: &[f64], y: &[f64]) -> f64 {
    bracket_sq_unchecked(x, y).sqrt()
}

/// The bracket `[x,y]`; either argument may lie on the sphere.
pub fn bracket(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x, y)?;
    Ok(bracket_unchecked(x, y))
}

/// `phi_a(x)` written into `out`.
pub fn mobius_into(a: &[f64], x: &[f64], out: &mut [f64]) {
    let a2 = norm_sq(a);
    let d2: f64 = x.iter().zip(a).map(|(p, q)| (p - q) * (p - q)).sum();
    let b2 = bracket_sq_unchecked(x, a);
    for i in 0..a.len() {
        out[i] = (a[i] * d2 + (1.0 - a2) * (a[i] - x[i])) / b2;
    }
}

/// The involution `phi_a`, exchanging `a` and `0`.
pub fn mobius(a: &Point, x: &Point) -> Result<Point> {
    check_dim(a.coords(), x.coords())?;
    let mut out = vec![0.0; a.dim()];
    mobius_into(a.coords(), x.coords(), &mut out);
    if !(norm(&out) < 1.0) {
        return Err(Error::NumericOverflow(format!(
            "|phi_a(x)| = {} left the ball",
            norm(&out)
        )));
    }
    Ok(Point { coords: out })
}

/// `|det phi_a'(x)| = ((1 - |a|^2) / [x,a]^2)^n`.
pub fn mobius_jacobian_det(a: &Point, x: &Point) -> Result<f64> {
    check_dim(a.coords(), x.coords())?;
    let n = a.dim() as i32;
    let q = (1.0 - a.norm().powi(2)) / bracket_sq_unchecked(x.coords(), a.coords());
    Ok(q.powi(n))
}

#[inline]
pub fn rho_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    if d2 == 0.0 {
        return 0.0;
    }
    (d2 / bracket_sq_unchecked(a, b)).sqrt()
}

/// Pseudo-hyperbolic distance `|a - b| / [a,b]`.
pub fn rho(a: &Point, b: &Point) -> Result<f64> {
    check_dim(a.coords(), b.coords())?;
    Ok(rho_unchecked(a.coords(), b.coords()))
}

/// Hyperbolic distance `log((1 + rho) / (1 - rho))`.
pub fn beta_dist(a: &Point, b: &Point) -> Result<f64> {
    Ok(2.0 * rho(a, b)?.atanh())
}

/// `E_r(a) = { x : rho(x,a) < r }` as a Euclidean ball.
pub fn pseudo_ball(a: &Point, r: f64) -> Result<EuclideanBall> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Input(format!("radius {r} outside (0,1)")));
    }
    Ok(pseudo_ball_unchecked(a.coords(), r))
}

pub fn pseudo_ball_unchecked(a: &[f64], r: f64) -> EuclideanBall {
    let a2 = norm_sq(a);
    let den = 1.0 - a2 * r * r;
    EuclideanBall {
        center: a.iter().map(|c| (1.0 - r * r) * c / den).collect(),
        radius: (1.0 - a2) * r / den,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(bracket(&[0.3, -0.2], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((bracket(&[0.5, 0.0], &[0.5, 0.0]).unwrap() - 0.75).abs() < 1e-15);
        let v = bracket(&[0.5, 0.0], &[0.0, 0.5]).unwrap();
        assert!((v - 1.0625f64.sqrt()).abs() < 1e-15);
        assert!(bracket(&[0.1, 0.2], &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn mobius_exchanges_a_and_origin() {
        let a = p(&[0.5, 0.0]);
        let z = mobius(&a, &a).unwrap();
        assert!(z.norm() < 1e-15);
        let back = mobius(&a, &Point::origin(2)).unwrap();
        assert_eq!(back.coords(), &[0.5, 0.0]);
    }

    #[test]
    fn jacobian_examples() {
        let x = p(&[0.3, -0.4, 0.1]);
        assert!((mobius_jacobian_det(&Point::origin(3), &x).unwrap() - 1.0).abs() < 1e-15);
        let a = p(&[0.6, 0.0, 0.0]);
        let v = mobius_jacobian_det(&a, &a).unwrap();
        assert!((v - (1.0f64 / 0.64).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let b = p(&[0.3, 0.0]);
        assert!((rho(&Point::origin(2), &b).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(rho(&b, &b).unwrap(), 0.0);
        let d = beta_dist(&Point::origin(2), &p(&[0.5, 0.0])).unwrap();
        assert!((d - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn pseudo_ball_examples() {
        let e = pseudo_ball(&Point::origin(3), 0.2).unwrap();
        assert_eq!(e.radius, 0.2);
        let e = pseudo_ball(&p(&[0.5, 0.0]), 0.5).unwrap();
        assert!((e.center[0] - 0.4).abs() < 1e-15 && (e.radius - 0.4).abs() < 1e-15);
        assert!(pseudo_ball(&Point::origin(2), 1.0).is_err());
    }

    #[test]
    fn rejects_points_near_the_sphere() {
        assert!(Point::new(vec![1.0 - 1e-10, 0.0]).is_err());
        assert!(Point::new(vec![1.0 - 2e-9, 0.0]).is_ok());
        assert!(Point::new(vec![0.1]).is_err());
    }
}
