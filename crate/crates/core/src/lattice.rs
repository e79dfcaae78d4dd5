//! Finite geometry of `Z^d` under the sup-norm: sites, balls, shells and
//! annuli.
//!
//! Every enumeration is lexicographic (first coordinate most significant),
//! so a ball's site list doubles as a stable matrix index.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::InteractionPotential;

/// A lattice point of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("a site needs at least one coordinate"));
        }
        Ok(Site(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// Sup-norm of the site seen as a vector.
    pub fn norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn translate(&self, shift: &[i64]) -> Site {
        Site(self.0.iter().zip(shift).map(|(a, b)| a + b).collect())
    }
}

impl From<i64> for Site {
    fn from(x: i64) -> Self {
        Site(vec![x])
    }
}

impl From<(i64, i64)> for Site {
    fn from((x, y): (i64, i64)) -> Self {
        Site(vec![x, y])
    }
}

/// Sup-norm distance `|x - y|`.
pub fn distance(x: &Site, y: &Site) -> u64 {
    debug_assert_eq!(x.dim(), y.dim());
    x.0.iter()
        .zip(&y.0)
        .map(|(a, b)| a.abs_diff(*b))
        .max()
        .unwrap_or(0)
}

/// Sup-norm distance from a site to a finite set; `None` for the empty set.
pub fn distance_to_set<'a>(x: &Site, set: impl IntoIterator<Item = &'a Site>) -> Option<u64> {
    set.into_iter().map(|y| distance(x, y)).min()
}

/// Number of sites with sup-norm at most `r` in dimension `d`.
pub fn ball_count(r: u64, d: usize) -> u64 {
    (2 * r + 1).pow(d as u32)
}

/// Number of sites with sup-norm exactly `r`.
pub fn sphere_count(r: u64, d: usize) -> u64 {
    if r == 0 {
        1
    } else {
        ball_count(r, d) - ball_count(r - 1, d)
    }
}

/// Closed sup-norm ball `B_L(u)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Site,
    pub radius: u64,
}

impl Ball {
    /// Builds a ball, checking that the center lives in dimension `dim`.
    pub fn new(center: Site, radius: u64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if center.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: center.dim(),
            });
        }
        Ok(Ball { center, radius })
    }

    pub fn centered(dim: usize, radius: u64) -> Self {
        Ball {
            center: Site::origin(dim),
            radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn side(&self) -> u64 {
        2 * self.radius + 1
    }

    pub fn len(&self) -> usize {
        ball_count(self.radius, self.dim()) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.dim() == self.dim() && distance(x, &self.center) <= self.radius
    }

    /// Lexicographic position of `x` in [`Ball::sites`].
    pub fn index_of(&self, x: &Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let side = self.side() as i64;
        let mut idx: i64 = 0;
        for (xi, ci) in x.0.iter().zip(&self.center.0) {
            idx = idx * side + (xi - ci + self.radius as i64);
        }
        Some(idx as usize)
    }

    /// Inverse of [`Ball::index_of`].
    pub fn site_at(&self, mut idx: usize) -> Site {
        let side = self.side() as usize;
        let d = self.dim();
        let mut coords = vec![0i64; d];
        for k in (0..d).rev() {
            coords[k] = (idx % side) as i64 - self.radius as i64 + self.center.0[k];
            idx /= side;
        }
        Site(coords)
    }

    /// All `(2L+1)^d` sites in lexicographic order.
    pub fn sites(&self) -> Vec<Site> {
        (0..self.len()).map(|i| self.site_at(i)).collect()
    }

    /// Minimal and maximal sup-distance from `y` to the points of the ball.
    pub fn distance_range(&self, y: &Site) -> (u64, u64) {
        let r = distance(y, &self.center);
        (r.saturating_sub(self.radius), r + self.radius)
    }

    /// Lattice neighbours of `x` that stay inside the ball.
    pub fn neighbors_inside(&self, x: &Site) -> Vec<Site> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for k in 0..self.dim() {
            for step in [-1i64, 1] {
                let mut y = x.clone();
                y.0[k] += step;
                if self.contains(&y) {
                    out.push(y);
                }
            }
        }
        out
    }
}

/// Enumerates `B_L(u)`; fails when `dim` does not match the center.
pub fn enumerate_ball(center: &Site, radius: u64, dim: usize) -> Result<Vec<Site>> {
    Ok(Ball::new(center.clone(), radius, dim)?.sites())
}

/// Inner boundary `∂⁻B_L(u)`: sites of the ball with a neighbour outside it.
pub fn inner_boundary(ball: &Ball) -> Result<Vec<Site>> {
    if ball.radius == 0 {
        return Err(Error::EmptyBoundary);
    }
    let r = ball.radius as i64;
    Ok(ball
        .sites()
        .into_iter()
        .filter(|x| {
            x.0.iter()
                .zip(&ball.center.0)
                .any(|(a, c)| (a - c).abs() == r)
        })
        .collect())
}

/// Shell `{x : |x - center| ∈ (inner, outer]}` with its interaction weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub index: u64,
    pub center: Site,
    pub inner: u64,
    pub outer: u64,
    /// `K_n`, the number of sites.
    pub count: u64,
    /// `𝔞_n = u(r_n)`.
    pub weight: f64,
}

impl Shell {
    pub fn sites(&self) -> Vec<Site> {
        let ball = Ball {
            center: self.center.clone(),
            radius: self.outer,
        };
        ball.sites()
            .into_iter()
            .filter(|x| distance(x, &self.center) > self.inner)
            .collect()
    }

    pub fn contains(&self, x: &Site) -> bool {
        let r = distance(x, &self.center);
        r > self.inner && r <= self.outer
    }
}

/// Shells `𝒳_1, …, 𝒳_{n_max}` around `center` built from the plateau radii of
/// `potential`; together with the center they tile `B_{r_{n_max}}(center)`.
pub fn shell_decomposition(
    center: &Site,
    potential: &InteractionPotential,
    n_max: u64,
) -> Result<Vec<Shell>> {
    if n_max == 0 {
        return Err(invalid("n_max must be at least 1"));
    }
    let d = center.dim();
    Ok((1..=n_max)
        .map(|n| {
            let inner = potential.shell_radius(n - 1);
            let outer = potential.shell_radius(n);
            Shell {
                index: n,
                center: center.clone(),
                inner,
                outer,
                count: ball_count(outer, d) - ball_count(inner, d),
                weight: potential.shell_weight(n),
            }
        })
        .collect())
}

/// `B_outer(center) \ B_inner(center)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annulus {
    pub center: Site,
    pub inner: u64,
    pub outer: u64,
}

impl Annulus {
    pub fn new(center: Site, inner: u64, outer: u64) -> Self {
        Annulus {
            center,
            inner,
            outer,
        }
    }

    pub fn len(&self) -> usize {
        let d = self.center.dim();
        if self.outer <= self.inner {
            0
        } else {
            (ball_count(self.outer, d) - ball_count(self.inner, d)) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: &Site) -> bool {
        let r = distance(x, &self.center);
        r > self.inner && r <= self.outer
    }

    pub fn sites(&self) -> Vec<Site> {
        if self.is_empty() {
            return Vec::new();
        }
        Ball {
            center: self.center.clone(),
            radius: self.outer,
        }
        .sites()
        .into_iter()
        .filter(|x| distance(x, &self.center) > self.inner)
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InteractionPotential;

    #[test]
    fn enumerates_small_balls() {
        let s = enumerate_ball(&Site::from(0), 1, 1).unwrap();
        assert_eq!(s, vec![Site::from(-1), Site::from(0), Site::from(1)]);
        let s = enumerate_ball(&Site::from((0, 0)), 0, 2).unwrap();
        assert_eq!(s, vec![Site::from((0, 0))]);
        assert_eq!(enumerate_ball(&Site::from((0, 0)), 3, 2).unwrap().len(), 49);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            enumerate_ball(&Site::from(0), 2, 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn index_roundtrip_and_order() {
        let ball = Ball::new(Site(vec![3, -2, 1]), 2, 3).unwrap();
        let sites = ball.sites();
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(ball.index_of(s), Some(i));
        }
        assert_eq!(ball.index_of(&Site(vec![6, 0, 0])), None);
    }

    #[test]
    fn shell_counts() {
        let p1 = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let shells = shell_decomposition(&Site::from(0), &p1, 5).unwrap();
        assert_eq!(shells[4].count, 2);
        let shells = shell_decomposition(&Site::from((0, 0)), &p1, 4).unwrap();
        assert_eq!(shells[3].count, 32);
        let p2 = InteractionPotential::piecewise(3.0, 2.0).unwrap();
        let shells = shell_decomposition(&Site::from(0), &p2, 3).unwrap();
        assert_eq!((shells[2].inner, shells[2].outer), (4, 9));
        // brute force over the interval (4, 9]
        let brute = (-20i64..=20).filter(|x| x.abs() > 4 && x.abs() <= 9).count();
        assert_eq!(shells[2].count as usize, brute);
        assert_eq!(brute, 10);
    }

    #[test]
    fn unit_shell_counts_closed_form() {
        let p = InteractionPotential::piecewise(4.0, 1.0).unwrap();
        for d in 1..=3usize {
            let shells = shell_decomposition(&Site::origin(d), &p, 50).unwrap();
            for s in &shells {
                let n = s.index;
                assert_eq!(s.count, (2 * n + 1).pow(d as u32) - (2 * n - 1).pow(d as u32));
            }
        }
    }

    #[test]
    fn shells_partition_the_ball() {
        let p = InteractionPotential::piecewise(3.0, 1.5).unwrap();
        let c = Site::from((1, -1));
        let shells = shell_decomposition(&c, &p, 4).unwrap();
        let big = Ball::new(c.clone(), shells.last().unwrap().outer, 2).unwrap();
        let mut seen = vec![c.clone()];
        for s in &shells {
            let sites = s.sites();
            assert_eq!(sites.len() as u64, s.count);
            seen.extend(sites);
        }
        seen.sort();
        assert_eq!(seen, big.sites());
    }

    #[test]
    fn inner_boundaries() {
        let b = inner_boundary(&Ball::centered(1, 2)).unwrap();
        assert_eq!(b, vec![Site::from(-2), Site::from(2)]);
        assert_eq!(inner_boundary(&Ball::centered(2, 1)).unwrap().len(), 8);
        // enumeration: sites of B_2 with a neighbour outside
        let ball = Ball::centered(2, 2);
        let brute = ball
            .sites()
            .iter()
            .filter(|x| ball.neighbors_inside(x).len() < 4)
            .count();
        assert_eq!(brute, 16);
        assert_eq!(inner_boundary(&ball).unwrap().len(), 16);
        assert!(matches!(
            inner_boundary(&Ball::centered(2, 0)),
            Err(Error::EmptyBoundary)
        ));
    }

    #[test]
    fn annulus_is_disjoint_from_inner_ball() {
        let a = Annulus::new(Site::from((0, 0)), 2, 4);
        let inner = Ball::centered(2, 2);
        assert_eq!(a.len(), 81 - 25);
        assert!(a.sites().iter().all(|x| !inner.contains(x)));
    }

    #[test]
    fn distance_range_matches_brute_force() {
        let ball = Ball::new(Site::from((1, 2)), 2, 2).unwrap();
        let y = Site::from((7, -1));
        let ds: Vec<u64> = ball.sites().iter().map(|x| distance(x, &y)).collect();
        let (lo, hi) = ball.distance_range(&y);
        assert_eq!(lo, *ds.iter().min().unwrap());
        assert_eq!(hi, *ds.iter().max().unwrap());
    }
}
