//! Small fixed-size linear algebra: 3-vectors, symmetric 3x3 matrices and
//! their eigen-decomposition by cyclic Jacobi rotations.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Vec3) -> Vec3 {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance_squared(&self, other: &Vec3) -> f64 {
        let d0 = self.0[0] - other.0[0];
        let d1 = self.0[1] - other.0[1];
        let d2 = self.0[2] - other.0[2];
        d0 * d0 + d1 * d1 + d2 * d2
    }

    pub fn normalized(&self) -> Vec3 {
        *self / self.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Splits `self` against the unit vector `n` into the signed normal
    /// component and the length of the tangential remainder.
    #[inline]
    pub fn decompose(&self, n: &Vec3) -> (f64, f64) {
        let perp = self.dot(n);
        let tangential = *self - *n * perp;
        (perp, tangential.norm())
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.0[0] += o.0[0];
        self.0[1] += o.0[1];
        self.0[2] += o.0[2];
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3([self.0[0] / s, self.0[1] / s, self.0[2] / s])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3(v)
    }
}

/// Symmetric 3x3 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

/// Eigenvalues in descending order with matching unit eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen3 {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

impl Sym3 {
    fn to_array(self) -> [[f64; 3]; 3] {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// Cyclic Jacobi eigen-decomposition. Iterates until the off-diagonal
    /// mass drops below 1e-15 of the Frobenius norm (squared 1e-30).
    pub fn eigen(&self) -> Eigen3 {
        let mut a = self.to_array();
        let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let norm2: f64 = a.iter().flatten().map(|x| x * x).sum();

        for _sweep in 0..64 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            if off <= 1e-30 * norm2 || off == 0.0 {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                let r = 3 - p - q;
                let arp = a[r][p];
                let arq = a[r][q];
                a[r][p] = c * arp - s * arq;
                a[p][r] = a[r][p];
                a[r][q] = s * arp + c * arq;
                a[q][r] = a[r][q];

                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }

        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
        let column = |j: usize| Vec3([v[0][j], v[1][j], v[2][j]]);
        Eigen3 {
            values: [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]],
            vectors: [column(order[0]), column(order[1]), column(order[2])],
        }
    }
}

/// Arithmetic mean of a non-empty point set.
pub fn centroid(points: &[Vec3]) -> Vec3 {
    let mut sum = Vec3::ZERO;
    for p in points {
        sum += *p;
    }
    sum / points.len() as f64
}

/// Population covariance (divides by the point count) around `center`.
pub fn covariance_about(points: &[Vec3], center: Vec3) -> Sym3 {
    let mut c = Sym3::default();
    for p in points {
        let d = *p - center;
        c.xx += d.0[0] * d.0[0];
        c.xy += d.0[0] * d.0[1];
        c.xz += d.0[0] * d.0[2];
        c.yy += d.0[1] * d.0[1];
        c.yz += d.0[1] * d.0[2];
        c.zz += d.0[2] * d.0[2];
    }
    let inv = 1.0 / points.len() as f64;
    Sym3 {
        xx: c.xx * inv,
        xy: c.xy * inv,
        xz: c.xz * inv,
        yy: c.yy * inv,
        yz: c.yz * inv,
        zz: c.zz * inv,
    }
}

/// Centroid and population covariance of a non-empty point set.
pub fn mean_and_covariance(points: &[Vec3]) -> (Vec3, Sym3) {
    let c = centroid(points);
    (c, covariance_about(points, c))
}

/// Descending eigenvalues of a covariance matrix, clamped to be non-negative.
pub fn spectrum(cov: &Sym3) -> [f64; 3] {
    let e = cov.eigen();
    e.values.map(|v| v.max(0.0))
}
