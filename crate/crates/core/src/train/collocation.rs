use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CircleSpec, DomainBox, Position3};

/// Where collocation points for one side of the pair are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Uniform in an axis-aligned box (flat axes stay fixed).
    Box(DomainBox),
    /// Uniform in angle on a horizontal circle.
    Circle(CircleSpec),
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Box(b) => DomainBox::new(b.min_corner, b.max_corner).map(|_| ()),
            Region::Circle(c) if c.radius > 0.0 && c.center.is_finite() => Ok(()),
            Region::Circle(_) => Err(Error::Domain("circle radius must be positive".into())),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Position3 {
        match self {
            Region::Box(b) => {
                let (lo, hi) = (b.min_corner.to_array(), b.max_corner.to_array());
                let mut p = [0.0; 3];
                for a in 0..3 {
                    p[a] = if hi[a] > lo[a] {
                        rng.gen_range(lo[a]..=hi[a])
                    } else {
                        lo[a]
                    };
                }
                Position3::from_array(p)
            }
            Region::Circle(c) => {
                let angle = rng.gen_range(0.0..2.0 * PI);
                let (s, co) = angle.sin_cos();
                c.center + Position3::new(c.radius * co, c.radius * s, 0.0)
            }
        }
    }

    pub fn contains(&self, p: &Position3) -> bool {
        match self {
            Region::Box(b) => b.contains(p),
            Region::Circle(c) => {
                let d = *p - c.center;
                d.z.abs() <= 1e-12 && ((d.x.hypot(d.y)) - c.radius).abs() <= 1e-9 * c.radius.max(1.0)
            }
        }
    }

    /// Coordinate axes along which the region has extent.
    pub fn spanned_axes(&self) -> Vec<usize> {
        match self {
            Region::Box(b) => {
                let (lo, hi) = (b.min_corner.to_array(), b.max_corner.to_array());
                (0..3).filter(|&a| hi[a] > lo[a]).collect()
            }
            Region::Circle(_) => vec![0, 1],
        }
    }
}

impl From<DomainBox> for Region {
    fn from(b: DomainBox) -> Self {
        Region::Box(b)
    }
}

/// Unlabeled (receiver, source) points at which the Helmholtz residual is
/// penalized.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub points: Vec<(Position3, Position3)>,
    pub seed: u64,
    pub receiver_region: Region,
    pub source_region: Region,
}

impl CollocationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The same set with receiver and source exchanged in every point.
    pub fn mirrored(&self) -> CollocationSet {
        CollocationSet {
            points: self.points.iter().map(|&(r, s)| (s, r)).collect(),
            seed: self.seed,
            receiver_region: self.source_region.clone(),
            source_region: self.receiver_region.clone(),
        }
    }
}

/// Draws `n` independent uniform points from `omega_r × omega_s`.
pub fn sample_collocation(
    omega_r: impl Into<Region>,
    omega_s: impl Into<Region>,
    n: usize,
    seed: u64,
) -> Result<CollocationSet> {
    let (omega_r, omega_s) = (omega_r.into(), omega_s.into());
    if n == 0 {
        return Err(Error::Config("collocation count must be at least 1".into()));
    }
    omega_r.validate()?;
    omega_s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let r = omega_r.sample(&mut rng);
            let s = omega_s.sample(&mut rng);
            (r, s)
        })
        .collect();
    Ok(CollocationSet {
        points,
        seed,
        receiver_region: omega_r,
        source_region: omega_s,
    })
}
