//! Seeded random collocation points over a rectangle and its four edges.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    /// `x = x_min`
    Left,
    /// `x = x_max`
    Right,
    /// `y = y_min`
    Bottom,
    /// `y = y_max`
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Edge::Left => [-1.0, 0.0],
            Edge::Right => [1.0, 0.0],
            Edge::Bottom => [0.0, -1.0],
            Edge::Top => [0.0, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
    Both,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, BoundaryTag::Dirichlet | BoundaryTag::Both)
    }

    pub fn is_neumann(self) -> bool {
        matches!(self, BoundaryTag::Neumann | BoundaryTag::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub edge: Edge,
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub segments: Vec<Segment>,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::invalid("domain rectangle is degenerate"));
        }
        for edge in Edge::ALL {
            let n = self.segments.iter().filter(|s| s.edge == edge).count();
            if n != 1 {
                return Err(Error::invalid(format!("edge {edge:?} must carry exactly one segment, found {n}")));
            }
        }
        if self.segments.len() != 4 {
            return Err(Error::invalid("domain needs exactly four boundary segments"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Point on `edge` at parameter `s ∈ [0, 1]` along it.
    pub fn edge_point(&self, edge: Edge, s: f64) -> [f64; 2] {
        let x = self.x_min + s * self.width();
        let y = self.y_min + s * self.height();
        match edge {
            Edge::Left => [self.x_min, y],
            Edge::Right => [self.x_max, y],
            Edge::Bottom => [x, self.y_min],
            Edge::Top => [x, self.y_max],
        }
    }
}

/// Share of the total point budget per region: interior first, then one entry per segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub interior: f64,
    pub segments: Vec<f64>,
}

impl Default for Fractions {
    fn default() -> Self {
        Fractions { interior: 0.8, segments: vec![0.05; 4] }
    }
}

impl Fractions {
    pub fn validate(&self, n_segments: usize) -> Result<()> {
        if self.segments.len() != n_segments {
            return Err(Error::invalid(format!(
                "expected {n_segments} segment fractions, got {}",
                self.segments.len()
            )));
        }
        let all = std::iter::once(self.interior).chain(self.segments.iter().copied());
        let mut sum = 0.0;
        for f in all {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::invalid(format!("fraction {f} is not a non-negative number")));
            }
            sum += f;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `total` points; ties go to the earlier region.
    pub fn counts(&self, total: usize) -> Vec<usize> {
        let shares: Vec<f64> = std::iter::once(self.interior).chain(self.segments.iter().copied()).collect();
        let raw: Vec<f64> = shares.iter().map(|f| f * total as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&i, &j| {
            let (fi, fj) = (raw[i] - raw[i].floor(), raw[j] - raw[j].floor());
            fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
        });
        for &i in order.iter().take(total.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Interior,
    Segment(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    domain: DomainSpec,
    fractions: Fractions,
    seed: u64,
    interior: Vec<[f64; 2]>,
    boundary: Vec<Vec<[f64; 2]>>,
}

const MIN_TOTAL: usize = 8;

pub fn sample_collocation(
    domain: &DomainSpec,
    total: usize,
    fractions: &Fractions,
    seed: u64,
) -> Result<CollocationSet> {
    domain.validate()?;
    fractions.validate(domain.segments.len())?;
    if total < MIN_TOTAL {
        return Err(Error::invalid(format!("at least {MIN_TOTAL} collocation points required, got {total}")));
    }
    let counts = fractions.counts(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = sample_interior(domain, counts[0], &mut rng);
    let boundary =
        domain.segments.iter().zip(&counts[1..]).map(|(seg, &n)| sample_edge(domain, seg.edge, n, &mut rng)).collect();
    Ok(CollocationSet { domain: domain.clone(), fractions: fractions.clone(), seed, interior, boundary })
}

/// Superset of `existing` with `new_total` points; fresh points come from `seed`.
pub fn extend_collocation(existing: &CollocationSet, new_total: usize, seed: u64) -> Result<CollocationSet> {
    let old_total = existing.total();
    if new_total <= old_total {
        return Err(Error::invalid(format!(
            "extension needs more than the existing {old_total} points, got {new_total}"
        )));
    }
    let old = existing.counts();
    let target = existing.fractions.counts(new_total);
    let mut add: Vec<usize> = target.iter().zip(&old).map(|(t, o)| t.saturating_sub(*o)).collect();
    // Rounding can leave a region one point over its share; take the excess from the largest additions.
    let mut excess = (old_total + add.iter().sum::<usize>()).saturating_sub(new_total);
    while excess > 0 {
        let i = (0..add.len()).max_by_key(|&i| (add[i], std::cmp::Reverse(i))).unwrap();
        add[i] -= 1;
        excess -= 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = existing.clone();
    out.interior.extend(sample_interior(&existing.domain, add[0], &mut rng));
    for (k, seg) in existing.domain.segments.iter().enumerate() {
        let pts = sample_edge(&existing.domain, seg.edge, add[k + 1], &mut rng);
        out.boundary[k].extend(pts);
    }
    Ok(out)
}

fn sample_interior(domain: &DomainSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let x = domain.x_min + rng.gen::<f64>() * domain.width();
        let y = domain.y_min + rng.gen::<f64>() * domain.height();
        if x > domain.x_min && x < domain.x_max && y > domain.y_min && y < domain.y_max {
            pts.push([x, y]);
        }
    }
    pts
}

fn sample_edge(domain: &DomainSpec, edge: Edge, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| domain.edge_point(edge, rng.gen::<f64>())).collect()
}

impl CollocationSet {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn fractions(&self) -> &Fractions {
        &self.fractions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn interior(&self) -> &[[f64; 2]] {
        &self.interior
    }

    pub fn segment(&self, k: usize) -> &[[f64; 2]] {
        &self.boundary[k]
    }

    /// Interior count followed by per-segment counts.
    pub fn counts(&self) -> Vec<usize> {
        std::iter::once(self.interior.len()).chain(self.boundary.iter().map(Vec::len)).collect()
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }

    /// Points on segments tagged Dirichlet (or both).
    pub fn dirichlet_count(&self) -> usize {
        self.tagged_count(BoundaryTag::is_dirichlet)
    }

    pub fn neumann_count(&self) -> usize {
        self.tagged_count(BoundaryTag::is_neumann)
    }

    fn tagged_count(&self, pred: fn(BoundaryTag) -> bool) -> usize {
        self.domain.segments.iter().zip(&self.boundary).filter(|(s, _)| pred(s.tag)).map(|(_, p)| p.len()).sum()
    }

    /// Every point with its region, interior first, then segment by segment.
    pub fn tagged_points(&self) -> Vec<(Region, [f64; 2])> {
        let mut out: Vec<(Region, [f64; 2])> = self.interior.iter().map(|p| (Region::Interior, *p)).collect();
        for (k, pts) in self.boundary.iter().enumerate() {
            out.extend(pts.iter().map(|p| (Region::Segment(k), *p)));
        }
        out
    }

    pub fn region_name(&self, region: Region) -> &str {
        match region {
            Region::Interior => "interior",
            Region::Segment(k) => &self.domain.segments[k].name,
        }
    }

    /// CSV with columns `x,y,region`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "region"]).map_err(csv_err)?;
        for (region, p) in self.tagged_points() {
            w.write_record([format!("{:e}", p[0]), format!("{:e}", p[1]), self.region_name(region).to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
