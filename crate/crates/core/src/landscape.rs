//! Synthetic epistemic landscapes.
//!
//! The ground truth is a Gaussian mixture over the unit hypercube. The
//! perceived surface discounts it multiplicatively around every accepted
//! finding, so value fades as results become common knowledge.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::seed::rng_for;

/// A point in approach space. Every coordinate lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Approach {
    coords: Vec<f64>,
}

impl Approach {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(validation("approach must have at least one coordinate"));
        }
        if let Some(c) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(validation(format!("coordinate {c} outside [0, 1]")));
        }
        Ok(Approach { coords })
    }

    /// Build from arbitrary reals, clamping each coordinate into `[0, 1]`.
    pub fn clamped(coords: impl IntoIterator<Item = f64>) -> Self {
        let coords: Vec<f64> = coords
            .into_iter()
            .map(|c| if c.is_nan() { 0.5 } else { c.clamp(0.0, 1.0) })
            .collect();
        assert!(!coords.is_empty(), "approach needs at least one coordinate");
        Approach { coords }
    }

    pub fn uniform<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Approach {
            coords: (0..dim).map(|_| rng.random::<f64>()).collect(),
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn dist2(&self, other: &Approach) -> f64 {
        sq_dist(&self.coords, &other.coords)
    }

    /// Zero-padded embedding of fixed width.
    pub fn embedding(&self, width: usize) -> Vec<f64> {
        let mut v = self.coords.clone();
        v.resize(width.max(self.coords.len()), 0.0);
        v
    }
}

impl TryFrom<Vec<f64>> for Approach {
    type Error = crate::Error;
    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Approach::new(coords)
    }
}

impl From<Approach> for Vec<f64> {
    fn from(a: Approach) -> Self {
        a.coords
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Unnormalized Gaussian kernel of squared distance `d2` and bandwidth `h`.
#[inline]
pub(crate) fn gauss(d2: f64, h: f64) -> f64 {
    (-d2 / (2.0 * h * h)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: Approach,
    pub height: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LandscapeDoc", into = "LandscapeDoc")]
pub struct Landscape {
    dim: usize,
    peaks: Vec<Peak>,
    noise_floor: f64,
}

pub const LANDSCAPE_SCHEMA: &str = "landscape/v1";

/// On-disk form: `{"schema": "landscape/v1", "dim", "peaks", "noise_floor"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LandscapeDoc {
    schema: String,
    dim: usize,
    peaks: Vec<Peak>,
    noise_floor: f64,
}

impl TryFrom<LandscapeDoc> for Landscape {
    type Error = crate::Error;
    fn try_from(doc: LandscapeDoc) -> Result<Self> {
        if doc.schema != LANDSCAPE_SCHEMA {
            return Err(validation(format!("unsupported landscape schema {:?}", doc.schema)));
        }
        Landscape::new(doc.dim, doc.peaks, doc.noise_floor)
    }
}

impl From<Landscape> for LandscapeDoc {
    fn from(l: Landscape) -> Self {
        LandscapeDoc {
            schema: LANDSCAPE_SCHEMA.to_string(),
            dim: l.dim,
            peaks: l.peaks,
            noise_floor: l.noise_floor,
        }
    }
}

impl Landscape {
    pub fn new(dim: usize, peaks: Vec<Peak>, noise_floor: f64) -> Result<Self> {
        if dim == 0 {
            return Err(validation("landscape dimension must be positive"));
        }
        if peaks.is_empty() {
            return Err(validation("landscape needs at least one peak"));
        }
        for p in &peaks {
            if p.center.dim() != dim {
                return Err(validation("peak center dimension mismatch"));
            }
            if !(p.height > 0.0 && p.height.is_finite()) || !(p.width > 0.0 && p.width.is_finite()) {
                return Err(validation("peak heights and widths must be positive"));
            }
        }
        if !(noise_floor >= 0.0 && noise_floor.is_finite()) {
            return Err(validation("noise floor must be non-negative"));
        }
        Ok(Landscape { dim, peaks, noise_floor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn noise_floor(&self) -> f64 {
        self.noise_floor
    }

    /// A copy with every peak height multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let peaks = self
            .peaks
            .iter()
            .map(|p| Peak { height: p.height * c, ..p.clone() })
            .collect();
        Landscape::new(self.dim, peaks, self.noise_floor * c)
    }

    /// Mixture value at raw coordinates, with no range check. Points outside
    /// the hypercube are allowed here.
    pub fn eval_raw(&self, coords: &[f64]) -> f64 {
        self.peaks
            .iter()
            .map(|p| p.height * gauss(sq_dist(coords, p.center.coords()), p.width))
            .sum::<f64>()
            + self.noise_floor
    }

    pub fn check_dim(&self, x: &Approach) -> Result<()> {
        if x.dim() != self.dim {
            return Err(validation(format!(
                "approach has dimension {}, landscape has {}",
                x.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Ground-truth significance f(x).
    pub fn true_significance(&self, x: &Approach) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.eval_raw(x.coords()))
    }

    /// History-discounted significance seen by the community.
    pub fn perceived_significance(
        &self,
        x: &Approach,
        accepted_history: &[Approach],
        params: &PerceptionParams,
    ) -> Result<f64> {
        let f = self.true_significance(x)?;
        Ok(f * discount_factor(x, accepted_history, params)?)
    }
}

pub fn generate_landscape(dim: usize, n_peaks: usize, seed: u64) -> Result<Landscape> {
    if dim == 0 || n_peaks == 0 {
        return Err(validation("generate_landscape needs dim >= 1 and n_peaks >= 1"));
    }
    let mut rng = rng_for(seed, &["landscape"]);
    let peaks = (0..n_peaks)
        .map(|_| {
            let center = Approach::uniform(dim, &mut rng);
            let height = rng.random_range(0.2..=1.0);
            let width = rng.random_range(0.05..=0.3);
            Peak { center, height, width }
        })
        .collect();
    Landscape::new(dim, peaks, 0.0)
}

/// Shape of the novelty discount applied to accepted findings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionParams {
    /// Discount strength per accepted finding, in `[0, 1]`.
    pub decay_alpha: f64,
    /// Kernel bandwidth h.
    pub kernel_bandwidth: f64,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        PerceptionParams { decay_alpha: 0.5, kernel_bandwidth: 0.05 }
    }
}

impl PerceptionParams {
    pub fn new(decay_alpha: f64, kernel_bandwidth: f64) -> Result<Self> {
        let p = PerceptionParams { decay_alpha, kernel_bandwidth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.decay_alpha) {
            return Err(validation("decay_alpha must lie in [0, 1]"));
        }
        if !(self.kernel_bandwidth > 0.0 && self.kernel_bandwidth.is_finite()) {
            return Err(validation("kernel_bandwidth must be positive"));
        }
        Ok(())
    }
}

fn check_history(x: &Approach, history: &[Approach]) -> Result<()> {
    if history.iter().any(|h| h.dim() != x.dim()) {
        return Err(validation("history approach dimension mismatch"));
    }
    Ok(())
}

/// Product of per-finding discounts `1 - alpha * k(x, x_o)`; 1 for an empty history.
pub fn discount_factor(x: &Approach, history: &[Approach], params: &PerceptionParams) -> Result<f64> {
    check_history(x, history)?;
    let h = params.kernel_bandwidth;
    Ok(history
        .iter()
        .map(|o| 1.0 - params.decay_alpha * gauss(x.dist2(o), h))
        .product())
}

/// `1 - max_o k(x, x_o)`; 1 for an empty history.
pub fn novelty_of(x: &Approach, accepted_history: &[Approach], params: &PerceptionParams) -> Result<f64> {
    check_history(x, accepted_history)?;
    let h = params.kernel_bandwidth;
    let nearest = accepted_history
        .iter()
        .map(|o| gauss(x.dist2(o), h))
        .fold(0.0_f64, f64::max);
    Ok(1.0 - nearest)
}
