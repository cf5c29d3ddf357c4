use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{hash, rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Direction of `other` as seen from `self`, in radians.
    pub fn bearing_to(self, other: Point2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned deployment area in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Point scatterer with complex reflectivity `(re, im)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Point2,
    pub reflectivity: [f64; 2],
}

/// Uniform linear array; `spacing` is in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaArray {
    pub elements: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorGeometry {
    #[serde(default)]
    pub name: String,
    pub position: Point2,
    pub array: UlaArray,
    /// Array broadside direction, radians.
    pub boresight: f64,
    /// Polygon (vertex list) inside which the direct path is blocked.
    #[serde(default)]
    pub los_blocked: Option<Vec<Point2>>,
}

impl AnchorGeometry {
    pub fn los_blocked_at(&self, p: Point2) -> bool {
        self.los_blocked
            .as_deref()
            .is_some_and(|poly| point_in_polygon(p, poly))
    }
}

/// Even-odd ray casting.
fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let mut inside = false;
    let mut j = poly.len().wrapping_sub(1);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Bounds,
    pub anchors: Vec<AnchorGeometry>,
    pub scatterers: Vec<Scatterer>,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarriers: usize,
    pub seed: u64,
}

impl Environment {
    /// 10 m x 10 m area, four 8-element half-wavelength ULAs just outside the
    /// corners facing the centre, 20 scatterers, 64 subcarriers over 50 MHz
    /// at 1.272 GHz. Each anchor has one blocked region that puts part of
    /// the area in NLOS.
    pub fn desk_default(seed: u64) -> Self {
        let bounds = Bounds {
            min: Point2::new(0.0, 0.0),
            max: Point2::new(10.0, 10.0),
        };
        let centre = Point2::new(5.0, 5.0);
        let rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
            vec![
                Point2::new(x0, y0),
                Point2::new(x1, y0),
                Point2::new(x1, y1),
                Point2::new(x0, y1),
            ]
        };
        let corners = [
            ("A", Point2::new(-1.0, -1.0), rect(6.0, 6.0, 10.0, 10.0)),
            ("B", Point2::new(11.0, -1.0), rect(0.0, 6.5, 3.5, 10.0)),
            ("C", Point2::new(11.0, 11.0), rect(0.0, 0.0, 4.0, 3.5)),
            ("D", Point2::new(-1.0, 11.0), rect(6.5, 0.0, 10.0, 4.0)),
        ];
        let anchors = corners
            .into_iter()
            .map(|(name, position, blocked)| AnchorGeometry {
                name: name.to_string(),
                position,
                array: UlaArray {
                    elements: 8,
                    spacing: 0.5,
                },
                boresight: position.bearing_to(centre),
                los_blocked: Some(blocked),
            })
            .collect();

        let mut stream = rng::keyed(seed, &[rng::domain::SCATTERERS]);
        let scatterers = (0..20)
            .map(|_| {
                let position = Point2::new(stream.random_range(-2.0..12.0), stream.random_range(-2.0..12.0));
                let magnitude: f64 = stream.random_range(0.3..0.8);
                let phase: f64 = stream.random_range(0.0..2.0 * PI);
                Scatterer {
                    position,
                    reflectivity: [magnitude * phase.cos(), magnitude * phase.sin()],
                }
            })
            .collect();

        Environment {
            bounds,
            anchors,
            scatterers,
            carrier_hz: 1.272e9,
            bandwidth_hz: 50e6,
            subcarriers: 64,
            seed,
        }
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth_hz / self.subcarriers as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() < 2 {
            return Err(Error::config("environment needs at least 2 anchors"));
        }
        if self.subcarriers < 8 {
            return Err(Error::config("subcarrier count must be at least 8"));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::config("bandwidth must be positive"));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::config("carrier frequency must be positive"));
        }
        let b = &self.bounds;
        if !(b.min.is_finite() && b.max.is_finite() && b.width() > 0.0 && b.height() > 0.0) {
            return Err(Error::config("area bounds must be a finite non-empty rectangle"));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if !a.position.is_finite() || !a.boresight.is_finite() {
                return Err(Error::config(format!("anchor {} has a non-finite pose", i + 1)));
            }
            if a.array.elements == 0 || !(a.array.spacing > 0.0) {
                return Err(Error::config(format!(
                    "anchor {} needs at least one element and positive spacing",
                    i + 1
                )));
            }
        }
        let n_r = self.anchors[0].array.elements;
        if self.anchors.iter().any(|a| a.array.elements != n_r) {
            return Err(Error::config("all anchors must have the same element count"));
        }
        if self
            .scatterers
            .iter()
            .any(|s| !s.position.is_finite() || !s.reflectivity.iter().all(|v| v.is_finite()))
        {
            return Err(Error::config("scatterer positions and reflectivities must be finite"));
        }
        Ok(())
    }

    pub fn antennas(&self) -> usize {
        self.anchors[0].array.elements
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(s)?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    /// Hash of the canonical JSON encoding.
    pub fn descriptor_hash(&self) -> u64 {
        hash::sha256_u64(serde_json::to_string(self).expect("environment serializes").as_bytes())
    }
}
