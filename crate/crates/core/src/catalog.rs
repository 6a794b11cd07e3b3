//! Static library of module definitions: the two joint-module variants, the
//! link module, the twist adjustment resolutions and the geometric constants
//! of the four modular units.

use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint-module variant, named after the actuator it houses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Heavy module (KA-75+ actuator).
    H,
    /// Light module (KA-58 actuator).
    L,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::H => "H",
            Variant::L => "L",
        })
    }
}

/// Input port through which a joint module is attached to its predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    Ip1,
    Ip2,
}

/// The four modular units: port `Ip1`/`Ip2`, with or without a link module
/// on the output port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    U1,
    U2,
    U3,
    U4,
}

impl UnitKind {
    pub const ALL: [UnitKind; 4] = [UnitKind::U1, UnitKind::U2, UnitKind::U3, UnitKind::U4];

    pub fn new(port: Port, with_link: bool) -> Self {
        match (port, with_link) {
            (Port::Ip1, false) => UnitKind::U1,
            (Port::Ip2, false) => UnitKind::U2,
            (Port::Ip1, true) => UnitKind::U3,
            (Port::Ip2, true) => UnitKind::U4,
        }
    }

    pub fn port(self) -> Port {
        match self {
            UnitKind::U1 | UnitKind::U3 => Port::Ip1,
            UnitKind::U2 | UnitKind::U4 => Port::Ip2,
        }
    }

    pub fn has_link(self) -> bool {
        matches!(self, UnitKind::U3 | UnitKind::U4)
    }

    /// The superscript digit used in unit sequences (`H3`, `L1`, ...).
    pub fn digit(self) -> u8 {
        match self {
            UnitKind::U1 => 1,
            UnitKind::U2 => 2,
            UnitKind::U3 => 3,
            UnitKind::U4 => 4,
        }
    }

    pub fn from_digit(d: u8) -> Option<Self> {
        match d {
            1 => Some(UnitKind::U1),
            2 => Some(UnitKind::U2),
            3 => Some(UnitKind::U3),
            4 => Some(UnitKind::U4),
            _ => None,
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U{}", self.digit())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSpec {
    pub variant: Variant,
    pub model: String,
    pub mass_kg: f64,
    pub speed_rpm: f64,
    pub tau_nom_nm: f64,
    pub tau_max_nm: f64,
    /// How many same-variant modules one module can carry.
    pub epsilon: u32,
    /// Radius of the solid cylinder used to approximate the actuator body.
    pub body_radius_m: f64,
}

impl ActuatorSpec {
    pub fn speed_rad_s(&self) -> f64 {
        self.speed_rpm * 2.0 * std::f64::consts::PI / 60.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitGeometry {
    pub kind: UnitKind,
    pub x01_m: f64,
    pub z01_m: f64,
    pub z12_m: f64,
    /// Zero for units without a link module.
    pub x23_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModuleSpec {
    pub length_m: f64,
    pub mass_kg: f64,
    pub radius_m: f64,
}

/// Which twist adjustment an angle refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwistSlot {
    /// Connection-port twist (rotation about x), 30° hole pattern, full turn.
    Twist1,
    /// Pivot-slot twist (rotation about y), 15° slot, bounded range.
    Twist2,
}

impl TwistSlot {
    pub fn name(self) -> &'static str {
        match self {
            TwistSlot::Twist1 => "twist1",
            TwistSlot::Twist2 => "twist2",
        }
    }
}

/// Whether twist angles are restricted to the hardware resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwistMode {
    #[default]
    Quantized,
    /// Any real angle; for modeling studies beyond the printed hardware.
    Continuous,
}

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistQuantization {
    /// Members in [0, 360); interpreted modulo a full turn.
    pub twist1_allowed_deg: Vec<f64>,
    /// Members of a bounded linear range.
    pub twist2_allowed_deg: Vec<f64>,
    pub tolerance_deg: f64,
}

impl Default for TwistQuantization {
    fn default() -> Self {
        Self {
            twist1_allowed_deg: (0..12).map(|k| 30.0 * k as f64).collect(),
            twist2_allowed_deg: (-3..=6).map(|k| 15.0 * k as f64).collect(),
            tolerance_deg: 1.0,
        }
    }
}

impl TwistQuantization {
    fn twist2_bounds(&self) -> (f64, f64) {
        let min = self.twist2_allowed_deg.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self
            .twist2_allowed_deg
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Snaps `angle_deg` to the nearest allowed setting.
    ///
    /// Returns `(snapped, residual)` with `residual = angle - snapped`. For
    /// twist1 the snapped value is the member's representative closest to
    /// the input (e.g. -30 stays -30, since 330 is allowed). Exact ties go to
    /// the member of smaller magnitude.
    pub fn quantize(&self, angle_deg: f64, which: TwistSlot) -> Result<(f64, f64)> {
        match which {
            TwistSlot::Twist1 => {
                let mut best: Option<(f64, f64)> = None; // (|residual|, member)
                let mut residual = 0.0;
                for &m in &self.twist1_allowed_deg {
                    let d = wrap_deg(angle_deg - m);
                    let better = match best {
                        None => true,
                        Some((bd, bm)) => {
                            d.abs() < bd - TIE_EPS || ((d.abs() - bd).abs() <= TIE_EPS && m.abs() < bm.abs())
                        }
                    };
                    if better {
                        best = Some((d.abs(), m));
                        residual = d;
                    }
                }
                if best.is_none() {
                    return Err(Error::InvalidArgument("empty twist1 set".into()));
                }
                Ok((angle_deg - residual, residual))
            }
            TwistSlot::Twist2 => {
                let (min, max) = self.twist2_bounds();
                if !(angle_deg >= min - self.tolerance_deg && angle_deg <= max + self.tolerance_deg) {
                    return Err(Error::OutOfRange {
                        which: "twist2",
                        angle_deg,
                        min_deg: min,
                        max_deg: max,
                    });
                }
                let mut best = f64::NAN;
                for &m in &self.twist2_allowed_deg {
                    let d = (angle_deg - m).abs();
                    let bd = (angle_deg - best).abs();
                    if best.is_nan() || d < bd - TIE_EPS || ((d - bd).abs() <= TIE_EPS && m.abs() < best.abs()) {
                        best = m;
                    }
                }
                Ok((best, angle_deg - best))
            }
        }
    }

    /// True if `angle_deg` is (within 1e-9°) an allowed setting.
    pub fn is_allowed(&self, angle_deg: f64, which: TwistSlot) -> bool {
        match which {
            TwistSlot::Twist1 => self
                .twist1_allowed_deg
                .iter()
                .any(|&m| wrap_deg(angle_deg - m).abs() <= TIE_EPS),
            TwistSlot::Twist2 => self
                .twist2_allowed_deg
                .iter()
                .any(|&m| (angle_deg - m).abs() <= TIE_EPS),
        }
    }

    pub fn step_deg(&self, which: TwistSlot) -> f64 {
        let set = match which {
            TwistSlot::Twist1 => &self.twist1_allowed_deg,
            TwistSlot::Twist2 => &self.twist2_allowed_deg,
        };
        let mut sorted = set.clone();
        sorted.sort_by(f64::total_cmp);
        let mut step = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if which == TwistSlot::Twist1 {
            if let (Some(first), Some(last)) = (sorted.first(), sorted.last()) {
                step = step.min(first + 360.0 - last);
            }
        }
        step
    }
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Complete module library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub heavy: ActuatorSpec,
    pub light: ActuatorSpec,
    pub link: LinkModuleSpec,
    pub units: [UnitGeometry; 4],
    pub twist: TwistQuantization,
}

impl Default for Catalog {
    fn default() -> Self {
        let unit = |kind, x01_m, z01_m, x23_m| UnitGeometry {
            kind,
            x01_m,
            z01_m,
            z12_m: 0.073,
            x23_m,
        };
        Self {
            heavy: ActuatorSpec {
                variant: Variant::H,
                model: "KA-75+".into(),
                mass_kg: 0.57,
                speed_rpm: 12.2,
                tau_nom_nm: 12.0,
                tau_max_nm: 30.5,
                epsilon: 3,
                body_radius_m: 0.0375,
            },
            light: ActuatorSpec {
                variant: Variant::L,
                model: "KA-58".into(),
                mass_kg: 0.357,
                speed_rpm: 20.3,
                tau_nom_nm: 3.6,
                tau_max_nm: 6.8,
                epsilon: 3,
                body_radius_m: 0.029,
            },
            link: LinkModuleSpec {
                length_m: 0.22,
                mass_kg: 0.15,
                radius_m: 0.03,
            },
            units: [
                unit(UnitKind::U1, 0.0, 0.074, 0.0),
                unit(UnitKind::U2, -0.0297, 0.075, 0.0),
                unit(UnitKind::U3, 0.0, 0.074, 0.22),
                unit(UnitKind::U4, -0.0297, 0.075, 0.22),
            ],
            twist: TwistQuantization::default(),
        }
    }
}

static CATALOG: LazyLock<Catalog> = LazyLock::new(Catalog::default);

/// The built-in catalog.
pub fn get_catalog() -> &'static Catalog {
    &CATALOG
}

impl Catalog {
    pub fn actuator(&self, variant: Variant) -> &ActuatorSpec {
        match variant {
            Variant::H => &self.heavy,
            Variant::L => &self.light,
        }
    }

    pub fn unit_geometry(&self, kind: UnitKind) -> &UnitGeometry {
        &self.units[kind.digit() as usize - 1]
    }

    /// Parses an override catalog (TOML, same layout as [`Catalog::to_toml`]).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let catalog: Catalog = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or_else(|| "document".into());
            Error::parse(location, e.message().to_string())
        })?;
        catalog.check()?;
        Ok(catalog)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("catalog serializes")
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for a in [&self.heavy, &self.light] {
            if !(a.mass_kg > 0.0 && a.speed_rpm > 0.0 && a.tau_nom_nm > 0.0 && a.epsilon >= 1) {
                return bad(format!("actuator {} has non-positive specs", a.variant));
            }
            if a.tau_max_nm <= a.tau_nom_nm {
                return bad(format!("actuator {}: tau_max must exceed tau_nom", a.variant));
            }
        }
        if self.heavy.variant != Variant::H || self.light.variant != Variant::L {
            return bad("heavy/light entries carry the wrong variant".into());
        }
        for (i, u) in self.units.iter().enumerate() {
            if u.kind.digit() as usize != i + 1 {
                return bad(format!("unit entry {} must describe U{}", i + 1, i + 1));
            }
            if u.kind.has_link() && (u.x23_m - self.link.length_m).abs() > 1e-12 {
                return bad(format!("{}: x23 must equal the link module length", u.kind));
            }
        }
        if self.twist.twist1_allowed_deg.is_empty() || self.twist.twist2_allowed_deg.is_empty() {
            return bad("twist sets must be non-empty".into());
        }
        Ok(())
    }
}

pub(crate) fn line_col(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    format!("line {line}, column {col}")
}
