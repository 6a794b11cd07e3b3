//! Modular compositions: ordered sequences of modular units, the assembly
//! rules they must satisfy, and the composition file format.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{get_catalog, line_col, Catalog, TwistMode, TwistSlot, UnitKind, Variant};
use crate::error::{Error, Result};
use crate::kinematics::Transform;
use crate::numfmt::round_sig;

/// Format identifier written into every composition document.
pub const FORMAT_VERSION: &str = "modkin-composition/1";

/// Joint range used wherever a unit does not state its own limits.
pub const DEFAULT_JOINT_LIMITS_DEG: (f64, f64) = (-170.0, 170.0);

/// One joint module in a specific unit arrangement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModularUnit {
    pub variant: Variant,
    pub kind: UnitKind,
    /// Rotation about x at the end of the unit's link module (U3/U4 only).
    #[serde(default)]
    pub twist1_deg: f64,
    /// Rotation about y of the unit's input frame.
    #[serde(default)]
    pub twist2_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_limits_deg: Option<(f64, f64)>,
    #[serde(default)]
    pub label: String,
}

impl ModularUnit {
    pub fn new(variant: Variant, kind: UnitKind) -> Self {
        Self {
            variant,
            kind,
            twist1_deg: 0.0,
            twist2_deg: 0.0,
            joint_limits_deg: None,
            label: String::new(),
        }
    }

    pub fn with_twist1(mut self, deg: f64) -> Self {
        self.twist1_deg = deg;
        self
    }

    pub fn with_twist2(mut self, deg: f64) -> Self {
        self.twist2_deg = deg;
        self
    }

    pub fn with_limits(mut self, lower_deg: f64, upper_deg: f64) -> Self {
        self.joint_limits_deg = Some((lower_deg, upper_deg));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Joint limits in radians, falling back to [`DEFAULT_JOINT_LIMITS_DEG`].
    pub fn limits_rad(&self) -> (f64, f64) {
        let (lo, hi) = self.joint_limits_deg.unwrap_or(DEFAULT_JOINT_LIMITS_DEG);
        (lo.to_radians(), hi.to_radians())
    }

    /// Sequence label such as `H4`.
    pub fn code(&self) -> String {
        format!("{}{}", self.variant, self.kind.digit())
    }
}

/// Position plus roll/pitch/yaw (fixed-axis x, y, z) orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub xyz_m: [f64; 3],
    pub rpy_deg: [f64; 3],
}

impl Pose {
    pub fn to_transform(&self) -> Transform {
        let [r, p, y] = self.rpy_deg;
        let [x, yy, z] = self.xyz_m;
        Transform::from_xyz_rpy([x, yy, z], [r.to_radians(), p.to_radians(), y.to_radians()])
    }

    pub fn from_transform(t: &Transform) -> Self {
        let rpy = t.rpy();
        Self {
            xyz_m: [t.translation.x, t.translation.y, t.translation.z],
            rpy_deg: [rpy[0].to_degrees(), rpy[1].to_degrees(), rpy[2].to_degrees()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    pub mass_kg: f64,
    /// Center of mass, expressed in the end-effector frame.
    pub offset_m: [f64; 3],
}

/// An ordered sequence of modular units forming one manipulator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub base_pose: Pose,
    #[serde(default)]
    pub payload: Payload,
    pub units: Vec<ModularUnit>,
}

/// Joint angles (radians), one per unit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
}

impl JointState {
    pub fn zeros(n: usize) -> Self {
        Self { q: vec![0.0; n] }
    }

    /// Indices of joints outside their unit's limits.
    pub fn out_of_limits(&self, comp: &Composition) -> Result<Vec<usize>> {
        crate::error::check_dim(comp.dof(), self.q.len())?;
        Ok(comp
            .units
            .iter()
            .zip(&self.q)
            .enumerate()
            .filter(|(_, (u, &q))| {
                let (lo, hi) = u.limits_rad();
                q < lo - 1e-12 || q > hi + 1e-12
            })
            .map(|(i, _)| i)
            .collect())
    }
}

impl From<Vec<f64>> for JointState {
    fn from(q: Vec<f64>) -> Self {
        Self { q }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "empty-composition")]
    EmptyComposition,
    #[serde(rename = "base-must-be-H")]
    BaseMustBeH,
    #[serde(rename = "tip-must-be-L")]
    TipMustBeL,
    #[serde(rename = "no-L-before-H")]
    NoLBeforeH,
    #[serde(rename = "epsilon-H-exceeded")]
    EpsilonHExceeded,
    #[serde(rename = "epsilon-L-exceeded")]
    EpsilonLExceeded,
    #[serde(rename = "joint-limits-order")]
    JointLimitsOrder,
    #[serde(rename = "twist1-not-allowed")]
    Twist1NotAllowed,
    #[serde(rename = "twist2-not-allowed")]
    Twist2NotAllowed,
    #[serde(rename = "non-finite-value")]
    NonFiniteValue,
    #[serde(rename = "negative-payload")]
    NegativePayload,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::EmptyComposition => "empty-composition",
            Rule::BaseMustBeH => "base-must-be-H",
            Rule::TipMustBeL => "tip-must-be-L",
            Rule::NoLBeforeH => "no-L-before-H",
            Rule::EpsilonHExceeded => "epsilon-H-exceeded",
            Rule::EpsilonLExceeded => "epsilon-L-exceeded",
            Rule::JointLimitsOrder => "joint-limits-order",
            Rule::Twist1NotAllowed => "twist1-not-allowed",
            Rule::Twist2NotAllowed => "twist2-not-allowed",
            Rule::NonFiniteValue => "non-finite-value",
            Rule::NegativePayload => "negative-payload",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub unit_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| match v.unit_index {
                Some(i) => format!("{} (unit {}): {}", v.rule, i + 1, v.message),
                None => format!("{}: {}", v.rule, v.message),
            })
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// How the load-carrying limit ε is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonMode {
    /// Total count per variant must not exceed that variant's ε.
    #[default]
    Totals,
    /// Each unit may carry at most ε units of its own variant distal to it.
    Distal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationOptions {
    pub epsilon_mode: EpsilonMode,
    /// `Quantized` additionally checks every twist against the hardware sets.
    pub twist_mode: ValidationTwistMode,
}

/// Twist checking for validation; continuous unless asked otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationTwistMode {
    Quantized,
    #[default]
    Continuous,
}

impl From<TwistMode> for ValidationTwistMode {
    fn from(m: TwistMode) -> Self {
        match m {
            TwistMode::Quantized => ValidationTwistMode::Quantized,
            TwistMode::Continuous => ValidationTwistMode::Continuous,
        }
    }
}

impl Composition {
    pub fn new(name: impl Into<String>, units: Vec<ModularUnit>) -> Self {
        Self {
            name: name.into(),
            units,
            ..Default::default()
        }
    }

    pub fn dof(&self) -> usize {
        self.units.len()
    }

    /// Hyphen-joined unit codes, e.g. `H1-H4-L4`.
    pub fn unit_sequence_string(&self) -> String {
        self.units.iter().map(ModularUnit::code).collect::<Vec<_>>().join("-")
    }

    /// Validates against the built-in catalog with default options.
    pub fn validate(&self) -> ValidationReport {
        self.validate_with(get_catalog(), &ValidationOptions::default())
    }

    pub fn validate_with(&self, catalog: &Catalog, opts: &ValidationOptions) -> ValidationReport {
        let mut violations = Vec::new();
        let mut push = |rule: Rule, unit_index: Option<usize>, message: String| {
            violations.push(Violation {
                rule,
                unit_index,
                message,
            })
        };
        let n = self.units.len();

        if n == 0 {
            push(
                Rule::EmptyComposition,
                None,
                "a composition needs at least one unit".into(),
            );
        } else {
            if self.units[0].variant != Variant::H {
                push(
                    Rule::BaseMustBeH,
                    Some(0),
                    "the first unit must be a heavy module".into(),
                );
            }
            if n >= 2 && self.units[n - 1].variant != Variant::L {
                push(
                    Rule::TipMustBeL,
                    Some(n - 1),
                    "the last unit must be a light module".into(),
                );
            }
        }

        let mut seen_light = false;
        for (i, u) in self.units.iter().enumerate() {
            match u.variant {
                Variant::L => seen_light = true,
                Variant::H if seen_light => push(
                    Rule::NoLBeforeH,
                    Some(i),
                    "a heavy module cannot be carried by a light module".into(),
                ),
                Variant::H => {}
            }
        }

        for (variant, rule) in [
            (Variant::H, Rule::EpsilonHExceeded),
            (Variant::L, Rule::EpsilonLExceeded),
        ] {
            let eps = catalog.actuator(variant).epsilon as usize;
            let idx: Vec<usize> = (0..n).filter(|&i| self.units[i].variant == variant).collect();
            match opts.epsilon_mode {
                EpsilonMode::Totals => {
                    if idx.len() > eps {
                        push(
                            rule,
                            Some(idx[eps]),
                            format!("{} {variant} units exceed epsilon = {eps}", idx.len()),
                        );
                    }
                }
                EpsilonMode::Distal => {
                    for (k, &i) in idx.iter().enumerate() {
                        let distal = idx.len() - k - 1;
                        if distal > eps {
                            push(
                                rule,
                                Some(i),
                                format!("carries {distal} {variant} units, epsilon = {eps}"),
                            );
                        }
                    }
                }
            }
        }

        for (i, u) in self.units.iter().enumerate() {
            if !(u.twist1_deg.is_finite() && u.twist2_deg.is_finite()) {
                push(Rule::NonFiniteValue, Some(i), "twist angles must be finite".into());
            }
            if let Some((lo, hi)) = u.joint_limits_deg {
                if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                    push(
                        Rule::JointLimitsOrder,
                        Some(i),
                        format!("lower limit {lo}° must be below upper limit {hi}°"),
                    );
                }
            }
            if opts.twist_mode == ValidationTwistMode::Quantized {
                if !catalog.twist.is_allowed(u.twist1_deg, TwistSlot::Twist1) {
                    push(
                        Rule::Twist1NotAllowed,
                        Some(i),
                        format!("twist1 {}° is not an allowed port setting", u.twist1_deg),
                    );
                }
                if !catalog.twist.is_allowed(u.twist2_deg, TwistSlot::Twist2) {
                    push(
                        Rule::Twist2NotAllowed,
                        Some(i),
                        format!("twist2 {}° is not an allowed slot setting", u.twist2_deg),
                    );
                }
            }
        }

        let finite = self
            .base_pose
            .xyz_m
            .iter()
            .chain(&self.base_pose.rpy_deg)
            .chain(&self.payload.offset_m);
        if !finite.into_iter().all(|v| v.is_finite()) || !self.payload.mass_kg.is_finite() {
            push(
                Rule::NonFiniteValue,
                None,
                "base pose and payload must be finite".into(),
            );
        }
        if self.payload.mass_kg < 0.0 {
            push(Rule::NegativePayload, None, "payload mass must be non-negative".into());
        }

        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }

    /// Robot name, falling back to `mod<n>_composition`.
    pub fn robot_name(&self) -> String {
        if self.name.trim().is_empty() {
            format!("mod{}_composition", self.dof())
        } else {
            self.name.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    format: String,
    name: String,
    base_pose: Pose,
    payload: Payload,
    units: Vec<UnitDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitDoc {
    variant: Variant,
    kind: UnitKind,
    twist1_deg: f64,
    twist2_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joint_limits_deg: Option<[f64; 2]>,
    #[serde(default)]
    label: String,
}

const TEXT_DIGITS: usize = 12;

fn r(x: f64) -> f64 {
    round_sig(x, TEXT_DIGITS)
}

fn r3(v: [f64; 3]) -> [f64; 3] {
    v.map(r)
}

/// Serializes a composition into its canonical document form.
pub fn save_composition(comp: &Composition) -> String {
    let doc = FileDoc {
        format: FORMAT_VERSION.into(),
        name: comp.name.clone(),
        base_pose: Pose {
            xyz_m: r3(comp.base_pose.xyz_m),
            rpy_deg: r3(comp.base_pose.rpy_deg),
        },
        payload: Payload {
            mass_kg: r(comp.payload.mass_kg),
            offset_m: r3(comp.payload.offset_m),
        },
        units: comp
            .units
            .iter()
            .map(|u| UnitDoc {
                variant: u.variant,
                kind: u.kind,
                twist1_deg: r(u.twist1_deg),
                twist2_deg: r(u.twist2_deg),
                joint_limits_deg: u.joint_limits_deg.map(|(a, b)| [r(a), r(b)]),
                label: u.label.clone(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("composition serializes")
}

/// Parses a composition document.
pub fn load_composition(document: &str) -> Result<Composition> {
    let doc: FileDoc = toml::from_str(document).map_err(|e| {
        let location = e
            .span()
            .map(|s| line_col(document, s.start))
            .unwrap_or_else(|| "document".into());
        Error::parse(location, e.message().trim().to_string())
    })?;
    if doc.format != FORMAT_VERSION {
        return Err(Error::parse(
            "field `format`",
            format!("unsupported format {:?}, expected {FORMAT_VERSION:?}", doc.format),
        ));
    }
    let comp = Composition {
        name: doc.name,
        base_pose: doc.base_pose,
        payload: doc.payload,
        units: doc
            .units
            .into_iter()
            .map(|u| ModularUnit {
                variant: u.variant,
                kind: u.kind,
                twist1_deg: u.twist1_deg,
                twist2_deg: u.twist2_deg,
                joint_limits_deg: u.joint_limits_deg.map(|[a, b]| (a, b)),
                label: u.label,
            })
            .collect(),
    };
    if comp.units.is_empty() {
        return Err(Error::Validation(comp.validate()));
    }
    Ok(comp)
}
