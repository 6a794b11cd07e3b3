//! Conversion of classic DH tables into modular-unit sequences.
//!
//! Per row:
//! - `a ≠ 0` needs a link module (U3/U4); a nonzero `α` is then set at the
//!   connection port as twist1.
//! - `a = 0`, `α ≠ 0` is realized by the pivot slot (twist2) of the next unit.
//! - `d ≠ 0` with `a = 0` uses a unit without link (U1/U2).
//! - `a ≠ 0` together with `d ≠ 0` has no modular counterpart.
//!
//! The modular chain never matches arbitrary DH lengths exactly, so every
//! row carries residuals measured against the corresponding segment of the
//! modular chain, and the whole result carries a sampled end-effector
//! fidelity. A pivot-slot twist turns about y rather than x; the converter
//! compensates with ±90° joint-zero offsets, reported in
//! [`ConversionResult::joint_offsets_rad`].

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Port, TwistMode, TwistSlot, UnitKind, Variant};
use crate::composition::{Composition, ModularUnit, ValidationOptions, ValidationReport};
use crate::error::{check_dim, Error, Result};
use crate::exec::Exec;
use crate::kinematics::{stream_rng, transform_joint, transform_t1, transform_t2, KinematicChain, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a_m: f64,
    pub alpha_rad: f64,
    pub d_m: f64,
    pub theta_offset_rad: f64,
}

impl DhRow {
    pub fn new(a_m: f64, alpha_rad: f64, d_m: f64, theta_offset_rad: f64) -> Self {
        Self {
            a_m,
            alpha_rad,
            d_m,
            theta_offset_rad,
        }
    }

    /// `Rz(θ_offset + q) · Tz(d) · Tx(a) · Rx(α)`.
    pub fn transform(&self, q: f64) -> Transform {
        let mut t = Transform::rot_z(self.theta_offset_rad + q);
        t.translation.z = self.d_m;
        let mut link = Transform::rot_x(self.alpha_rad);
        link.translation.x = self.a_m;
        t * link
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    #[default]
    Rad,
    Deg,
}

/// Rows in radians and meters; `angle_unit_in_source` only records the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhTable {
    pub rows: Vec<DhRow>,
    #[serde(default)]
    pub angle_unit_in_source: AngleUnit,
}

impl DhTable {
    pub fn new(rows: Vec<DhRow>) -> Self {
        Self {
            rows,
            angle_unit_in_source: AngleUnit::Rad,
        }
    }

    pub fn dof(&self) -> usize {
        self.rows.len()
    }

    fn check(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InvalidArgument("a DH table needs at least one row".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if ![r.a_m, r.alpha_rad, r.d_m, r.theta_offset_rad]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::InvalidArgument(format!("row {} has non-finite values", i + 1)));
            }
        }
        Ok(())
    }
}

/// Classic DH forward kinematics (frame of the last row in the base frame).
pub fn dh_forward_kinematics(table: &DhTable, q: &[f64]) -> Result<Transform> {
    check_dim(table.dof(), q.len())?;
    Ok(table
        .rows
        .iter()
        .zip(q)
        .fold(Transform::identity(), |acc, (row, &qi)| acc * row.transform(qi)))
}

/// Which parameters of a row are nonzero decides how it is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowCase {
    /// `a ≠ 0, α = 0, d = 0`: link unit.
    Link,
    /// `a ≠ 0, α ≠ 0, d = 0`: link unit, twist via connection port.
    LinkPortTwist,
    /// `a = 0, α = 0, d ≠ 0`: unit without link.
    Offset,
    /// `a = 0, α ≠ 0, d ≠ 0`: unit without link, twist via the next pivot slot.
    OffsetPivotTwist,
    /// `a = 0, α ≠ 0, d = 0`: unit without link, twist via the next pivot slot.
    PivotTwist,
    /// `a = 0, α = 0, d = 0`: unit without link, nothing to realize.
    Bare,
}

impl RowCase {
    pub fn classify(row: &DhRow, zero_tol: f64) -> std::result::Result<Self, String> {
        let nz = |v: f64| v.abs() > zero_tol;
        Ok(match (nz(row.a_m), nz(row.alpha_rad), nz(row.d_m)) {
            (true, _, true) => {
                return Err(format!(
                    "a = {} m and d = {} m are both nonzero; no modular unit provides both",
                    row.a_m, row.d_m
                ))
            }
            (true, false, false) => RowCase::Link,
            (true, true, false) => RowCase::LinkPortTwist,
            (false, false, true) => RowCase::Offset,
            (false, true, true) => RowCase::OffsetPivotTwist,
            (false, true, false) => RowCase::PivotTwist,
            (false, false, false) => RowCase::Bare,
        })
    }

    pub fn needs_link(self) -> bool {
        matches!(self, RowCase::Link | RowCase::LinkPortTwist)
    }

    fn describe(self) -> &'static str {
        match self {
            RowCase::Link => "a != 0: link unit (U3/U4)",
            RowCase::LinkPortTwist => "a != 0 and alpha != 0: link unit (U3/U4), twist at connection port",
            RowCase::Offset => "d != 0: unit without link (U1/U2)",
            RowCase::OffsetPivotTwist => {
                "d != 0 and a = 0, alpha != 0: unit without link (U1/U2), twist in next pivot slot"
            }
            RowCase::PivotTwist => "a = 0 and alpha != 0: unit without link (U1/U2), twist in next pivot slot",
            RowCase::Bare => "a = d = alpha = 0: unit without link (U1/U2)",
        }
    }
}

/// How many leading units are heavy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantSplit {
    /// `min(ε_H, ceil(n/2))` heavy units.
    #[default]
    Auto,
    HeavyCount(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertOptions {
    pub twist_mode: TwistMode,
    pub variant_split: VariantSplit,
    /// Per-row port choice; `None` (or a short list) falls back to the heuristic.
    pub port_overrides: Vec<Option<Port>>,
    /// Sequence such as `H1-H4-L4` to compare the result with, position by position.
    pub reference_sequence: Option<String>,
    pub fidelity_samples: usize,
    pub seed: u64,
    pub zero_tol: f64,
    pub name: Option<String>,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            twist_mode: TwistMode::Quantized,
            variant_split: VariantSplit::Auto,
            port_overrides: Vec::new(),
            reference_sequence: None,
            fidelity_samples: 128,
            seed: 0,
            zero_tol: 1e-12,
            name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowNote {
    /// 1-based row number.
    pub row: usize,
    pub case: RowCase,
    pub rule: String,
    pub unit: String,
    pub port: Port,
    /// Where the row's α went, if anywhere.
    pub twist_slot: Option<TwistSlot>,
    pub twist_target_deg: f64,
    pub twist_realized_deg: f64,
    pub quantization_residual_deg: f64,
    /// Translation mismatch between this DH row and its modular segment.
    pub length_residual_m: f64,
    /// Rotation mismatch between this DH row and its modular segment.
    pub orientation_residual_deg: f64,
    pub remarks: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub position_m: f64,
    pub rotation_rad: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionResult {
    pub sequence: String,
    pub composition: Composition,
    /// Added to the DH joint variables to obtain the modular joint angles.
    pub joint_offsets_rad: Vec<f64>,
    pub per_row_notes: Vec<RowNote>,
    /// Worst sampled end-effector deviation between DH and modular chains.
    pub fidelity: Fidelity,
    pub validation: ValidationReport,
    /// Differences to `reference_sequence`, one entry per differing position.
    pub discrepancies: Vec<String>,
}

impl ConversionResult {
    /// Structured text report (TOML).
    pub fn report_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

/// Converts a DH table into a modular composition.
pub fn convert(table: &DhTable, catalog: &Catalog, opts: &ConvertOptions) -> Result<ConversionResult> {
    convert_with(table, catalog, opts, Exec::default())
}

pub fn convert_with(table: &DhTable, catalog: &Catalog, opts: &ConvertOptions, exec: Exec) -> Result<ConversionResult> {
    table.check()?;
    let n = table.dof();
    let eps_h = catalog.heavy.epsilon as usize;
    let eps_l = catalog.light.epsilon as usize;
    if n > eps_h + eps_l {
        return Err(Error::Unconvertible {
            row: n,
            reason: format!(
                "{n} joints exceed the combined load limit eps_H + eps_L = {}",
                eps_h + eps_l
            ),
        });
    }

    let cases = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| RowCase::classify(r, opts.zero_tol).map_err(|reason| Error::Unconvertible { row: i + 1, reason }))
        .collect::<Result<Vec<_>>>()?;

    let heavy = match opts.variant_split {
        VariantSplit::Auto => eps_h.min(n.div_ceil(2)),
        VariantSplit::HeavyCount(k) => {
            if k > n || k > eps_h || n - k > eps_l {
                return Err(Error::InvalidArgument(format!(
                    "{k} heavy units is not a feasible split for {n} joints"
                )));
            }
            k
        }
    };

    let first_offset_row = table.rows.iter().position(|r| r.d_m.abs() > opts.zero_tol);
    let mut units: Vec<ModularUnit> = (0..n)
        .map(|i| {
            let port =
                opts.port_overrides
                    .get(i)
                    .copied()
                    .flatten()
                    .unwrap_or(if i == 0 || Some(i) == first_offset_row {
                        Port::Ip1
                    } else {
                        Port::Ip2
                    });
            let variant = if i < heavy { Variant::H } else { Variant::L };
            ModularUnit::new(variant, UnitKind::new(port, cases[i].needs_link())).with_label(format!("row{}", i + 1))
        })
        .collect();

    // Joint-zero shifts: `out` on the row realizing a pivot twist, `into` on its successor.
    let mut out_shift = vec![0.0; n];
    let mut in_shift = vec![0.0; n + 1];
    let mut notes = Vec::with_capacity(n);

    for (i, row) in table.rows.iter().enumerate() {
        let alpha_deg = row.alpha_rad.to_degrees();
        let mut note = RowNote {
            row: i + 1,
            case: cases[i],
            rule: cases[i].describe().to_string(),
            unit: units[i].code(),
            port: units[i].kind.port(),
            twist_slot: None,
            twist_target_deg: alpha_deg,
            twist_realized_deg: 0.0,
            quantization_residual_deg: 0.0,
            length_residual_m: 0.0,
            orientation_residual_deg: 0.0,
            remarks: Vec::new(),
        };
        match cases[i] {
            RowCase::LinkPortTwist => {
                let (realized, residual) = snap(catalog, opts.twist_mode, alpha_deg, TwistSlot::Twist1)?;
                units[i].twist1_deg = realized;
                note.twist_slot = Some(TwistSlot::Twist1);
                note.twist_realized_deg = realized;
                note.quantization_residual_deg = residual;
            }
            RowCase::PivotTwist | RowCase::OffsetPivotTwist if i + 1 < n => {
                let (sign, realized, residual) =
                    pivot_twist(catalog, opts.twist_mode, alpha_deg).map_err(|e| Error::Unconvertible {
                        row: i + 1,
                        reason: format!("pivot twist of {alpha_deg:.4}° cannot be set: {e}"),
                    })?;
                units[i + 1].twist2_deg = sign * realized;
                out_shift[i] = -sign * FRAC_PI_2;
                in_shift[i + 1] = sign * FRAC_PI_2;
                note.twist_slot = Some(TwistSlot::Twist2);
                note.twist_realized_deg = realized;
                note.quantization_residual_deg = residual;
                if sign < 0.0 {
                    note.remarks.push(format!(
                        "pivot slot set to {}° with reversed joint zeros",
                        sign * realized
                    ));
                }
            }
            RowCase::PivotTwist | RowCase::OffsetPivotTwist => {
                note.remarks
                    .push("twist on the last row has no successor unit and is not realized".into());
            }
            RowCase::Link | RowCase::Offset | RowCase::Bare => {}
        }
        notes.push(note);
    }

    let joint_offsets_rad: Vec<f64> = (0..n)
        .map(|i| table.rows[i].theta_offset_rad + in_shift[i] + out_shift[i])
        .collect();

    // Per-row residuals: DH row transform vs. the modular segment from joint i to joint i+1.
    for i in 0..n {
        let g = catalog.unit_geometry(units[i].kind);
        let mut seg = transform_joint(g.z12_m, out_shift[i]);
        if units[i].kind.has_link() {
            seg = seg * transform_t2(g.x23_m, units[i].twist1_deg.to_radians());
        }
        if i + 1 < n {
            let gn = catalog.unit_geometry(units[i + 1].kind);
            seg = seg * transform_t1(gn.x01_m, gn.z01_m, units[i + 1].twist2_deg.to_radians());
            seg = seg * Transform::rot_z(in_shift[i + 1]);
        }
        let dh = table.rows[i].transform(-table.rows[i].theta_offset_rad);
        let (dp, dr) = seg.distance(&dh);
        notes[i].length_residual_m = dp;
        notes[i].orientation_residual_deg = dr.to_degrees();
    }

    let g0 = catalog.unit_geometry(units[0].kind);
    notes[0].remarks.push(format!(
        "DH base frame placed at the first joint; the input port sits {} m below it (x offset {} m)",
        g0.z01_m, g0.x01_m
    ));

    let mut composition = Composition::new(opts.name.clone().unwrap_or_default(), units);
    if composition.name.is_empty() {
        composition.name = composition.robot_name();
    }
    let fidelity = fidelity(table, &composition, catalog, &joint_offsets_rad, opts, exec);
    let validation = composition.validate_with(
        catalog,
        &ValidationOptions {
            twist_mode: opts.twist_mode.into(),
            ..Default::default()
        },
    );

    let mut discrepancies = Vec::new();
    if let Some(reference) = &opts.reference_sequence {
        let parsed = parse_sequence(reference)?;
        if parsed.len() != n {
            discrepancies.push(format!("reference has {} units, conversion produced {n}", parsed.len()));
        }
        for (i, (&(variant, kind), unit)) in parsed.iter().zip(&composition.units).enumerate() {
            if (variant, kind) == (unit.variant, unit.kind) {
                continue;
            }
            let reference_code = format!("{variant}{}", kind.digit());
            let why = if kind.has_link() != unit.kind.has_link() {
                let a = table.rows[i].a_m;
                if unit.kind.has_link() {
                    format!("row {} has a = {a} m != 0, which requires a link-bearing unit", i + 1)
                } else {
                    format!("row {} has a = 0, which does not use a link module", i + 1)
                }
            } else if variant != unit.variant {
                "variant differs from the heavy/light split".to_string()
            } else {
                "port choice differs from the port heuristic".to_string()
            };
            let msg = format!(
                "position {}: reference {reference_code}, emitted {} ({why})",
                i + 1,
                unit.code()
            );
            notes[i].remarks.push(msg.clone());
            discrepancies.push(msg);
        }
    }

    Ok(ConversionResult {
        sequence: composition.unit_sequence_string(),
        composition,
        joint_offsets_rad,
        per_row_notes: notes,
        fidelity,
        validation,
        discrepancies,
    })
}

fn snap(catalog: &Catalog, mode: TwistMode, angle_deg: f64, slot: TwistSlot) -> Result<(f64, f64)> {
    match mode {
        TwistMode::Continuous => Ok((angle_deg, 0.0)),
        TwistMode::Quantized => catalog.twist.quantize(angle_deg, slot),
    }
}

/// Returns `(sign, realized α, residual)`; the slot is set to `sign · realized`.
fn pivot_twist(catalog: &Catalog, mode: TwistMode, alpha_deg: f64) -> Result<(f64, f64, f64)> {
    match snap(catalog, mode, alpha_deg, TwistSlot::Twist2) {
        Ok((s, r)) => Ok((1.0, s, r)),
        Err(first) => match snap(catalog, mode, -alpha_deg, TwistSlot::Twist2) {
            Ok((s, _)) => Ok((-1.0, -s, alpha_deg + s)),
            Err(_) => Err(first),
        },
    }
}

fn fidelity(
    table: &DhTable,
    comp: &Composition,
    catalog: &Catalog,
    offsets: &[f64],
    opts: &ConvertOptions,
    exec: Exec,
) -> Fidelity {
    let chain = KinematicChain::new(comp, catalog);
    let g0 = catalog.unit_geometry(comp.units[0].kind);
    let base = transform_t1(g0.x01_m, g0.z01_m, comp.units[0].twist2_deg.to_radians());
    let samples = opts.fidelity_samples.max(1);
    let per_sample = exec.map_range(samples, |k| {
        let mut rng = stream_rng(opts.seed, k as u64);
        let q: Vec<f64> = (0..table.dof())
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let modular_q: Vec<f64> = q.iter().zip(offsets).map(|(a, b)| a + b).collect();
        let dh = base * dh_forward_kinematics(table, &q).expect("dimension matches");
        let modular = chain.end_effector(&modular_q).expect("dimension matches");
        dh.distance(&modular)
    });
    let (position_m, rotation_rad) = per_sample
        .iter()
        .fold((0.0f64, 0.0f64), |(p, r), &(dp, dr)| (p.max(dp), r.max(dr)));
    Fidelity {
        position_m,
        rotation_rad,
        samples,
    }
}

/// Parses `H1-H4-L4`; `H^1` and `L_4` spellings are accepted too.
pub fn parse_sequence(text: &str) -> Result<Vec<(Variant, UnitKind)>> {
    text.split('-')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|tok| {
            let cleaned: String = tok
                .chars()
                .filter(|c| !matches!(c, '^' | '_' | '{' | '}' | '$'))
                .collect();
            let mut chars = cleaned.chars();
            let variant = match chars.next() {
                Some('H') | Some('h') => Variant::H,
                Some('L') | Some('l') => Variant::L,
                _ => return Err(Error::parse(format!("sequence token {tok:?}"), "expected H or L")),
            };
            let kind = chars
                .as_str()
                .parse::<u8>()
                .ok()
                .and_then(UnitKind::from_digit)
                .ok_or_else(|| Error::parse(format!("sequence token {tok:?}"), "expected unit digit 1-4"))?;
            Ok((variant, kind))
        })
        .collect()
}

/// Parses a DH table from CSV with header `a,alpha,d,theta`.
///
/// Header names may carry a unit, e.g. `alpha[deg]`; lengths must be
/// meters. Unannotated angles use `default_unit`. Lines starting with `#`
/// are ignored.
pub fn parse_dh_csv_with(text: &str, default_unit: AngleUnit) -> Result<DhTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse("header", e.to_string()))?
        .clone();
    let expected = ["a", "alpha", "d", "theta"];
    if headers.len() != 4 {
        return Err(Error::parse(
            "header",
            format!("expected columns a,alpha,d,theta, found {}", headers.len()),
        ));
    }
    let mut angle_unit: Option<AngleUnit> = None;
    for (col, (h, want)) in headers.iter().zip(expected).enumerate() {
        let (name, unit) = split_annotation(h);
        if name != want {
            return Err(Error::parse(
                format!("header column {}", col + 1),
                format!("expected {want:?}, found {h:?}"),
            ));
        }
        let Some(unit) = unit else { continue };
        match (want, unit.to_ascii_lowercase().as_str()) {
            ("a" | "d", "m") => {}
            ("alpha" | "theta", u @ ("deg" | "rad")) => {
                let u = if u == "deg" { AngleUnit::Deg } else { AngleUnit::Rad };
                if angle_unit.is_some_and(|prev| prev != u) {
                    return Err(Error::parse("header", "alpha and theta use different angle units"));
                }
                angle_unit = Some(u);
            }
            _ => {
                return Err(Error::parse(
                    format!("header column {}", col + 1),
                    format!("unsupported unit {unit:?}"),
                ));
            }
        }
    }
    let unit = angle_unit.unwrap_or(default_unit);
    let scale = if unit == AngleUnit::Deg {
        std::f64::consts::PI / 180.0
    } else {
        1.0
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut vals = [0.0; 4];
        for (col, v) in vals.iter_mut().enumerate() {
            let field = record.get(col).unwrap_or("");
            *v = field.parse::<f64>().map_err(|_| {
                Error::parse(
                    format!("line {line}, column {} ({})", col + 1, expected[col]),
                    format!("{field:?} is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    format!("line {line}, column {}", col + 1),
                    "value must be finite",
                ));
            }
        }
        rows.push(DhRow::new(vals[0], vals[1] * scale, vals[2], vals[3] * scale));
    }
    if rows.is_empty() {
        return Err(Error::parse("body", "the table has no rows"));
    }
    Ok(DhTable {
        rows,
        angle_unit_in_source: unit,
    })
}

pub fn parse_dh_csv(text: &str) -> Result<DhTable> {
    parse_dh_csv_with(text, AngleUnit::Rad)
}

fn split_annotation(h: &str) -> (&str, Option<&str>) {
    match h.split_once('[') {
        Some((name, rest)) => (name.trim(), Some(rest.trim_end_matches(']').trim())),
        None => match h.split_once('(') {
            Some((name, rest)) => (name.trim(), Some(rest.trim_end_matches(')').trim())),
            None => (h.trim(), None),
        },
    }
}

impl fmt::Display for RowCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}
