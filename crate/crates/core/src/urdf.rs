//! URDF robot descriptions of compositions.
//!
//! Link `i` is the joint frame of unit `i`, so the dynamic model's body
//! inertias go into the document unchanged. Joint `i`'s origin carries the
//! previous unit's link transform (if any), this unit's input-side transform
//! and the actuator height. When the last unit has a link module, a fixed
//! `tool_joint` adds the flange frame.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::composition::{Composition, ModularUnit};
use crate::dynamics::build_inertial_model;
use crate::error::{check_dim, Error, Result};
use crate::kinematics::{transform_t1, transform_t2, Transform};
use crate::numfmt::sig;

pub const DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Origin {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl Origin {
    fn from_transform(t: &Transform) -> Self {
        Self {
            xyz: [t.translation.x, t.translation.y, t.translation.z],
            rpy: t.rpy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inertial {
    pub origin: Origin,
    pub mass: f64,
    pub ixx: f64,
    pub ixy: f64,
    pub ixz: f64,
    pub iyy: f64,
    pub iyz: f64,
    pub izz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Geometry {
    Cylinder { radius: f64, length: f64 },
    Box { size: [f64; 3] },
    Mesh { filename: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub origin: Origin,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    pub inertial: Option<Inertial>,
    pub visuals: Vec<Shape>,
    pub collisions: Vec<Shape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Fixed,
}

impl JointType {
    fn as_str(self) -> &'static str {
        match self {
            JointType::Revolute => "revolute",
            JointType::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub lower: f64,
    pub upper: f64,
    pub effort: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub joint_type: JointType,
    pub parent: String,
    pub child: String,
    pub origin: Origin,
    pub axis: Option<[f64; 3]>,
    pub limit: Option<Limit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrdfDocument {
    pub robot_name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
}

/// Replaces the primitive visual of a unit with a mesh reference.
pub type MeshOverride = fn(unit_index: usize, unit: &ModularUnit) -> Option<String>;

#[derive(Debug, Clone, Copy, Default)]
pub struct UrdfOptions {
    pub mesh_override: Option<MeshOverride>,
}

pub fn generate_urdf(comp: &Composition, catalog: &Catalog) -> Result<UrdfDocument> {
    generate_urdf_with(comp, catalog, &UrdfOptions::default())
}

pub fn generate_urdf_with(comp: &Composition, catalog: &Catalog, opts: &UrdfOptions) -> Result<UrdfDocument> {
    let report = comp.validate_with(catalog, &Default::default());
    if !report.ok {
        return Err(Error::Validation(report));
    }
    let bodies = build_inertial_model(comp, catalog);
    let mut links = vec![Link {
        name: "base_link".into(),
        inertial: None,
        visuals: Vec::new(),
        collisions: Vec::new(),
    }];
    let mut joints = Vec::with_capacity(comp.dof() + 1);
    let mut pending = comp.base_pose.to_transform();

    for (i, (unit, body)) in comp.units.iter().zip(&bodies).enumerate() {
        let g = catalog.unit_geometry(unit.kind);
        let act = catalog.actuator(unit.variant);
        let origin = pending
            * transform_t1(g.x01_m, g.z01_m, unit.twist2_deg.to_radians())
            * Transform::from_translation(0.0, 0.0, g.z12_m);
        pending = if unit.kind.has_link() {
            transform_t2(g.x23_m, unit.twist1_deg.to_radians())
        } else {
            Transform::identity()
        };

        let mut shapes = vec![Shape {
            origin: Origin {
                xyz: [0.0, 0.0, -g.z12_m / 2.0],
                rpy: [0.0; 3],
            },
            geometry: Geometry::Cylinder {
                radius: act.body_radius_m,
                length: g.z12_m,
            },
        }];
        if unit.kind.has_link() {
            shapes.push(Shape {
                origin: Origin {
                    xyz: [g.x23_m / 2.0, 0.0, 0.0],
                    rpy: [0.0, std::f64::consts::FRAC_PI_2, 0.0],
                },
                geometry: Geometry::Cylinder {
                    radius: catalog.link.radius_m,
                    length: g.x23_m,
                },
            });
        }
        let visuals = match opts.mesh_override.and_then(|f| f(i, unit)) {
            Some(filename) => vec![Shape {
                origin: Origin::default(),
                geometry: Geometry::Mesh { filename },
            }],
            None => shapes.clone(),
        };

        let name = format!("link_{}", i + 1);
        let inertia = &body.inertia;
        links.push(Link {
            name: name.clone(),
            inertial: Some(Inertial {
                origin: Origin {
                    xyz: body.com_m.into(),
                    rpy: [0.0; 3],
                },
                mass: body.mass_kg,
                ixx: inertia[(0, 0)],
                ixy: inertia[(0, 1)],
                ixz: inertia[(0, 2)],
                iyy: inertia[(1, 1)],
                iyz: inertia[(1, 2)],
                izz: inertia[(2, 2)],
            }),
            visuals,
            collisions: shapes,
        });
        let (lower, upper) = unit.limits_rad();
        joints.push(Joint {
            name: format!("joint_{}", i + 1),
            joint_type: JointType::Revolute,
            parent: links[i].name.clone(),
            child: name,
            origin: Origin::from_transform(&origin),
            axis: Some([0.0, 0.0, 1.0]),
            limit: Some(Limit {
                lower,
                upper,
                effort: act.tau_max_nm,
                velocity: act.speed_rad_s(),
            }),
        });
    }

    if comp.units.last().is_some_and(|u| u.kind.has_link()) {
        links.push(Link {
            name: "tool_link".into(),
            inertial: None,
            visuals: Vec::new(),
            collisions: Vec::new(),
        });
        joints.push(Joint {
            name: "tool_joint".into(),
            joint_type: JointType::Fixed,
            parent: format!("link_{}", comp.dof()),
            child: "tool_link".into(),
            origin: Origin::from_transform(&pending),
            axis: None,
            limit: None,
        });
    }

    let doc = UrdfDocument {
        robot_name: comp.robot_name(),
        links,
        joints,
    };
    debug_assert!(doc.check_tree().is_ok());
    Ok(doc)
}

impl UrdfDocument {
    pub fn revolute_count(&self) -> usize {
        self.joints
            .iter()
            .filter(|j| j.joint_type == JointType::Revolute)
            .count()
    }

    pub fn total_mass(&self) -> f64 {
        self.links
            .iter()
            .filter_map(|l| l.inertial.as_ref())
            .map(|i| i.mass)
            .sum()
    }

    /// Unique names, known endpoints, every link a child at most once, one root, no cycles.
    pub fn check_tree(&self) -> Result<&str> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let mut link_names = HashSet::new();
        for l in &self.links {
            if !link_names.insert(l.name.as_str()) {
                return bad(format!("duplicate link name {:?}", l.name));
            }
        }
        let mut joint_names = HashSet::new();
        let mut parent_of: HashMap<&str, &str> = HashMap::new();
        for j in &self.joints {
            if !joint_names.insert(j.name.as_str()) {
                return bad(format!("duplicate joint name {:?}", j.name));
            }
            for end in [&j.parent, &j.child] {
                if !link_names.contains(end.as_str()) {
                    return bad(format!("joint {:?} references unknown link {end:?}", j.name));
                }
            }
            if parent_of.insert(&j.child, &j.parent).is_some() {
                return bad(format!("link {:?} has more than one parent", j.child));
            }
        }
        let roots: Vec<&str> = self
            .links
            .iter()
            .map(|l| l.name.as_str())
            .filter(|n| !parent_of.contains_key(n))
            .collect();
        let [root] = roots[..] else {
            return bad(format!("expected exactly one root link, found {}", roots.len()));
        };
        for l in &self.links {
            let mut cur = l.name.as_str();
            for _ in 0..=self.links.len() {
                match parent_of.get(cur) {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            if cur != root {
                return bad(format!("link {:?} is not connected to the root", l.name));
            }
        }
        Ok(root)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn triple(v: &[f64; 3]) -> String {
    format!("{} {} {}", sig(v[0], DIGITS), sig(v[1], DIGITS), sig(v[2], DIGITS))
}

fn write_origin(out: &mut String, indent: &str, o: &Origin) {
    let _ = writeln!(
        out,
        r#"{indent}<origin xyz="{}" rpy="{}"/>"#,
        triple(&o.xyz),
        triple(&o.rpy)
    );
}

fn write_shape(out: &mut String, tag: &str, s: &Shape) {
    let _ = writeln!(out, "    <{tag}>");
    write_origin(out, "      ", &s.origin);
    out.push_str("      <geometry>\n");
    let _ = match &s.geometry {
        Geometry::Cylinder { radius, length } => writeln!(
            out,
            r#"        <cylinder radius="{}" length="{}"/>"#,
            sig(*radius, DIGITS),
            sig(*length, DIGITS)
        ),
        Geometry::Box { size } => writeln!(out, r#"        <box size="{}"/>"#, triple(size)),
        Geometry::Mesh { filename } => writeln!(out, r#"        <mesh filename="{}"/>"#, escape(filename)),
    };
    out.push_str("      </geometry>\n");
    let _ = writeln!(out, "    </{tag}>");
}

/// XML text: UTF-8, two-space indentation, fixed attribute order, numbers
/// with nine significant digits.
pub fn serialize_urdf(doc: &UrdfDocument) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, r#"<robot name="{}">"#, escape(&doc.robot_name));
    for l in &doc.links {
        if l.inertial.is_none() && l.visuals.is_empty() && l.collisions.is_empty() {
            let _ = writeln!(out, r#"  <link name="{}"/>"#, escape(&l.name));
            continue;
        }
        let _ = writeln!(out, r#"  <link name="{}">"#, escape(&l.name));
        if let Some(i) = &l.inertial {
            out.push_str("    <inertial>\n");
            write_origin(&mut out, "      ", &i.origin);
            let _ = writeln!(out, r#"      <mass value="{}"/>"#, sig(i.mass, DIGITS));
            let _ = writeln!(
                out,
                r#"      <inertia ixx="{}" ixy="{}" ixz="{}" iyy="{}" iyz="{}" izz="{}"/>"#,
                sig(i.ixx, DIGITS),
                sig(i.ixy, DIGITS),
                sig(i.ixz, DIGITS),
                sig(i.iyy, DIGITS),
                sig(i.iyz, DIGITS),
                sig(i.izz, DIGITS)
            );
            out.push_str("    </inertial>\n");
        }
        for s in &l.visuals {
            write_shape(&mut out, "visual", s);
        }
        for s in &l.collisions {
            write_shape(&mut out, "collision", s);
        }
        out.push_str("  </link>\n");
    }
    for j in &doc.joints {
        let _ = writeln!(
            out,
            r#"  <joint name="{}" type="{}">"#,
            escape(&j.name),
            j.joint_type.as_str()
        );
        let _ = writeln!(out, r#"    <parent link="{}"/>"#, escape(&j.parent));
        let _ = writeln!(out, r#"    <child link="{}"/>"#, escape(&j.child));
        write_origin(&mut out, "    ", &j.origin);
        if let Some(a) = &j.axis {
            let _ = writeln!(out, r#"    <axis xyz="{}"/>"#, triple(a));
        }
        if let Some(l) = &j.limit {
            let _ = writeln!(
                out,
                r#"    <limit lower="{}" upper="{}" effort="{}" velocity="{}"/>"#,
                sig(l.lower, DIGITS),
                sig(l.upper, DIGITS),
                sig(l.effort, DIGITS),
                sig(l.velocity, DIGITS)
            );
        }
        out.push_str("  </joint>\n");
    }
    out.push_str("</robot>\n");
    out
}

struct Reader<'a> {
    doc: &'a roxmltree::Document<'a>,
}

impl<'a> Reader<'a> {
    fn err(&self, node: roxmltree::Node, msg: impl Into<String>) -> Error {
        let pos = self.doc.text_pos_at(node.range().start);
        Error::parse(format!("line {}, column {}", pos.row, pos.col), msg)
    }

    fn attr<'n>(&self, node: roxmltree::Node<'n, 'n>, name: &str) -> Result<&'n str> {
        node.attribute(name).ok_or_else(|| {
            self.err(
                node,
                format!("<{}> is missing attribute {name:?}", node.tag_name().name()),
            )
        })
    }

    fn num(&self, node: roxmltree::Node, name: &str) -> Result<f64> {
        let text = self.attr(node, name)?;
        text.trim()
            .parse()
            .map_err(|_| self.err(node, format!("attribute {name:?} = {text:?} is not a number")))
    }

    fn triple(&self, node: roxmltree::Node, name: &str) -> Result<[f64; 3]> {
        let text = self.attr(node, name)?;
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err(node, format!("attribute {name:?} = {text:?} is not numeric")))?;
        vals.try_into()
            .map_err(|_| self.err(node, format!("attribute {name:?} needs three values")))
    }

    fn origin(&self, parent: roxmltree::Node) -> Result<Origin> {
        match child(parent, "origin") {
            None => Ok(Origin::default()),
            Some(o) => Ok(Origin {
                xyz: if o.has_attribute("xyz") {
                    self.triple(o, "xyz")?
                } else {
                    [0.0; 3]
                },
                rpy: if o.has_attribute("rpy") {
                    self.triple(o, "rpy")?
                } else {
                    [0.0; 3]
                },
            }),
        }
    }

    fn shape(&self, node: roxmltree::Node) -> Result<Shape> {
        let geom = child(node, "geometry").ok_or_else(|| self.err(node, "missing <geometry>"))?;
        let shape = geom
            .children()
            .find(|c| c.is_element())
            .ok_or_else(|| self.err(geom, "empty <geometry>"))?;
        let geometry = match shape.tag_name().name() {
            "cylinder" => Geometry::Cylinder {
                radius: self.num(shape, "radius")?,
                length: self.num(shape, "length")?,
            },
            "box" => Geometry::Box {
                size: self.triple(shape, "size")?,
            },
            "mesh" => Geometry::Mesh {
                filename: self.attr(shape, "filename")?.to_string(),
            },
            other => return Err(self.err(shape, format!("unsupported geometry <{other}>"))),
        };
        Ok(Shape {
            origin: self.origin(node)?,
            geometry,
        })
    }

    fn link(&self, node: roxmltree::Node) -> Result<Link> {
        let inertial = match child(node, "inertial") {
            None => None,
            Some(i) => {
                let mass = child(i, "mass").ok_or_else(|| self.err(i, "missing <mass>"))?;
                let t = child(i, "inertia").ok_or_else(|| self.err(i, "missing <inertia>"))?;
                Some(Inertial {
                    origin: self.origin(i)?,
                    mass: self.num(mass, "value")?,
                    ixx: self.num(t, "ixx")?,
                    ixy: self.num(t, "ixy")?,
                    ixz: self.num(t, "ixz")?,
                    iyy: self.num(t, "iyy")?,
                    iyz: self.num(t, "iyz")?,
                    izz: self.num(t, "izz")?,
                })
            }
        };
        let shapes = |tag| {
            node.children()
                .filter(|c| c.has_tag_name(tag))
                .map(|c| self.shape(c))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Link {
            name: self.attr(node, "name")?.to_string(),
            inertial,
            visuals: shapes("visual")?,
            collisions: shapes("collision")?,
        })
    }

    fn joint(&self, node: roxmltree::Node) -> Result<Joint> {
        let joint_type = match self.attr(node, "type")? {
            "revolute" => JointType::Revolute,
            "fixed" => JointType::Fixed,
            other => return Err(self.err(node, format!("unsupported joint type {other:?}"))),
        };
        let link_of = |tag: &str| -> Result<String> {
            let n = child(node, tag).ok_or_else(|| self.err(node, format!("missing <{tag}>")))?;
            Ok(self.attr(n, "link")?.to_string())
        };
        let limit = match child(node, "limit") {
            None => None,
            Some(l) => Some(Limit {
                lower: self.num(l, "lower")?,
                upper: self.num(l, "upper")?,
                effort: self.num(l, "effort")?,
                velocity: self.num(l, "velocity")?,
            }),
        };
        if joint_type == JointType::Revolute && limit.is_none() {
            return Err(self.err(node, "revolute joint without <limit>"));
        }
        let axis = match child(node, "axis") {
            None if joint_type == JointType::Revolute => Some([1.0, 0.0, 0.0]),
            None => None,
            Some(a) => Some(self.triple(a, "xyz")?),
        };
        Ok(Joint {
            name: self.attr(node, "name")?.to_string(),
            joint_type,
            parent: link_of("parent")?,
            child: link_of("child")?,
            origin: self.origin(node)?,
            axis,
            limit,
        })
    }
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

/// Parses the URDF subset produced by [`serialize_urdf`].
pub fn parse_urdf(text: &str) -> Result<UrdfDocument> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::parse(format!("line {}, column {}", pos.row, pos.col), e.to_string())
    })?;
    let r = Reader { doc: &doc };
    let root = doc.root_element();
    if !root.has_tag_name("robot") {
        return Err(r.err(root, "root element must be <robot>"));
    }
    let mut out = UrdfDocument {
        robot_name: r.attr(root, "name")?.to_string(),
        links: Vec::new(),
        joints: Vec::new(),
    };
    for node in root.children().filter(|c| c.is_element()) {
        match node.tag_name().name() {
            "link" => out.links.push(r.link(node)?),
            "joint" => out.joints.push(r.joint(node)?),
            _ => {}
        }
    }
    Ok(out)
}

fn oracle_rpy(rpy: &[f64; 3]) -> Matrix3<f64> {
    let (sr, cr) = rpy[0].sin_cos();
    let (sp, cp) = rpy[1].sin_cos();
    let (sy, cy) = rpy[2].sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

fn oracle_axis_angle(axis: &[f64; 3], angle: f64) -> Matrix3<f64> {
    let k = Vector3::from(*axis).normalize();
    let kx = k.cross_matrix();
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

fn oracle_homogeneous(r: Matrix3<f64>, p: [f64; 3]) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&Vector3::from(p));
    m
}

/// Pose of the last link of a serial document, composed straight from the
/// joint elements: origin, then rotation about the joint axis by `q`.
pub fn urdf_fk_oracle(doc: &UrdfDocument, q: &[f64]) -> Result<Transform> {
    check_dim(doc.revolute_count(), q.len())?;
    let root = doc.check_tree()?;
    let mut m = Matrix4::identity();
    let mut current = root;
    let mut qi = q.iter();
    loop {
        let mut children = doc.joints.iter().filter(|j| j.parent == current);
        let Some(j) = children.next() else { break };
        if children.next().is_some() {
            return Err(Error::InvalidArgument(format!(
                "link {current:?} branches; the oracle handles serial chains"
            )));
        }
        m *= oracle_homogeneous(oracle_rpy(&j.origin.rpy), j.origin.xyz);
        if j.joint_type == JointType::Revolute {
            let angle = *qi.next().expect("count checked");
            m *= oracle_homogeneous(oracle_axis_angle(&j.axis.unwrap_or([1.0, 0.0, 0.0]), angle), [0.0; 3]);
        }
        current = &j.child;
    }
    Ok(Transform::new(
        m.fixed_view::<3, 3>(0, 0).into_owned(),
        m.fixed_view::<3, 1>(0, 3).into_owned(),
    ))
}

impl Origin {
    /// True when both origins print identically.
    pub fn same_text(&self, other: &Origin) -> bool {
        triple(&self.xyz) == triple(&other.xyz) && triple(&self.rpy) == triple(&other.rpy)
    }
}
