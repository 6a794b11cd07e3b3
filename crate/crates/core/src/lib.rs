//! Modeling toolkit for modular, reconfigurable serial manipulators.
//!
//! A manipulator is an ordered sequence of *modular units*: a heavy (`H`) or
//! light (`L`) joint module attached through one of two input ports, with or
//! without a link module on its output port. From such a sequence the crate
//! computes forward/inverse kinematics, joint torques and actuator
//! feasibility, converts DH tables into unit sequences, and emits URDF.

pub mod catalog;
pub mod composition;
pub mod dh_convert;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod kinematics;
pub mod numfmt;
pub mod presets;
pub mod urdf;

pub use catalog::{get_catalog, Catalog, TwistQuantization, TwistSlot, UnitKind, Variant};
pub use composition::{Composition, JointState, ModularUnit, ValidationOptions, ValidationReport};
pub use error::{Error, Result};
pub use exec::Exec;
pub use kinematics::Transform;
