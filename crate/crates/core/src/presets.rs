//! Reference DH tables and compositions used by tests, benches and the CLI.
//!
//! Symbolic lengths in the configuration-type tables are instantiated with
//! the link-unit reach (`a = 0.22 m`) and the input-port height
//! (`d = 0.147 m`); symbolic twists with the values quoted for the
//! surgical-arm style configuration (75° and 180° − 52°).

use std::f64::consts::{FRAC_PI_2, PI};

use crate::catalog::{get_catalog, TwistMode, UnitKind, Variant};
use crate::composition::{Composition, ModularUnit};
use crate::dh_convert::{convert, ConvertOptions, DhRow, DhTable, VariantSplit};

pub const SYMBOLIC_A_M: f64 = 0.22;
pub const SYMBOLIC_D_M: f64 = 0.147;
pub const SKEW_TWIST_DEG: f64 = 60.0;
pub const INTERSECTING_TWIST_1_DEG: f64 = 75.0;
pub const INTERSECTING_TWIST_2_DEG: f64 = 180.0 - 52.0;

fn table(rows: &[(f64, f64, f64)]) -> DhTable {
    DhTable::new(rows.iter().map(|&(a, alpha, d)| DhRow::new(a, alpha, d, 0.0)).collect())
}

/// Planar 2-DoF arm.
pub fn table2_ia() -> DhTable {
    table(&[(SYMBOLIC_A_M, 0.0, 0.0), (SYMBOLIC_A_M, PI, 0.0)])
}

/// Articulated 3-DoF arm.
pub fn table2_ib() -> DhTable {
    table(&[
        (0.0, -FRAC_PI_2, SYMBOLIC_D_M),
        (SYMBOLIC_A_M, 0.0, 0.0),
        (SYMBOLIC_A_M, 0.0, 0.0),
    ])
}

/// Articulated 3-DoF arm with a skew twist between joints 2 and 3.
pub fn table2_iic() -> DhTable {
    table(&[
        (0.0, -FRAC_PI_2, SYMBOLIC_D_M),
        (SYMBOLIC_A_M, SKEW_TWIST_DEG.to_radians(), 0.0),
        (SYMBOLIC_A_M, 0.0, 0.0),
    ])
}

/// Spherical wrist.
pub fn table2_id() -> DhTable {
    table(&[(0.0, -FRAC_PI_2, 0.0), (0.0, FRAC_PI_2, 0.0), (0.0, 0.0, 0.0)])
}

/// Intersecting axes at unconventional angles.
pub fn table2_iiie() -> DhTable {
    table(&[
        (0.0, INTERSECTING_TWIST_1_DEG.to_radians(), 0.0),
        (0.0, INTERSECTING_TWIST_2_DEG.to_radians(), 0.0),
        (0.0, 0.0, 0.0),
    ])
}

/// One configuration-type case: DH table, published sequence, conversion options.
#[derive(Debug, Clone)]
pub struct ConfigurationCase {
    pub name: &'static str,
    pub table: DhTable,
    pub published_sequence: &'static str,
    pub options: ConvertOptions,
}

/// The five configuration-type tables with the options they convert under.
///
/// The wrist is an all-light chain (it sits on another arm), and the
/// intersecting-axes case needs continuous twists (128° is outside the
/// pivot range).
pub fn configuration_cases() -> Vec<ConfigurationCase> {
    let with_ref = |seq: &'static str| ConvertOptions {
        reference_sequence: Some(seq.to_string()),
        ..Default::default()
    };
    vec![
        ConfigurationCase {
            name: "planar",
            table: table2_ia(),
            published_sequence: "H3-L4",
            options: with_ref("H3-L4"),
        },
        ConfigurationCase {
            name: "articulated",
            table: table2_ib(),
            published_sequence: "H1-H4-L4",
            options: with_ref("H1-H4-L4"),
        },
        ConfigurationCase {
            name: "skew-twist",
            table: table2_iic(),
            published_sequence: "H1-H4-L4",
            options: with_ref("H1-H4-L4"),
        },
        ConfigurationCase {
            name: "wrist",
            table: table2_id(),
            published_sequence: "L1-L4-L1",
            options: ConvertOptions {
                variant_split: VariantSplit::HeavyCount(0),
                ..with_ref("L1-L4-L1")
            },
        },
        ConfigurationCase {
            name: "intersecting",
            table: table2_iiie(),
            published_sequence: "H4-H3-L1",
            options: ConvertOptions {
                twist_mode: TwistMode::Continuous,
                ..with_ref("H4-H3-L1")
            },
        },
    ]
}

/// Six-DoF arm with two 0.26 rad skew twists.
pub fn table3_example_a() -> DhTable {
    table(&[
        (0.0, -FRAC_PI_2, 0.148),
        (0.3, 0.26, 0.0),
        (0.3, 0.0, 0.0),
        (0.3, 0.26, 0.0),
        (0.3, FRAC_PI_2, 0.0),
        (0.0, 0.0, 0.075),
    ])
}

/// Six-DoF arm with 2.36 rad skew twists.
pub fn table3_example_b() -> DhTable {
    table(&[
        (0.0, -FRAC_PI_2, 0.148),
        (0.3, 2.36, 0.0),
        (0.3, 2.36, 0.0),
        (0.0, -FRAC_PI_2, 0.148),
        (0.0, -FRAC_PI_2, 0.148),
        (0.0, 0.0, 0.075),
    ])
}

pub fn table3_example_b_composition() -> Composition {
    let mut comp = convert(&table3_example_b(), get_catalog(), &ConvertOptions::default())
        .expect("example B converts")
        .composition;
    comp.name = "mod6_example_b".into();
    comp
}

/// One heavy and two light units with a 45° skew twist between units 2 and 3.
pub fn vertical_farm_3dof() -> Composition {
    Composition::new(
        "mod3_vertical_farm",
        vec![
            ModularUnit::new(Variant::H, UnitKind::U1),
            ModularUnit::new(Variant::L, UnitKind::U4).with_twist1(45.0),
            ModularUnit::new(Variant::L, UnitKind::U1),
        ],
    )
}

/// Valid compositions used for URDF goldens and dual-path checks: the five
/// configuration types (the wrist with the default heavy/light split so that
/// it has a heavy base), the vertical-farm arm and both six-DoF examples.
pub fn golden_compositions() -> Vec<(String, Composition)> {
    let mut out: Vec<(String, Composition)> = configuration_cases()
        .into_iter()
        .map(|case| {
            let mut opts = case.options;
            if matches!(opts.variant_split, VariantSplit::HeavyCount(_)) {
                opts.variant_split = VariantSplit::Auto;
            }
            opts.name = Some(format!("mod{}_{}", case.table.dof(), case.name.replace('-', "_")));
            let comp = convert(&case.table, get_catalog(), &opts)
                .expect("configuration table converts")
                .composition;
            (case.name.to_string(), comp)
        })
        .collect();
    out.push(("vertical-farm".into(), vertical_farm_3dof()));
    let mut a = convert(&table3_example_a(), get_catalog(), &ConvertOptions::default())
        .expect("example A converts")
        .composition;
    a.name = "mod6_example_a".into();
    out.push(("example-a".into(), a));
    out.push(("example-b".into(), table3_example_b_composition()));
    out
}
