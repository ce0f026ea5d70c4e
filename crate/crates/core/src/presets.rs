//! Built-in worlds.

use crate::world::{build_world, ComponentConfig, ConceptClass, ConceptConfig, ConceptWorld, WorldConfig};

pub const COKE: &str = "iced coke";
pub const TEA_CUP: &str = "tea cup";
pub const GLASS: &str = "glass";

/// Three components in the plane: the beverage with its usual glass
/// (`{A, C}`, heavy), the tea cup alone (`{B}`), and the rare joint mode
/// (`{A, B}`). With `lambda = 2` the full prompt still puts only 0.28 of
/// its mass on the joint mode.
pub fn coke_world_config() -> WorldConfig {
    WorldConfig {
        dim: 2,
        lambda_default: 2.0,
        components: vec![
            ComponentConfig::isotropic(0.80, &[-3.0, 0.0], 0.25, &["A", "C"]),
            ComponentConfig::isotropic(0.15, &[3.0, 1.0], 0.25, &["B"]),
            ComponentConfig::isotropic(0.05, &[3.0, -1.0], 0.25, &["A", "B"]),
        ],
        concepts: vec![
            ConceptConfig::new(COKE, ConceptClass::Content, &["A"])
                .with_description(&["A"], "dark fizzy liquid with floating ice cubes"),
            ConceptConfig::new(TEA_CUP, ConceptClass::Container, &["B"])
                .with_description(&["B"], "small pale cup with a handle"),
            ConceptConfig::new(GLASS, ConceptClass::Container, &["C"]),
        ],
    }
}

pub fn coke_world() -> ConceptWorld {
    build_world(&coke_world_config()).expect("preset world is valid")
}

/// Same layout as the coke world with `w(A, C) / w(A, B) = ratio` and the
/// `{B}` component fixed at 0.15. The layout is rotated by `angle` radians
/// about the origin so variants of one ratio do not share coordinates.
pub fn biased_world_config(ratio: f64, angle: f64, a: &str, b: &str, c: &str) -> WorldConfig {
    let joint = 0.85 / (ratio + 1.0);
    let latent = 0.85 - joint;
    let (s, co) = angle.sin_cos();
    let rot = |p: [f64; 2]| [co * p[0] - s * p[1], s * p[0] + co * p[1]];
    WorldConfig {
        dim: 2,
        lambda_default: 2.0,
        components: vec![
            ComponentConfig::isotropic(latent, &rot([-3.0, 0.0]), 0.25, &["A", "C"]),
            ComponentConfig::isotropic(0.15, &rot([3.0, 1.0]), 0.25, &["B"]),
            ComponentConfig::isotropic(joint, &rot([3.0, -1.0]), 0.25, &["A", "B"]),
        ],
        concepts: vec![
            ConceptConfig::new(a, ConceptClass::Content, &["A"]),
            ConceptConfig::new(b, ConceptClass::Container, &["B"]),
            ConceptConfig::new(c, ConceptClass::Container, &["C"]),
        ],
    }
}
