#![allow(dead_code)]

use lcmis_core::world::{build_world, ComponentConfig, ConceptClass, ConceptConfig, ConceptWorld, WorldConfig};
use proptest::prelude::*;

pub const TAGS: [&str; 3] = ["A", "B", "C"];

/// Random world: 1-3 dimensions, 1-4 components with full SPD covariances
/// and nonempty tag subsets of {A, B, C}, one concept per tag in use.
pub fn world_config() -> impl Strategy<Value = WorldConfig> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(dim, k)| {
        let component = (
            0.05f64..1.0,
            prop::collection::vec(-4.0f64..4.0, dim),
            prop::collection::vec(-0.8f64..0.8, dim * dim),
            prop::collection::vec(0.2f64..1.5, dim),
            1u8..8,
        );
        prop::collection::vec(component, k).prop_map(move |raw| {
            let total: f64 = raw.iter().map(|c| c.0).sum();
            let mut components = Vec::new();
            for (w, mean, a, diag, mask) in raw {
                let mut cov = vec![0.0; dim * dim];
                for i in 0..dim {
                    for j in 0..dim {
                        let mut s = 0.0;
                        for l in 0..dim {
                            s += a[i * dim + l] * a[j * dim + l];
                        }
                        cov[i * dim + j] = s + if i == j { diag[i] } else { 0.0 };
                    }
                }
                let tags = TAGS
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, t)| t.to_string())
                    .collect();
                components.push(ComponentConfig {
                    weight: w / total,
                    mean,
                    cov_diag: None,
                    cov: Some(cov),
                    tags,
                });
            }
            let concepts = TAGS
                .iter()
                .filter(|t| components.iter().any(|c| c.tags.contains(&t.to_string())))
                .map(|t| ConceptConfig::new(&format!("concept {t}"), ConceptClass::Other, &[t]))
                .collect();
            WorldConfig {
                dim,
                lambda_default: 2.0,
                components,
                concepts,
            }
        })
    })
}

pub fn world() -> impl Strategy<Value = ConceptWorld> {
    world_config().prop_map(|c| build_world(&c).expect("generated world is valid"))
}

pub fn concept_names(world: &ConceptWorld) -> Vec<String> {
    world.concepts().iter().map(|c| c.name().to_string()).collect()
}
