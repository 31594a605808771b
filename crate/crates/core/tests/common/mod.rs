#![allow(dead_code)]

use geoembed_core::data::{generate_synthetic, SyntheticSpec};
use geoembed_core::losses::LossRecipe;
use geoembed_core::model::{Activation, CompositionNet, MlpNet, MlpSpec, ModelBundle, MtlHead};
use geoembed_core::{Dataset, Rng};

pub fn small_dataset(seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        num_classes: 8,
        examples_per_class: 9,
        num_aux: 3,
        latent_dim: 4,
        input_dim: 6,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

pub fn bundle_for(recipe: &LossRecipe, ds: &Dataset, embed_dim: usize, seed: u64) -> ModelBundle {
    let mut rng = Rng::new(seed);
    let spec = MlpSpec::new(vec![ds.input_dim(), 12, embed_dim], Activation::Relu).unwrap();
    ModelBundle {
        space: recipe.space,
        f: MlpNet::new(spec, &mut rng).unwrap(),
        g: recipe
            .needs_composition()
            .then(|| CompositionNet::new(embed_dim, ds.num_aux(), &mut rng).unwrap()),
        head: recipe
            .needs_head()
            .then(|| MtlHead::new(embed_dim, ds.num_aux(), &mut rng).unwrap()),
    }
}
