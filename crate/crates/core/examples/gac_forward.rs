//! Runs the connector on one image's features and checks two structural
//! properties: M + L output tokens, and indifference to patch order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spoofvqa::gac::{Gac, GacConfig, VisualFeatures};
use spoofvqa::params::ParamStore;
use spoofvqa::tensor::Tensor;

fn main() -> spoofvqa::Result<()> {
    let config = GacConfig { d_model: 16, n_heads: 4, n_learnable: 4, n_layers_vision: 6, mlp_hidden: 64, d_enc: 32 };
    let gac = Gac::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    gac.init_params(&mut store, &mut rng);
    gac.init_ablation_queries(&mut store, &mut rng);
    println!("{} connector tensors, {} values", store.len(), store.num_values());

    let vis = VisualFeatures { local: Tensor::randn(&[16, 32], 1.0, &mut rng), globals: Tensor::randn(&[6, 32], 1.0, &mut rng) };
    let out = gac.forward_value(&store, &vis, false)?;
    println!("X_T shape {:?} (M={} learnable + L={} global)", out.shape(), config.n_learnable, config.n_layers_vision);

    let perm: Vec<usize> = (0..16).rev().collect();
    let shuffled = VisualFeatures { local: vis.local.permute_rows(&perm), globals: vis.globals.clone() };
    let again = gac.forward_value(&store, &shuffled, false)?;
    let diff = out.data().iter().zip(again.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max change after reversing patch order: {diff:.1e}");

    let ablated = gac.forward_value(&store, &vis, true)?;
    let moved = out.data().iter().zip(ablated.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("ablated connector: shape {:?}, max difference from full {moved:.3}", ablated.shape());
    Ok(())
}
