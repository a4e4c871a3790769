//! The two guidance signals on a toy latent space: the cross-view neighbor a
//! recovered latent is pulled toward, and the prototype consensus label.

use imvc::consistency::{compute_prototypes, consensus_label, soft_assign_values, NeighborIndex};
use imvc::numerics::Rng;
use ndarray::{array, concatenate, s, Axis};

fn main() -> imvc::Result<()> {
    // Sample 0 is missing view 1 (its row there is a placeholder); samples 1-3 are complete.
    let view0 = array![[1.0, 0.2], [1.1, 0.1], [0.2, 5.0], [0.1, 4.9]];
    let view1 = array![[0.0, 0.0], [2.0, 0.3], [0.3, 6.0], [0.2, 5.8]];
    let mask = array![[1u8, 0], [1, 1], [1, 1], [1, 1]];
    let index = NeighborIndex::new(vec![view0.clone(), view1.clone()], &mask)?;

    let recovered = array![1.7, 0.5];
    let neighbor = index.find_cross_view_neighbor(0, 1, recovered.view())?;
    println!("recovered latent {recovered} is pulled toward sample {neighbor:?} in view 1");

    // Slots: observed latents where present, the recovered one where missing.
    let mut slot1 = view1.clone();
    slot1.row_mut(0).assign(&recovered);
    let pooled = concatenate![Axis(0), view0, view1.slice(s![1.., ..])];
    let protos = compute_prototypes(pooled.view(), 2, 0.5, 0.1, &mut Rng::new(1))?;
    let q0 = soft_assign_values(view0.view(), &protos)?;
    let q1 = soft_assign_values(slot1.view(), &protos)?;
    for i in 0..4 {
        let label = consensus_label(&[q0.row(i), q1.row(i)], mask.row(i))?;
        println!("sample {i}: consensus prototype {label}, view-0 assignment {:.3}", q0.row(i));
    }
    Ok(())
}
