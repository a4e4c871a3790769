//! k-means on well separated blobs, scored with ACC, NMI and ARI.

use imvc::evalmetrics::{accuracy, hungarian, kmeans, score, KMeansConfig};
use imvc::numerics::Rng;
use ndarray::{array, Array2};

fn main() -> imvc::Result<()> {
    let mut rng = Rng::new(3);
    let centres = array![[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
    let truth: Vec<usize> = (0..300).map(|i| i % 3).collect();
    let points = Array2::from_shape_fn((300, 2), |(i, c)| centres[[truth[i], c]] + rng.normal());

    let result = kmeans(points.view(), 3, KMeansConfig::STANDARD, &mut rng)?;
    let s = score(&result.labels, &truth)?;
    println!("k-means: acc {:.4} nmi {:.4} ari {:.4} inertia {:.1}", s.acc, s.nmi, s.ari, result.inertia);

    // Accuracy matches clusters to classes with the Hungarian method.
    println!("acc([0,0,1,1], [0,1,1,1]) = {}", accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1])?);
    let (assignment, cost) = hungarian(&array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])?;
    println!("assignment {assignment:?} with cost {cost}");
    Ok(())
}
