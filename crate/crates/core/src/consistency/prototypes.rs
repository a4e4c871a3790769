use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::Batch;
use crate::error::{Error, Result};
use crate::evalmetrics::{kmeans, KMeansConfig};
use crate::numerics::{Rng, Tape, Var};

const LOG_FLOOR: f64 = 1e-12;

/// Which entropy the prototypical loss regularizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// `-gamma * sum_k p log p` per slot, as written in the objective. This
    /// sharpens each assignment.
    #[default]
    PerSample,
    /// `+gamma * sum_k pbar log pbar` on the batch-mean assignment per view,
    /// which spreads mass over clusters and actually counters collapse.
    BatchMean,
}

/// Fixed cluster centres plus the softmax temperature and entropy weight.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    pub centroids: Array2<f64>,
    pub tau: f64,
    pub gamma: f64,
}

impl PrototypeSet {
    pub fn new(centroids: Array2<f64>, tau: f64, gamma: f64) -> Result<Self> {
        if centroids.nrows() < 2 {
            return Err(Error::Contract(format!("need at least 2 prototypes, got {}", centroids.nrows())));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("entropy weight must be non-negative, got {gamma}")));
        }
        if centroids.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite prototype".into()));
        }
        Ok(Self { centroids, tau, gamma })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    fn unit_centroids(&self) -> Result<Array2<f64>> {
        normalize_rows(self.centroids.view(), "prototype")
    }
}

/// k-means centres of the fused latents, refreshed once per epoch.
pub fn compute_prototypes(latents: ArrayView2<'_, f64>, k: usize, tau: f64, gamma: f64, rng: &mut Rng) -> Result<PrototypeSet> {
    let fit = kmeans(latents, k, KMeansConfig::PROTOTYPES, rng)?;
    PrototypeSet::new(fit.centroids, tau, gamma)
}

fn normalize_rows(x: ArrayView2<'_, f64>, what: &str) -> Result<Array2<f64>> {
    let mut out = x.to_owned();
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Domain {
                op: "soft_assign",
                detail: format!("{what} row {r} has zero norm; cosine similarity is undefined"),
            });
        }
        row /= norm;
    }
    Ok(out)
}

/// Softmax over prototypes of `cos(z, c_k) / tau`, row-wise, `(B, K)`.
/// Gradients flow into `z`; the prototypes are constants.
pub fn soft_assign(tape: &Tape, z: Var, protos: &PrototypeSet) -> Result<Var> {
    let (_, d) = tape.shape(z);
    if d != protos.dim() {
        return Err(Error::Shape {
            op: "soft_assign",
            left: tape.value(z).shape().to_vec(),
            right: protos.centroids.shape().to_vec(),
        });
    }
    normalize_rows(tape.value(z).view(), "latent")?;
    let norm = tape.sqrt(tape.row_sums(tape.square(z)))?;
    let unit = tape.div(z, norm)?;
    let c = tape.constant(protos.unit_centroids()?.reversed_axes());
    let sims = tape.scale(tape.matmul(unit, c)?, 1.0 / protos.tau);
    Ok(tape.softmax(sims))
}

/// [`soft_assign`] without a tape.
pub fn soft_assign_values(z: ArrayView2<'_, f64>, protos: &PrototypeSet) -> Result<Array2<f64>> {
    let tape = Tape::new();
    let p = soft_assign(&tape, tape.constant(z.to_owned()), protos)?;
    let out = tape.value(p).clone();
    Ok(out)
}

/// Argmax of the mean assignment over observed views; ties go to the lowest
/// cluster.
pub fn consensus_label(assignments: &[ArrayView1<'_, f64>], mask_row: ArrayView1<'_, u8>) -> Result<usize> {
    if assignments.len() != mask_row.len() {
        return Err(Error::Contract(format!(
            "{} assignments for a {}-view mask row",
            assignments.len(),
            mask_row.len()
        )));
    }
    let observed: Vec<usize> = (0..mask_row.len()).filter(|&v| mask_row[v] == 1).collect();
    if observed.is_empty() {
        return Err(Error::Contract("consensus label needs at least one observed view".into()));
    }
    let k = assignments[observed[0]].len();
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..k {
        let mean = observed.iter().map(|&v| assignments[v][c]).sum::<f64>() / observed.len() as f64;
        if mean > best.1 {
            best = (c, mean);
        }
    }
    Ok(best.0)
}

/// Consensus labels for all samples from per-view `(N, K)` assignments.
pub fn consensus_labels(assignments: &[Array2<f64>], mask: &Array2<u8>) -> Result<Vec<usize>> {
    (0..mask.nrows())
        .map(|i| {
            let rows: Vec<ArrayView1<'_, f64>> = assignments.iter().map(|p| p.row(i)).collect();
            consensus_label(&rows, mask.row(i))
        })
        .collect()
}

/// Cross-entropy to the one-hot consensus label plus the entropy term,
/// averaged over every `(sample, view)` slot of the batch, observed and
/// recovered alike. `labels[r]` is the label of batch row `r`.
pub fn pc_loss(tape: &Tape, assignments: &[Var], labels: &[usize], gamma: f64, mode: EntropyMode) -> Result<Var> {
    let Some(&first) = assignments.first() else {
        return Ok(tape.scalar(0.0));
    };
    let (rows, k) = tape.shape(first);
    if labels.len() != rows {
        return Err(Error::Contract(format!("{} labels for {rows} assignment rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Contract(format!("label {bad} outside {k} clusters")));
    }
    if rows == 0 {
        return Ok(tape.scalar(0.0));
    }
    let slots = (rows * assignments.len()) as f64;
    let onehot = tape.constant(Array2::from_shape_fn((rows, k), |(r, c)| f64::from(labels[r] == c)));
    let mut total = tape.scalar(0.0);
    for &p in assignments {
        let log_p = tape.log_clamped(p, LOG_FLOOR)?;
        let ce = tape.neg(tape.sum(tape.mul(onehot, log_p)?));
        total = tape.add(total, tape.scale(ce, 1.0 / slots))?;
        if gamma == 0.0 {
            continue;
        }
        let entropy_term = match mode {
            EntropyMode::PerSample => {
                let neg_entropy = tape.sum(tape.mul(p, log_p)?);
                tape.scale(neg_entropy, -gamma / slots)
            }
            EntropyMode::BatchMean => {
                let mean = tape.scale(tape.col_sums(p), 1.0 / rows as f64);
                let log_mean = tape.log_clamped(mean, LOG_FLOOR)?;
                let neg_entropy = tape.sum(tape.mul(mean, log_mean)?);
                tape.scale(neg_entropy, gamma / assignments.len() as f64)
            }
        };
        total = tape.add(total, entropy_term)?;
    }
    Ok(total)
}

/// Per-slot latents for a batch: the encoder latent where the view is
/// observed and the recovered latent where it is missing.
pub fn merge_slots(tape: &Tape, batch: &Batch, latents: &[Var], recovered: &[Var]) -> Result<Vec<Var>> {
    latents
        .iter()
        .zip(recovered)
        .enumerate()
        .map(|(v, (&z, &zt))| {
            let w = batch.mask_col(v);
            let observed = tape.mul(z, tape.constant(w.clone()))?;
            let missing = tape.mul(zt, tape.constant(w.mapv(|x| 1.0 - x)))?;
            tape.add(observed, missing)
        })
        .collect()
}

/// Row means of per-view assignments restricted to observed views, used
/// where a soft consensus is wanted instead of a label.
pub fn masked_mean_assignment(assignments: &[Array2<f64>], mask: &Array2<u8>) -> Array2<f64> {
    let (n, k) = assignments[0].dim();
    let mut out = Array2::zeros((n, k));
    for (v, p) in assignments.iter().enumerate() {
        for i in (0..n).filter(|&i| mask[[i, v]] == 1) {
            out.row_mut(i).scaled_add(1.0, &p.row(i));
        }
    }
    let counts = mask.map(|&w| f64::from(w)).sum_axis(Axis(1));
    for (mut row, &c) in out.rows_mut().into_iter().zip(counts.iter()) {
        if c > 0.0 {
            row /= c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use ndarray::array;

    fn protos(c: Array2<f64>) -> PrototypeSet {
        PrototypeSet::new(c, 1.0, 0.1).unwrap()
    }

    #[test]
    fn analytic_two_cluster_softmax() {
        let p = soft_assign_values(array![[2.0, 0.0]].view(), &protos(array![[1.0, 0.0], [0.0, 3.0]])).unwrap();
        let e = std::f64::consts::E;
        assert!((p[[0, 0]] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[[0, 1]] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((p[[0, 0]] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn equal_similarities_give_uniform() {
        let p = soft_assign_values(array![[1.0, 1.0]].view(), &protos(array![[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_is_a_domain_error() {
        let ps = protos(array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(soft_assign_values(array![[0.0, 0.0]].view(), &ps).unwrap_err().category(), "domain");
        let zero_centroid = protos(array![[1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(
            soft_assign_values(array![[1.0, 0.0]].view(), &zero_centroid).unwrap_err().category(),
            "domain"
        );
    }

    #[test]
    fn consensus_examples() {
        let single = [array![0.2, 0.8], array![0.9, 0.1]];
        let views: Vec<_> = single.iter().map(|a| a.view()).collect();
        assert_eq!(consensus_label(&views, array![1u8, 0].view()).unwrap(), 1);
        assert_eq!(consensus_label(&views, array![0u8, 1].view()).unwrap(), 0);

        let split = [array![0.5, 0.4, 0.1], array![0.3, 0.5, 0.2]];
        let views: Vec<_> = split.iter().map(|a| a.view()).collect();
        assert_eq!(consensus_label(&views, array![1u8, 1].view()).unwrap(), 1);

        let tie = [array![0.5, 0.5]];
        let views: Vec<_> = tie.iter().map(|a| a.view()).collect();
        assert_eq!(consensus_label(&views, array![1u8].view()).unwrap(), 0);
        assert_eq!(consensus_label(&views, array![0u8].view()).unwrap_err().category(), "contract");
    }

    #[test]
    fn pc_loss_closed_forms() {
        let tape = Tape::new();
        let onehot = tape.constant(array![[0.0, 1.0]]);
        let perfect = pc_loss(&tape, &[onehot], &[1], 0.0, EntropyMode::PerSample).unwrap();
        assert!(tape.item(perfect).abs() < 1e-15);
        let uniform = tape.constant(array![[0.5, 0.5], [0.5, 0.5]]);
        let loss = pc_loss(&tape, &[uniform, uniform], &[0, 1], 0.0, EntropyMode::PerSample).unwrap();
        assert!((tape.item(loss) - 2f64.ln()).abs() < 1e-15);
        // With gamma the per-sample entropy ln 2 is added with weight gamma.
        let loss = pc_loss(&tape, &[uniform], &[0, 1], 0.5, EntropyMode::PerSample).unwrap();
        assert!((tape.item(loss) - 1.5 * 2f64.ln()).abs() < 1e-15);
        // Batch-mean entropy of a uniform marginal is -gamma ln 2.
        let loss = pc_loss(&tape, &[uniform], &[0, 1], 0.5, EntropyMode::BatchMean).unwrap();
        assert!((tape.item(loss) - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn pc_loss_is_invariant_to_relabeling() {
        let ps = protos(array![[1.0, 0.2], [-0.3, 1.0], [0.5, -1.0]]);
        let swapped = protos(array![[0.5, -1.0], [1.0, 0.2], [-0.3, 1.0]]);
        let perm = [1usize, 2, 0];
        let z = array![[0.3, 0.9], [1.2, -0.4], [-0.5, -0.5]];
        let labels = [0usize, 2, 1];
        let eval = |ps: &PrototypeSet, labels: &[usize]| {
            let tape = Tape::new();
            let p = soft_assign(&tape, tape.constant(z.clone()), ps).unwrap();
            let loss = pc_loss(&tape, &[p], labels, 0.1, EntropyMode::PerSample).unwrap();
            tape.item(loss)
        };
        let relabeled: Vec<usize> = labels.iter().map(|&y| perm[y]).collect();
        assert!((eval(&ps, &labels) - eval(&swapped, &relabeled)).abs() < 1e-12);
    }

    #[test]
    fn pc_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let ps = PrototypeSet::new(Array2::from_shape_fn((3, 4), |_| rng.normal()), 0.7, 0.1).unwrap();
        let z: Vec<Array2<f64>> = (0..2).map(|_| Array2::from_shape_fn((5, 4), |_| rng.normal())).collect();
        let labels = [0usize, 1, 2, 1, 0];
        for mode in [EntropyMode::PerSample, EntropyMode::BatchMean] {
            let err = grad_check(
                |tape, vs| {
                    let ps: Vec<Var> = vs.iter().map(|&v| soft_assign(tape, v, &ps)).collect::<Result<_>>()?;
                    pc_loss(tape, &ps, &labels, 0.1, mode)
                },
                &z,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{mode:?}: {err}");
        }
    }

    #[test]
    fn prototypes_of_distinct_points_are_the_points() {
        let pts = array![[0.0, 1.0], [5.0, 5.0], [-3.0, 2.0]];
        let ps = compute_prototypes(pts.view(), 3, 1.0, 0.1, &mut Rng::new(1)).unwrap();
        let mut got: Vec<Vec<f64>> = ps.centroids.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut want: Vec<Vec<f64>> = pts.rows().into_iter().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        let err = compute_prototypes(pts.view(), 4, 1.0, 0.1, &mut Rng::new(1)).unwrap_err();
        assert_eq!(err.category(), "contract");
    }

    #[test]
    fn prototypes_find_separated_means_deterministically() {
        let mut rng = Rng::new(2);
        let pts = Array2::from_shape_fn((40, 2), |(i, _)| if i < 20 { -10.0 } else { 10.0 } + 0.1 * rng.normal());
        let a = compute_prototypes(pts.view(), 2, 1.0, 0.1, &mut Rng::new(9)).unwrap();
        let b = compute_prototypes(pts.view(), 2, 1.0, 0.1, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let low = pts.slice(ndarray::s![..20, ..]).mean_axis(Axis(0)).unwrap();
        let matched = a.centroids.rows().into_iter().any(|c| (&c - &low).iter().all(|d| d.abs() < 1e-12));
        assert!(matched);
    }
}
