use imvc::autoencoder::{encode_batch, fuse_latents, per_instance_reconstruction, Activation, ViewAutoencoder};
use imvc::dataio::{Batch, MultiViewDataset};
use imvc::flow::{dtl_loss, fuse_gaussian, transfer_to_view, FlowNetwork, FlowSpec, LN_2PI};
use imvc::numerics::{grad_check, Module, Rng, Tape, Var};
use nalgebra::DMatrix;
use ndarray::{array, Array2};

fn random_flow(d: usize, m: usize, seed: u64, jitter: f64) -> FlowNetwork {
    let mut rng = Rng::new(seed);
    let mut flow = FlowNetwork::new(&FlowSpec::new(d, m), "f", &mut rng).unwrap();
    for p in flow.params_mut() {
        p.value.mapv_inplace(|w| w + jitter * rng.normal());
    }
    flow
}

fn numeric_jacobian(flow: &FlowNetwork, z: &[f64], h: f64) -> DMatrix<f64> {
    let d = z.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut up = Array2::from_shape_vec((1, d), z.to_vec()).unwrap();
        let mut down = up.clone();
        up[[0, j]] += h;
        down[[0, j]] -= h;
        let (hu, _) = flow.forward_values(&up).unwrap();
        let (hd, _) = flow.forward_values(&down).unwrap();
        for i in 0..d {
            jac[(i, j)] = (hu[[0, i]] - hd[[0, i]]) / (2.0 * h);
        }
    }
    jac
}

#[test]
fn identity_flow_is_identity() {
    let flow = FlowNetwork::identity(&FlowSpec::new(4, 3), "id").unwrap();
    let z = array![[0.3, -1.0, 2.0, 5.0], [1.0, 1.0, 1.0, 1.0]];
    let (h, ld) = flow.forward_values(&z).unwrap();
    assert_eq!(h, z);
    assert_eq!(ld, Array2::<f64>::zeros((2, 1)));
    assert_eq!(flow.inverse_values(&z).unwrap(), z);
}

#[test]
fn pure_scaling_layer() {
    let mut flow = FlowNetwork::new(&FlowSpec::new(2, 0), "s", &mut Rng::new(0)).unwrap();
    flow.scaling.s_theta.value = array![[2f64.ln(), 2f64.ln()]];
    let (h, ld) = flow.forward_values(&array![[1.0, 1.0]]).unwrap();
    assert!((h[[0, 0]] - 2.0).abs() < 1e-15 && (h[[0, 1]] - 2.0).abs() < 1e-15);
    assert!((ld[[0, 0]] - 1.3862943611198906).abs() < 1e-12);
    let back = flow.inverse_values(&array![[2.0, 2.0]]).unwrap();
    assert!((back[[0, 0]] - 1.0).abs() < 1e-15 && (back[[0, 1]] - 1.0).abs() < 1e-15);
}

#[test]
fn odd_latent_dim_rejected() {
    let err = FlowNetwork::new(&FlowSpec::new(5, 2), "f", &mut Rng::new(0)).unwrap_err();
    assert_eq!(err.category(), "config");
}

#[test]
fn round_trip_many_points() {
    let flow = random_flow(32, 6, 3, 0.1);
    let mut rng = Rng::new(4);
    let z = Array2::from_shape_fn((1000, 32), |_| rng.normal());
    let (h, _) = flow.forward_values(&z).unwrap();
    let back = flow.inverse_values(&h).unwrap();
    let worst = (&back - &z).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn logdet_matches_numeric_jacobian() {
    let mut rng = Rng::new(10);
    for trial in 0..10 {
        let flow = random_flow(4, 2, 100 + trial, 0.5);
        let z: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let (_, ld) = flow.forward_values(&Array2::from_shape_vec((1, 4), z.clone()).unwrap()).unwrap();
        let det = numeric_jacobian(&flow, &z, 1e-5).determinant();
        let analytic = ld[[0, 0]].exp();
        let rel = (analytic - det.abs()).abs() / det.abs();
        assert!(rel < 1e-5, "trial {trial}: analytic {analytic}, numeric {det}");
    }
}

#[test]
fn alternating_layers_touch_every_coordinate() {
    let flow = random_flow(6, 2, 5, 0.5);
    let jac = numeric_jacobian(&flow, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6], 1e-5);
    for i in 0..6 {
        let row: Vec<f64> = (0..6).map(|j| jac[(i, j)]).collect();
        let off_diag = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x.abs()).sum::<f64>();
        assert!(off_diag > 1e-6, "row {i} looks untransformed: {row:?}");
    }
}

#[test]
fn standard_normal_log_density() {
    let flow = FlowNetwork::identity(&FlowSpec::new(2, 2), "id").unwrap();
    let lp = flow.log_likelihood_values(&array![[0.0, 0.0], [1.0, 0.0]]).unwrap();
    assert!((lp[[0, 0]] + LN_2PI).abs() < 1e-12);
    assert!((lp[[1, 0]] + LN_2PI + 0.5).abs() < 1e-12);
    assert!((lp[[0, 0]] + 1.8379).abs() < 1e-4);
}

#[test]
fn density_integrates_to_one_on_coarse_grid() {
    let flow = random_flow(2, 2, 12, 0.2);
    let step = 0.05;
    let ticks: Vec<f64> = (0..320).map(|k| -8.0 + (k as f64 + 0.5) * step).collect();
    let grid = Array2::from_shape_fn((ticks.len() * ticks.len(), 2), |(r, c)| {
        if c == 0 {
            ticks[r / ticks.len()]
        } else {
            ticks[r % ticks.len()]
        }
    });
    let lp = flow.log_likelihood_values(&grid).unwrap();
    let mass: f64 = lp.iter().map(|l| l.exp()).sum::<f64>() * step * step;
    assert!((mass - 1.0).abs() < 0.01, "{mass}");
}

/// A flow with heavy tails loses mass outside the grid; the grid mass plus
/// the sampled fraction outside it still adds up to one.
#[test]
fn grid_mass_plus_sampled_tail_is_one() {
    let mut rng = Rng::new(2);
    let mut flow = FlowNetwork::new(&FlowSpec::new(2, 4), "f", &mut rng).unwrap();
    for p in flow.params_mut() {
        p.value.mapv_inplace(|w| w + 0.1 * rng.normal());
    }
    let step = 0.05;
    let ticks: Vec<f64> = (0..320).map(|k| -8.0 + (k as f64 + 0.5) * step).collect();
    let grid = Array2::from_shape_fn((ticks.len() * ticks.len(), 2), |(r, c)| {
        if c == 0 {
            ticks[r / ticks.len()]
        } else {
            ticks[r % ticks.len()]
        }
    });
    let lp = flow.log_likelihood_values(&grid).unwrap();
    let inside: f64 = lp.iter().map(|l| l.exp()).sum::<f64>() * step * step;
    let h = Array2::from_shape_fn((20_000, 2), |_| rng.normal());
    let z = flow.inverse_values(&h).unwrap();
    let outside = z.rows().into_iter().filter(|r| r.iter().any(|x| x.abs() > 8.0)).count() as f64 / 20_000.0;
    assert!(outside > 0.05, "this flow was chosen for its tails: {outside}");
    assert!((inside + outside - 1.0).abs() < 0.01, "inside {inside} + outside {outside}");
}

#[test]
fn gaussian_fusion_examples() {
    let tape = Tape::new();
    let u = array![[0.5, -1.5]];
    let hs = [tape.constant(u.clone()), tape.constant(u.clone()), tape.constant(array![[9.0, 9.0]])];
    let one = fuse_gaussian(&tape, &hs, &array![[1.0, 0.0, 1.0]], Some(2)).unwrap();
    assert_eq!(*tape.value(one), u);
    let two = fuse_gaussian(&tape, &hs, &array![[1.0, 1.0, 1.0]], Some(2)).unwrap();
    let expected = &u * 2f64.sqrt();
    assert!((&*tape.value(two) - &expected).iter().all(|d| d.abs() < 1e-15));
    let err = fuse_gaussian(&tape, &hs, &array![[0.0, 0.0, 1.0]], Some(2)).unwrap_err();
    assert_eq!(err.category(), "contract");
}

#[test]
fn gaussian_fusion_keeps_unit_moments() {
    let mut rng = Rng::new(77);
    let n = 100_000;
    let tape = Tape::new();
    let hs: Vec<Var> = (0..3)
        .map(|_| tape.constant(Array2::from_shape_fn((n, 2), |_| rng.normal())))
        .collect();
    // Mixed contributor counts: 1 or 2 views depending on the row.
    let mask = Array2::from_shape_fn((n, 3), |(i, v)| if v == 1 && i % 2 == 0 { 0.0 } else { 1.0 });
    let fused = fuse_gaussian(&tape, &hs, &mask, Some(0)).unwrap();
    let f = tape.value(fused);
    for c in 0..2 {
        let col = f.column(c);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((0.96..=1.04).contains(&var), "{var}");
    }
}

fn two_view_setup(mask: Array2<u8>, seed: u64) -> (Vec<ViewAutoencoder>, Vec<FlowNetwork>, MultiViewDataset) {
    let mut rng = Rng::new(seed);
    let n = mask.nrows();
    let aes: Vec<ViewAutoencoder> = (0..2)
        .map(|v| ViewAutoencoder::new(3, 4, &[5], Activation::Tanh, &format!("v{v}"), &mut rng).unwrap())
        .collect();
    let flows: Vec<FlowNetwork> = (0..2)
        .map(|v| {
            let mut f = FlowNetwork::new(&FlowSpec { hidden_dims: vec![6], ..FlowSpec::new(4, 2) }, &format!("f{v}"), &mut rng)
                .unwrap();
            for p in f.params_mut() {
                p.value.mapv_inplace(|w| w + 0.2 * rng.normal());
            }
            f
        })
        .collect();
    let views = (0..2)
        .map(|_| Array2::from_shape_fn((n, 3), |_| rng.uniform_range(-1.0, 1.0)))
        .collect();
    let ds = MultiViewDataset::new(views, mask, None, vec!["a".into(), "b".into()]).unwrap();
    (aes, flows, ds)
}

/// Transfer and retention terms of the distribution-transfer loss.
fn dtl_parts(
    tape: &Tape,
    aes: &[&ViewAutoencoder],
    flows: &[&FlowNetwork],
    ae_vars: &[Vec<Var>],
    flow_vars: &[Vec<Var>],
    batch: &Batch,
) -> (Var, Var, Var) {
    let z = encode_batch(tape, aes, ae_vars, batch).unwrap();
    let fused = fuse_latents(tape, &z, &batch.mask).unwrap();
    let rec = per_instance_reconstruction(tape, aes, ae_vars, batch, &z, fused).unwrap();
    let mut hs = Vec::new();
    let mut lps = Vec::new();
    for v in 0..2 {
        let (h, ld) = flows[v].forward(tape, &flow_vars[v], z[v]).unwrap();
        lps.push(imvc::flow::log_likelihood_from(tape, h, ld, 4).unwrap());
        hs.push(h);
    }
    let transferred: Vec<Var> = (0..2)
        .map(|v| transfer_to_view(tape, flows[v], &flow_vars[v], &hs, &batch.mask, v).unwrap())
        .collect();
    let terms = dtl_loss(tape, batch, &z, &transferred, &rec, &lps).unwrap();
    (terms.total, terms.transfer, terms.retention)
}

#[test]
fn identity_flows_make_transfer_latent_matching() {
    let (aes, _, ds) = two_view_setup(array![[1, 1]], 1);
    let flows = [
        FlowNetwork::identity(&FlowSpec::new(4, 2), "a").unwrap(),
        FlowNetwork::identity(&FlowSpec::new(4, 2), "b").unwrap(),
    ];
    let batch = Batch::full(&ds);
    let tape = Tape::new();
    let ae_refs: Vec<&ViewAutoencoder> = aes.iter().collect();
    let flow_refs: Vec<&FlowNetwork> = flows.iter().collect();
    let ae_vars: Vec<Vec<Var>> = aes.iter().map(|a| a.bind(&tape)).collect();
    let flow_vars: Vec<Vec<Var>> = flows.iter().map(|f| f.bind(&tape)).collect();
    let (_, transfer, _) = dtl_parts(&tape, &ae_refs, &flow_refs, &ae_vars, &flow_vars, &batch);
    let z1 = aes[0].encode_values(&ds.view(0).clone()).unwrap();
    let z2 = aes[1].encode_values(&ds.view(1).clone()).unwrap();
    let expected = 2.0 * (&z2 - &z1).iter().map(|d| d * d).sum::<f64>();
    assert!((tape.item(transfer) - expected).abs() < 1e-12);
}

#[test]
fn incomplete_sample_only_moves_retention_term() {
    let mask = array![[1, 1], [1, 0], [1, 1]];
    let (aes, flows, ds) = two_view_setup(mask.clone(), 2);
    let eval = |ds: &MultiViewDataset| {
        let batch = Batch::full(ds);
        let tape = Tape::new();
        let ae_refs: Vec<&ViewAutoencoder> = aes.iter().collect();
        let flow_refs: Vec<&FlowNetwork> = flows.iter().collect();
        let ae_vars: Vec<Vec<Var>> = aes.iter().map(|a| a.bind(&tape)).collect();
        let flow_vars: Vec<Vec<Var>> = flows.iter().map(|f| f.bind(&tape)).collect();
        let (_, t, r) = dtl_parts(&tape, &ae_refs, &flow_refs, &ae_vars, &flow_vars, &batch);
        (tape.item(t), tape.item(r))
    };
    let (t0, r0) = eval(&ds);
    let mut views = ds.views().to_vec();
    views[0].row_mut(1).mapv_inplace(|x| x + 0.7);
    let moved = MultiViewDataset::new(views, mask, None, ds.names().to_vec()).unwrap();
    let (t1, r1) = eval(&moved);
    assert_eq!(t0, t1);
    assert_ne!(r0, r1);
}

#[test]
fn dtl_gradient_matches_finite_differences() {
    let mask = array![[1, 1], [1, 0], [0, 1], [1, 1], [1, 1], [1, 1], [0, 1], [1, 1]];
    let (aes, flows, ds) = two_view_setup(mask, 3);
    let batch = Batch::full(&ds);
    let mut point = Vec::new();
    let mut sizes = Vec::new();
    for v in 0..2 {
        sizes.push(aes[v].num_params());
        point.extend(aes[v].params().iter().map(|p| p.value.clone()));
    }
    for v in 0..2 {
        sizes.push(flows[v].num_params());
        point.extend(flows[v].params().iter().map(|p| p.value.clone()));
    }
    let err = grad_check(
        |tape, vs| {
            let mut chunks = Vec::new();
            let mut rest = vs;
            for &s in &sizes {
                let (head, tail) = rest.split_at(s);
                chunks.push(head.to_vec());
                rest = tail;
            }
            let ae_refs: Vec<&ViewAutoencoder> = aes.iter().collect();
            let flow_refs: Vec<&FlowNetwork> = flows.iter().collect();
            let (total, _, _) = dtl_parts(tape, &ae_refs, &flow_refs, &chunks[..2], &chunks[2..], &batch);
            Ok(total)
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn flow_likelihood_gradient_matches_finite_differences() {
    let flow = random_flow(4, 2, 9, 0.3);
    let mut rng = Rng::new(1);
    let z = Array2::from_shape_fn((8, 4), |_| rng.uniform_range(-1.0, 1.0));
    let point: Vec<Array2<f64>> = flow.params().iter().map(|p| p.value.clone()).chain([z]).collect();
    let n = flow.num_params();
    let err = grad_check(
        |tape, vs| {
            let lp = flow.log_likelihood(tape, &vs[..n], vs[n])?;
            Ok(tape.mean(lp))
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}
