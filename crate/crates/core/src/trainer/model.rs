use ndarray::{concatenate, Array2, Axis};

use super::config::TrainConfig;
use crate::autoencoder::{encode_batch, fuse_latents, per_instance_reconstruction, ViewAutoencoder};
use crate::dataio::{Batch, MultiViewDataset};
use crate::error::{Error, Result};
use crate::evalmetrics::{kmeans, KMeansConfig};
use crate::flow::{dtl_loss, log_likelihood_from, transfer_to_view, DtlTerms, FlowNetwork, FlowSpec};
use crate::numerics::{Module, Param, Rng, Tape, Var};

/// One autoencoder and one flow per view.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewModel {
    pub autoencoders: Vec<ViewAutoencoder>,
    pub flows: Vec<FlowNetwork>,
    latent_dim: usize,
}

/// Tape handles for every parameter of a [`MultiViewModel`].
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub autoencoders: Vec<Vec<Var>>,
    pub flows: Vec<Vec<Var>>,
}

impl BoundModel {
    pub fn all(&self) -> Vec<Var> {
        self.autoencoders.iter().chain(&self.flows).flatten().copied().collect()
    }
}

/// Every intermediate of the joint forward pass on one batch.
#[derive(Clone, Debug)]
pub struct JointPass {
    pub latents: Vec<Var>,
    pub fused: Var,
    pub reconstruction: Vec<Var>,
    pub log_p: Vec<Var>,
    /// `(F^v)^{-1}` of the Gaussian fused from the other observed views; at
    /// missing slots this is the recovered latent.
    pub transferred: Vec<Var>,
    pub dtl: DtlTerms,
}

impl MultiViewModel {
    pub fn new(config: &TrainConfig, view_dims: &[usize], rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.latent_dim;
        let flow_spec = FlowSpec {
            hidden_dims: config.coupling_hidden.clone(),
            scale_clamp: config.scale_clamp,
            ..FlowSpec::new(d, config.flow_layers)
        };
        let mut autoencoders = Vec::with_capacity(view_dims.len());
        let mut flows = Vec::with_capacity(view_dims.len());
        for (v, &dim) in view_dims.iter().enumerate() {
            autoencoders.push(ViewAutoencoder::new(
                dim,
                d,
                &config.encoder_hidden,
                config.activation,
                &format!("view{v}.ae"),
                rng,
            )?);
            flows.push(FlowNetwork::new(&flow_spec, &format!("view{v}.flow"), rng)?);
        }
        Ok(Self {
            autoencoders,
            flows,
            latent_dim: d,
        })
    }

    pub fn from_parts(autoencoders: Vec<ViewAutoencoder>, flows: Vec<FlowNetwork>) -> Result<Self> {
        if autoencoders.len() != flows.len() || autoencoders.is_empty() {
            return Err(Error::Contract(format!(
                "{} autoencoders and {} flows",
                autoencoders.len(),
                flows.len()
            )));
        }
        let d = autoencoders[0].latent_dim();
        if autoencoders.iter().any(|a| a.latent_dim() != d) || flows.iter().any(|f| f.latent_dim() != d) {
            return Err(Error::Contract("views disagree on the latent dimension".into()));
        }
        Ok(Self {
            autoencoders,
            flows,
            latent_dim: d,
        })
    }

    pub fn n_views(&self) -> usize {
        self.autoencoders.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn ae_refs(&self) -> Vec<&ViewAutoencoder> {
        self.autoencoders.iter().collect()
    }

    pub fn flow_refs(&self) -> Vec<&FlowNetwork> {
        self.flows.iter().collect()
    }

    pub fn bind(&self, tape: &Tape) -> BoundModel {
        BoundModel {
            autoencoders: self.autoencoders.iter().map(|a| a.bind(tape)).collect(),
            flows: self.flows.iter().map(|f| f.bind(tape)).collect(),
        }
    }

    pub fn bind_frozen(&self, tape: &Tape) -> BoundModel {
        BoundModel {
            autoencoders: self.autoencoders.iter().map(|a| a.bind_frozen(tape)).collect(),
            flows: self.flows.iter().map(|f| f.bind_frozen(tape)).collect(),
        }
    }

    pub fn ae_params_mut(&mut self) -> Vec<&mut Param> {
        self.autoencoders.iter_mut().flat_map(|a| a.params_mut()).collect()
    }

    pub fn flow_params_mut(&mut self) -> Vec<&mut Param> {
        self.flows.iter_mut().flat_map(|f| f.params_mut()).collect()
    }

    /// Autoencoder parameters followed by flow parameters.
    pub fn all_params_mut(&mut self) -> Vec<&mut Param> {
        let Self {
            autoencoders, flows, ..
        } = self;
        autoencoders
            .iter_mut()
            .flat_map(|a| a.params_mut())
            .chain(flows.iter_mut().flat_map(|f| f.params_mut()))
            .collect()
    }

    pub fn check_views(&self, dataset: &MultiViewDataset) -> Result<()> {
        if dataset.n_views() != self.n_views() {
            return Err(Error::Contract(format!(
                "model has {} views, dataset has {}",
                self.n_views(),
                dataset.n_views()
            )));
        }
        for v in 0..self.n_views() {
            if dataset.view_dim(v) != self.autoencoders[v].view_dim() {
                return Err(Error::Contract(format!(
                    "view {v} has width {}, model expects {}",
                    dataset.view_dim(v),
                    self.autoencoders[v].view_dim()
                )));
            }
        }
        Ok(())
    }

    /// Encode, fuse, reconstruct, Gaussianize and transfer one batch.
    pub fn joint_pass(&self, tape: &Tape, bound: &BoundModel, batch: &Batch) -> Result<JointPass> {
        let aes = self.ae_refs();
        let latents = encode_batch(tape, &aes, &bound.autoencoders, batch)?;
        let fused = fuse_latents(tape, &latents, &batch.mask)?;
        let reconstruction = per_instance_reconstruction(tape, &aes, &bound.autoencoders, batch, &latents, fused)?;
        let mut gaussian = Vec::with_capacity(self.n_views());
        let mut log_p = Vec::with_capacity(self.n_views());
        for (v, flow) in self.flows.iter().enumerate() {
            let (h, logdet) = flow.forward(tape, &bound.flows[v], latents[v])?;
            log_p.push(log_likelihood_from(tape, h, logdet, self.latent_dim)?);
            gaussian.push(h);
        }
        let transferred = if self.n_views() > 1 {
            (0..self.n_views())
                .map(|v| transfer_to_view(tape, &self.flows[v], &bound.flows[v], &gaussian, &batch.mask, v))
                .collect::<Result<Vec<_>>>()?
        } else {
            latents.clone()
        };
        let dtl = dtl_loss(tape, batch, &latents, &transferred, &reconstruction, &log_p)?;
        Ok(JointPass {
            latents,
            fused,
            reconstruction,
            log_p,
            transferred,
            dtl,
        })
    }
}

/// Per-slot latents of the whole dataset under fixed parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    /// Encoder latents, zero rows at missing slots.
    pub observed: Vec<Array2<f64>>,
    /// Recovered latents, zero rows at observed slots.
    pub recovered: Vec<Array2<f64>>,
    /// Masked mean of the observed latents.
    pub fused: Array2<f64>,
    pub mask: Array2<u8>,
    /// Stage and epoch the snapshot was taken after.
    pub tag: String,
}

impl LatentState {
    /// The latent filling slot `(., v)`: observed where present, recovered
    /// otherwise.
    pub fn slot(&self, v: usize) -> Array2<f64> {
        &self.observed[v] + &self.recovered[v]
    }

    pub fn slots(&self) -> Vec<Array2<f64>> {
        (0..self.observed.len()).map(|v| self.slot(v)).collect()
    }

    pub fn recovered_count(&self) -> usize {
        self.mask.iter().filter(|&&w| w == 0).count()
    }

    /// `N x (V d)` matrix of all slots side by side.
    pub fn concatenated(&self) -> Array2<f64> {
        let slots = self.slots();
        let views: Vec<_> = slots.iter().map(|s| s.view()).collect();
        concatenate(Axis(1), &views).expect("slots share their row count")
    }
}

/// Recovers every missing slot from current parameters without building
/// gradients.
pub fn recover_missing(dataset: &MultiViewDataset, model: &MultiViewModel, tag: &str) -> Result<LatentState> {
    model.check_views(dataset)?;
    let tape = Tape::new();
    let bound = model.bind_frozen(&tape);
    let batch = Batch::full(dataset);
    let pass = model.joint_pass(&tape, &bound, &batch)?;
    let mut observed = Vec::with_capacity(model.n_views());
    let mut recovered = Vec::with_capacity(model.n_views());
    for v in 0..model.n_views() {
        let keep = batch.mask_col(v);
        let observed_v = &*tape.value(pass.latents[v]) * &keep;
        let recovered_v = &*tape.value(pass.transferred[v]) * &keep.mapv(|w| 1.0 - w);
        if recovered_v.iter().chain(observed_v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite latent for view {v} at {tag}")));
        }
        observed.push(observed_v);
        recovered.push(recovered_v);
    }
    let fused = tape.value(pass.fused).clone();
    Ok(LatentState {
        observed,
        recovered,
        fused,
        mask: dataset.mask().clone(),
        tag: tag.to_string(),
    })
}

/// k-means on the concatenated slot latents.
pub fn final_clustering(state: &LatentState, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let points = state.concatenated();
    Ok(kmeans(points.view(), k, KMeansConfig::PROTOTYPES, rng)?.labels)
}

/// Reference pipeline without learning: fill each missing view with its
/// observed column means, concatenate the raw views and run k-means.
pub fn mean_imputation_baseline(dataset: &MultiViewDataset, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let mut filled = Vec::with_capacity(dataset.n_views());
    for v in 0..dataset.n_views() {
        let x = dataset.view(v);
        let rows: Vec<usize> = (0..dataset.n_samples()).filter(|&i| dataset.observed(i, v)).collect();
        let mean = x
            .select(Axis(0), &rows)
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::Validation(format!("view {v} has no observed instance")))?;
        let mut xv = x.clone();
        for i in (0..dataset.n_samples()).filter(|&i| !dataset.observed(i, v)) {
            xv.row_mut(i).assign(&mean);
        }
        filled.push(xv);
    }
    let views: Vec<_> = filled.iter().map(|x| x.view()).collect();
    let points = concatenate(Axis(1), &views).expect("views share their row count");
    Ok(kmeans(points.view(), k, KMeansConfig::STANDARD, rng)?.labels)
}
