use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{final_clustering, recover_missing, MultiViewModel, LatentState};
use crate::autoencoder::{encode_batch, fuse_latents, reconstruction_loss};
use crate::consistency::{
    compute_prototypes, consensus_labels, merge_slots, nac_loss, pc_loss, resolve_neighbors, soft_assign,
    soft_assign_values, NeighborIndex, NeighborTargets, PrototypeSet,
};
use crate::dataio::{Batch, MultiViewDataset};
use crate::error::{Error, Result};
use crate::flow::flow_nll;
use crate::numerics::{AdamState, Module, Rng, Tape};

/// One row of `curves.csv`: epoch means of the per-batch losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub stage: u8,
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_flow_nll: f64,
    pub loss_dtl: f64,
    pub loss_nac: f64,
    pub loss_pc: f64,
}

/// What a stage actually ran with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stage: u8,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub steps: usize,
}

/// Per-epoch structures the guided stage aligns against.
#[derive(Clone, Debug, Default)]
struct Guidance {
    neighbors: Option<NeighborTargets>,
    prototypes: Option<(PrototypeSet, Vec<usize>)>,
}

#[derive(Clone, Copy, Default)]
struct BatchLosses {
    total: f64,
    rec: f64,
    flow_nll: f64,
    dtl: f64,
    nac: f64,
    pc: f64,
}

impl BatchLosses {
    fn is_finite(&self) -> bool {
        [self.total, self.rec, self.flow_nll, self.dtl, self.nac, self.pc]
            .iter()
            .all(|x| x.is_finite())
    }

    fn describe(&self) -> String {
        format!(
            "total={} rec={} flow_nll={} dtl={} nac={} pc={}",
            self.total, self.rec, self.flow_nll, self.dtl, self.nac, self.pc
        )
    }
}

fn epoch_row(stage: u8, epoch: usize, batches: &[BatchLosses]) -> CurveRow {
    let n = batches.len().max(1) as f64;
    let mean = |f: fn(&BatchLosses) -> f64| batches.iter().map(f).sum::<f64>() / n;
    CurveRow {
        stage,
        epoch,
        loss_total: mean(|b| b.total),
        loss_rec: mean(|b| b.rec),
        loss_flow_nll: mean(|b| b.flow_nll),
        loss_dtl: mean(|b| b.dtl),
        loss_nac: mean(|b| b.nac),
        loss_pc: mean(|b| b.pc),
    }
}

fn with_context(stage: u8, epoch: usize, batch: usize, err: Error) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("stage {stage}, epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// Three-stage optimizer state for one dataset.
///
/// Stage 1 alternates an autoencoder step on the reconstruction loss and a
/// flow step on the flow negative log-likelihood with detached latents, each
/// with its own Adam state. Stages 2 and 3 share one joint Adam state and one
/// shuffling stream, so stage 3 without guidance is exactly more stage 2.
#[derive(Clone, Debug)]
pub struct Trainer<'a> {
    pub(crate) dataset: &'a MultiViewDataset,
    pub(crate) config: TrainConfig,
    pub(crate) model: MultiViewModel,
    pub(crate) n_clusters: usize,
    pub(crate) ae_opt: AdamState,
    pub(crate) flow_opt: AdamState,
    pub(crate) joint_opt: AdamState,
    pub(crate) shuffle_rng: Rng,
    pub(crate) cluster_rng: Rng,
    pub(crate) stages_completed: u8,
    pub(crate) curves: Vec<CurveRow>,
    pub(crate) schedule: Vec<StageSchedule>,
    pub(crate) stage_seconds: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a MultiViewDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n_clusters = config.resolve_clusters(dataset.n_classes())?;
        let dims: Vec<usize> = (0..dataset.n_views()).map(|v| dataset.view_dim(v)).collect();
        let model = MultiViewModel::new(&config, &dims, &mut Rng::derived(config.seed, "init"))?;
        Ok(Self {
            dataset,
            n_clusters,
            model,
            ae_opt: AdamState::new(config.learning_rate),
            flow_opt: AdamState::new(config.learning_rate),
            joint_opt: AdamState::new(config.learning_rate),
            shuffle_rng: Rng::derived(config.seed, "shuffle"),
            cluster_rng: Rng::derived(config.seed, "prototypes"),
            stages_completed: 0,
            curves: Vec::new(),
            schedule: Vec::new(),
            stage_seconds: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &MultiViewModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut MultiViewModel {
        &mut self.model
    }

    pub fn dataset(&self) -> &MultiViewDataset {
        self.dataset
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn stages_completed(&self) -> u8 {
        self.stages_completed
    }

    pub fn curves(&self) -> &[CurveRow] {
        &self.curves
    }

    pub fn schedule(&self) -> &[StageSchedule] {
        &self.schedule
    }

    pub fn stage_seconds(&self) -> &[f64] {
        &self.stage_seconds
    }

    /// Copy of this trainer with different guidance weights, for branching
    /// ablations off shared earlier stages.
    pub fn with_guidance(&self, alpha: f64, beta: f64) -> Result<Self> {
        let mut next = self.clone();
        next.config.alpha = alpha;
        next.config.beta = beta;
        next.config.validate()?;
        Ok(next)
    }

    fn expect_stage(&self, stage: u8) -> Result<()> {
        if self.stages_completed + 1 != stage {
            return Err(Error::Contract(format!(
                "stage {stage} requested after {} completed stage(s)",
                self.stages_completed
            )));
        }
        Ok(())
    }

    fn epoch_batches(&mut self, batch_size: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.dataset.n_samples()).collect();
        self.shuffle_rng.shuffle(&mut order);
        order.chunks(batch_size).map(|c| c.to_vec()).collect()
    }

    fn log_schedule(&mut self, stage: u8, epochs: usize, batch_size: usize) {
        let batches_per_epoch = self.dataset.n_samples().div_ceil(batch_size);
        self.schedule.push(StageSchedule {
            stage,
            learning_rate: self.config.learning_rate,
            epochs,
            batch_size,
            batches_per_epoch,
            steps: epochs * batches_per_epoch,
        });
    }

    pub fn run_stage1(&mut self) -> Result<()> {
        self.expect_stage(1)?;
        let start = Instant::now();
        let (epochs, batch_size) = (self.config.epochs_stage1, self.config.batch_stage12);
        for epoch in 1..=epochs {
            let mut losses = Vec::new();
            for (b, indices) in self.epoch_batches(batch_size).into_iter().enumerate() {
                let batch = Batch::gather(self.dataset, &indices);
                let l = self.stage1_step(&batch).map_err(|e| with_context(1, epoch, b, e))?;
                losses.push(l);
            }
            self.curves.push(epoch_row(1, epoch, &losses));
        }
        self.log_schedule(1, epochs, batch_size);
        self.stage_seconds.push(start.elapsed().as_secs_f64());
        self.stages_completed = 1;
        Ok(())
    }

    fn stage1_step(&mut self, batch: &Batch) -> Result<BatchLosses> {
        let tape = Tape::new();
        let ae_vars: Vec<_> = self.model.autoencoders.iter().map(|a| a.bind(&tape)).collect();
        let aes = self.model.ae_refs();
        let latents = encode_batch(&tape, &aes, &ae_vars, batch)?;
        let fused = fuse_latents(&tape, &latents, &batch.mask)?;
        let rec = reconstruction_loss(&tape, &aes, &ae_vars, batch, &latents, fused)?;
        let rec_value = tape.item(rec);
        if !rec_value.is_finite() {
            return Err(Error::Numeric(format!("non-finite reconstruction loss {rec_value}")));
        }
        let detached: Vec<_> = latents.iter().map(|&z| tape.value(z).clone()).collect();
        let grads = tape.backward(rec)?;
        for (ae, vars) in self.model.autoencoders.iter_mut().zip(&ae_vars) {
            ae.zero_grad();
            ae.accumulate(vars, &grads);
        }
        self.ae_opt.step(&mut self.model.ae_params_mut())?;

        let tape = Tape::new();
        let mut log_p = Vec::with_capacity(detached.len());
        let mut flow_vars = Vec::with_capacity(detached.len());
        for (flow, z) in self.model.flows.iter().zip(detached) {
            let vars = flow.bind(&tape);
            log_p.push(flow.log_likelihood(&tape, &vars, tape.constant(z))?);
            flow_vars.push(vars);
        }
        let nll = flow_nll(&tape, batch, &log_p)?;
        let nll_value = tape.item(nll);
        if !nll_value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite flow negative log-likelihood {nll_value} (reconstruction {rec_value})"
            )));
        }
        let grads = tape.backward(nll)?;
        for (flow, vars) in self.model.flows.iter_mut().zip(&flow_vars) {
            flow.zero_grad();
            flow.accumulate(vars, &grads);
        }
        self.flow_opt.step(&mut self.model.flow_params_mut())?;
        Ok(BatchLosses {
            total: rec_value + nll_value,
            rec: rec_value,
            flow_nll: nll_value,
            ..Default::default()
        })
    }

    pub fn run_stage2(&mut self) -> Result<()> {
        self.expect_stage(2)?;
        let start = Instant::now();
        let (epochs, batch_size) = (self.config.epochs_stage2, self.config.batch_stage12);
        for epoch in 1..=epochs {
            let losses = self.joint_epoch(2, epoch, batch_size, &Guidance::default())?;
            self.curves.push(epoch_row(2, epoch, &losses));
        }
        self.log_schedule(2, epochs, batch_size);
        self.stage_seconds.push(start.elapsed().as_secs_f64());
        self.stages_completed = 2;
        Ok(())
    }

    pub fn run_stage3(&mut self) -> Result<()> {
        self.expect_stage(3)?;
        let start = Instant::now();
        let (epochs, batch_size) = (self.config.epochs_stage3, self.config.batch_stage3);
        for epoch in 1..=epochs {
            let guidance = self.refresh_guidance(epoch)?;
            let losses = self.joint_epoch(3, epoch, batch_size, &guidance)?;
            self.curves.push(epoch_row(3, epoch, &losses));
        }
        self.log_schedule(3, epochs, batch_size);
        self.stage_seconds.push(start.elapsed().as_secs_f64());
        self.stages_completed = 3;
        Ok(())
    }

    /// Runs whichever stages have not run yet.
    pub fn run_remaining(&mut self) -> Result<()> {
        if self.stages_completed < 1 {
            self.run_stage1()?;
        }
        if self.stages_completed < 2 {
            self.run_stage2()?;
        }
        if self.stages_completed < 3 {
            self.run_stage3()?;
        }
        Ok(())
    }

    fn refresh_guidance(&mut self, epoch: usize) -> Result<Guidance> {
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        if alpha == 0.0 && beta == 0.0 {
            return Ok(Guidance::default());
        }
        let state = recover_missing(self.dataset, &self.model, &format!("stage 3 epoch {epoch}"))?;
        let neighbors = if alpha > 0.0 {
            let index = NeighborIndex::new(state.observed.clone(), &state.mask)?;
            Some(resolve_neighbors(&index, &state.recovered)?)
        } else {
            None
        };
        let prototypes = if beta > 0.0 {
            let protos = compute_prototypes(
                state.fused.view(),
                self.n_clusters,
                self.config.tau,
                self.config.gamma,
                &mut self.cluster_rng,
            )?;
            let assignments = state
                .slots()
                .iter()
                .map(|z| soft_assign_values(z.view(), &protos))
                .collect::<Result<Vec<_>>>()?;
            let labels = consensus_labels(&assignments, &state.mask)?;
            Some((protos, labels))
        } else {
            None
        };
        Ok(Guidance { neighbors, prototypes })
    }

    fn joint_epoch(&mut self, stage: u8, epoch: usize, batch_size: usize, guidance: &Guidance) -> Result<Vec<BatchLosses>> {
        let mut losses = Vec::new();
        for (b, indices) in self.epoch_batches(batch_size).into_iter().enumerate() {
            let batch = Batch::gather(self.dataset, &indices);
            let l = self
                .joint_step(&batch, guidance)
                .map_err(|e| with_context(stage, epoch, b, e))?;
            losses.push(l);
        }
        Ok(losses)
    }

    fn joint_step(&mut self, batch: &Batch, guidance: &Guidance) -> Result<BatchLosses> {
        let tape = Tape::new();
        let bound = self.model.bind(&tape);
        let pass = self.model.joint_pass(&tape, &bound, batch)?;
        let mut loss = pass.dtl.total;
        let mut out = BatchLosses {
            dtl: tape.item(pass.dtl.total),
            ..Default::default()
        };
        let observed = batch.observed_count().max(1) as f64;
        let rec_sum: f64 = pass.reconstruction.iter().map(|&r| tape.value(r).sum()).sum();
        out.rec = rec_sum / observed;
        let lp_sum: f64 = pass
            .log_p
            .iter()
            .enumerate()
            .map(|(v, &lp)| (&*tape.value(lp) * &batch.mask_col(v)).sum())
            .sum();
        out.flow_nll = -lp_sum / observed;

        if let Some(targets) = &guidance.neighbors {
            let nac = nac_loss(&tape, batch, &pass.transferred, targets)?;
            out.nac = tape.item(nac);
            loss = tape.add(loss, tape.scale(nac, self.config.alpha))?;
        }
        if let Some((protos, labels)) = &guidance.prototypes {
            let slots = merge_slots(&tape, batch, &pass.latents, &pass.transferred)?;
            let assignments = slots
                .iter()
                .map(|&z| soft_assign(&tape, z, protos))
                .collect::<Result<Vec<_>>>()?;
            let batch_labels: Vec<usize> = batch.indices.iter().map(|&i| labels[i]).collect();
            let pc = pc_loss(&tape, &assignments, &batch_labels, protos.gamma, self.config.entropy_mode)?;
            out.pc = tape.item(pc);
            loss = tape.add(loss, tape.scale(pc, self.config.beta))?;
        }
        out.total = tape.item(loss);
        if !out.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss: {}", out.describe())));
        }
        let grads = tape.backward(loss)?;
        for (ae, vars) in self.model.autoencoders.iter_mut().zip(&bound.autoencoders) {
            ae.zero_grad();
            ae.accumulate(vars, &grads);
        }
        for (flow, vars) in self.model.flows.iter_mut().zip(&bound.flows) {
            flow.zero_grad();
            flow.accumulate(vars, &grads);
        }
        self.joint_opt.step(&mut self.model.all_params_mut())?;
        Ok(out)
    }

    /// Current per-slot latents with every missing slot recovered.
    pub fn latent_state(&self) -> Result<LatentState> {
        recover_missing(
            self.dataset,
            &self.model,
            &format!("after stage {}", self.stages_completed),
        )
    }

    /// Final k-means labels on the concatenated slot latents.
    pub fn predict(&self) -> Result<(LatentState, Vec<usize>)> {
        let state = self.latent_state()?;
        let labels = final_clustering(&state, self.n_clusters, &mut Rng::derived(self.config.seed, "final"))?;
        Ok((state, labels))
    }
}
