//! Hemisphere composition: additive, factorized and volatility variants.

use std::io::{Read, Write};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{HnnArchitecture, Variant};
use super::loss::{loss_mean_variance, loss_mean_variance_grad, loss_mse, loss_mse_grad};
use crate::data::{FeatureSet, Role};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet, Gradients, Mode, Tape};
use crate::seed;

/// Shape of a hemisphere as seen when the model was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemisphereLayout {
    pub name: String,
    pub role: Role,
    pub width: usize,
    pub has_trend: bool,
}

/// Where a network's input matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSource {
    Trend,
    Hemisphere { index: usize, drop_trend: bool },
    /// Column-wise concatenation of several hemispheres, trend removed.
    Concat(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComponentKind {
    /// Stand-alone net.
    Direct { net: usize, slot: usize },
    /// Own first layer followed by the shared tail.
    Shared { head: usize, slot: usize },
    /// |coefficient(t)| × state(𝓗).
    Factor { state: usize, coef: usize, slot: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySpec {
    pub net: usize,
    pub slot: usize,
}

/// Which objective drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Mse,
    /// Mean-variance loss with the volatility head.
    MeanVariance,
    /// Mean-variance loss with h ≡ 1; the volatility net is skipped.
    MeanVarianceUnit,
}

impl Objective {
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::Volatility => Objective::MeanVariance,
            _ => Objective::Mse,
        }
    }
}

/// Network inputs, one matrix per slot.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub slots: Vec<Array2<f64>>,
}

impl ModelInputs {
    pub fn rows(&self) -> usize {
        self.slots[0].nrows()
    }

    pub fn select(&self, rows: &[usize]) -> ModelInputs {
        ModelInputs {
            slots: self.slots.iter().map(|m| m.select(Axis(0), rows)).collect(),
        }
    }
}

/// One hemisphere's paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentValues {
    pub name: String,
    /// h_{t,j}.
    pub contribution: Vec<f64>,
    /// State path (factorized only).
    pub state: Option<Vec<f64>>,
    /// Non-negative coefficient path (factorized only).
    pub coefficient: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityValues {
    /// h_{t,v} = slow · fast.
    pub total: Vec<f64>,
    /// h_{v1}: mean of the mean-normalised coefficient paths.
    pub slow: Vec<f64>,
    /// exp(h_{v2}).
    pub fast: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentOutput {
    pub prediction: Vec<f64>,
    pub components: Vec<ComponentValues>,
    pub volatility: Option<VolatilityValues>,
}

impl ComponentOutput {
    pub fn component(&self, name: &str) -> Option<&ComponentValues> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Normalisation used for the slow volatility factor.
#[derive(Debug, Clone, Copy)]
pub enum VolNorm<'a> {
    /// Means over the rows being evaluated (gradient flows through them).
    Batch,
    /// Frozen means.
    Reference(&'a [f64]),
}

enum CompTape {
    Direct(Tape),
    Shared {
        head: Tape,
        mask: Option<Array2<f64>>,
        tail: Tape,
    },
    Factor {
        state: Tape,
        coef: Tape,
        state_out: Vec<f64>,
        coef_out: Vec<f64>,
    },
}

struct VolTape {
    tape: Tape,
    slow: Vec<f64>,
    fast: Vec<f64>,
    means: Vec<f64>,
    batch: bool,
}

struct Pass {
    output: ComponentOutput,
    comps: Vec<CompTape>,
    vol: Option<VolTape>,
}

/// A hemisphere neural network: sub-networks plus the wiring between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnnModel {
    pub arch: HnnArchitecture,
    pub layout: Vec<HemisphereLayout>,
    pub sources: Vec<InputSource>,
    pub components: Vec<Component>,
    /// Shared deep layers (additive with weight sharing).
    pub tail: Option<usize>,
    pub volatility: Option<VolatilitySpec>,
    pub nets: Vec<DenseNet>,
    /// Means of the coefficient paths over the training rows, used to
    /// normalise the slow volatility factor out of sample.
    pub vol_reference: Option<Vec<f64>>,
}

fn layout_of(features: &FeatureSet) -> Vec<HemisphereLayout> {
    features
        .hemispheres
        .iter()
        .map(|h| HemisphereLayout {
            name: h.name.clone(),
            role: h.role,
            width: h.width(),
            has_trend: h.has_trend,
        })
        .collect()
}

impl HnnModel {
    /// Build and randomly initialise a model for the hemispheres in
    /// `features`. Every network draws from its own seed stream, so adding the
    /// volatility net leaves the mean networks unchanged.
    pub fn new(arch: &HnnArchitecture, features: &FeatureSet, seed: u64) -> Result<Self> {
        Self::from_layout(arch, layout_of(features), seed)
    }

    pub fn from_layout(arch: &HnnArchitecture, layout: Vec<HemisphereLayout>, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut b = Builder {
            arch,
            seed,
            nets: Vec::new(),
            sources: vec![InputSource::Trend],
        };
        let mut components = Vec::new();
        let mut tail = None;
        let mut volatility = None;
        let mean_layout: Vec<(usize, &HemisphereLayout)> = layout
            .iter()
            .enumerate()
            .filter(|(_, h)| h.role != Role::Volatility)
            .collect();
        if mean_layout.is_empty() {
            return Err(Error::Config("model needs at least one mean hemisphere".into()));
        }
        match arch.variant {
            Variant::Additive => {
                let shared = arch.share_weights && arch.additive.layers > 1;
                for (i, h) in &mean_layout {
                    let slot = b.slot(InputSource::Hemisphere {
                        index: *i,
                        drop_trend: false,
                    });
                    let kind = if shared {
                        ComponentKind::Shared {
                            head: b.head(h.width)?,
                            slot,
                        }
                    } else {
                        let sizes = arch.additive.sizes(h.width);
                        ComponentKind::Direct {
                            net: b.net(&sizes, Activation::Linear)?,
                            slot,
                        }
                    };
                    components.push(Component {
                        name: h.name.clone(),
                        kind,
                    });
                }
                if shared {
                    let n = arch.additive.neurons;
                    let mut sizes = vec![n; arch.additive.layers];
                    sizes.push(1);
                    tail = Some(b.net(&sizes, Activation::Linear)?);
                }
            }
            Variant::Factorized | Variant::Volatility => {
                for (i, h) in &mean_layout {
                    let kind = if h.role == Role::Coefficient {
                        let slot = b.slot(InputSource::Hemisphere {
                            index: *i,
                            drop_trend: false,
                        });
                        let sizes = arch.coefficient.sizes(h.width);
                        ComponentKind::Direct {
                            net: b.net(&sizes, Activation::Linear)?,
                            slot,
                        }
                    } else {
                        let width = h.width - usize::from(h.has_trend);
                        if width == 0 {
                            return Err(Error::EmptyHemisphere(h.name.clone()));
                        }
                        let slot = b.slot(InputSource::Hemisphere {
                            index: *i,
                            drop_trend: h.has_trend,
                        });
                        let state = b.net(&arch.state.sizes(width), Activation::Linear)?;
                        let coef = b.net(&arch.coefficient.sizes(1), Activation::Abs)?;
                        ComponentKind::Factor { state, coef, slot }
                    };
                    components.push(Component {
                        name: h.name.clone(),
                        kind,
                    });
                }
                if arch.variant == Variant::Volatility {
                    if !components.iter().any(|c| matches!(c.kind, ComponentKind::Factor { .. })) {
                        return Err(Error::Config(
                            "volatility variant needs at least one state hemisphere".into(),
                        ));
                    }
                    let vol_h: Vec<usize> = layout
                        .iter()
                        .enumerate()
                        .filter(|(_, h)| h.role == Role::Volatility)
                        .map(|(i, _)| i)
                        .collect();
                    let inputs = if vol_h.is_empty() {
                        mean_layout
                            .iter()
                            .filter(|(_, h)| h.role == Role::State)
                            .map(|(i, _)| *i)
                            .collect()
                    } else {
                        vol_h
                    };
                    let width: usize = inputs
                        .iter()
                        .map(|&i| layout[i].width - usize::from(layout[i].has_trend))
                        .sum();
                    if width == 0 {
                        return Err(Error::Config("volatility net has no inputs".into()));
                    }
                    let slot = b.slot(InputSource::Concat(inputs));
                    let net = b.net(&arch.volatility.sizes(width), Activation::Linear)?;
                    volatility = Some(VolatilitySpec { net, slot });
                }
            }
        }
        Ok(HnnModel {
            arch: arch.clone(),
            layout,
            sources: b.sources,
            components,
            tail,
            volatility,
            nets: b.nets,
            vol_reference: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.arch.variant
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(|n| n.n_params()).sum()
    }

    /// Check `features` against the layout and gather per-slot inputs.
    pub fn inputs(&self, features: &FeatureSet) -> Result<ModelInputs> {
        if features.hemispheres.len() != self.layout.len() {
            return Err(Error::Dimension(format!(
                "model has {} hemispheres, features have {}",
                self.layout.len(),
                features.hemispheres.len()
            )));
        }
        for (l, h) in self.layout.iter().zip(&features.hemispheres) {
            if l.name != h.name || l.width != h.width() || l.has_trend != h.has_trend {
                return Err(Error::Dimension(format!(
                    "hemisphere `{}` ({} columns) does not match model hemisphere `{}` ({} columns)",
                    h.name,
                    h.width(),
                    l.name,
                    l.width
                )));
            }
        }
        let n = features.len();
        let strip = |i: usize| -> ArrayView2<f64> {
            let m = &features.hemispheres[i].matrix;
            if self.layout[i].has_trend {
                m.slice(s![.., ..m.ncols() - 1])
            } else {
                m.view()
            }
        };
        let slots = self
            .sources
            .iter()
            .map(|src| match src {
                InputSource::Trend => {
                    Array2::from_shape_vec((n, 1), features.trend.clone()).expect("trend length")
                }
                InputSource::Hemisphere { index, drop_trend } => {
                    if *drop_trend {
                        strip(*index).to_owned()
                    } else {
                        features.hemispheres[*index].matrix.clone()
                    }
                }
                InputSource::Concat(idx) => {
                    let views: Vec<_> = idx.iter().map(|&i| strip(i)).collect();
                    concatenate(Axis(1), &views).expect("row counts agree")
                }
            })
            .collect();
        Ok(ModelInputs { slots })
    }

    fn factor_count(&self) -> usize {
        self.components
            .iter()
            .filter(|c| matches!(c.kind, ComponentKind::Factor { .. }))
            .count()
    }

    fn run<R: Rng + ?Sized>(
        &self,
        inputs: &ModelInputs,
        mode: Mode,
        rng: &mut R,
        vol: Option<VolNorm<'_>>,
        tape: bool,
    ) -> Result<Pass> {
        let n = inputs.rows();
        let mut prediction = vec![0.0; n];
        let mut components = Vec::with_capacity(self.components.len());
        let mut comps = Vec::new();
        let mut coef_paths: Vec<Vec<f64>> = Vec::new();
        let eval = |net: usize, x: ArrayView2<f64>, rng: &mut R| -> Result<(Vec<f64>, Option<Tape>)> {
            if tape {
                let (y, t) = self.nets[net].forward_tape(x, mode, rng)?;
                Ok((y.into_raw_vec_and_offset().0, Some(t)))
            } else {
                let y = self.nets[net].forward(x, mode, rng)?;
                Ok((y.into_raw_vec_and_offset().0, None))
            }
        };
        for c in &self.components {
            let values = match &c.kind {
                ComponentKind::Direct { net, slot } => {
                    let (y, t) = eval(*net, inputs.slots[*slot].view(), rng)?;
                    if let Some(t) = t {
                        comps.push(CompTape::Direct(t));
                    }
                    ComponentValues {
                        name: c.name.clone(),
                        contribution: y,
                        state: None,
                        coefficient: None,
                    }
                }
                ComponentKind::Shared { head, slot } => {
                    let x = inputs.slots[*slot].view();
                    let tail = self.tail.expect("shared components need a tail");
                    let head_net = &self.nets[*head];
                    let (mut a, ht) = if tape {
                        let (a, t) = head_net.forward_tape(x, mode, rng)?;
                        (a, Some(t))
                    } else {
                        (head_net.forward(x, mode, rng)?, None)
                    };
                    let mask = head_net.dropout_mask(a.raw_dim(), mode, rng);
                    if let Some(m) = &mask {
                        a *= m;
                    }
                    let (y, tt) = eval(tail, a.view(), rng)?;
                    if let (Some(head), Some(tail)) = (ht, tt) {
                        comps.push(CompTape::Shared { head, mask, tail });
                    }
                    ComponentValues {
                        name: c.name.clone(),
                        contribution: y,
                        state: None,
                        coefficient: None,
                    }
                }
                ComponentKind::Factor { state, coef, slot } => {
                    let (sv, st) = eval(*state, inputs.slots[*slot].view(), rng)?;
                    let (cv, ct) = eval(*coef, inputs.slots[0].view(), rng)?;
                    let contribution: Vec<f64> = cv.iter().zip(&sv).map(|(a, b)| a * b).collect();
                    coef_paths.push(cv.clone());
                    if let (Some(state), Some(coef)) = (st, ct) {
                        comps.push(CompTape::Factor {
                            state,
                            coef,
                            state_out: sv.clone(),
                            coef_out: cv.clone(),
                        });
                    }
                    ComponentValues {
                        name: c.name.clone(),
                        contribution,
                        state: Some(sv),
                        coefficient: Some(cv),
                    }
                }
            };
            for (p, v) in prediction.iter_mut().zip(&values.contribution) {
                *p += v;
            }
            components.push(values);
        }

        let mut vol_tape = None;
        let mut volatility = None;
        if let (Some(spec), Some(norm)) = (&self.volatility, vol) {
            let k = coef_paths.len() as f64;
            let (means, batch) = match norm {
                VolNorm::Batch => (
                    coef_paths
                        .iter()
                        .map(|p| p.iter().sum::<f64>() / n as f64)
                        .collect::<Vec<_>>(),
                    true,
                ),
                VolNorm::Reference(r) => {
                    if r.len() != coef_paths.len() {
                        return Err(Error::Dimension("volatility reference length".into()));
                    }
                    (r.to_vec(), false)
                }
            };
            let slow: Vec<f64> = (0..n)
                .map(|t| coef_paths.iter().zip(&means).map(|(p, m)| p[t] / m).sum::<f64>() / k)
                .collect();
            let (z, zt) = eval(spec.net, inputs.slots[spec.slot].view(), rng)?;
            let fast: Vec<f64> = z.iter().map(|v| v.exp()).collect();
            let total = slow.iter().zip(&fast).map(|(a, b)| a * b).collect();
            if let Some(tape) = zt {
                vol_tape = Some(VolTape {
                    tape,
                    slow: slow.clone(),
                    fast: fast.clone(),
                    means,
                    batch,
                });
            }
            volatility = Some(VolatilityValues { total, slow, fast });
        }
        Ok(Pass {
            output: ComponentOutput {
                prediction,
                components,
                volatility,
            },
            comps,
            vol: vol_tape,
        })
    }

    /// Forward pass. Dropout is active in [`Mode::Train`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inputs: &ModelInputs,
        mode: Mode,
        rng: &mut R,
        vol: VolNorm<'_>,
    ) -> Result<ComponentOutput> {
        Ok(self.run(inputs, mode, rng, Some(vol), false)?.output)
    }

    /// Deterministic evaluation. The volatility head uses the stored
    /// reference means, or the batch means when none are stored.
    pub fn evaluate(&self, inputs: &ModelInputs) -> Result<ComponentOutput> {
        let mut rng = seed::rng_for(0, &[]);
        let norm = match &self.vol_reference {
            Some(r) => VolNorm::Reference(r),
            None => VolNorm::Batch,
        };
        self.forward(inputs, Mode::Eval, &mut rng, norm)
    }

    pub fn predict(&self, features: &FeatureSet) -> Result<ComponentOutput> {
        self.evaluate(&self.inputs(features)?)
    }

    /// Means of the coefficient paths on `inputs` in evaluation mode.
    pub fn coefficient_means(&self, inputs: &ModelInputs) -> Result<Vec<f64>> {
        let mut rng = seed::rng_for(0, &[]);
        let out = self.run(inputs, Mode::Eval, &mut rng, None, false)?.output;
        let n = inputs.rows() as f64;
        Ok(out
            .components
            .iter()
            .filter_map(|c| c.coefficient.as_ref())
            .map(|p| p.iter().sum::<f64>() / n)
            .collect())
    }

    /// Freeze the slow-volatility normalisation at the means over `inputs`.
    pub fn set_vol_reference(&mut self, inputs: &ModelInputs) -> Result<()> {
        if self.volatility.is_some() {
            self.vol_reference = Some(self.coefficient_means(inputs)?);
        }
        Ok(())
    }

    /// Objective value on `inputs` (no gradients).
    pub fn loss<R: Rng + ?Sized>(
        &self,
        inputs: &ModelInputs,
        target: &[f64],
        objective: Objective,
        mode: Mode,
        rng: &mut R,
        vol: VolNorm<'_>,
    ) -> Result<f64> {
        let norm = (objective == Objective::MeanVariance).then_some(vol);
        let out = self.run(inputs, mode, rng, norm, false)?.output;
        objective_value(&out, target, objective)
    }

    /// Objective value and gradients for every network. The volatility
    /// normalisation uses batch means so the gradient is exact.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        inputs: &ModelInputs,
        target: &[f64],
        objective: Objective,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Vec<Gradients>)> {
        if objective == Objective::MeanVariance && self.volatility.is_none() {
            return Err(Error::Config("mean-variance objective needs a volatility head".into()));
        }
        let norm = (objective == Objective::MeanVariance).then_some(VolNorm::Batch);
        let pass = self.run(inputs, mode, rng, norm, true)?;
        let value = objective_value(&pass.output, target, objective)?;
        let pred = &pass.output.prediction;
        let (gp, gv) = match objective {
            Objective::Mse => (loss_mse_grad(target, pred), None),
            Objective::MeanVarianceUnit => {
                let ones = vec![1.0; target.len()];
                (loss_mean_variance_grad(target, pred, &ones).0, None)
            }
            Objective::MeanVariance => {
                let h = &pass.output.volatility.as_ref().expect("volatility computed").total;
                let (gp, gh) = loss_mean_variance_grad(target, pred, h);
                (gp, Some(gh))
            }
        };
        Ok((value, self.backward(&pass, &gp, gv.as_deref())))
    }

    fn backward(&self, pass: &Pass, gp: &[f64], gv: Option<&[f64]>) -> Vec<Gradients> {
        let n = gp.len();
        let col = |v: Vec<f64>| Array2::from_shape_vec((n, 1), v).expect("column");
        let mut grads: Vec<Gradients> = self.nets.iter().map(Gradients::zeros_like).collect();

        // Extra gradient reaching each coefficient output through the slow factor.
        let mut coef_extra: Vec<Vec<f64>> = Vec::new();
        if let (Some(spec), Some(gv), Some(vt)) = (&self.volatility, gv, &pass.vol) {
            let k = vt.means.len() as f64;
            let dz: Vec<f64> = (0..n).map(|t| gv[t] * vt.slow[t] * vt.fast[t]).collect();
            let gslow: Vec<f64> = (0..n).map(|t| gv[t] * vt.fast[t]).collect();
            let (g, _) = self.nets[spec.net].backward(&vt.tape, col(dz).view(), false);
            grads[spec.net].add_assign(&g);
            for (tape, m) in pass
                .comps
                .iter()
                .filter_map(|c| match c {
                    CompTape::Factor { coef_out, .. } => Some(coef_out),
                    _ => None,
                })
                .zip(&vt.means)
            {
                let shift = if vt.batch {
                    (0..n).map(|t| gslow[t] * tape[t]).sum::<f64>() / (k * m * m * n as f64)
                } else {
                    0.0
                };
                coef_extra.push((0..n).map(|t| gslow[t] / (k * m) - shift).collect());
            }
        }

        let mut factor_idx = 0;
        let mut tail_grads: Option<Gradients> = None;
        for (c, tape) in self.components.iter().zip(&pass.comps) {
            match (&c.kind, tape) {
                (ComponentKind::Direct { net, .. }, CompTape::Direct(t)) => {
                    let (g, _) = self.nets[*net].backward(t, col(gp.to_vec()).view(), false);
                    grads[*net].add_assign(&g);
                }
                (ComponentKind::Shared { head, .. }, CompTape::Shared { head: ht, mask, tail }) => {
                    let tail_idx = self.tail.expect("tail");
                    let (g, dx) = self.nets[tail_idx].backward(tail, col(gp.to_vec()).view(), true);
                    match &mut tail_grads {
                        Some(acc) => acc.add_assign(&g),
                        None => tail_grads = Some(g),
                    }
                    let mut da = dx.expect("input gradient");
                    if let Some(m) = mask {
                        da *= m;
                    }
                    let (g, _) = self.nets[*head].backward(ht, da.view(), false);
                    grads[*head].add_assign(&g);
                }
                (
                    ComponentKind::Factor { state, coef, .. },
                    CompTape::Factor {
                        state: st,
                        coef: ct,
                        state_out,
                        coef_out,
                    },
                ) => {
                    let ds: Vec<f64> = (0..n).map(|t| gp[t] * coef_out[t]).collect();
                    let mut dc: Vec<f64> = (0..n).map(|t| gp[t] * state_out[t]).collect();
                    if let Some(extra) = coef_extra.get(factor_idx) {
                        for (d, e) in dc.iter_mut().zip(extra) {
                            *d += e;
                        }
                    }
                    factor_idx += 1;
                    let (g, _) = self.nets[*state].backward(st, col(ds).view(), false);
                    grads[*state].add_assign(&g);
                    let (g, _) = self.nets[*coef].backward(ct, col(dc).view(), false);
                    grads[*coef].add_assign(&g);
                }
                _ => unreachable!("tape does not match component"),
            }
        }
        if let (Some(t), Some(g)) = (self.tail, tail_grads) {
            grads[t] = g;
        }
        grads
    }

    /// All parameters in net order.
    pub fn flatten(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.flatten()).collect()
    }

    /// Mutable access to the k-th parameter of [`HnnModel::flatten`].
    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for net in &mut self.nets {
            let p = net.n_params();
            if k < p {
                return net.param_mut(k);
            }
            k -= p;
        }
        panic!("parameter index out of range");
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Binary layout: magic `HNNM`, `u32` version, `u64` length of a JSON
    /// header (the model without weights), the header, `u32` net count, then
    /// each net in the `HNNW` format.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = HnnModel {
            nets: Vec::new(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(b"HNNM")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&(self.nets.len() as u32).to_le_bytes())?;
        for net in &self.nets {
            net.write_binary(w)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"HNNM" {
            return Err(Error::Data("not an HNNM model file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(Error::Data("unsupported model format version".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let mut json = vec![0u8; u64::from_le_bytes(b8) as usize];
        r.read_exact(&mut json)?;
        let mut model: HnnModel = serde_json::from_slice(&json)?;
        r.read_exact(&mut b4)?;
        let count = u32::from_le_bytes(b4) as usize;
        model.nets = (0..count).map(|_| DenseNet::read_binary(r)).collect::<Result<_>>()?;
        Ok(model)
    }
}

fn objective_value(out: &ComponentOutput, target: &[f64], objective: Objective) -> Result<f64> {
    match objective {
        Objective::Mse => loss_mse(target, &out.prediction),
        Objective::MeanVarianceUnit => {
            loss_mean_variance(target, &out.prediction, &vec![1.0; target.len()])
        }
        Objective::MeanVariance => {
            let h = &out
                .volatility
                .as_ref()
                .ok_or_else(|| Error::Config("model has no volatility head".into()))?
                .total;
            loss_mean_variance(target, &out.prediction, h)
        }
    }
}

struct Builder<'a> {
    arch: &'a HnnArchitecture,
    seed: u64,
    nets: Vec<DenseNet>,
    sources: Vec<InputSource>,
}

impl Builder<'_> {
    fn slot(&mut self, src: InputSource) -> usize {
        self.sources.push(src);
        self.sources.len() - 1
    }

    fn net(&mut self, sizes: &[usize], output: Activation) -> Result<usize> {
        let mut rng = seed::rng_for(self.seed, &[self.nets.len() as u64]);
        let net = DenseNet::new(sizes, Activation::Relu, output, self.arch.dropout, &mut rng)?;
        self.nets.push(net);
        Ok(self.nets.len() - 1)
    }

    /// Single ReLU layer initialised as a hidden layer.
    fn head(&mut self, width: usize) -> Result<usize> {
        let mut rng = seed::rng_for(self.seed, &[self.nets.len() as u64]);
        let n = self.arch.additive.neurons;
        let full = DenseNet::new(&[width, n, 1], Activation::Relu, Activation::Linear, self.arch.dropout, &mut rng)?;
        let first = full.layers()[0].clone();
        self.nets.push(DenseNet::from_layers(vec![first], self.arch.dropout)?);
        Ok(self.nets.len() - 1)
    }
}

/// Additive-variant prediction and components.
pub fn predict_additive(model: &HnnModel, features: &FeatureSet) -> Result<ComponentOutput> {
    if model.variant() != Variant::Additive {
        return Err(Error::Config(format!("expected an additive model, got {}", model.variant())));
    }
    model.predict(features)
}

/// Factorized-variant prediction with state and coefficient paths.
pub fn predict_factorized(model: &HnnModel, features: &FeatureSet) -> Result<ComponentOutput> {
    if !model.variant().is_factorized() {
        return Err(Error::Config(format!("expected a factorized model, got {}", model.variant())));
    }
    model.predict(features)
}

/// h_{t,v} path of a volatility model.
pub fn volatility_head(model: &HnnModel, features: &FeatureSet) -> Result<VolatilityValues> {
    model
        .predict(features)?
        .volatility
        .ok_or_else(|| Error::Config("model has no volatility head".into()))
}

impl HnnModel {
    /// Number of coefficient paths feeding the slow volatility factor.
    pub fn n_coefficients(&self) -> usize {
        self.factor_count()
    }
}
