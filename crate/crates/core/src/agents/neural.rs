use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::agents::{AgentConfig, EnsembleCritic, WeightFn};
use crate::error::{structural, Error, Result};
use crate::fmdp::{argmax, joint_argmax, ActionSpaceSpec, Decomposition, GlobalAction, Transition};
use crate::metrics::GreedyPolicy;
use crate::net::{checkpoint::NamedArray, clip_grad_norm, huber, NetConfig};
use crate::replay::{PrioritizedBuffer, SampledBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    /// One critic sampled per call, ε-greedy independently in each dimension.
    Train,
    /// Greedy on the across-critic mean utilities.
    Eval,
}

/// Summary of one gradient update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Total loss (TD + β · regulariser), averaged over critics.
    pub loss: f64,
    /// Post-clip gradient norm, averaged over critics.
    pub grad_norm: f64,
    /// Pre-clip gradient norm, averaged over critics.
    pub grad_norm_unclipped: f64,
    /// Per batch element, mean over critics of `|y - Q_k(s, a)|`.
    pub td_errors: Vec<f32>,
}

/// `max(ε_min, ε_0 · decay^t)`.
pub fn epsilon_at(config: &AgentConfig, updates: u64) -> f64 {
    let decayed = config.epsilon_start * config.epsilon_decay.powf(updates as f64);
    decayed.max(config.epsilon_min)
}

/// A neural value-decomposition agent.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    net: NetConfig,
    critic: EnsembleCritic,
    updates: u64,
}

impl Agent {
    pub fn new(config: AgentConfig, observation_dim: usize, spec: ActionSpaceSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = NetConfig::new(observation_dim, spec, seed).with_hidden(config.hidden);
        let critic = EnsembleCritic::new(&net, config.ensemble_size(), config.adam)?;
        Ok(Self { config, net, critic, updates: 0 })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn spec(&self) -> &ActionSpaceSpec {
        &self.net.spec
    }

    pub fn critic(&self) -> &EnsembleCritic {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut EnsembleCritic {
        &mut self.critic
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(&self.config, self.updates)
    }

    fn decomposition(&self) -> Decomposition {
        self.config.algorithm.decomposition()
    }

    /// Utilities of every critic for one observation.
    pub fn utilities(&self, observation: &[f32]) -> Result<Vec<Vec<Vec<f32>>>> {
        self.critic.online.iter().map(|p| p.forward(observation)).collect()
    }

    /// Across-critic mean utilities.
    pub fn mean_utilities(&self, observation: &[f32]) -> Result<Vec<Vec<f32>>> {
        let all = self.utilities(observation)?;
        Ok(mean_over_critics(&all))
    }

    pub fn select_action<R: Rng + ?Sized>(
        &self,
        observation: &[f32],
        epsilon: f64,
        mode: ActMode,
        rng: &mut R,
    ) -> Result<GlobalAction> {
        match mode {
            ActMode::Eval => joint_argmax(&self.mean_utilities(observation)?),
            ActMode::Train => {
                let k = rng.random_range(0..self.critic.len());
                let utilities = self.critic.online[k].forward(observation)?;
                Ok(epsilon_greedy(&utilities, epsilon, rng))
            }
        }
    }

    /// Bootstrap targets `y = r + γ^m · scale · Σ_i max_a Ū^i(s', a)`, with
    /// `Ū` the across-critic mean of the target networks and `y = r` on
    /// terminal transitions.
    pub fn compute_targets(&self, batch: &[Transition]) -> Result<Vec<f32>> {
        let next = stack(batch.iter().map(|t| t.next_state.as_slice()), self.net.input_dim)?;
        let k = self.critic.len() as f32;
        let mut mean_out: Option<Array2<f32>> = None;
        for target in &self.critic.target {
            let out = target.forward_batch(next.view())?.outputs;
            mean_out = Some(match mean_out {
                None => out,
                Some(acc) => acc + out,
            });
        }
        let mean_out = mean_out.expect("at least one critic") / k;
        let spec = &self.net.spec;
        let scale: f32 = self.decomposition().scale(spec.num_dims());
        let gamma = self.config.gamma as f32;
        Ok(batch
            .iter()
            .zip(mean_out.rows())
            .map(|(t, row)| {
                if t.done {
                    return t.reward;
                }
                let mut offset = 0;
                let mut total = 0.0f32;
                for &n in spec.sizes() {
                    let seg = row.slice(ndarray::s![offset..offset + n]);
                    total += seg.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                    offset += n;
                }
                t.reward + gamma.powi(t.n_used as i32) * scale * total
            })
            .collect())
    }

    /// Samples a prioritized batch, updates every critic, Polyak-averages
    /// the targets, refreshes the sampled priorities and advances ε.
    pub fn total_update<R: Rng + ?Sized>(&mut self, buffer: &mut PrioritizedBuffer, rng: &mut R) -> Result<UpdateReport> {
        let batch_size = self.config.replay.batch_size;
        if buffer.len() < batch_size {
            return Err(Error::State(format!(
                "replay holds {} transitions, need {batch_size} to update",
                buffer.len()
            )));
        }
        let batch = buffer.sample(batch_size, rng)?;
        let report = self.update_on_batch(&batch)?;
        buffer.update_priorities(&batch.indices, &report.td_errors)?;
        Ok(report)
    }

    /// The update itself, on a given batch. Priorities are left to the caller.
    pub fn update_on_batch(&mut self, batch: &SampledBatch) -> Result<UpdateReport> {
        let transitions = &batch.transitions;
        let rows = transitions.len();
        if rows == 0 || batch.weights.len() != rows {
            return Err(structural!("batch of {rows} transitions with {} weights", batch.weights.len()));
        }
        let spec = self.net.spec.clone();
        let dims = spec.num_dims();
        let offsets: Vec<usize> = (0..dims).map(|i| spec.offset(i)).collect();
        let columns: Vec<Vec<usize>> = transitions
            .iter()
            .map(|t| {
                spec.validate(&t.action)?;
                Ok(t.action.iter().zip(&offsets).map(|(&a, &o)| o + a).collect())
            })
            .collect::<Result<_>>()?;

        let y = self.compute_targets(transitions)?;
        let states = stack(transitions.iter().map(|t| t.state.as_slice()), self.net.input_dim)?;
        let scale: f32 = self.decomposition().scale(dims);
        let beta = self.config.beta() as f32;
        let kappa = self.config.huber_kappa as f32;
        let inv_rows = 1.0 / rows as f32;
        let weight_fn = self.config.weight_fn;
        let k_count = self.critic.len();

        let mut td_sum = vec![0.0f32; rows];
        let (mut loss_sum, mut norm_sum, mut raw_norm_sum) = (0.0f64, 0.0f64, 0.0f64);

        for k in 0..k_count {
            let online = &self.critic.online[k];
            let cache = online.forward_batch(states.view())?;
            // Lagged utilities at (s, a_i), needed only by the regulariser.
            let lagged = if beta > 0.0 {
                Some(self.critic.target[k].forward_batch(states.view())?.outputs)
            } else {
                None
            };

            let mut upstream = Array2::<f32>::zeros(cache.outputs.dim());
            let mut loss = 0.0f64;
            for (b, cols) in columns.iter().enumerate() {
                let out = cache.outputs.row(b);
                let q = scale * cols.iter().map(|&c| out[c]).sum::<f32>();
                let delta = y[b] - q;
                td_sum[b] += delta.abs();
                let is_w = batch.weights[b];
                let (l, dl) = huber(delta, kappa);
                loss += (is_w * l) as f64;
                // d/dU of L(y - scale · Σ U) is -scale · L'.
                let g_td = -is_w * dl * scale * inv_rows;
                for &c in cols {
                    upstream[[b, c]] += g_td;
                }
                if let Some(lagged) = &lagged {
                    for &c in cols {
                        let (lr, dlr) = regulariser(out[c], lagged[[b, c]], y[b], weight_fn, kappa);
                        loss += (beta * is_w * lr) as f64;
                        upstream[[b, c]] += beta * is_w * dlr * inv_rows;
                    }
                }
            }
            let loss = loss / rows as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss of critic {k}")));
            }
            let mut grads = online.backward(&cache, upstream.view())?;
            let raw_norm = clip_grad_norm(&mut grads, self.config.grad_clip as f32);
            let post_norm = raw_norm.min(self.config.grad_clip as f32);
            self.critic.adam[k].step(&mut self.critic.online[k], &grads)?;
            loss_sum += loss;
            norm_sum += post_norm as f64;
            raw_norm_sum += raw_norm as f64;
        }

        self.critic.polyak(self.config.target_update as f32)?;
        self.updates += 1;
        let kf = k_count as f64;
        Ok(UpdateReport {
            loss: loss_sum / kf,
            grad_norm: norm_sum / kf,
            grad_norm_unclipped: raw_norm_sum / kf,
            td_errors: td_sum.into_iter().map(|t| t / k_count as f32).collect(),
        })
    }

    /// Online and target parameters of every critic, as checkpoint arrays.
    pub fn to_checkpoint(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        for (k, (o, t)) in self.critic.online.iter().zip(&self.critic.target).enumerate() {
            out.extend(o.to_named(&format!("critic{k}.online")));
            out.extend(t.to_named(&format!("critic{k}.target")));
        }
        out
    }

    pub fn load_checkpoint(&mut self, arrays: &[NamedArray]) -> Result<()> {
        for k in 0..self.critic.len() {
            self.critic.online[k].load_named(&format!("critic{k}.online"), arrays)?;
            self.critic.target[k].load_named(&format!("critic{k}.target"), arrays)?;
        }
        Ok(())
    }
}

impl GreedyPolicy for Agent {
    fn greedy_action(&self, observation: &[f32]) -> Result<GlobalAction> {
        joint_argmax(&self.mean_utilities(observation)?)
    }
}

/// Regulariser term for one utility `u` and its lagged value, returning
/// the value and its derivative in `u`. The weight `w(y - u)` is treated as
/// a constant.
pub(crate) fn regulariser(u: f32, lagged: f32, y: f32, weight_fn: WeightFn, kappa: f32) -> (f32, f32) {
    let w = weight_fn.weight((y - u) as f64) as f32;
    if w == 0.0 {
        return (0.0, 0.0);
    }
    let (l, dl) = huber(lagged - u, kappa);
    (w * l, -w * dl)
}

/// Per-dimension ε-greedy. Both random draws are made in every dimension
/// whether or not they are used, so runs that differ only in their greedy
/// choices consume the generator identically.
pub(crate) fn epsilon_greedy<R, T, V>(utilities: &[V], epsilon: f64, rng: &mut R) -> GlobalAction
where
    R: Rng + ?Sized,
    T: PartialOrd + Copy,
    V: AsRef<[T]>,
{
    GlobalAction::new(
        utilities
            .iter()
            .map(|u| {
                let u = u.as_ref();
                let explore = rng.random::<f64>() < epsilon;
                let random = rng.random_range(0..u.len());
                if explore {
                    random
                } else {
                    argmax(u).expect("non-empty head")
                }
            })
            .collect(),
    )
}

fn mean_over_critics(all: &[Vec<Vec<f32>>]) -> Vec<Vec<f32>> {
    let k = all.len() as f32;
    let mut mean = all[0].clone();
    for critic in &all[1..] {
        for (m, u) in mean.iter_mut().zip(critic) {
            m.iter_mut().zip(u).for_each(|(a, b)| *a += b);
        }
    }
    mean.iter_mut().for_each(|m| m.iter_mut().for_each(|a| *a /= k));
    mean
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f32]>, width: usize) -> Result<Array2<f32>> {
    let mut data = Vec::new();
    let mut count = 0;
    for r in rows {
        if r.len() != width {
            return Err(structural!("state has {} features, expected {width}", r.len()));
        }
        data.extend_from_slice(r);
        count += 1;
    }
    Ok(ArrayView2::from_shape((count, width), &data).expect("row-major").to_owned())
}
