//! Core types for factorisable MDPs.
//!
//! A factorisable action space is `A = A_1 × … × A_N`; a global action picks
//! one sub-action per dimension. Utilities are stored per dimension and the
//! global Q-value is recovered by [`global_q`].

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{structural, Result};

/// Sizes `[n_1, …, n_N]` of the sub-action sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ActionSpaceSpec {
    sizes: Vec<usize>,
}

impl ActionSpaceSpec {
    /// Every dimension needs at least two sub-actions.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(structural!("action space needs at least one dimension"));
        }
        if let Some((i, &n)) = sizes.iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(structural!(
                "dimension {i} has {n} sub-actions; at least 2 are required"
            ));
        }
        Ok(Self { sizes })
    }

    /// `n` sub-actions in each of `dims` dimensions.
    pub fn uniform(dims: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; dims])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_dims(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of utility outputs, `Σ n_i`.
    pub fn total_sub_actions(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Number of atomic actions, `∏ n_i`, as a float since it overflows fast.
    pub fn num_atomic_actions(&self) -> f64 {
        self.sizes.iter().map(|&n| n as f64).product()
    }

    /// Offset of dimension `dim` in a flat `Σ n_i` utility layout.
    pub fn offset(&self, dim: usize) -> usize {
        self.sizes[..dim].iter().sum()
    }

    pub fn validate(&self, action: &GlobalAction) -> Result<()> {
        if action.len() != self.num_dims() {
            return Err(structural!(
                "action has {} sub-actions but the space has {} dimensions",
                action.len(),
                self.num_dims()
            ));
        }
        for (i, (&a, &n)) in action.iter().zip(&self.sizes).enumerate() {
            if a >= n {
                return Err(structural!("sub-action {a} out of range 0..{n} in dimension {i}"));
            }
        }
        Ok(())
    }

    /// All global actions in lexicographic order. Only sensible for tiny spaces.
    pub fn enumerate(&self) -> Vec<GlobalAction> {
        let mut out = vec![GlobalAction::new(Vec::new())];
        for &n in &self.sizes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..n).map(move |a| {
                        let mut v = prefix.0.clone();
                        v.push(a);
                        GlobalAction(v)
                    })
                })
                .collect();
        }
        out
    }
}

impl TryFrom<Vec<usize>> for ActionSpaceSpec {
    type Error = crate::Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<ActionSpaceSpec> for Vec<usize> {
    fn from(spec: ActionSpaceSpec) -> Self {
        spec.sizes
    }
}

/// One sub-action index per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalAction(pub Vec<usize>);

impl GlobalAction {
    pub fn new(sub_actions: Vec<usize>) -> Self {
        Self(sub_actions)
    }

    pub fn sub_actions(&self) -> &[usize] {
        &self.0
    }
}

impl std::ops::Deref for GlobalAction {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// A (possibly n-step aggregated) transition as stored in replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: GlobalAction,
    /// Discounted sum of the `n_used` raw rewards.
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub done: bool,
    /// Raw steps aggregated into `reward`; the bootstrap discount is `γ^n_used`.
    pub n_used: usize,
}

/// How per-dimension utilities combine into a global Q-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decomposition {
    Mean,
    Sum,
}

impl Decomposition {
    /// Factor applied to a sum of utilities: `1/N` for the mean, `1` for the sum.
    pub fn scale<T: Float>(self, num_dims: usize) -> T {
        match self {
            Decomposition::Mean => T::one() / T::from(num_dims).unwrap(),
            Decomposition::Sum => T::one(),
        }
    }
}

/// Index of the largest element, lowest index on ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best = 0;
    let first = *values.first()?;
    let mut best_val = first;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    Some(best)
}

/// Greedy global action: one independent argmax per dimension.
pub fn joint_argmax<T, V>(utilities: &[V]) -> Result<GlobalAction>
where
    T: PartialOrd + Copy,
    V: AsRef<[T]>,
{
    if utilities.is_empty() {
        return Err(structural!("no utility vectors given"));
    }
    utilities
        .iter()
        .enumerate()
        .map(|(i, u)| argmax(u.as_ref()).ok_or_else(|| structural!("empty utility vector for dimension {i}")))
        .collect::<Result<Vec<_>>>()
        .map(GlobalAction)
}

/// Global Q-value of `action` under the given decomposition.
pub fn global_q<T, V>(utilities: &[V], action: &GlobalAction, mode: Decomposition) -> Result<T>
where
    T: Float,
    V: AsRef<[T]>,
{
    if utilities.len() != action.len() {
        return Err(structural!(
            "{} utility vectors for a {}-dimensional action",
            utilities.len(),
            action.len()
        ));
    }
    let mut total = T::zero();
    for (i, (u, &a)) in utilities.iter().zip(action.iter()).enumerate() {
        let u = u.as_ref();
        let v = *u
            .get(a)
            .ok_or_else(|| structural!("sub-action {a} out of range 0..{} in dimension {i}", u.len()))?;
        total = total + v;
    }
    Ok(total * mode.scale::<T>(action.len()))
}
