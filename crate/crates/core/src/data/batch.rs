use ndarray::{s, Array2};
use rand::Rng;

use super::{Transition, TransitionSet};
use crate::{Error, Result};

/// Which set a batch sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    /// The expert set D_E.
    Expert,
    /// The auxiliary set D_O.
    Auxiliary,
}

/// Struct-of-arrays mini-batch. Rows `0..n_expert` come from D_E, the rest from D_O.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_states: Array2<f64>,
    pub done: Vec<bool>,
    pub true_reward: Vec<f64>,
    pub origin: Vec<Origin>,
    pub n_expert: usize,
}

impl Batch {
    /// Stack transitions tagged with their origins; expert-origin rows must come first.
    pub fn from_transitions(rows: &[(&Transition, Origin)]) -> Result<Batch> {
        let first = rows.first().ok_or_else(|| Error::config("empty batch"))?.0;
        let (sd, ad) = (first.s.len(), first.a.len());
        let n = rows.len();
        let n_expert = rows.iter().take_while(|(_, o)| *o == Origin::Expert).count();
        if rows[n_expert..].iter().any(|(_, o)| *o == Origin::Expert) {
            return Err(Error::config("expert-origin rows must precede auxiliary rows"));
        }
        let mut states = Array2::zeros((n, sd));
        let mut actions = Array2::zeros((n, ad));
        let mut next_states = Array2::zeros((n, sd));
        for (i, (t, _)) in rows.iter().enumerate() {
            if t.s.len() != sd || t.a.len() != ad || t.s_next.len() != sd {
                return Err(Error::config("transitions in a batch must share dimensions"));
            }
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s[..]));
            actions.row_mut(i).assign(&ndarray::ArrayView1::from(&t.a[..]));
            next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s_next[..]));
        }
        Ok(Batch {
            states,
            actions,
            next_states,
            done: rows.iter().map(|(t, _)| t.done).collect(),
            true_reward: rows.iter().map(|(t, _)| t.true_reward).collect(),
            origin: rows.iter().map(|(_, o)| *o).collect(),
            n_expert,
        })
    }

    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    pub fn n_auxiliary(&self) -> usize {
        self.len() - self.n_expert
    }

    /// `[s | a]` rows, the discriminator and critic input.
    pub fn state_actions(&self) -> Array2<f64> {
        concat_columns(&self.states, &self.actions)
    }

    /// Rows of the given origin only, as a new batch.
    pub fn half(&self, origin: Origin) -> Batch {
        let range = match origin {
            Origin::Expert => 0..self.n_expert,
            Origin::Auxiliary => self.n_expert..self.len(),
        };
        Batch {
            states: self.states.slice(s![range.clone(), ..]).to_owned(),
            actions: self.actions.slice(s![range.clone(), ..]).to_owned(),
            next_states: self.next_states.slice(s![range.clone(), ..]).to_owned(),
            done: self.done[range.clone()].to_vec(),
            true_reward: self.true_reward[range.clone()].to_vec(),
            origin: self.origin[range].to_vec(),
            n_expert: if origin == Origin::Expert { self.n_expert } else { 0 },
        }
    }
}

pub(crate) fn concat_columns(left: &Array2<f64>, right: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[left.view(), right.view()])
        .expect("row counts match")
        .as_standard_layout()
        .into_owned()
}

/// Half the batch drawn uniformly with replacement from D_E, half from D_O.
pub fn sample_batch<R: Rng + ?Sized>(
    expert: &TransitionSet,
    auxiliary: &TransitionSet,
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch> {
    if expert.is_empty() || auxiliary.is_empty() {
        return Err(Error::config("cannot sample a batch from an empty set"));
    }
    if batch_size == 0 || !batch_size.is_multiple_of(2) {
        return Err(Error::config(format!("batch size must be even and positive, got {batch_size}")));
    }
    let half = batch_size / 2;
    let mut rows: Vec<(&Transition, Origin)> = Vec::with_capacity(batch_size);
    for _ in 0..half {
        rows.push((&expert.transitions()[rng.gen_range(0..expert.len())], Origin::Expert));
    }
    for _ in 0..half {
        rows.push((
            &auxiliary.transitions()[rng.gen_range(0..auxiliary.len())],
            Origin::Auxiliary,
        ));
    }
    Batch::from_transitions(&rows)
}
