//! Pairwise multi-head regressor over the embedding inventory and the
//! reweighted squared-error objective.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Linear;
use crate::tensor::{ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// One inventory entry. The declaration order is the enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Member {
    /// Mean-pooled sequence encoding `H^B_mp`.
    Sequence,
    /// `H^{G^c}`.
    Semantic,
    /// `H^{G^a}`.
    Action,
    /// `H^{G^d}`.
    Discourse,
}

impl Member {
    pub const ALL: [Member; 4] = [Member::Sequence, Member::Semantic, Member::Action, Member::Discourse];

    pub fn name(self) -> &'static str {
        match self {
            Member::Sequence => "B_mp",
            Member::Semantic => "G^c",
            Member::Action => "G^a",
            Member::Discourse => "G^d",
        }
    }

    /// Single-letter code used in variant names (`B`, `C`, `A`, `D`).
    pub fn code(self) -> char {
        match self {
            Member::Sequence => 'B',
            Member::Semantic => 'C',
            Member::Action => 'A',
            Member::Discourse => 'D',
        }
    }
}

/// Ordered, duplicate-free set of inventory members.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Inventory(Vec<Member>);

impl Inventory {
    /// Sorts into the canonical order; rejects duplicates and empty sets.
    pub fn new(mut members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("inventory is empty".into()));
        }
        members.sort();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract(format!("duplicate inventory member in {:?}", members)));
        }
        Ok(Inventory(members))
    }

    /// Parses a variant name such as `B+CDA`, `C+D` or `B`. Letters:
    /// B sequence, C semantic, A action, D discourse; `+` is ignored.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut m = Vec::new();
        for ch in spec.chars().filter(|c| !c.is_whitespace() && *c != '+') {
            m.push(match ch.to_ascii_uppercase() {
                'B' => Member::Sequence,
                'C' => Member::Semantic,
                'A' => Member::Action,
                'D' => Member::Discourse,
                _ => return Err(Error::Config(format!("unknown inventory letter `{}` in `{}`", ch, spec))),
            });
        }
        Inventory::new(m)
    }

    pub fn full() -> Self {
        Inventory(Member::ALL.to_vec())
    }

    pub fn members(&self) -> &[Member] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, m: Member) -> bool {
        self.0.contains(&m)
    }

    /// Variant label: `B`, `B+CD`, `C+D+A`-style names are normalized to
    /// `B+` followed by graph letters, or graph letters joined by `+`.
    pub fn label(&self) -> String {
        let graphs: Vec<char> = [Member::Semantic, Member::Discourse, Member::Action]
            .into_iter()
            .filter(|m| self.contains(*m))
            .map(Member::code)
            .collect();
        match (self.contains(Member::Sequence), graphs.is_empty()) {
            (true, true) => "B".into(),
            (true, false) => format!("B+{}", graphs.iter().collect::<String>()),
            (false, _) => {
                let parts: Vec<String> = graphs.iter().map(|c| String::from(*c)).collect();
                parts.join("+")
            }
        }
    }
}

/// `N_combo = n (n - 1) / 2`.
pub fn n_combo(n_inputs: usize) -> Result<usize> {
    if n_inputs < 2 {
        return Err(Error::Contract(format!("pairwise combination needs >= 2 inputs, got {}", n_inputs)));
    }
    Ok(n_inputs * (n_inputs - 1) / 2)
}

/// Unordered index pairs `(m, k)`, `m < k`, in lexicographic order.
pub fn pairwise_combos(n_inputs: usize) -> Result<Vec<(usize, usize)>> {
    n_combo(n_inputs)?;
    Ok((0..n_inputs).flat_map(|m| (m + 1..n_inputs).map(move |k| (m, k))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    pub heads: usize,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig { heads: 4 }
    }
}

/// Per pair `k`: `ReLU(A_k [H_m ; H_k])`, a `D_H * N_h` vector read as
/// `N_h` heads of `D_H`; all pairs concatenated pairs-major then mapped to a
/// scalar. A one-member inventory has a single map `D_H -> D_H * N_h`.
#[derive(Debug, Clone)]
pub struct Regressor {
    pub inventory: Inventory,
    pub d_h: usize,
    pub heads: usize,
    pub pairs: Vec<(usize, usize)>,
    pub maps: Vec<Linear>,
    pub output: Linear,
}

impl Regressor {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        inventory: &Inventory,
        d_h: usize,
        config: &RegressorConfig,
    ) -> Result<Self> {
        if config.heads == 0 {
            return Err(Error::Config("regressor needs at least one head".into()));
        }
        let width = d_h * config.heads;
        let (pairs, maps) = if inventory.len() == 1 {
            (Vec::new(), alloc::vec![Linear::new(store, rng, &format!("{}.single", prefix), d_h, width)?])
        } else {
            let pairs = pairwise_combos(inventory.len())?;
            let maps = pairs
                .iter()
                .map(|(m, k)| Linear::new(store, rng, &format!("{}.pair{}{}", prefix, m, k), 2 * d_h, width))
                .collect::<core::result::Result<Vec<_>, _>>()?;
            (pairs, maps)
        };
        let output = Linear::new(store, rng, &format!("{}.out", prefix), width * maps.len(), 1)?;
        Ok(Regressor { inventory: inventory.clone(), d_h, heads: config.heads, pairs, maps, output })
    }

    /// Width of the final linear layer's input, `D_H * N_h * N_combo`.
    pub fn final_input_dim(&self) -> usize {
        self.d_h * self.heads * self.maps.len()
    }

    /// Sets the output bias (the prediction when every head is silent).
    pub fn set_output_bias(&self, store: &mut ParamStore, value: f64) {
        store.get_mut(self.output.b).data_mut()[0] = value;
    }

    /// `Ŷ` as a `(1, 1)` node. `inputs` follow the inventory order.
    pub fn regress(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != self.inventory.len() {
            return Err(Error::Contract(format!(
                "{} inventory embeddings for a regressor over {}",
                inputs.len(),
                self.inventory.len()
            )));
        }
        for (m, v) in self.inventory.members().iter().zip(inputs) {
            let (r, c) = tape.value(*v).dims2();
            if r != 1 || c != self.d_h {
                return Err(Error::Tensor(crate::TensorError::shape(
                    "regress",
                    format!("{} has shape ({}, {}), expected (1, {})", m.name(), r, c, self.d_h),
                )));
            }
        }
        let mut heads = Vec::with_capacity(self.maps.len());
        if self.pairs.is_empty() {
            let h = self.maps[0].forward(tape, inputs[0])?;
            heads.push(tape.relu(h));
        } else {
            for (&(m, k), map) in self.pairs.iter().zip(&self.maps) {
                let combo = tape.concat(&[inputs[m], inputs[k]], 1)?;
                let h = map.forward(tape, combo)?;
                heads.push(tape.relu(h));
            }
        }
        let all = if heads.len() == 1 { heads[0] } else { tape.concat(&heads, 1)? };
        Ok(self.output.forward(tape, all)?)
    }
}

/// Per-score loss weights for scores 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights(pub [f64; 9]);

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights([1.0; 9])
    }
}

impl LossWeights {
    pub fn weight(&self, score: f64) -> f64 {
        let s = crate::math::round(score).clamp(1.0, 9.0) as usize;
        self.0[s - 1]
    }
}

/// Inverse-frequency weights normalized to mean 1 over the scores present in
/// `scores`; absent scores get the largest present weight.
pub fn compute_loss_weights(scores: &[u8]) -> Result<LossWeights> {
    if scores.is_empty() {
        return Err(Error::Contract("loss weights need a non-empty training set".into()));
    }
    let mut counts = [0usize; 9];
    for &s in scores {
        if !(1..=9).contains(&s) {
            return Err(Error::Contract(format!("score {} outside [1, 9]", s)));
        }
        counts[s as usize - 1] += 1;
    }
    let mut raw = [0.0; 9];
    let mut present = 0usize;
    let mut total = 0.0;
    for (r, &c) in raw.iter_mut().zip(&counts) {
        if c > 0 {
            *r = 1.0 / c as f64;
            present += 1;
            total += *r;
        }
    }
    let norm = present as f64 / total;
    let mut w = [0.0; 9];
    let mut max = 0.0f64;
    for i in 0..9 {
        if counts[i] > 0 {
            w[i] = raw[i] * norm;
            max = max.max(w[i]);
        }
    }
    for i in 0..9 {
        if counts[i] == 0 {
            w[i] = max;
        }
    }
    Ok(LossWeights(w))
}

/// `w(y) (ŷ - y)^2` as a `(1, 1)` node.
pub fn weighted_squared_error(tape: &mut Tape<'_>, y_hat: Var, y: f64, weights: &LossWeights) -> Result<Var> {
    if tape.value(y_hat).len() != 1 {
        return Err(Error::Contract("prediction is not a scalar".into()));
    }
    let d = tape.add_scalar(y_hat, -y);
    let sq = tape.mul(d, d)?;
    Ok(tape.scale(sq, weights.weight(y)))
}

/// Mean over the batch of `w(Y_i) (Ŷ_i - Y_i)^2`.
pub fn weighted_mse(y_hat: &[f64], y: &[f64], weights: &LossWeights) -> Result<f64> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(Error::Contract(format!("{} predictions for {} targets", y_hat.len(), y.len())));
    }
    Ok(y_hat.iter().zip(y).map(|(p, t)| weights.weight(*t) * (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
}

/// Batched tape version of [`weighted_mse`] over `(1, 1)` prediction nodes.
pub fn weighted_mse_node(tape: &mut Tape<'_>, y_hat: &[Var], y: &[f64], weights: &LossWeights) -> Result<Var> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(Error::Contract(format!("{} predictions for {} targets", y_hat.len(), y.len())));
    }
    let preds = tape.concat(y_hat, 0)?;
    let target = tape.constant(Tensor::matrix(y.len(), 1, y.to_vec())?);
    let w = tape.constant(Tensor::matrix(y.len(), 1, y.iter().map(|t| weights.weight(*t)).collect())?);
    let d = tape.sub(preds, target)?;
    let sq = tape.mul(d, d)?;
    let wsq = tape.mul(sq, w)?;
    let s = tape.sum(wsq);
    Ok(tape.scale(s, 1.0 / y.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn combo_counts() {
        assert_eq!(n_combo(4).unwrap(), 6);
        assert_eq!(n_combo(2).unwrap(), 1);
        assert_eq!(n_combo(3).unwrap(), 3);
        assert!(n_combo(1).is_err());
        assert_eq!(pairwise_combos(4).unwrap(), vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn inventory_parsing_and_labels() {
        assert_eq!(Inventory::parse("B+CDA").unwrap(), Inventory::full());
        assert_eq!(Inventory::parse("C+D+A").unwrap().label(), "C+D+A");
        assert_eq!(Inventory::parse("B+DC").unwrap().label(), "B+CD");
        assert_eq!(Inventory::parse("b").unwrap().label(), "B");
        assert!(Inventory::parse("B+X").is_err());
        assert!(matches!(Inventory::parse("CC"), Err(Error::Contract(_))));
        assert!(Inventory::parse("").is_err());
    }

    #[test]
    fn final_width_and_zero_path() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = Regressor::new(&mut store, &mut rng, "reg", &Inventory::full(), 64, &RegressorConfig::default()).unwrap();
        assert_eq!(r.final_input_dim(), 1536);
        for m in &r.maps {
            store.get_mut(m.w).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        r.set_output_bias(&mut store, 4.25);
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::filled(&[1, 64], 0.7));
        let y = r.regress(&mut tape, &[x, x, x, x]).unwrap();
        assert_eq!(tape.value(y).item(), Some(4.25));
        assert!(r.regress(&mut tape, &[x, x]).is_err());
    }

    #[test]
    fn loss_weight_examples() {
        let w = compute_loss_weights(&[5, 5, 5, 6]).unwrap();
        assert!((w.0[5] - 1.5).abs() < 1e-12);
        assert!((w.0[4] - 0.5).abs() < 1e-12);
        assert_eq!(w.0[0], 1.5);
        let u = compute_loss_weights(&[1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        assert!(u.0.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(compute_loss_weights(&[]).is_err());
    }

    #[test]
    fn weighted_mse_examples() {
        let mut w = LossWeights::default();
        w.0[4] = 2.0;
        assert_eq!(weighted_mse(&[5.5], &[5.0], &w).unwrap(), 0.5);
        assert_eq!(weighted_mse(&[3.0, 4.0], &[3.0, 4.0], &w).unwrap(), 0.0);
        assert_eq!(weighted_mse(&[1.0, 2.0], &[2.0, 4.0], &LossWeights::default()).unwrap(), 2.5);
        assert!(weighted_mse(&[1.0], &[1.0, 2.0], &w).is_err());
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let p = tape.constant(Tensor::scalar(5.5));
        let l = weighted_mse_node(&mut tape, &[p], &[5.0], &w).unwrap();
        assert_eq!(tape.value(l).item(), Some(0.5));
    }
}
