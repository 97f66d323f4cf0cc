//! Factor graphs over finite state spaces and exact inference by enumeration.
//!
//! Tables are stored row-major over their scope with the last scope
//! variable varying fastest. States are 0-based.

use crate::error::{Error, Result};
use crate::marginals::PseudoMarginals;
use crate::scalar::{KahanSum, Scalar};

/// Default cap on the joint state space visited by exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 26;

/// A nonnegative table over the product of its scope's state spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTable<T> {
    cards: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> PotentialTable<T> {
    pub fn new(cards: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if let Some(pos) = cards.iter().position(|&c| c == 0) {
            return Err(Error::InvalidModel(format!(
                "table dimension {pos} has cardinality 0"
            )));
        }
        let expected = table_len(&cards)?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::InvalidModel(format!(
                "table entry {v} is negative or not finite"
            )));
        }
        Ok(Self { cards, values })
    }

    /// Builds a table by evaluating `f` at every joint state of the scope.
    pub fn from_fn(cards: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(table_len(&cards)?);
        for_each_state(&cards, |s| values.push(f(s)));
        Self::new(cards, values)
    }

    pub fn constant(cards: Vec<usize>, value: T) -> Result<Self> {
        let len = table_len(&cards)?;
        Self::new(cards, vec![value; len])
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat index of a joint state (last coordinate fastest).
    #[inline]
    pub fn index_of(&self, states: &[usize]) -> usize {
        flat_index(&self.cards, states)
    }

    #[inline]
    pub fn get(&self, states: &[usize]) -> T {
        self.values[self.index_of(states)]
    }

    /// Joint state of a flat index.
    pub fn states_of(&self, mut index: usize) -> Vec<usize> {
        let mut states = vec![0; self.cards.len()];
        for (slot, &c) in states.iter_mut().zip(&self.cards).rev() {
            *slot = index % c;
            index /= c;
        }
        states
    }

    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.cards.clone(), self.values.iter().map(|&v| v * c).collect())
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }
}

/// A factor: ordered scope plus its potential table.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor<T> {
    pub scope: Vec<usize>,
    pub table: PotentialTable<T>,
}

/// A graphical model `f(x) = ∏ φ_i(x_i) ∏ ψ_α(x_α)` over finite variables.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorGraph<T> {
    cards: Vec<usize>,
    factors: Vec<Factor<T>>,
    node_potentials: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> FactorGraph<T> {
    /// A model with the given variable cardinalities and no potentials.
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if let Some(i) = cards.iter().position(|&c| c == 0) {
            return Err(Error::InvalidModel(format!("variable {i} has cardinality 0")));
        }
        let n = cards.len();
        Ok(Self {
            cards,
            factors: Vec::new(),
            node_potentials: vec![None; n],
        })
    }

    pub fn num_variables(&self) -> usize {
        self.cards.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.cards[var]
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn factors(&self) -> &[Factor<T>] {
        &self.factors
    }

    pub fn factor(&self, index: usize) -> &Factor<T> {
        &self.factors[index]
    }

    pub fn node_potential(&self, var: usize) -> Option<&[T]> {
        self.node_potentials[var].as_deref()
    }

    /// `φ_i(x)`, 1 where no node potential is set.
    #[inline]
    pub fn phi(&self, var: usize, state: usize) -> T {
        self.node_potentials[var]
            .as_ref()
            .map_or(T::one(), |p| p[state])
    }

    /// Appends a factor and returns its index.
    pub fn add_factor(&mut self, scope: Vec<usize>, values: Vec<T>) -> Result<usize> {
        for (k, &v) in scope.iter().enumerate() {
            if v >= self.cards.len() {
                return Err(Error::InvalidModel(format!(
                    "scope references unknown variable {v}"
                )));
            }
            if scope[..k].contains(&v) {
                return Err(Error::InvalidModel(format!(
                    "variable {v} repeated within a scope"
                )));
            }
        }
        let cards = scope.iter().map(|&v| self.cards[v]).collect();
        let table = PotentialTable::new(cards, values)?;
        self.factors.push(Factor { scope, table });
        Ok(self.factors.len() - 1)
    }

    pub fn add_factor_fn(
        &mut self,
        scope: Vec<usize>,
        f: impl FnMut(&[usize]) -> T,
    ) -> Result<usize> {
        let cards: Vec<usize> = scope
            .iter()
            .map(|&v| self.cards.get(v).copied().unwrap_or(1))
            .collect();
        let table = PotentialTable::from_fn(cards, f)?;
        self.add_factor(scope, table.values)
    }

    pub fn set_node_potential(&mut self, var: usize, values: Vec<T>) -> Result<()> {
        let card = *self
            .cards
            .get(var)
            .ok_or_else(|| Error::InvalidModel(format!("unknown variable {var}")))?;
        if values.len() != card {
            return Err(Error::DimensionMismatch {
                expected: card,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidModel(format!(
                "node potential of variable {var} has a negative or non-finite entry"
            )));
        }
        self.node_potentials[var] = Some(values);
        Ok(())
    }

    pub fn clear_node_potential(&mut self, var: usize) {
        self.node_potentials[var] = None;
    }

    /// Replaces a factor table keeping its scope.
    pub fn set_factor_values(&mut self, index: usize, values: Vec<T>) -> Result<()> {
        let cards = self.factors[index].table.cards.clone();
        self.factors[index].table = PotentialTable::new(cards, values)?;
        Ok(())
    }

    /// Factors incident to each variable, as `(factor, position in scope)`.
    pub fn incidences(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.cards.len()];
        for (a, f) in self.factors.iter().enumerate() {
            for (p, &v) in f.scope.iter().enumerate() {
                adj[v].push((a, p));
            }
        }
        adj
    }

    /// Size of the joint state space, saturating at `u128::MAX`.
    pub fn joint_space_size(&self) -> u128 {
        self.cards
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }

    /// True when the factor graph (variables plus factor nodes) has no cycle.
    pub fn is_forest(&self) -> bool {
        // Bipartite graph with n + m nodes is a forest iff edges = nodes - components.
        let n = self.cards.len();
        let m = self.factors.len();
        let mut uf = crate::graph::UnionFind::new(n + m);
        let mut edges = 0;
        for (a, f) in self.factors.iter().enumerate() {
            for &v in &f.scope {
                edges += 1;
                if !uf.union(v, n + a) {
                    return false;
                }
            }
        }
        edges + uf.count() == n + m
    }

    /// The disjoint union of two models; variables of `other` are shifted.
    pub fn disjoint_union(&self, other: &Self) -> Self {
        let shift = self.cards.len();
        let mut cards = self.cards.clone();
        cards.extend_from_slice(&other.cards);
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().map(|f| Factor {
            scope: f.scope.iter().map(|v| v + shift).collect(),
            table: f.table.clone(),
        }));
        let mut node_potentials = self.node_potentials.clone();
        node_potentials.extend(other.node_potentials.iter().cloned());
        Self {
            cards,
            factors,
            node_potentials,
        }
    }

    /// `f(x)` for a full assignment.
    pub fn evaluate(&self, x: &[usize]) -> Result<T> {
        if x.len() != self.cards.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cards.len(),
                got: x.len(),
            });
        }
        if let Some((i, &s)) = x.iter().enumerate().find(|(i, &s)| s >= self.cards[*i]) {
            return Err(Error::InvalidModel(format!(
                "state {s} out of range for variable {i}"
            )));
        }
        Ok(self.evaluate_unchecked(x))
    }

    fn evaluate_unchecked(&self, x: &[usize]) -> T {
        let mut value = T::one();
        for (i, &s) in x.iter().enumerate() {
            value = value * self.phi(i, s);
        }
        let mut buf = Vec::new();
        for f in &self.factors {
            buf.clear();
            buf.extend(f.scope.iter().map(|&v| x[v]));
            value = value * f.table.get(&buf);
        }
        value
    }

    fn check_cap(&self, cap: u128) -> Result<()> {
        let size = self.joint_space_size();
        if size > cap {
            Err(Error::CapExceeded { size, cap })
        } else {
            Ok(())
        }
    }

    /// `Z = Σ_x f(x)` by enumeration with the default cap.
    pub fn exact_partition(&self) -> Result<T> {
        self.exact_partition_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn exact_partition_capped(&self, cap: u128) -> Result<T> {
        self.check_cap(cap)?;
        let mut acc = KahanSum::new();
        for_each_state(&self.cards, |x| acc.add(self.evaluate_unchecked(x)));
        Ok(acc.value())
    }

    /// True single-node and factor marginals by enumeration.
    pub fn exact_marginals(&self) -> Result<PseudoMarginals<T>> {
        self.exact_marginals_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn exact_marginals_capped(&self, cap: u128) -> Result<PseudoMarginals<T>> {
        self.check_cap(cap)?;
        let mut z = KahanSum::new();
        let mut nodes: Vec<Vec<KahanSum<T>>> = self
            .cards
            .iter()
            .map(|&c| vec![KahanSum::new(); c])
            .collect();
        let mut factors: Vec<Vec<KahanSum<T>>> = self
            .factors
            .iter()
            .map(|f| vec![KahanSum::new(); f.table.len()])
            .collect();
        let mut buf = Vec::new();
        for_each_state(&self.cards, |x| {
            let w = self.evaluate_unchecked(x);
            if w == T::zero() {
                return;
            }
            z.add(w);
            for (i, &s) in x.iter().enumerate() {
                nodes[i][s].add(w);
            }
            for (a, f) in self.factors.iter().enumerate() {
                buf.clear();
                buf.extend(f.scope.iter().map(|&v| x[v]));
                factors[a][f.table.index_of(&buf)].add(w);
            }
        });
        let z = z.value();
        if z <= T::zero() {
            return Err(Error::Unnormalizable);
        }
        let norm = |v: Vec<KahanSum<T>>| v.into_iter().map(|s| s.value() / z).collect();
        Ok(PseudoMarginals {
            nodes: nodes.into_iter().map(norm).collect(),
            factors: factors.into_iter().map(norm).collect(),
        })
    }
}

fn table_len(cards: &[usize]) -> Result<usize> {
    cards.iter().try_fold(1usize, |acc, &c| {
        acc.checked_mul(c)
            .ok_or_else(|| Error::InvalidModel("table too large".into()))
    })
}

#[inline]
pub(crate) fn flat_index(cards: &[usize], states: &[usize]) -> usize {
    states
        .iter()
        .zip(cards)
        .fold(0, |acc, (&s, &c)| acc * c + s)
}

/// Visits every joint state of `cards` in row-major order (last fastest).
pub fn for_each_state(cards: &[usize], mut f: impl FnMut(&[usize])) {
    if cards.contains(&0) {
        return;
    }
    let mut x = vec![0usize; cards.len()];
    loop {
        f(&x);
        let mut k = cards.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            x[k] += 1;
            if x[k] < cards[k] {
                break;
            }
            x[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(phi: [f64; 2]) -> FactorGraph<f64> {
        let mut g = FactorGraph::new(vec![2]).unwrap();
        g.set_node_potential(0, phi.to_vec()).unwrap();
        g
    }

    #[test]
    fn empty_model_evaluates_to_one() {
        let g = FactorGraph::<f64>::new(vec![]).unwrap();
        assert_eq!(g.evaluate(&[]).unwrap(), 1.0);
        assert_eq!(g.exact_partition().unwrap(), 1.0);
    }

    #[test]
    fn single_variable() {
        let g = single([1.0, 2.0]);
        assert_eq!(g.evaluate(&[1]).unwrap(), 2.0);
        assert_eq!(g.exact_partition().unwrap(), 3.0);
        let m = single([1.0, 3.0]).exact_marginals().unwrap();
        assert_eq!(m.nodes[0], vec![0.25, 0.75]);
    }

    #[test]
    fn independent_pair() {
        let mut g = FactorGraph::new(vec![2, 2]).unwrap();
        g.set_node_potential(0, vec![1.0, 1.0]).unwrap();
        g.set_node_potential(1, vec![1.0, 1.0]).unwrap();
        assert_eq!(g.exact_partition().unwrap(), 4.0);
    }

    #[test]
    fn evaluate_rejects_bad_assignment() {
        let g = single([1.0, 2.0]);
        assert!(matches!(
            g.evaluate(&[0, 1]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(g.evaluate(&[2]).is_err());
    }

    #[test]
    fn construction_errors() {
        assert!(FactorGraph::<f64>::new(vec![2, 0]).is_err());
        let mut g = FactorGraph::<f64>::new(vec![2, 2]).unwrap();
        assert!(g.add_factor(vec![0, 0], vec![1.0; 4]).is_err());
        assert!(g.add_factor(vec![0, 5], vec![1.0; 4]).is_err());
        assert!(g.add_factor(vec![0, 1], vec![1.0; 3]).is_err());
        assert!(g.add_factor(vec![0, 1], vec![1.0, -1.0, 1.0, 1.0]).is_err());
        assert!(g.set_node_potential(0, vec![1.0]).is_err());
        // zero tables are allowed
        assert!(g.add_factor(vec![0, 1], vec![0.0; 4]).is_ok());
    }

    #[test]
    fn cap_refusal_names_size() {
        let g = FactorGraph::<f64>::new(vec![2; 30]).unwrap();
        match g.exact_partition() {
            Err(Error::CapExceeded { size, cap }) => {
                assert_eq!(size, 1 << 30);
                assert_eq!(cap, DEFAULT_ENUMERATION_CAP);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn unnormalizable() {
        let mut g = FactorGraph::<f64>::new(vec![2]).unwrap();
        g.set_node_potential(0, vec![0.0, 0.0]).unwrap();
        assert_eq!(g.exact_marginals(), Err(Error::Unnormalizable));
    }

    #[test]
    fn table_layout_last_fastest() {
        let t = PotentialTable::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.get(&[0, 2]), 2.0);
        assert_eq!(t.get(&[1, 0]), 3.0);
        assert_eq!(t.states_of(5), vec![1, 2]);
    }

    #[test]
    fn forest_detection() {
        let mut g = FactorGraph::<f64>::new(vec![2, 2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![1.0; 4]).unwrap();
        g.add_factor(vec![1, 2], vec![1.0; 4]).unwrap();
        assert!(g.is_forest());
        g.add_factor(vec![0, 2], vec![1.0; 4]).unwrap();
        assert!(!g.is_forest());
        let mut h = FactorGraph::<f64>::new(vec![2, 2]).unwrap();
        h.add_factor(vec![0, 1], vec![1.0; 4]).unwrap();
        h.add_factor(vec![0, 1], vec![1.0; 4]).unwrap();
        assert!(!h.is_forest());
    }
}
