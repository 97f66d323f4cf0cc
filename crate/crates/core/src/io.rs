//! JSON file formats for factor graphs, graphs, covers and homomorphism models.
//!
//! Factor tables are row-major with the last scope variable varying fastest.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::covers::CoverSpec;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hom::HomModel;
use crate::model::FactorGraph;
use crate::scalar::Scalar;

/// A variable identifier: either an integer or a string.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarId {
    Int(u64),
    Name(String),
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarId::Int(i) => write!(f, "{i}"),
            VarId::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDecl {
    pub id: VarId,
    pub cardinality: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDecl {
    pub scope: Vec<VarId>,
    pub table: Vec<f64>,
}

/// `{"variables": [{"id", "cardinality"}], "factors": [{"scope", "table"}],
/// "node_potentials": {id: [..]}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub variables: Vec<VariableDecl>,
    pub factors: Vec<FactorDecl>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub node_potentials: BTreeMap<String, Vec<f64>>,
}

fn parse_json<'a, D: Deserialize<'a>>(text: &'a str, what: &str) -> Result<D> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json(text, "model file")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn to_factor_graph<T: Scalar>(&self) -> Result<FactorGraph<T>> {
        let mut index = BTreeMap::new();
        for (i, v) in self.variables.iter().enumerate() {
            if index.insert(v.id.to_string(), i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate variable id {}", v.id)));
            }
        }
        let lookup = |id: &VarId| {
            index
                .get(&id.to_string())
                .copied()
                .ok_or_else(|| Error::InvalidModel(format!("unknown variable id {id}")))
        };
        let mut g = FactorGraph::new(self.variables.iter().map(|v| v.cardinality).collect())?;
        for f in &self.factors {
            let scope = f.scope.iter().map(lookup).collect::<Result<Vec<_>>>()?;
            g.add_factor(scope, f.table.iter().map(|&x| T::lit(x)).collect())?;
        }
        for (id, values) in &self.node_potentials {
            let i = *index
                .get(id)
                .ok_or_else(|| Error::InvalidModel(format!("unknown variable id {id}")))?;
            g.set_node_potential(i, values.iter().map(|&x| T::lit(x)).collect())?;
        }
        Ok(g)
    }

    /// Integer ids `0..n` in variable order.
    pub fn from_factor_graph<T: Scalar>(g: &FactorGraph<T>) -> Self {
        let variables = g
            .cards()
            .iter()
            .enumerate()
            .map(|(i, &c)| VariableDecl {
                id: VarId::Int(i as u64),
                cardinality: c,
            })
            .collect();
        let factors = g
            .factors()
            .iter()
            .map(|f| FactorDecl {
                scope: f.scope.iter().map(|&v| VarId::Int(v as u64)).collect(),
                table: f.table.values().iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        let node_potentials = (0..g.num_variables())
            .filter_map(|i| {
                g.node_potential(i)
                    .map(|p| (i.to_string(), p.iter().map(|x| x.as_f64()).collect()))
            })
            .collect();
        Self {
            variables,
            factors,
            node_potentials,
        }
    }
}

/// `{"n_vertices": n, "edges": [[i, j], ...]}`.
pub fn parse_graph(text: &str) -> Result<Graph> {
    let g: Graph = parse_json(text, "graph file")?;
    Graph::new(g.n_vertices, g.edges)
}

pub fn graph_to_json(g: &Graph) -> String {
    serde_json::to_string(g).expect("graph serializes")
}

/// A cover with its base model inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverFile {
    pub base: ModelFile,
    pub m: usize,
    /// `permutations[α][p][c]`: copy of `scope(α)[p]` on factor copy `c`.
    pub permutations: Vec<Vec<Vec<usize>>>,
}

impl CoverFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json(text, "cover file")
    }

    pub fn from_spec<T: Scalar>(spec: &CoverSpec<T>) -> Self {
        Self {
            base: ModelFile::from_factor_graph(&spec.base),
            m: spec.m,
            permutations: spec.permutations.clone(),
        }
    }

    pub fn to_spec<T: Scalar>(&self) -> Result<CoverSpec<T>> {
        CoverSpec::new(self.base.to_factor_graph()?, self.m, self.permutations.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cover serializes")
    }
}

/// `{"edges": [[i, j], ...], "w": [..], "a": [..], "b": [..]}`, optionally
/// with `n_vertices`, or with `gamma` in place of `a` and `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_vertices: Option<usize>,
    pub edges: Vec<(usize, usize)>,
    pub w: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
}

impl HomFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json(text, "hom model file")
    }

    pub fn to_model(&self) -> Result<HomModel<f64>> {
        let inferred = self
            .edges
            .iter()
            .map(|&(u, v)| u.max(v) + 1)
            .max()
            .unwrap_or(0);
        let graph = Graph::new(self.n_vertices.unwrap_or(inferred), self.edges.clone())?;
        match (&self.a, &self.b, &self.gamma) {
            (Some(a), Some(b), None) => HomModel::new(graph, self.w.clone(), a.clone(), b.clone()),
            (None, None, Some(g)) => HomModel::general(graph, self.w.clone(), g.clone()),
            _ => Err(Error::Parse(
                "hom model needs either both a and b, or gamma".into(),
            )),
        }
    }

    pub fn from_model(model: &HomModel<f64>) -> Self {
        let (a, b, gamma) = match model.rank2() {
            Ok((a, b)) => (Some(a.to_vec()), Some(b.to_vec()), None),
            Err(_) => (None, None, Some(model.gamma_matrix())),
        };
        Self {
            n_vertices: Some(model.graph.n_vertices),
            edges: model.graph.edges.clone(),
            w: model.w().to_vec(),
            a,
            b,
            gamma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"{
        "variables": [{"id": "x", "cardinality": 2}, {"id": "y", "cardinality": 3}],
        "factors": [{"scope": ["y", "x"], "table": [1, 2, 3, 4, 5, 6]}],
        "node_potentials": {"x": [1, 0.5]}
    }"#;

    #[test]
    fn parses_named_ids_and_layout() {
        let g: FactorGraph<f64> = ModelFile::parse(CHAIN).unwrap().to_factor_graph().unwrap();
        assert_eq!(g.factor(0).scope, vec![1, 0]);
        // y = 2, x = 1 is the last entry
        assert_eq!(g.factor(0).table.get(&[2, 1]), 6.0);
        assert_eq!(g.phi(0, 1), 0.5);
    }

    #[test]
    fn round_trip_preserves_partition() {
        let g: FactorGraph<f64> = ModelFile::parse(CHAIN).unwrap().to_factor_graph().unwrap();
        let again = ModelFile::parse(&ModelFile::from_factor_graph(&g).to_json()).unwrap();
        let h: FactorGraph<f64> = again.to_factor_graph().unwrap();
        assert_eq!(g.exact_partition().unwrap(), h.exact_partition().unwrap());
    }

    #[test]
    fn rejects_bad_models() {
        assert!(matches!(ModelFile::parse("{"), Err(Error::Parse(_))));
        let unknown = r#"{"variables": [{"id": 0, "cardinality": 2}],
            "factors": [{"scope": [1], "table": [1, 1]}]}"#;
        assert!(ModelFile::parse(unknown)
            .unwrap()
            .to_factor_graph::<f64>()
            .is_err());
        let short = r#"{"variables": [{"id": 0, "cardinality": 2}],
            "factors": [{"scope": [0], "table": [1]}]}"#;
        assert!(ModelFile::parse(short)
            .unwrap()
            .to_factor_graph::<f64>()
            .is_err());
    }

    #[test]
    fn graph_and_hom_files() {
        let g = parse_graph(r#"{"n_vertices": 3, "edges": [[0, 1], [1, 2]]}"#).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(parse_graph(r#"{"n_vertices": 2, "edges": [[0, 0]]}"#).is_err());
        let h = HomFile::parse(r#"{"edges": [[0, 1]], "w": [1, 1], "a": [1, 1], "b": [1, 1]}"#)
            .unwrap()
            .to_model()
            .unwrap();
        assert_eq!(h.graph.n_vertices, 2);
        assert!(HomFile::parse(r#"{"edges": [], "w": [1], "a": [1]}"#)
            .unwrap()
            .to_model()
            .is_err());
    }

    #[test]
    fn cover_file_round_trip() {
        let g: FactorGraph<f64> = ModelFile::parse(CHAIN).unwrap().to_factor_graph().unwrap();
        let spec = crate::covers::sample_cover(&g, 3, 5).unwrap();
        let file = CoverFile::parse(&CoverFile::from_spec(&spec).to_json()).unwrap();
        assert_eq!(file.to_spec::<f64>().unwrap(), spec);
    }
}
