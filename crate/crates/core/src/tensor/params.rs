//! Named trainable parameters.
//!
//! Initialization draws from a stream keyed by the parameter's full name, so
//! values depend only on `(seed, name, shape)` — never on construction order.

use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::NamedRng;

/// Index of a parameter within its [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub(crate) fn from_index(i: usize) -> Self {
        ParamId(i)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// One named tensor with a gradient buffer.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// The full trainable state of a model.
pub struct ParamSet {
    list: Vec<Parameter>,
    by_name: BTreeMap<String, usize>,
    seed: u64,
}

impl ParamSet {
    pub fn new(seed: u64) -> Self {
        ParamSet { list: Vec::new(), by_name: BTreeMap::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    fn insert(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape().to_vec());
        let id = ParamId(self.list.len());
        self.by_name.insert(name.to_string(), id.0);
        self.list.push(Parameter { name: name.to_string(), value, grad });
        id
    }

    /// Uniform(-a, a) init with a = 1/sqrt(fan_in).
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize) -> ParamId {
        let a = 1.0 / (fan_in as f64).sqrt();
        let mut rng = NamedRng::derive(self.seed, name);
        let data = (0..rows * cols).map(|_| rng.uniform_in(-a, a)).collect();
        self.insert(name, Tensor::matrix(rows, cols, data).expect("init shape"))
    }

    pub fn add_const(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> ParamId {
        self.insert(name, Tensor::full(vec![rows, cols], value))
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add_const(name, rows, cols, 0.0)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.list[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.list[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.list[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.list[id.0].name
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.list.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Parameter names in name order (stable across runs for a fixed config).
    pub fn names(&self) -> Vec<String> {
        self.by_name.keys().cloned().collect()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.list {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, contrib: &[f64]) {
        let g = self.list[id.0].grad.data_mut();
        assert_eq!(g.len(), contrib.len(), "gradient shape mismatch for {}", self.list[id.0].name);
        for (dst, src) in g.iter_mut().zip(contrib) {
            *dst += src;
        }
    }

    /// Overwrite a parameter's value (checkpoint load). Shape must match.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .lookup(name)
            .ok_or_else(|| Error::Lookup(format!("unknown parameter {name}")))?;
        if self.list[id.0].value.shape() != value.shape() {
            return Err(Error::dimension(
                format!("parameter {name}"),
                format!("{:?}", self.list[id.0].value.shape()),
                format!("{:?}", value.shape()),
            ));
        }
        self.list[id.0].value = value;
        Ok(())
    }
}
