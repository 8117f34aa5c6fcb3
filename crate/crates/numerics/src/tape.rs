use std::collections::BTreeMap;

use crate::array::Array;
use crate::elem::Elem;
use crate::error::{NumericsError, Result};
use crate::params::ParamSet;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

/// Per-variable gradient buffers, filled during the reverse sweep.
pub struct Grads<E> {
    slots: Vec<Option<Vec<E>>>,
}

impl<E: Elem> Grads<E> {
    fn new(n: usize) -> Self {
        Self { slots: (0..n).map(|_| None).collect() }
    }

    pub fn get(&self, id: VarId) -> Option<&[E]> {
        self.slots[id.0].as_deref()
    }

    /// Gradient of `id` cloned out, or `None` if nothing flowed here.
    pub fn cloned(&self, id: VarId) -> Option<Vec<E>> {
        self.slots[id.0].clone()
    }

    /// Accumulate a contribution into the slot for `id`.
    pub fn add(&mut self, id: VarId, contrib: Vec<E>) {
        match &mut self.slots[id.0] {
            Some(acc) => {
                debug_assert_eq!(acc.len(), contrib.len());
                for (a, c) in acc.iter_mut().zip(contrib) {
                    *a = *a + c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }
}

type BackFn<E> = Box<dyn Fn(&[Array<E>], &mut Grads<E>)>;

/// Ordered record of forward operations. The reverse sweep visits the
/// recorded steps in exact reverse order; a tape supports one backward
/// pass and must be rebuilt for the next one.
pub struct Tape<E: Elem> {
    vals: Vec<Array<E>>,
    reqs: Vec<bool>,
    steps: Vec<BackFn<E>>,
    param_ids: BTreeMap<String, VarId>,
    grads: Option<Grads<E>>,
    consumed: bool,
}

impl<E: Elem> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> Tape<E> {
    pub fn new() -> Self {
        Self {
            vals: Vec::new(),
            reqs: Vec::new(),
            steps: Vec::new(),
            param_ids: BTreeMap::new(),
            grads: None,
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Array<E> {
        &self.vals[id.0]
    }

    pub(crate) fn wants_grad(&self, id: VarId) -> bool {
        self.reqs[id.0]
    }

    /// Record an op output. Every forward op funnels through here, which is
    /// where the all-values-finite invariant is enforced.
    pub(crate) fn out(&mut self, op: &'static str, val: Array<E>, req: bool) -> Result<VarId> {
        if let Some(index) = val.first_non_finite() {
            return Err(NumericsError::NonFinite { op, index });
        }
        self.vals.push(val);
        self.reqs.push(req);
        Ok(VarId(self.vals.len() - 1))
    }

    pub(crate) fn record(&mut self, back: impl Fn(&[Array<E>], &mut Grads<E>) + 'static) {
        self.steps.push(Box::new(back));
    }

    /// Place an input array on the tape; it collects a gradient iff its
    /// `requires_grad` flag is set.
    pub fn leaf(&mut self, a: Array<E>) -> Result<VarId> {
        let req = a.requires_grad;
        self.out("leaf", a, req)
    }

    /// Constant input: never collects a gradient.
    pub fn constant(&mut self, a: Array<E>) -> Result<VarId> {
        self.out("constant", a, false)
    }

    /// Input that always collects a gradient (finite-difference checks).
    pub fn var(&mut self, mut a: Array<E>) -> Result<VarId> {
        a.requires_grad = true;
        self.out("var", a, true)
    }

    /// Put a named parameter on the tape, converting from the stored f32
    /// master copy. Repeated requests return the same variable, so shared
    /// weights accumulate gradients from every use site.
    pub fn param(&mut self, ps: &ParamSet, name: &str) -> Result<VarId> {
        if let Some(&id) = self.param_ids.get(name) {
            return Ok(id);
        }
        let master = ps.get(name)?;
        let mut local = Array::from_fn(master.shape().to_vec(), |i| {
            E::from_f64(master.data()[i] as f64)
        });
        local.requires_grad = true;
        let id = self.out("param", local, true)?;
        self.param_ids.insert(name.to_string(), id);
        Ok(id)
    }

    /// Reverse sweep from a scalar output. Consumes the tape's single
    /// backward budget; build a fresh forward pass for the next one.
    pub fn backward(&mut self, out: VarId) -> Result<()> {
        if self.consumed {
            return Err(NumericsError::TapeState(
                "backward already ran on this tape; rebuild the forward pass first",
            ));
        }
        if self.vals[out.0].numel() != 1 {
            return Err(NumericsError::InvalidArg {
                op: "backward",
                detail: format!("output must be scalar, got shape {:?}", self.vals[out.0].shape()),
            });
        }
        self.consumed = true;
        let mut grads = Grads::new(self.vals.len());
        grads.add(out, vec![E::one()]);
        for step in self.steps.iter().rev() {
            step(&self.vals, &mut grads);
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Gradient of a variable after `backward`. `None` when no gradient
    /// flowed to it (equivalently: zero).
    pub fn grad(&self, id: VarId) -> Option<&[E]> {
        self.grads.as_ref()?.get(id)
    }

    /// Gradients for every parameter placed on this tape, keyed by name.
    /// Parameters whose values never reached the loss come back as zeros.
    pub fn param_grads(&self) -> Result<BTreeMap<String, Array<E>>> {
        if self.grads.is_none() {
            return Err(NumericsError::TapeState("param_grads requested before backward"));
        }
        let mut out = BTreeMap::new();
        for (name, &id) in &self.param_ids {
            let shape = self.vals[id.0].shape().to_vec();
            let arr = match self.grad(id) {
                Some(g) => Array::new(shape, g.to_vec())?,
                None => Array::zeros(shape),
            };
            out.insert(name.clone(), arr);
        }
        Ok(out)
    }
}
