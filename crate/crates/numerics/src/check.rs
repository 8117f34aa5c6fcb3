//! Finite-difference gradient checking used across the workspace tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::array::Array;
use crate::elem::Elem;
use crate::error::Result;
use crate::params::ParamSet;
use crate::tape::{Tape, VarId};

/// Uniform random array in [lo, hi).
pub fn uniform_array<E: Elem>(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    lo: f64,
    hi: f64,
) -> Array<E> {
    Array::from_fn(shape, |_| E::from_f64(rng.gen::<f64>() * (hi - lo) + lo))
}

/// Central-difference gradient checker. Builds the function twice per probed
/// coordinate and compares against the reverse-mode gradient.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Relative error bound.
    pub tol: f64,
    /// Probe half-step.
    pub h: f64,
    /// Coordinates probed per input (all of them if the input is smaller).
    pub coords_per_input: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { tol: 1e-4, h: 1e-5, coords_per_input: 12 }
    }
}

impl GradCheck {
    fn pick(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        if n <= self.coords_per_input {
            return (0..n).collect();
        }
        let mut seen = std::collections::BTreeSet::new();
        while seen.len() < self.coords_per_input {
            seen.insert(rng.gen_range(0..n));
        }
        seen.into_iter().collect()
    }

    fn assert_close(&self, label: &str, where_: String, fd: f64, ad: f64) {
        let err = (fd - ad).abs() / f64::max(1e-3, fd.abs() + ad.abs());
        assert!(
            err <= self.tol,
            "{}: {} fd={:.8e} ad={:.8e} rel_err={:.3e}",
            label,
            where_,
            fd,
            ad,
            err
        );
    }

    /// Check d(scalar output)/d(inputs) for a function of free arrays.
    /// Inputs are drawn uniformly from [-1, 1).
    pub fn check<F>(&self, label: &str, rng: &mut ChaCha8Rng, shapes: &[Vec<usize>], f: F)
    where
        F: Fn(&mut Tape<f64>, &[VarId]) -> Result<VarId>,
    {
        let bases: Vec<Array<f64>> = shapes
            .iter()
            .map(|s| uniform_array(rng, s.clone(), -1.0, 1.0))
            .collect();
        self.check_with(label, rng, &bases, f)
    }

    /// Like [`check`](Self::check) with caller-supplied base points, for
    /// functions with kinks the probe must stay away from.
    pub fn check_with<F>(&self, label: &str, rng: &mut ChaCha8Rng, bases: &[Array<f64>], f: F)
    where
        F: Fn(&mut Tape<f64>, &[VarId]) -> Result<VarId>,
    {
        let bases = bases.to_vec();
        let mut tape: Tape<f64> = Tape::new();
        let ids: Vec<VarId> = bases
            .iter()
            .map(|b| tape.var(b.clone()).expect("var"))
            .collect();
        let y = f(&mut tape, &ids).expect("forward");
        tape.backward(y).expect("backward");
        let ad_grads: Vec<Vec<f64>> = ids
            .iter()
            .zip(&bases)
            .map(|(&id, b)| match tape.grad(id) {
                Some(g) => g.to_vec(),
                None => vec![0.0; b.numel()],
            })
            .collect();

        let eval = |inputs: &[Array<f64>]| -> f64 {
            let mut t: Tape<f64> = Tape::new();
            let ids: Vec<VarId> = inputs
                .iter()
                .map(|b| t.constant(b.clone()).expect("constant"))
                .collect();
            let y = f(&mut t, &ids).expect("forward");
            t.value(y).item()
        };

        for (i, base) in bases.iter().enumerate() {
            for c in self.pick(rng, base.numel()) {
                let mut plus = bases.clone();
                plus[i].data_mut()[c] += self.h;
                let mut minus = bases.clone();
                minus[i].data_mut()[c] -= self.h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * self.h);
                self.assert_close(label, format!("input {} coord {}", i, c), fd, ad_grads[i][c]);
            }
        }
    }

    /// Check d(scalar output)/d(named parameters) for a model evaluated in
    /// f64 from an f32 parameter master. The probe step has to clear f32
    /// storage granularity, so callers should keep `h` at 1e-3 or wider and
    /// `tol` around 1e-2 for this variant.
    pub fn check_params<F>(&self, label: &str, rng: &mut ChaCha8Rng, params: &ParamSet, f: F)
    where
        F: Fn(&mut Tape<f64>, &ParamSet) -> Result<VarId>,
    {
        let mut tape: Tape<f64> = Tape::new();
        let y = f(&mut tape, params).expect("forward");
        tape.backward(y).expect("backward");
        let ad = tape.param_grads().expect("param grads");

        let eval = |ps: &ParamSet| -> f64 {
            let mut t: Tape<f64> = Tape::new();
            let y = f(&mut t, ps).expect("forward");
            t.value(y).item()
        };

        let names: Vec<String> = params.names().map(String::from).collect();
        for name in names {
            let n = params.get(&name).expect("param").numel();
            let Some(adg) = ad.get(&name) else { continue };
            for c in self.pick(rng, n) {
                let mut plus = params.clone();
                plus.get_mut(&name).unwrap().data_mut()[c] += self.h as f32;
                let mut minus = params.clone();
                minus.get_mut(&name).unwrap().data_mut()[c] -= self.h as f32;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * self.h);
                self.assert_close(
                    label,
                    format!("param {} coord {}", name, c),
                    fd,
                    adg.data()[c],
                );
            }
        }
    }
}
