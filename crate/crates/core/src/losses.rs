//! Triplet error functions and their gradients.
//!
//! Both losses depend on a triplet `(a, b, c)` only through
//! `D = d(a,b) - d(a,c)` under the composed kernel `K'' = K0 + sum mu_i K_i`.
//! `D` is linear in `K0` and in `mu`:
//!
//! ```text
//! dD/dK0  : +1 at (b,b), -1 at (c,c), -1 at (a,b) and (b,a), +1 at (a,c) and (c,a)
//! dD/dmu_i: D computed under K_i alone
//! ```
//!
//! The `K0` gradient is reported as a symmetric matrix `G` such that the
//! directional derivative along a symmetric perturbation `E` is `<G, E>`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{AuxKernelBank, KernelMatrix};
use crate::triplets::{Triplet, TripletSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ste,
    Gnmds,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Ste => "ste",
            LossKind::Gnmds => "gnmds",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ste" => Ok(LossKind::Ste),
            "gnmds" => Ok(LossKind::Gnmds),
            other => Err(Error::InvalidArgument(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad_k0: DMatrix<f64>,
    pub grad_mu: Vec<f64>,
}

/// `-log p` where `p = 1 / (1 + exp(D))`, without overflow.
#[inline]
pub(crate) fn softplus(d: f64) -> f64 {
    if d > 0.0 {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-D))`, the derivative of [`softplus`].
#[inline]
pub(crate) fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn kernel_difference(k: &DMatrix<f64>, t: &Triplet) -> f64 {
    let (a, b, c) = (t.head, t.near, t.far);
    k[(b, b)] - k[(c, c)] - 2.0 * k[(a, b)] + 2.0 * k[(a, c)]
}

/// Probability under the STE model that `K` satisfies `t`.
pub fn ste_probability(k: &KernelMatrix, t: &Triplet) -> f64 {
    sigmoid(-kernel_difference(k.matrix(), t))
}

/// Per-fit cache of `D` under each auxiliary kernel; the auxiliary kernels
/// never change during a fit, so only the `K0` part is recomputed.
#[derive(Clone, Debug)]
pub struct TripletGeometry {
    n: usize,
    kernels: usize,
    triplets: Vec<Triplet>,
    aux: Vec<f64>,
}

impl TripletGeometry {
    pub fn new(bank: &AuxKernelBank, set: &TripletSet) -> Result<Self> {
        if set.n() > bank.n() {
            return Err(Error::DimensionMismatch {
                expected: bank.n(),
                found: set.n(),
            });
        }
        let kernels = bank.len();
        let triplets = set.as_slice().to_vec();
        let mut aux = Vec::with_capacity(triplets.len() * kernels);
        for t in &triplets {
            for k in bank.kernels() {
                aux.push(kernel_difference(k.matrix(), t));
            }
        }
        Ok(Self {
            n: bank.n(),
            kernels,
            triplets,
            aux,
        })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    fn check(&self, k0: &DMatrix<f64>, mu: &[f64]) {
        assert_eq!(k0.nrows(), self.n, "K0 has the wrong size");
        assert_eq!(mu.len(), self.kernels, "mu has the wrong length");
    }

    #[inline]
    fn difference(&self, idx: usize, k0: &DMatrix<f64>, mu: &[f64]) -> f64 {
        let base = kernel_difference(k0, &self.triplets[idx]);
        let aux = &self.aux[idx * self.kernels..(idx + 1) * self.kernels];
        base + aux.iter().zip(mu).map(|(d, m)| d * m).sum::<f64>()
    }

    /// `D` for every triplet under `K0 + sum mu_i K_i`.
    pub fn differences(&self, k0: &DMatrix<f64>, mu: &[f64]) -> Vec<f64> {
        self.check(k0, mu);
        (0..self.triplets.len())
            .map(|i| self.difference(i, k0, mu))
            .collect()
    }

    pub fn value(&self, kind: LossKind, k0: &DMatrix<f64>, mu: &[f64]) -> f64 {
        self.check(k0, mu);
        let mut total = 0.0;
        for i in 0..self.triplets.len() {
            let d = self.difference(i, k0, mu);
            total += match kind {
                LossKind::Ste => softplus(d),
                LossKind::Gnmds => (d + 1.0).max(0.0),
            };
        }
        total
    }

    /// Value and gradients. For GNMDS only triplets with `D + 1 > 0`
    /// contribute, each with unit weight.
    pub fn evaluate(&self, kind: LossKind, k0: &DMatrix<f64>, mu: &[f64]) -> LossEval {
        self.check(k0, mu);
        let mut value = 0.0;
        let mut grad_k0 = DMatrix::zeros(self.n, self.n);
        let mut grad_mu = vec![0.0; self.kernels];
        for (i, t) in self.triplets.iter().enumerate() {
            let d = self.difference(i, k0, mu);
            let w = match kind {
                LossKind::Ste => {
                    value += softplus(d);
                    sigmoid(d)
                }
                LossKind::Gnmds => {
                    if d + 1.0 > 0.0 {
                        value += d + 1.0;
                        1.0
                    } else {
                        continue;
                    }
                }
            };
            let (a, b, c) = (t.head, t.near, t.far);
            grad_k0[(b, b)] += w;
            grad_k0[(c, c)] -= w;
            grad_k0[(a, b)] -= w;
            grad_k0[(b, a)] -= w;
            grad_k0[(a, c)] += w;
            grad_k0[(c, a)] += w;
            let aux = &self.aux[i * self.kernels..(i + 1) * self.kernels];
            for (g, d_aux) in grad_mu.iter_mut().zip(aux) {
                *g += w * d_aux;
            }
        }
        LossEval {
            value,
            grad_k0,
            grad_mu,
        }
    }
}

fn geometry_for(
    k0: &KernelMatrix,
    bank: &AuxKernelBank,
    set: &TripletSet,
) -> Result<TripletGeometry> {
    if k0.n() != bank.n() {
        return Err(Error::DimensionMismatch {
            expected: bank.n(),
            found: k0.n(),
        });
    }
    TripletGeometry::new(bank, set)
}

/// Negative log-likelihood of the STE model under `K0 + sum mu_i K_i`.
pub fn ste_loss(k0: &KernelMatrix, bank: &AuxKernelBank, set: &TripletSet) -> Result<LossEval> {
    evaluate(LossKind::Ste, k0, bank, set)
}

/// Unit-margin hinge loss `sum max(0, D + 1)` and its active-set subgradient.
pub fn gnmds_loss(k0: &KernelMatrix, bank: &AuxKernelBank, set: &TripletSet) -> Result<LossEval> {
    evaluate(LossKind::Gnmds, k0, bank, set)
}

pub fn evaluate(
    kind: LossKind,
    k0: &KernelMatrix,
    bank: &AuxKernelBank,
    set: &TripletSet,
) -> Result<LossEval> {
    let geometry = geometry_for(k0, bank, set)?;
    Ok(geometry.evaluate(kind, k0.matrix(), bank.weights()))
}

/// Triplets that violate the unit margin, `d(a,c) - d(a,b) < 1`.
pub fn active_triplets(k: &KernelMatrix, set: &TripletSet) -> TripletSet {
    let mut out = TripletSet::new(set.n());
    for t in set {
        // Same expression as the loss so the two agree at the kink.
        if kernel_difference(k.matrix(), t) + 1.0 > 0.0 {
            out.insert(*t).expect("subset of a valid set");
        }
    }
    out
}

/// `sum (D + 1)` without the hinge; equals the GNMDS loss when `set` is the
/// active set of `K`.
pub fn gnmds_smoothed(k: &KernelMatrix, set: &TripletSet) -> f64 {
    set.iter()
        .map(|t| kernel_difference(k.matrix(), t) + 1.0)
        .sum()
}
