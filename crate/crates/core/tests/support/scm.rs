//! Random small temporal models and a reachability oracle.

use causaldrive::scm::{
    equation, CausalModel, Distribution, ExogenousSpec, ParentRef, Rollout, StructuralEquation, VarKey,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Variable `i` is exogenous when `i < exo`, otherwise it has parents
/// `(j, lagged, weight)`. Current-slice parents are always earlier
/// variables, so index order is a topological order.
#[derive(Debug, Clone)]
pub struct Blueprint {
    pub exo: usize,
    pub parents: Vec<Vec<(usize, bool, f64)>>,
    pub bias: Vec<f64>,
}

impl Blueprint {
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    /// Normalises raw parent lists so that forward references are lagged.
    pub fn new(exo: usize, raw: Vec<Vec<(usize, bool, f64)>>, bias: Vec<f64>) -> Self {
        let parents = raw
            .into_iter()
            .enumerate()
            .map(|(i, ps)| ps.into_iter().map(|(j, lag, w)| (j, lag || j >= i, w)).collect())
            .collect();
        Self { exo, parents, bias }
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(2..=10);
        let exo = rng.random_range(1..n);
        let raw = (0..n)
            .map(|_| {
                (0..rng.random_range(0..4))
                    .map(|_| {
                        (
                            rng.random_range(0..n),
                            rng.random_bool(0.5),
                            rng.random_range(-1.5..1.5),
                        )
                    })
                    .collect()
            })
            .collect();
        let bias = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(exo, raw, bias)
    }
}

pub fn key(i: usize) -> VarKey {
    VarKey::new("m", format!("v{i}"))
}

pub fn build(bp: &Blueprint) -> CausalModel<f64> {
    let exo = (0..bp.exo)
        .map(|i| ExogenousSpec {
            variable: key(i),
            distribution: Distribution::Normal {
                mean: bp.bias[i],
                std_dev: 0.5,
            },
        })
        .collect();
    let eqs = (bp.exo..bp.len())
        .map(|i| {
            let ps = &bp.parents[i];
            let refs = ps
                .iter()
                .map(|&(j, lag, _)| {
                    if lag {
                        ParentRef::previous(key(j))
                    } else {
                        ParentRef::current(key(j))
                    }
                })
                .collect();
            let weights: Vec<f64> = ps.iter().map(|p| p.2).collect();
            let b = bp.bias[i];
            StructuralEquation::new(
                key(i),
                refs,
                equation(move |_, vals: &[&f64]| {
                    Ok((b + weights.iter().zip(vals).map(|(w, v)| w * **v).sum::<f64>()).tanh())
                }),
            )
            .with_initial(b)
        })
        .collect();
    CausalModel::build(eqs, exo).expect("blueprint is acyclic")
}

/// Whether two rollouts agree on every `(var, slice)` selected by `keep`.
pub fn same(a: &Rollout<f64>, b: &Rollout<f64>, n: usize, keep: impl Fn(usize, usize) -> bool) -> bool {
    (0..a.slices()).all(|t| {
        (0..n)
            .filter(|&i| keep(i, t))
            .all(|i| a.value(&key(i), t) == b.value(&key(i), t))
    })
}

/// Nodes `(slice, var)` reachable in the unrolled graph from `target` at
/// slices `from..`.
pub fn affected(bp: &Blueprint, target: usize, from: usize, slices: usize) -> Vec<Vec<bool>> {
    let n = bp.len();
    let mut hit = vec![vec![false; n]; slices];
    for t in 0..slices {
        for i in 0..n {
            if i == target && t >= from {
                hit[t][i] = true;
                continue;
            }
            if i < bp.exo {
                continue;
            }
            // Slice 0 of a lagged equation is its initial value.
            hit[t][i] = bp.parents[i]
                .iter()
                .any(|&(j, lag, _)| if lag { t > 0 && hit[t - 1][j] } else { hit[t][j] });
        }
    }
    hit
}
