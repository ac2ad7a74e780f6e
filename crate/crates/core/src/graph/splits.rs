use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, Graph, Labels, Split};
use crate::error::{GsanError, Result};

pub const TRAIN_PER_CLASS: usize = 20;
pub const STANDARD_VAL: usize = 500;
pub const STANDARD_TEST: usize = 1000;

/// How node masks are chosen for transductive bundles.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitSpec {
    /// Shipped masks when present, else 20 per class / 500 / 1000.
    #[default]
    Standard,
    Random {
        seed: u64,
        train: usize,
        val: usize,
        test: usize,
    },
}

/// Returns a copy of `bundle` whose graphs carry masks chosen by `spec`.
///
/// Inductive bundles split whole graphs, so only `Standard` applies to them
/// and their node masks are left untouched.
pub fn standard_splits(bundle: &DatasetBundle, spec: &SplitSpec) -> Result<DatasetBundle> {
    let mut out = bundle.clone();
    if bundle.is_inductive() {
        return match spec {
            SplitSpec::Standard => Ok(out),
            SplitSpec::Random { .. } => Err(GsanError::Invalid(
                "random node splits do not apply to inductive bundles".into(),
            )),
        };
    }
    for g in &mut out.graphs {
        let masks = match spec {
            SplitSpec::Standard if g.masks().iter().any(|&s| s != Split::None) => continue,
            SplitSpec::Standard => planetoid_masks(g)?,
            SplitSpec::Random {
                seed,
                train,
                val,
                test,
            } => random_masks(g.num_nodes(), *seed, *train, *val, *test)?,
        };
        g.set_masks(masks)?;
    }
    Ok(out)
}

/// First 20 nodes of each class (index order) train, the next 500 other nodes
/// validate, the last 1000 nodes test.
fn planetoid_masks(g: &Graph) -> Result<Vec<Split>> {
    let Labels::Classes(classes) = g.labels() else {
        return Err(GsanError::Invalid("standard split needs single-label classes".into()));
    };
    let n = g.num_nodes();
    let mut masks = vec![Split::None; n];
    let n_classes = classes.iter().max().map_or(0, |&c| c + 1);
    let mut taken = vec![0usize; n_classes];
    let mut n_train = 0;
    for (i, &c) in classes.iter().enumerate() {
        if taken[c] < TRAIN_PER_CLASS {
            taken[c] += 1;
            masks[i] = Split::Train;
            n_train += 1;
        }
    }
    if n_train + STANDARD_VAL + STANDARD_TEST > n {
        return Err(GsanError::Invalid(format!(
            "standard split needs {} train + {} val + {} test nodes, graph has {}",
            n_train, STANDARD_VAL, STANDARD_TEST, n
        )));
    }
    let mut test = 0;
    for i in (0..n).rev() {
        if test == STANDARD_TEST {
            break;
        }
        if masks[i] == Split::None {
            masks[i] = Split::Test;
            test += 1;
        }
    }
    let mut val = 0;
    for m in masks.iter_mut() {
        if val == STANDARD_VAL {
            break;
        }
        if *m == Split::None {
            *m = Split::Val;
            val += 1;
        }
    }
    Ok(masks)
}

pub fn random_masks(n: usize, seed: u64, train: usize, val: usize, test: usize) -> Result<Vec<Split>> {
    if train + val + test > n {
        return Err(GsanError::Invalid(format!(
            "split sizes {}+{}+{} exceed {} nodes",
            train, val, test, n
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut masks = vec![Split::None; n];
    for (rank, &i) in order.iter().enumerate() {
        masks[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else if rank < train + val + test {
            Split::Test
        } else {
            Split::None
        };
    }
    Ok(masks)
}
