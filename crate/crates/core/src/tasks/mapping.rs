use std::io::Write;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// One-to-one symbol mapping `x ↦ π(x)` split into seen and held-out pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolMappingDataset {
    pub n: usize,
    /// `permutation[x]` is the output paired with input `x`.
    pub permutation: Vec<usize>,
    pub train_inputs: Vec<usize>,
    pub heldout_inputs: Vec<usize>,
    /// Outputs never seen in training (the images of the held-out inputs).
    pub unseen_outputs: Vec<usize>,
}

impl SymbolMappingDataset {
    pub fn target(&self, x: usize) -> usize {
        self.permutation[x]
    }

    pub fn train_targets(&self) -> Vec<usize> {
        self.train_inputs.iter().map(|&x| self.permutation[x]).collect()
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.n];
        for (x, &y) in self.permutation.iter().enumerate() {
            inv[y] = x;
        }
        inv
    }

    /// Rows `input,output,split`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["input", "output", "split"])?;
        for (split, xs) in [("train", &self.train_inputs), ("heldout", &self.heldout_inputs)] {
            for &x in xs {
                w.write_record([x.to_string(), self.permutation[x].to_string(), split.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn gen_one_to_one(n: usize, n_train: usize, seed: u64) -> Result<SymbolMappingDataset> {
    if n_train == 0 || n_train >= n {
        return Err(Error::param(format!("need 0 < n_train < n, got n_train={n_train}, n={n}")));
    }
    let mut rng = RandomStream::new(seed, "one-to-one");
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng);
    let mut inputs: Vec<usize> = (0..n).collect();
    inputs.shuffle(&mut rng);
    let mut train_inputs = inputs[..n_train].to_vec();
    let mut heldout_inputs = inputs[n_train..].to_vec();
    train_inputs.sort_unstable();
    heldout_inputs.sort_unstable();
    let mut unseen_outputs: Vec<usize> = heldout_inputs.iter().map(|&x| permutation[x]).collect();
    unseen_outputs.sort_unstable();
    Ok(SymbolMappingDataset {
        n,
        permutation,
        train_inputs,
        heldout_inputs,
        unseen_outputs,
    })
}
