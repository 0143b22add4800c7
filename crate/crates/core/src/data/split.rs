use rand::seq::SliceRandom;

use super::BagContainer;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Seeded train/test split. `round(fraction * n)` bags go to the training
/// side (per class when `stratified`, clamped so each class with at least two
/// bags lands on both sides). Both outputs keep the input order.
pub fn split(
    container: &BagContainer,
    train_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(BagContainer, BagContainer)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = rng::stream(seed, Stream::Split);
    let n = container.bags.len();
    let mut in_train = vec![false; n];

    if stratified {
        for class in 0..container.classes {
            let mut members: Vec<usize> = (0..n).filter(|&i| container.bags[i].label == class).collect();
            if members.is_empty() {
                continue;
            }
            if members.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "class {class} has {} bag(s); stratified splitting needs at least 2",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            let take = ((train_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
            for &i in &members[..take] {
                in_train[i] = true;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let take = (train_fraction * n as f64).round() as usize;
        for &i in &order[..take] {
            in_train[i] = true;
        }
    }

    let pick = |side: bool| BagContainer {
        classes: container.classes,
        dim: container.dim,
        bags: container
            .bags
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == side)
            .map(|(b, _)| b.clone())
            .collect(),
    };
    Ok((pick(true), pick(false)))
}
