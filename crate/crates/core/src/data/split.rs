use crate::{Error, Result};

/// Contiguous time-ordered train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

pub const MIN_SPLIT_ROWS: usize = 10;

/// `(train, validation, test)` sizes: floor(70%), floor(10%), remainder.
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < MIN_SPLIT_ROWS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SPLIT_ROWS} rows to split, got {n}"
        )));
    }
    let train = n * 7 / 10;
    let validation = n / 10;
    Ok((train, validation, n - train - validation))
}

/// Cuts already time-sorted data into 70/10/20 blocks.
pub fn split<T>(mut data: Vec<T>) -> Result<SplitBundle<T>> {
    let (train, validation, _) = split_sizes(data.len())?;
    let test = data.split_off(train + validation);
    let validation = data.split_off(train);
    Ok(SplitBundle {
        train: data,
        validation,
        test,
    })
}
