//! Exact rank of 0/1 matrices over the rationals.
//!
//! Fraction-free (Bareiss) elimination keeps every intermediate entry an
//! integer minor of the input, so no tolerance is involved. The `i128` path
//! covers almost every generator matrix; on overflow the elimination restarts
//! with arbitrary-precision integers.

use num_bigint::BigInt;

use crate::error::{Error, Result};

/// Rank over Q of a binary matrix given as rows. Entries must be 0 or 1.
pub fn binary_rank<R: AsRef<[u8]>>(rows: &[R]) -> Result<usize> {
    let ncols = rows.first().map_or(0, |r| r.as_ref().len());
    let mut a: Vec<Vec<i128>> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != ncols {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        if let Some(&v) = row.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidSpec(format!("non-binary entry {v} in row {i}")));
        }
        a.push(row.iter().map(|&v| v as i128).collect());
    }
    match bareiss_i128(a.clone()) {
        Some(rank) => Ok(rank),
        None => Ok(bareiss_big(
            a.into_iter()
                .map(|r| r.into_iter().map(BigInt::from).collect())
                .collect(),
        )),
    }
}

fn bareiss_i128(mut a: Vec<Vec<i128>>) -> Option<usize> {
    let nrows = a.len();
    let ncols = a.first().map_or(0, Vec::len);
    let mut prev: i128 = 1;
    let mut rank = 0;
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(p) = (rank..nrows).find(|&i| a[i][col] != 0) else {
            continue;
        };
        a.swap(rank, p);
        let pivot = a[rank][col];
        for i in rank + 1..nrows {
            let lead = a[i][col];
            for j in col + 1..ncols {
                let num = pivot
                    .checked_mul(a[i][j])?
                    .checked_sub(lead.checked_mul(a[rank][j])?)?;
                debug_assert_eq!(num % prev, 0);
                a[i][j] = num / prev;
            }
            a[i][col] = 0;
        }
        prev = pivot;
        rank += 1;
    }
    Some(rank)
}

fn bareiss_big(mut a: Vec<Vec<BigInt>>) -> usize {
    let nrows = a.len();
    let ncols = a.first().map_or(0, Vec::len);
    let zero = BigInt::from(0);
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(p) = (rank..nrows).find(|&i| a[i][col] != zero) else {
            continue;
        };
        a.swap(rank, p);
        let pivot = a[rank][col].clone();
        for i in rank + 1..nrows {
            let lead = a[i][col].clone();
            for j in col + 1..ncols {
                let num = &pivot * &a[i][j] - &lead * &a[rank][j];
                a[i][j] = num / &prev;
            }
            a[i][col] = zero.clone();
        }
        prev = pivot;
        rank += 1;
    }
    rank
}
