//! Coded shards and the bookkeeping needed to find a sample inside them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::GeneratorMatrix;
use crate::dataset::{Dataset, SampleId};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// One weak learner's training set.
#[derive(Clone, Debug, PartialEq)]
pub struct CodedShard {
    pub features: Matrix,
    pub response: Vector,
}

/// Position of an uncoded sample: uncoded shard index and row within it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLocation {
    pub shard: usize,
    pub row: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodedStore {
    shards: Vec<CodedShard>,
    shard_size: usize,
    width: usize,
    generator: GeneratorMatrix,
    locations: BTreeMap<SampleId, SampleLocation>,
    dropped_ids: Vec<SampleId>,
    unlearned: BTreeSet<SampleId>,
}

/// Serializable part of a store; shard contents live in separate CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub shard_size: usize,
    pub width: usize,
    pub shard_files: Vec<String>,
    /// `(id, uncoded shard, row)` triples.
    pub locations: Vec<(SampleId, usize, usize)>,
    pub dropped_ids: Vec<SampleId>,
    pub unlearned_ids: Vec<SampleId>,
    pub generator_file: String,
}

/// Sums the uncoded blocks selected by column `j` of `g`, ascending in the
/// uncoded shard index. `block(i)` yields shard `i` as rows of width `width`.
fn combine<'a>(
    g: &GeneratorMatrix,
    j: usize,
    shard_size: usize,
    width: usize,
    block_x: impl Fn(usize, usize) -> &'a [f64],
    block_y: impl Fn(usize, usize) -> f64,
) -> Result<CodedShard> {
    let contributors = g.column_support(j);
    let (&first, rest) = contributors
        .split_first()
        .ok_or_else(|| Error::InvalidSpec(format!("coded shard {j} has no contributors")))?;
    let mut x = Vec::with_capacity(shard_size * width);
    let mut y = Vec::with_capacity(shard_size);
    for row in 0..shard_size {
        let start = x.len();
        x.extend_from_slice(block_x(first, row));
        let mut acc_y = block_y(first, row);
        for &i in rest {
            for (a, &b) in x[start..].iter_mut().zip(block_x(i, row)) {
                *a += b;
            }
            acc_y += block_y(i, row);
        }
        y.push(acc_y);
    }
    Ok(CodedShard {
        features: Matrix::new(shard_size, width, x)?,
        response: Vector::new(y)?,
    })
}

/// Splits `train` (already feature-mapped) into `s` contiguous shards of
/// `⌊n/s⌋` rows and combines them with `g`. Trailing rows are dropped.
pub fn encode(train: &Dataset, g: &GeneratorMatrix) -> Result<CodedStore> {
    let n = train.len();
    let s = g.s();
    if n < s {
        return Err(Error::TooFewSamples { n, s });
    }
    let shard_size = n / s;
    let width = train.n_features();
    let x = train.features();
    let y = train.response();
    let shards = (0..g.r())
        .map(|j| {
            combine(
                g,
                j,
                shard_size,
                width,
                |i, row| x.row(i * shard_size + row),
                |i, row| y[i * shard_size + row],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let locations = train.ids()[..s * shard_size]
        .iter()
        .enumerate()
        .map(|(pos, &id)| {
            (
                id,
                SampleLocation {
                    shard: pos / shard_size,
                    row: pos % shard_size,
                },
            )
        })
        .collect();
    Ok(CodedStore {
        shards,
        shard_size,
        width,
        generator: g.clone(),
        locations,
        dropped_ids: train.ids()[s * shard_size..].to_vec(),
        unlearned: BTreeSet::new(),
    })
}

impl CodedStore {
    pub fn shards(&self) -> &[CodedShard] {
        &self.shards
    }

    pub fn shard(&self, j: usize) -> &CodedShard {
        &self.shards[j]
    }

    /// Rows per coded (and uncoded) shard, `n̄`.
    pub fn shard_size(&self) -> usize {
        self.shard_size
    }

    /// Feature width of the coded rows.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn location(&self, id: SampleId) -> Option<SampleLocation> {
        self.locations.get(&id).copied()
    }

    pub fn locations(&self) -> &BTreeMap<SampleId, SampleLocation> {
        &self.locations
    }

    pub fn dropped_ids(&self) -> &[SampleId] {
        &self.dropped_ids
    }

    pub fn unlearned_ids(&self) -> &BTreeSet<SampleId> {
        &self.unlearned
    }

    pub fn is_unlearned(&self, id: SampleId) -> bool {
        self.unlearned.contains(&id)
    }

    /// Ids that still contribute to the coded shards.
    pub fn active_ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.locations.keys().copied().filter(|id| !self.unlearned.contains(id))
    }

    pub(crate) fn replace_shard(&mut self, j: usize, shard: CodedShard) {
        self.shards[j] = shard;
    }

    pub(crate) fn mark_unlearned(&mut self, id: SampleId) {
        self.unlearned.insert(id);
    }

    /// Coded shards rebuilt from scratch out of `survivors` (feature-mapped),
    /// using this store's generator and sample placement. Placed samples not
    /// present in `survivors` contribute zeros.
    pub fn rebuild(&self, survivors: &Dataset) -> Result<Vec<CodedShard>> {
        if survivors.n_features() != self.width {
            return Err(Error::DimensionMismatch(format!(
                "survivors have {} features, store has {}",
                survivors.n_features(),
                self.width
            )));
        }
        let s = self.generator.s();
        let n_bar = self.shard_size;
        let mut x = vec![0.0; s * n_bar * self.width];
        let mut y = vec![0.0; s * n_bar];
        for (pos, &id) in survivors.ids().iter().enumerate() {
            let Some(loc) = self.location(id) else {
                if self.dropped_ids.contains(&id) {
                    continue;
                }
                return Err(Error::UnknownSample(id));
            };
            let slot = loc.shard * n_bar + loc.row;
            x[slot * self.width..(slot + 1) * self.width].copy_from_slice(survivors.features().row(pos));
            y[slot] = survivors.response()[pos];
        }
        let width = self.width;
        (0..self.generator.r())
            .map(|j| {
                combine(
                    &self.generator,
                    j,
                    n_bar,
                    width,
                    |i, row| {
                        let slot = i * n_bar + row;
                        &x[slot * width..(slot + 1) * width]
                    },
                    |i, row| y[i * n_bar + row],
                )
            })
            .collect()
    }

    pub fn manifest(&self, shard_file: impl Fn(usize) -> String, generator_file: &str) -> StoreManifest {
        StoreManifest {
            shard_size: self.shard_size,
            width: self.width,
            shard_files: (0..self.shards.len()).map(shard_file).collect(),
            locations: self
                .locations
                .iter()
                .map(|(&id, loc)| (id, loc.shard, loc.row))
                .collect(),
            dropped_ids: self.dropped_ids.clone(),
            unlearned_ids: self.unlearned.iter().copied().collect(),
            generator_file: generator_file.to_string(),
        }
    }

    /// Reassembles a store from its manifest, generator and shard contents.
    pub fn from_parts(
        manifest: &StoreManifest,
        generator: GeneratorMatrix,
        shards: Vec<CodedShard>,
    ) -> Result<Self> {
        if shards.len() != generator.r() {
            return Err(Error::DimensionMismatch(format!(
                "{} shards for a generator with r = {}",
                shards.len(),
                generator.r()
            )));
        }
        for (j, sh) in shards.iter().enumerate() {
            if sh.features.shape() != (manifest.shard_size, manifest.width)
                || sh.response.len() != manifest.shard_size
            {
                return Err(Error::DimensionMismatch(format!("shard {j} has the wrong shape")));
            }
        }
        let mut locations = BTreeMap::new();
        for &(id, shard, row) in &manifest.locations {
            if shard >= generator.s() || row >= manifest.shard_size {
                return Err(Error::InvalidSpec(format!("location of sample {id} out of range")));
            }
            if locations.insert(id, SampleLocation { shard, row }).is_some() {
                return Err(Error::InvalidSpec(format!("sample {id} placed twice")));
            }
        }
        if locations.len() != generator.s() * manifest.shard_size {
            return Err(Error::InvalidSpec("sample map does not cover every shard slot".into()));
        }
        let unlearned: BTreeSet<SampleId> = manifest.unlearned_ids.iter().copied().collect();
        if let Some(&id) = unlearned.iter().find(|id| !locations.contains_key(id)) {
            return Err(Error::UnknownSample(id));
        }
        Ok(CodedStore {
            shards,
            shard_size: manifest.shard_size,
            width: manifest.width,
            generator,
            locations,
            dropped_ids: manifest.dropped_ids.clone(),
            unlearned,
        })
    }
}

impl CodedShard {
    /// CSV with header `f0..f{D'-1},y`; values in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let err = |e: csv::Error| Error::Serde(e.to_string());
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.features.cols()).map(|j| format!("f{j}")).collect();
        header.push("y".into());
        wtr.write_record(&header).map_err(err)?;
        for (row, y) in self.features.iter_rows().zip(self.response.iter()) {
            let mut cells: Vec<String> = row.iter().map(f64::to_string).collect();
            cells.push(y.to_string());
            wtr.write_record(&cells).map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let ds = crate::dataset::csv_io_read(reader, &crate::dataset::ColumnSelector::Name("y".into()))?;
        Ok(CodedShard {
            features: ds.features().clone(),
            response: ds.response().clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{rand_matrix, rand_matrix_minimal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ds(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let y = Vector::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn single_shard_is_identity() {
        let ds = random_ds(9, 3, 1);
        let store = encode(&ds, &GeneratorMatrix::single()).unwrap();
        assert_eq!(store.shard(0).features, *ds.features());
        assert_eq!(store.shard(0).response, *ds.response());
        assert!(store.dropped_ids().is_empty());
    }

    #[test]
    fn two_into_one_sums() {
        let ds = random_ds(8, 2, 2);
        let g = GeneratorMatrix::from_rows(vec![vec![1], vec![1]], 1.0, 0).unwrap();
        let store = encode(&ds, &g).unwrap();
        for row in 0..4 {
            for c in 0..2 {
                assert_eq!(
                    store.shard(0).features.get(row, c),
                    ds.features().get(row, c) + ds.features().get(row + 4, c)
                );
            }
            assert_eq!(store.shard(0).response[row], ds.response()[row] + ds.response()[row + 4]);
        }
    }

    #[test]
    fn matches_direct_summation() {
        let ds = random_ds(12, 2, 3);
        let g = rand_matrix(3, 2, 0.6, 4).unwrap();
        let store = encode(&ds, &g).unwrap();
        let n_bar = 4;
        for j in 0..2 {
            for row in 0..n_bar {
                for c in 0..2 {
                    let mut expected = 0.0;
                    for i in 0..3 {
                        expected += f64::from(g.get(i, j)) * ds.features().get(i * n_bar + row, c);
                    }
                    assert!((store.shard(j).features.get(row, c) - expected).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn drops_remainder_and_maps_ids() {
        let ds = random_ds(11, 2, 5);
        let g = rand_matrix_minimal(3, 3, 1).unwrap();
        let store = encode(&ds, &g).unwrap();
        assert_eq!(store.shard_size(), 3);
        assert_eq!(store.dropped_ids(), &[9, 10]);
        assert_eq!(store.locations().len(), 9);
        assert_eq!(store.location(4), Some(SampleLocation { shard: 1, row: 1 }));
        assert!(matches!(
            encode(&random_ds(2, 1, 0), &g),
            Err(Error::TooFewSamples { n: 2, s: 3 })
        ));
    }

    #[test]
    fn permutation_code_copies_shards() {
        let ds = random_ds(12, 2, 6);
        let g = rand_matrix_minimal(4, 4, 2).unwrap();
        let store = encode(&ds, &g).unwrap();
        for i in 0..4 {
            let j = g.row_support(i)[0];
            let block = ds.features().select_rows(&(i * 3..i * 3 + 3).collect::<Vec<_>>());
            assert_eq!(store.shard(j).features, block);
        }
    }

    #[test]
    fn rebuild_equals_encode_bitwise() {
        let ds = random_ds(40, 3, 7);
        let g = rand_matrix(5, 3, 0.5, 3).unwrap();
        let store = encode(&ds, &g).unwrap();
        assert_eq!(store.rebuild(&ds).unwrap(), store.shards().to_vec());
    }

    #[test]
    fn rate_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let r = rng.random_range(1..6);
            let s = r * rng.random_range(1..5);
            let n = s + rng.random_range(0..40);
            let store = encode(&random_ds(n, 1, 1), &rand_matrix_minimal(s, r, 3).unwrap()).unwrap();
            let m = r * store.shard_size();
            let used = s * store.shard_size();
            assert_eq!(store.generator().rate(), used as f64 / m as f64);
        }
    }

    #[test]
    fn shard_csv_round_trip() {
        let ds = random_ds(6, 2, 9);
        let store = encode(&ds, &GeneratorMatrix::single()).unwrap();
        let mut buf = Vec::new();
        store.shard(0).write_csv(&mut buf).unwrap();
        assert_eq!(CodedShard::read_csv(buf.as_slice()).unwrap(), *store.shard(0));
    }

    #[test]
    fn manifest_round_trip() {
        let ds = random_ds(20, 2, 10);
        let g = rand_matrix(4, 2, 0.5, 1).unwrap();
        let store = encode(&ds, &g).unwrap();
        let manifest = store.manifest(|j| format!("shards/shard_{j}.csv"), "generator.json");
        let back = CodedStore::from_parts(&manifest, g, store.shards().to_vec()).unwrap();
        assert_eq!(back, store);
    }
}
