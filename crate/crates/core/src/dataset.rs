//! Dataset construction: sliding windows, reflection, nearest-neighbour
//! downscaling, tile statistics and the on-disk dataset cache.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::LevelGrid;
use crate::tile::{Tile, TileAlphabet, TILE_COUNT};

/// Halves a grid by sampling the top-left cell of every 2x2 block.
pub fn downscale_nearest(grid: &LevelGrid) -> Result<LevelGrid> {
    if !grid.width().is_multiple_of(2) || !grid.height().is_multiple_of(2) {
        return Err(Error::shape(format!(
            "cannot halve a {}x{} grid",
            grid.width(),
            grid.height()
        )));
    }
    let (w, h) = (grid.width() / 2, grid.height() / 2);
    let mut cells = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            cells.push(grid.get(2 * x, 2 * y));
        }
    }
    LevelGrid::from_cells(w, h, cells)
}

/// All `size`x`size` windows at stride 1 in row-major scan order.
pub fn slide_windows(level: &LevelGrid, size: usize) -> Result<Vec<LevelGrid>> {
    if size == 0 || size > level.width() || size > level.height() {
        return Err(Error::Empty(format!(
            "window {size} does not fit in a {}x{} level",
            level.width(),
            level.height()
        )));
    }
    let mut out = Vec::with_capacity((level.width() - size + 1) * (level.height() - size + 1));
    for y in 0..=level.height() - size {
        for x in 0..=level.width() - size {
            out.push(level.crop(x, y, size, size));
        }
    }
    Ok(out)
}

/// Mirrors a grid left to right.
pub fn reflect_x(grid: &LevelGrid) -> LevelGrid {
    let mut out = grid.clone();
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            out.set(grid.width() - 1 - x, y, grid.get(x, y));
        }
    }
    out
}

/// A low-resolution input and the high-resolution segment it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPair {
    pub low: LevelGrid,
    pub high: LevelGrid,
}

impl SegmentPair {
    pub fn from_high(high: LevelGrid) -> Result<Self> {
        Ok(SegmentPair {
            low: downscale_nearest(&high)?,
            high,
        })
    }
}

/// Paired dataset for one window size.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub window: usize,
    /// Windows cut from the corpus before reflection.
    pub raw_windows: usize,
    pub pairs: Vec<SegmentPair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn low_size(&self) -> usize {
        self.window / 2
    }

    /// A seeded random subset (without replacement), kept in dataset order.
    pub fn subset(&self, count: usize, seed: u64) -> Dataset {
        if count >= self.pairs.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.pairs.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(count);
        idx.sort_unstable();
        Dataset {
            window: self.window,
            raw_windows: self.raw_windows,
            pairs: idx.into_iter().map(|i| self.pairs[i].clone()).collect(),
        }
    }

    pub fn highs(&self) -> Vec<LevelGrid> {
        self.pairs.iter().map(|p| p.high.clone()).collect()
    }

    pub fn lows(&self) -> Vec<LevelGrid> {
        self.pairs.iter().map(|p| p.low.clone()).collect()
    }
}

/// Cuts every level into windows, adds each window's mirror image right
/// after it, and pairs every segment with its half-size downscale.
pub fn build_dataset(corpus: &[LevelGrid], window: usize) -> Result<Dataset> {
    if window != 8 && window != 16 {
        return Err(Error::invalid(format!(
            "window must be 8 or 16, got {window}"
        )));
    }
    let mut raw_windows = 0;
    let mut pairs = Vec::new();
    for level in corpus {
        for segment in slide_windows(level, window)? {
            raw_windows += 1;
            let mirrored = reflect_x(&segment);
            pairs.push(SegmentPair::from_high(segment)?);
            pairs.push(SegmentPair::from_high(mirrored)?);
        }
    }
    Ok(Dataset {
        window,
        raw_windows,
        pairs,
    })
}

/// Probability of each tile, indexed by tile id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileDistribution {
    probabilities: [f64; TILE_COUNT],
}

impl TileDistribution {
    pub fn new(probabilities: [f64; TILE_COUNT]) -> Result<Self> {
        let sum: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "tile probabilities must be nonnegative and sum to 1 (sum {sum})"
            )));
        }
        Ok(TileDistribution { probabilities })
    }

    pub fn point_mass(tile: Tile) -> Self {
        let mut probabilities = [0.0; TILE_COUNT];
        probabilities[tile.index()] = 1.0;
        TileDistribution { probabilities }
    }

    pub fn probabilities(&self) -> &[f64; TILE_COUNT] {
        &self.probabilities
    }

    pub fn probability(&self, tile: Tile) -> f64 {
        self.probabilities[tile.index()]
    }
}

/// Empirical tile frequencies over every cell of every segment.
pub fn tile_frequency(segments: &[LevelGrid]) -> Result<TileDistribution> {
    let counts = tile_counts(segments);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("no cells to count".into()));
    }
    let mut probabilities = [0.0; TILE_COUNT];
    for (p, c) in probabilities.iter_mut().zip(counts) {
        *p = c as f64 / total as f64;
    }
    TileDistribution::new(probabilities)
}

pub(crate) fn tile_counts(segments: &[LevelGrid]) -> [u64; TILE_COUNT] {
    let mut counts = [0u64; TILE_COUNT];
    for grid in segments {
        for t in grid.cells() {
            counts[t.index()] += 1;
        }
    }
    counts
}

/// i.i.d. per-cell sample from `dist`.
pub fn sample_noise(width: usize, height: usize, dist: &TileDistribution, seed: u64) -> LevelGrid {
    sample_noise_with(width, height, dist, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_noise_with(
    width: usize,
    height: usize,
    dist: &TileDistribution,
    rng: &mut impl rand::Rng,
) -> LevelGrid {
    let index = WeightedIndex::new(dist.probabilities()).expect("validated distribution");
    let cells = (0..width * height)
        .map(|_| Tile::ALL[index.sample(rng)])
        .collect();
    LevelGrid::from_cells(width, height, cells).expect("cell count matches")
}

const DATASET_MAGIC: &[u8; 8] = b"LODEDSET";
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub alphabet: TileAlphabet,
    pub window: usize,
    pub low_size: usize,
    pub high_size: usize,
    pub raw_windows: usize,
    pub pair_count: usize,
}

/// Serializes a dataset: magic, version, JSON header, one tile-id byte per
/// cell (low grid then high grid for each pair), SHA-256 trailer.
pub fn write_dataset(dataset: &Dataset, mut out: impl Write) -> Result<String> {
    let header = DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        alphabet: TileAlphabet::lode_runner(),
        window: dataset.window,
        low_size: dataset.low_size(),
        high_size: dataset.window,
        raw_windows: dataset.raw_windows,
        pair_count: dataset.pairs.len(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut body = Vec::with_capacity(
        16 + header_json.len()
            + dataset.pairs.len() * (header.low_size.pow(2) + header.high_size.pow(2)),
    );
    body.extend_from_slice(DATASET_MAGIC);
    body.extend_from_slice(&DATASET_FORMAT_VERSION.to_le_bytes());
    body.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    body.extend_from_slice(&header_json);
    for pair in &dataset.pairs {
        body.extend(pair.low.cells().iter().map(|t| t.id()));
        body.extend(pair.high.cells().iter().map(|t| t.id()));
    }
    let digest = Sha256::digest(&body);
    out.write_all(&body)?;
    out.write_all(&digest)?;
    Ok(hex::encode(digest))
}

pub fn read_dataset(mut input: impl Read) -> Result<Dataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let body = verify_trailer(&bytes, DATASET_MAGIC)?;
    let (header, payload): (DatasetHeader, &[u8]) = read_header(body, DATASET_FORMAT_VERSION)?;
    if header.alphabet != TileAlphabet::lode_runner() {
        return Err(Error::Format(
            "dataset alphabet differs from the Lode Runner set".into(),
        ));
    }
    let (low, high) = (header.low_size.pow(2), header.high_size.pow(2));
    if payload.len() != header.pair_count * (low + high) {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header promises {} pairs",
            payload.len(),
            header.pair_count
        )));
    }
    let pairs = payload
        .chunks_exact(low + high)
        .map(|chunk| {
            Ok(SegmentPair {
                low: LevelGrid::from_ids(header.low_size, header.low_size, &chunk[..low])?,
                high: LevelGrid::from_ids(header.high_size, header.high_size, &chunk[low..])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        window: header.window,
        raw_windows: header.raw_windows,
        pairs,
    })
}

/// Checks magic and SHA-256 trailer; returns everything before the trailer.
pub(crate) fn verify_trailer<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Result<&'a [u8]> {
    if bytes.len() < magic.len() + 8 + 32 {
        return Err(Error::Format("file is truncated".into()));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format("bad magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(Error::Checksum {
            expected: hex::encode(trailer),
            found: hex::encode(digest),
        });
    }
    Ok(body)
}

pub(crate) fn read_header<H: serde::de::DeserializeOwned>(
    body: &[u8],
    expected_version: u32,
) -> Result<(H, &[u8])> {
    let version = u32::from_le_bytes(body[8..12].try_into().expect("length checked"));
    if version != expected_version {
        return Err(Error::Format(format!(
            "format version {version} is not supported (expected {expected_version})"
        )));
    }
    let len = u32::from_le_bytes(body[12..16].try_into().expect("length checked")) as usize;
    if body.len() < 16 + len {
        return Err(Error::Format("header is truncated".into()));
    }
    let header = serde_json::from_slice(&body[16..16 + len])?;
    Ok((header, &body[16 + len..]))
}
