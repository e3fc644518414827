//! Named-tensor parameter store with a deterministic initializer and a
//! simple binary container: a text header (`FPM1 <count>` then one
//! `name dim dim...` line per tensor) followed by all values as
//! little-endian 64-bit floats in header order.

use crate::error::{FppError, Result};
use crate::rng::SplitMix64;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "FPM1";

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore { names: Vec::new(), shapes: Vec::new(), offsets: Vec::new(), data: Vec::new() }
    }

    /// Registers a zero tensor and returns its index.
    pub fn push(&mut self, name: &str, shape: &[usize]) -> usize {
        let n: usize = shape.iter().product();
        self.names.push(name.to_string());
        self.shapes.push(shape.to_vec());
        self.offsets.push(self.data.len());
        self.data.extend(std::iter::repeat(0.0).take(n));
        self.names.len() - 1
    }

    pub fn tensor_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn shape(&self, idx: usize) -> &[usize] {
        &self.shapes[idx]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn range(&self, idx: usize) -> std::ops::Range<usize> {
        let start = self.offsets[idx];
        let n: usize = self.shapes[idx].iter().product();
        start..start + n
    }

    pub fn slice(&self, idx: usize) -> &[f64] {
        &self.data[self.range(idx)]
    }

    pub fn slice_mut(&mut self, idx: usize) -> &mut [f64] {
        let r = self.range(idx);
        &mut self.data[r]
    }

    /// Views into one tensor of `flat` (a gradient buffer aligned with
    /// this store's layout).
    pub fn slice_of<'a>(&self, flat: &'a [f64], idx: usize) -> &'a [f64] {
        &flat[self.range(idx)]
    }

    pub fn slice_of_mut<'a>(&self, flat: &'a mut [f64], idx: usize) -> &'a mut [f64] {
        &mut flat[self.range(idx)]
    }

    /// Seeded uniform init in `+-sqrt(6 / fan_in)` for weights; biases
    /// (any name ending in `.b`) stay zero. `fan_in` is the product of
    /// all but the leading dimension for convolutions and of all but the
    /// second for transposed convolutions (names containing `.up`).
    pub fn init_uniform(&mut self, seed: u64) {
        for idx in 0..self.names.len() {
            if self.names[idx].ends_with(".b") {
                continue;
            }
            let shape = self.shapes[idx].clone();
            let fan_in: usize = if self.names[idx].contains(".up") {
                shape[0] * shape[2..].iter().product::<usize>()
            } else {
                shape[1..].iter().product()
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut rng = SplitMix64::new(seed ^ crate::rng::mix(idx as u64 + 1));
            for x in self.slice_mut(idx) {
                *x = rng.uniform(-bound, bound);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &x) in self.data.iter().enumerate() {
            if !x.is_finite() {
                return Err(FppError::InvalidArgument(format!(
                    "non-finite parameter value {x} at flat index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "{MAGIC} {}\n", self.names.len())?;
        for (name, shape) in self.names.iter().zip(&self.shapes) {
            write!(w, "{name}")?;
            for d in shape {
                write!(w, " {d}")?;
            }
            writeln!(w)?;
        }
        for &x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(FppError::MalformedHeader(format!("bad magic in {line:?}")));
        }
        let count: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FppError::MalformedHeader(format!("bad tensor count in {line:?}")))?;
        let mut store = ParameterStore::new();
        for _ in 0..count {
            line.clear();
            reader.read_line(&mut line)?;
            let mut parts = line.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| FppError::MalformedHeader("missing tensor name".into()))?;
            let shape: Vec<usize> = parts
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| FppError::MalformedHeader(format!("bad shape for {name}: {e}")))?;
            if shape.is_empty() || shape.iter().any(|&d| d == 0) {
                return Err(FppError::MalformedHeader(format!("empty shape for {name}")));
            }
            store.push(name, &shape);
        }
        let expected = store.data.len() * 8;
        let mut payload = vec![0u8; expected];
        let mut got = 0;
        while got < expected {
            let n = reader.read(&mut payload[got..])?;
            if n == 0 {
                return Err(FppError::TruncatedPayload { expected, got });
            }
            got += n;
        }
        for (i, chunk) in payload.chunks_exact(8).enumerate() {
            store.data[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        store.validate()?;
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = std::fs::File::open(path)
            .map_err(|_| FppError::MissingFile(path.display().to_string()))?;
        Self::read_from(&mut file)
    }
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}
