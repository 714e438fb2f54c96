use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::fsio::write_atomic;
use crate::models::{FunctionSample, UniformGrid};
use crate::pde::{PdeKind, PdeSpec};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 5] = b"PIDS1";
pub const DATASET_VERSION: u32 = 1;

/// Refuse headers that would need more than this many values per array.
const MAX_VALUES: u64 = 1 << 34;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Counts and grid sizes recorded in the header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetShape {
    pub train: usize,
    pub test: usize,
    /// Sensors per input function.
    pub m: usize,
    pub n_t: usize,
    pub n_x: usize,
}

impl DatasetShape {
    /// Shapes of the stored benchmark datasets.
    pub fn default_for(kind: PdeKind) -> Self {
        let (train, test, m, n_x) = match kind {
            PdeKind::Advection => (1000, 100, 101, 101),
            PdeKind::DiffusionReaction => (10_000, 1000, 101, 101),
            PdeKind::Burgers => (1000, 500, 101, 101),
            PdeKind::Kdv => (500, 100, 257, 129),
        };
        Self {
            train,
            test,
            m,
            n_t: 101,
            n_x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSplit {
    /// `[N × m]`
    pub sensors: Array2<f64>,
    /// `[N × n_t × n_x]`; `None` when loaded without solutions.
    pub solutions: Option<Array3<f64>>,
}

impl DataSplit {
    pub fn len(&self) -> usize {
        self.sensors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A generated dataset: sensor values and reference solutions for both splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub pde: PdeSpec,
    pub sensor_grid: UniformGrid,
    pub t_axis: UniformGrid,
    pub x_axis: UniformGrid,
    pub train: DataSplit,
    pub test: DataSplit,
}

impl Dataset {
    pub fn shape(&self) -> DatasetShape {
        DatasetShape {
            train: self.train.len(),
            test: self.test.len(),
            m: self.sensor_grid.points,
            n_t: self.t_axis.points,
            n_x: self.x_axis.points,
        }
    }

    pub fn split(&self, split: Split) -> &DataSplit {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// One record of a split as a [`FunctionSample`].
    pub fn sample(&self, split: Split, index: usize) -> FunctionSample {
        let data = self.split(split);
        FunctionSample {
            sensors: data.sensors.row(index).to_vec(),
            sensor_grid: self.sensor_grid,
            solution: data
                .solutions
                .as_ref()
                .map(|s| s.index_axis(ndarray::Axis(0), index).to_owned()),
            t_axis: self.t_axis,
            x_axis: self.x_axis,
        }
    }

    pub fn samples(&self, split: Split) -> Vec<FunctionSample> {
        (0..self.split(split).len()).map(|i| self.sample(split, i)).collect()
    }

    /// Axes implied by a spec and header sizes.
    pub fn axes(pde: &PdeSpec, shape: &DatasetShape) -> Result<(UniformGrid, UniformGrid, UniformGrid)> {
        if shape.m < 2 || shape.n_t < 2 || shape.n_x < 2 || !(pde.length > 0.0) {
            return Err(Error::Format(format!("degenerate dataset grids {shape:?}")));
        }
        Ok((
            UniformGrid::new(0.0, pde.length, shape.m),
            UniformGrid::new(0.0, 1.0, shape.n_t),
            UniformGrid::new(0.0, pde.length, shape.n_x),
        ))
    }

    /// Writes the binary layout: magic, header, then per split the sensor
    /// array followed by the solution array.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, &self.pde, &self.shape())?;
        for split in [&self.train, &self.test] {
            write_f64s(w, split.sensors.iter().copied())?;
            let sol = split
                .solutions
                .as_ref()
                .ok_or_else(|| Error::Contract("cannot write a dataset loaded without solutions".into()))?;
            write_f64s(w, sol.iter().copied())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_to(w))
    }

    pub fn read_from<R: Read>(r: &mut R, with_train_solutions: bool) -> Result<Self> {
        let (pde, shape) = read_header(r)?;
        let (sensor_grid, t_axis, x_axis) = Self::axes(&pde, &shape)?;
        let cells = shape.n_t * shape.n_x;
        let mut read_split = |n: usize, keep: bool| -> Result<DataSplit> {
            let sensors = Array2::from_shape_vec((n, shape.m), read_f64s(r, n * shape.m)?)
                .map_err(|e| Error::Format(e.to_string()))?;
            let solutions = if keep {
                let v = read_f64s(r, n * cells)?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Format("non-finite reference solution".into()));
                }
                Some(Array3::from_shape_vec((n, shape.n_t, shape.n_x), v).map_err(|e| Error::Format(e.to_string()))?)
            } else {
                skip_f64s(r, n * cells)?;
                None
            };
            Ok(DataSplit { sensors, solutions })
        };
        let train = read_split(shape.train, with_train_solutions)?;
        let test = read_split(shape.test, true)?;
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        Ok(Self {
            pde,
            sensor_grid,
            t_axis,
            x_axis,
            train,
            test,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?), true)
    }

    /// Loads everything except the training solutions, which physics-informed
    /// training never reads.
    pub fn load_for_training(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?), false)
    }

    /// Header only.
    pub fn peek(path: &Path) -> Result<(PdeSpec, DatasetShape)> {
        read_header(&mut BufReader::new(File::open(path)?))
    }
}

pub(crate) fn write_header<W: Write>(w: &mut W, pde: &PdeSpec, shape: &DatasetShape) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&pde.kind.tag().to_le_bytes())?;
    for n in [shape.train, shape.test, shape.m, shape.n_t, shape.n_x] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&pde.length.to_le_bytes())?;
    for c in pde.coefficient_array() {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<(PdeSpec, DatasetShape)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for a dataset header".into()))?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let version = read_u32(r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let kind = PdeKind::from_tag(read_u32(r)?)?;
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        let v = read_u64(r)?;
        if v > MAX_VALUES {
            return Err(Error::Format(format!("implausible dataset dimension {v}")));
        }
        *d = v as usize;
    }
    let shape = DatasetShape {
        train: dims[0],
        test: dims[1],
        m: dims[2],
        n_t: dims[3],
        n_x: dims[4],
    };
    let total = (shape.train as u64 + shape.test as u64)
        .checked_mul(shape.m as u64 + shape.n_t as u64 * shape.n_x as u64)
        .ok_or_else(|| Error::Format("dataset size overflows".into()))?;
    if total > MAX_VALUES {
        return Err(Error::Format("dataset header declares too many values".into()));
    }
    let length = read_f64(r)?;
    let mut coeffs = [0.0; 4];
    for c in coeffs.iter_mut() {
        *c = read_f64(r)?;
    }
    let mut pde = PdeSpec::from_coefficients(kind, coeffs);
    pde.length = length;
    pde.validate().map_err(|e| Error::Format(format!("dataset header: {e}")))?;
    Ok((pde, shape))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated dataset header".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated dataset header".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated dataset body".into()))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn skip_f64s<R: Read>(r: &mut R, n: usize) -> Result<()> {
    let want = (n * 8) as u64;
    let skipped = std::io::copy(&mut r.by_ref().take(want), &mut std::io::sink())?;
    if skipped != want {
        return Err(Error::Format("truncated dataset body".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let pde = PdeSpec::burgers(1e-3);
        let shape = DatasetShape {
            train: 2,
            test: 1,
            m: 5,
            n_t: 3,
            n_x: 4,
        };
        let (sensor_grid, t_axis, x_axis) = Dataset::axes(&pde, &shape).unwrap();
        let split = |n: usize, offset: f64| DataSplit {
            sensors: Array2::from_shape_fn((n, 5), |(i, j)| offset + i as f64 + 0.1 * j as f64),
            solutions: Some(Array3::from_shape_fn((n, 3, 4), |(i, j, k)| offset - (i * 12 + j * 4 + k) as f64)),
        };
        Dataset {
            pde,
            sensor_grid,
            t_axis,
            x_axis,
            train: split(2, 0.0),
            test: split(1, 100.0),
        }
    }

    #[test]
    fn layout_is_stable() {
        let bytes = tiny().to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"PIDS1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 2);
        let header = 5 + 4 + 4 + 5 * 8 + 8 + 4 * 8;
        assert_eq!(bytes.len(), header + 8 * (3 * 5 + 3 * 12));
        // first train sensor value, then the second
        let first = f64::from_le_bytes(bytes[header..header + 8].try_into().unwrap());
        let second = f64::from_le_bytes(bytes[header + 8..header + 16].try_into().unwrap());
        assert_eq!((first, second), (0.0, 0.1));
    }

    #[test]
    fn round_trip_and_partial_load() {
        let d = tiny();
        let bytes = d.to_bytes().unwrap();
        let back = Dataset::read_from(&mut bytes.as_slice(), true).unwrap();
        assert_eq!(back, d);
        let light = Dataset::read_from(&mut bytes.as_slice(), false).unwrap();
        assert!(light.train.solutions.is_none());
        assert_eq!(light.test, d.test);
        let s = back.sample(Split::Test, 0);
        assert_eq!(s.solution.unwrap()[[1, 2]], 100.0 - 6.0);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = tiny().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::read_from(&mut bad.as_slice(), true), Err(Error::Format(_))));
        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(Dataset::read_from(&mut &short[..], true), Err(Error::Format(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Dataset::read_from(&mut long.as_slice(), true), Err(Error::Format(_))));
    }

    #[test]
    fn default_shapes() {
        let k = DatasetShape::default_for(PdeKind::Kdv);
        assert_eq!((k.train, k.test, k.m, k.n_t, k.n_x), (500, 100, 257, 101, 129));
        let d = DatasetShape::default_for(PdeKind::DiffusionReaction);
        assert_eq!((d.train, d.test), (10_000, 1000));
    }
}
