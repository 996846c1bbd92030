//! Triple tower sketches: `3 (b - a)` registers indexed by cell `k` in
//! `[a, b)` and column `j` in `0..3`.
//!
//! In Poisson mode every update touches every cell, adding `Z y` where
//! `Z ~ Poisson(e^{-k/m})` is drawn by the PRF from `(seed, v, j, k)`. In
//! binomial mode each column receives `y` in at most one cell, chosen with
//! `P(k) = e^{-k/m}` and `P(noop) = 1 - σ`.

use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::group::{reduce_mod, GroupDescriptor, GroupElement};
use crate::prf::{self, domain, PrfStream};

/// Number of independent columns in a tower.
pub const COPIES: usize = 3;
/// Upper limit on `b - a`, far beyond any useful tower.
const MAX_CELLS: i64 = 1 << 24;
/// Cell means below this are treated as Bernoulli.
const TINY_MEAN: f64 = 9.094_947_017_729_282e-13; // 2^-40
/// Cell means at or above this use a general Poisson sampler.
const LARGE_MEAN: f64 = 16.0;
const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;
/// Integer registers must stay strictly inside `±2^62`.
const INTEGER_LIMIT: i64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TowerMode {
    Poisson,
    Binomial,
}

/// Shape and randomness of a tower, independent of the register group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TowerParams {
    m: u32,
    a: i64,
    b: i64,
    seed: u64,
    mode: TowerMode,
}

impl TowerParams {
    pub fn new(m: u32, a: i64, b: i64, seed: u64, mode: TowerMode) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidConfig(format!("m = {m} must be at least 2")));
        }
        if b <= a {
            return Err(Error::InvalidConfig(format!("empty cell range [{a}, {b})")));
        }
        if b.checked_sub(a).is_none_or(|n| n > MAX_CELLS) {
            return Err(Error::InvalidConfig(format!(
                "cell range [{a}, {b}) is too long"
            )));
        }
        let params = Self {
            m,
            a,
            b,
            seed,
            mode,
        };
        if mode == TowerMode::Binomial {
            let sigma = params.sigma();
            if sigma.is_nan() || sigma >= 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "binomial tower needs sigma < 1, got {sigma:.4} for m = {m}, a = {a}, b = {b}"
                )));
            }
        }
        Ok(params)
    }

    /// Cells `[0, 22m)`, enough for roughly a million nonzero coordinates.
    pub fn with_default_range(m: u32, seed: u64, mode: TowerMode) -> Result<Self> {
        Self::new(m, 0, 22 * i64::from(m), seed, mode)
    }

    /// Cells `[m(ln λ - 6 ln m), m(ln λ + 3 ln m))` for a known support size.
    pub fn for_support_size(m: u32, lambda: f64, seed: u64, mode: TowerMode) -> Result<Self> {
        if lambda.is_nan() || lambda < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "support size {lambda} must be at least 1"
            )));
        }
        let mf = f64::from(m);
        let a = (mf * (lambda.ln() - 6.0 * mf.ln())).floor() as i64;
        let b = (mf * (lambda.ln() + 3.0 * mf.ln())).ceil() as i64;
        Self::new(m, a, b, seed, mode)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn a(&self) -> i64 {
        self.a
    }

    pub fn b(&self) -> i64 {
        self.b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> TowerMode {
        self.mode
    }

    /// Number of cells per column, `b - a`.
    pub fn cells(&self) -> usize {
        (self.b - self.a) as usize
    }

    /// `σ = Σ_{k=a}^{b-1} e^{-k/m}`.
    pub fn sigma(&self) -> f64 {
        let mf = f64::from(self.m);
        let n = (self.b - self.a) as f64;
        (-(self.a as f64) / mf).exp() * (-(-n / mf).exp_m1()) / (-(-1.0 / mf).exp_m1())
    }

    /// Same shape, different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// A tower over a specific finite group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchConfig {
    group: GroupDescriptor,
    params: TowerParams,
}

impl SketchConfig {
    pub fn new(group: GroupDescriptor, params: TowerParams) -> Self {
        Self { group, params }
    }

    pub fn group(&self) -> &GroupDescriptor {
        &self.group
    }

    pub fn params(&self) -> &TowerParams {
        &self.params
    }
}

#[derive(Clone, Copy, Debug)]
struct CellLaw {
    mean: f64,
    /// The cell is nonzero iff the PRF word is below this.
    threshold: u64,
    /// `P(Z >= 1)` as a float.
    nonzero: f64,
}

impl CellLaw {
    fn new(k: i64, m: u32) -> Self {
        let mean = (-(k as f64) / f64::from(m)).exp();
        let nonzero = -(-mean).exp_m1();
        Self {
            mean,
            threshold: (nonzero * TWO_POW_64) as u64,
            nonzero,
        }
    }

    /// Poisson count from the cell word; the tail stream is only consulted
    /// for large means.
    #[inline]
    fn count(&self, w: u64, tail_key: impl FnOnce() -> u64) -> u64 {
        if w >= self.threshold {
            return 0;
        }
        if self.mean < TINY_MEAN {
            return 1;
        }
        if self.mean < LARGE_MEAN {
            // Conditionally on `Z >= 1` the word is uniform on [0, P(Z >= 1)).
            let u = w as f64 / TWO_POW_64;
            let mut c = 1u64;
            let mut pmf = self.mean * (-self.mean).exp();
            let mut tail = self.nonzero - pmf;
            while u < tail && c < 256 {
                c += 1;
                pmf *= self.mean / c as f64;
                tail -= pmf;
            }
            return c;
        }
        let poisson = Poisson::new(self.mean).expect("finite positive mean");
        let mut stream = PrfStream::new(tail_key());
        loop {
            let c = poisson.sample(&mut stream) as u64;
            if c >= 1 {
                return c;
            }
        }
    }
}

#[inline]
fn cell_key(seed: u64, v: u64, column: usize) -> u64 {
    prf::key(seed, domain::POISSON_CELL, v, column as u64)
}

#[inline]
fn tail_key(seed: u64, v: u64, column: usize, k: i64) -> u64 {
    prf::word(
        prf::key(seed, domain::POISSON_TAIL, v, column as u64),
        k as u64,
    )
}

/// `Z_{v,j,k} ~ Poisson(e^{-k/m})`, a deterministic function of its inputs.
/// Columns are numbered `0..3`.
pub fn cell_count(seed: u64, v: u64, column: usize, k: i64, m: u32) -> u64 {
    let w = prf::word(cell_key(seed, v, column), k as u64);
    CellLaw::new(k, m).count(w, || tail_key(seed, v, column, k))
}

/// Cell chosen for `v` in `column` by a binomial tower, or `None` for noop.
pub fn binomial_assign(v: u64, column: usize, params: &TowerParams) -> Option<i64> {
    LevelTable::new(params).assign(params, v, column)
}

#[derive(Clone, Debug)]
struct LevelTable {
    cumulative: Vec<f64>,
}

impl LevelTable {
    fn new(params: &TowerParams) -> Self {
        let mf = f64::from(params.m);
        let mut acc = 0.0;
        let cumulative = (params.a..params.b)
            .map(|k| {
                acc += (-(k as f64) / mf).exp();
                acc
            })
            .collect();
        Self { cumulative }
    }

    #[inline]
    fn assign(&self, params: &TowerParams, v: u64, column: usize) -> Option<i64> {
        let key = prf::key(params.seed, domain::BINOMIAL_LEVEL, v, column as u64);
        let u = prf::unit(prf::word(key, 0));
        let last = *self.cumulative.last()?;
        if u >= last {
            return None;
        }
        let idx = self.cumulative.partition_point(|&c| c <= u);
        Some(params.a + idx.min(self.cumulative.len() - 1) as i64)
    }
}

/// Precomputed per-cell randomness laws shared by both register kinds.
#[derive(Clone, Debug)]
enum Assigner {
    Poisson(Vec<CellLaw>),
    Binomial(LevelTable),
}

impl Assigner {
    fn new(params: &TowerParams) -> Self {
        match params.mode {
            TowerMode::Poisson => Self::Poisson(
                (params.a..params.b)
                    .map(|k| CellLaw::new(k, params.m))
                    .collect(),
            ),
            TowerMode::Binomial => Self::Binomial(LevelTable::new(params)),
        }
    }

    /// Calls `visit(cell_offset, column, count)` for every cell `v` lands in.
    #[inline]
    fn for_each_cell(
        &self,
        params: &TowerParams,
        v: u64,
        mut visit: impl FnMut(usize, usize, u64),
    ) {
        match self {
            Self::Poisson(laws) => {
                for column in 0..COPIES {
                    let key = cell_key(params.seed, v, column);
                    for (offset, law) in laws.iter().enumerate() {
                        let k = params.a + offset as i64;
                        let w = prf::word(key, k as u64);
                        if w < law.threshold {
                            let c = law.count(w, || tail_key(params.seed, v, column, k));
                            visit(offset, column, c);
                        }
                    }
                }
            }
            Self::Binomial(table) => {
                for column in 0..COPIES {
                    if let Some(k) = table.assign(params, v, column) {
                        visit((k - params.a) as usize, column, 1);
                    }
                }
            }
        }
    }
}

/// Triple tower with registers in a finite group.
#[derive(Clone, Debug)]
pub struct TowerSketch {
    config: SketchConfig,
    registers: Vec<u32>,
    assigner: Assigner,
}

impl PartialEq for TowerSketch {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.registers == other.registers
    }
}

impl Eq for TowerSketch {}

impl TowerSketch {
    /// Empty sketch; every register is the identity.
    pub fn new(config: SketchConfig) -> Self {
        let len = config.params.cells() * COPIES * config.group.rank();
        let assigner = Assigner::new(&config.params);
        Self {
            config,
            registers: vec![0; len],
            assigner,
        }
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn group(&self) -> &GroupDescriptor {
        &self.config.group
    }

    pub fn params(&self) -> &TowerParams {
        &self.config.params
    }

    /// Number of group-valued registers, `3 (b - a)`.
    pub fn register_count(&self) -> usize {
        self.config.params.cells() * COPIES
    }

    /// Flat residues, cell-major then column, `d` residues per register.
    pub fn raw_registers(&self) -> &[u32] {
        &self.registers
    }

    #[inline]
    fn slot(&self, offset: usize, column: usize) -> usize {
        (offset * COPIES + column) * self.config.group.rank()
    }

    /// Residues of register `(k, column)`.
    pub fn register(&self, k: i64, column: usize) -> Result<&[u32]> {
        let p = &self.config.params;
        if k < p.a || k >= p.b || column >= COPIES {
            return Err(Error::InvalidConfig(format!(
                "no register at cell {k}, column {column}"
            )));
        }
        let start = self.slot((k - p.a) as usize, column);
        Ok(&self.registers[start..start + self.config.group.rank()])
    }

    /// Residues of one column in cell order, as `(k, residues)`.
    pub fn column(&self, column: usize) -> impl Iterator<Item = (i64, &[u32])> + '_ {
        let d = self.config.group.rank();
        let a = self.config.params.a;
        (0..self.config.params.cells()).map(move |offset| {
            let start = (offset * COPIES + column) * d;
            (a + offset as i64, &self.registers[start..start + d])
        })
    }

    pub fn is_empty(&self) -> bool {
        self.registers.iter().all(|&r| r == 0)
    }

    #[cfg(test)]
    pub(crate) fn registers_mut_for_tests(&mut self) -> &mut [u32] {
        &mut self.registers
    }

    /// Applies `x(v) <- x(v) + y`.
    pub fn update(&mut self, v: u64, y: &GroupElement) -> Result<()> {
        if !self.config.group.contains(y) {
            return Err(Error::GroupMismatch(format!(
                "update value {y} is not in the sketch group"
            )));
        }
        if y.is_identity() {
            return Ok(());
        }
        let d = self.config.group.rank();
        let orders = self.config.group.orders();
        let ys = y.residues();
        let registers = &mut self.registers;
        self.assigner
            .for_each_cell(&self.config.params, v, |offset, column, count| {
                let start = (offset * COPIES + column) * d;
                for t in 0..d {
                    let p = u64::from(orders[t]);
                    let add = (count % p) * u64::from(ys[t]) % p;
                    let r = &mut registers[start + t];
                    *r = ((u64::from(*r) + add) % p) as u32;
                }
            });
        Ok(())
    }

    /// Componentwise sum with a sketch of the same configuration; the result
    /// sketches the concatenated stream.
    pub fn merge(&mut self, other: &TowerSketch) -> Result<()> {
        if self.config != other.config {
            return Err(Error::CannotCombine("sketch configurations differ".into()));
        }
        let orders = self.config.group.orders();
        let d = orders.len();
        for (i, (r, o)) in self.registers.iter_mut().zip(&other.registers).enumerate() {
            let p = u64::from(orders[i % d]);
            *r = ((u64::from(*r) + u64::from(*o)) % p) as u32;
        }
        Ok(())
    }

    /// Cellwise pairs of two sketches with shared randomness: the sketch of
    /// the stream with values in `G1 x G2`.
    pub fn combine_product(&self, other: &TowerSketch) -> Result<TowerSketch> {
        if self.config.params != other.config.params {
            return Err(Error::CannotCombine(
                "product needs identical m, a, b, seed and mode".into(),
            ));
        }
        let group = self.config.group.product(&other.config.group)?;
        let (d1, d2) = (self.config.group.rank(), other.config.group.rank());
        let mut registers = Vec::with_capacity(self.registers.len() + other.registers.len());
        for (r1, r2) in self.registers.chunks(d1).zip(other.registers.chunks(d2)) {
            registers.extend_from_slice(r1);
            registers.extend_from_slice(r2);
        }
        let config = SketchConfig::new(group, self.config.params);
        let assigner = self.assigner.clone();
        Ok(TowerSketch {
            config,
            registers,
            assigner,
        })
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = write_header(&self.config.params, self.config.group.orders(), false);
        out.reserve(self.registers.len() * 4);
        for r in &self.registers {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<TowerSketch> {
        let mut reader = Reader { bytes, pos: 0 };
        let header = read_header(&mut reader)?;
        if header.integer {
            return Err(Error::CorruptSketch(
                "integer-register sketch where a group sketch was expected".into(),
            ));
        }
        let group = GroupDescriptor::new(&header.orders)
            .map_err(|e| Error::CorruptSketch(e.to_string()))?;
        let mut sketch = TowerSketch::new(SketchConfig::new(group, header.params));
        let orders = sketch.config.group.orders().to_vec();
        let d = orders.len();
        for (i, slot) in sketch.registers.iter_mut().enumerate() {
            let r = reader.u32()?;
            if r >= orders[i % d] {
                return Err(Error::CorruptSketch(format!(
                    "register residue {r} out of range"
                )));
            }
            *slot = r;
        }
        reader.finish()?;
        Ok(sketch)
    }
}

/// Triple tower with exact signed integer registers, reducible modulo any
/// `p` at query time.
#[derive(Clone, Debug)]
pub struct IntegerTowerSketch {
    params: TowerParams,
    registers: Vec<i64>,
    assigner: Assigner,
    scratch: Vec<(usize, u64)>,
}

impl PartialEq for IntegerTowerSketch {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.registers == other.registers
    }
}

impl Eq for IntegerTowerSketch {}

impl IntegerTowerSketch {
    pub fn new(params: TowerParams) -> Self {
        Self {
            registers: vec![0; params.cells() * COPIES],
            assigner: Assigner::new(&params),
            params,
            scratch: Vec::new(),
        }
    }

    pub fn params(&self) -> &TowerParams {
        &self.params
    }

    /// Flat registers, cell-major then column.
    pub fn raw_registers(&self) -> &[i64] {
        &self.registers
    }

    pub fn register(&self, k: i64, column: usize) -> Result<i64> {
        if k < self.params.a || k >= self.params.b || column >= COPIES {
            return Err(Error::InvalidConfig(format!(
                "no register at cell {k}, column {column}"
            )));
        }
        Ok(self.registers[(k - self.params.a) as usize * COPIES + column])
    }

    /// Applies `x(v) <- x(v) + y`. On overflow the sketch is left unchanged.
    pub fn update(&mut self, v: u64, y: i64) -> Result<()> {
        if y == 0 {
            return Ok(());
        }
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        self.assigner
            .for_each_cell(&self.params, v, |offset, column, count| {
                scratch.push((offset * COPIES + column, count));
            });
        let mut result = Ok(());
        let mut planned = Vec::with_capacity(scratch.len());
        for &(slot, count) in &scratch {
            let next = i64::try_from(count)
                .ok()
                .and_then(|c| c.checked_mul(y))
                .and_then(|delta| self.registers[slot].checked_add(delta))
                .filter(|r| r.abs() < INTEGER_LIMIT);
            match next {
                Some(r) => planned.push((slot, r)),
                None => {
                    result = Err(Error::Overflow {
                        cell: self.params.a + (slot / COPIES) as i64,
                        column: slot % COPIES,
                    });
                    break;
                }
            }
        }
        if result.is_ok() {
            for (slot, r) in planned {
                self.registers[slot] = r;
            }
        }
        self.scratch = scratch;
        result
    }

    /// Registers reduced into `Z_p`.
    pub fn reduce_mod(&self, p: u32) -> Result<TowerSketch> {
        let mut sketch =
            TowerSketch::new(SketchConfig::new(GroupDescriptor::cyclic(p)?, self.params));
        for (slot, &r) in sketch.registers.iter_mut().zip(&self.registers) {
            *slot = reduce_mod(r, p);
        }
        Ok(sketch)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = write_header(&self.params, &[], true);
        out.reserve(self.registers.len() * 8);
        for r in &self.registers {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<IntegerTowerSketch> {
        let mut reader = Reader { bytes, pos: 0 };
        let header = read_header(&mut reader)?;
        if !header.integer {
            return Err(Error::CorruptSketch(
                "group sketch where an integer-register sketch was expected".into(),
            ));
        }
        let mut sketch = IntegerTowerSketch::new(header.params);
        for slot in sketch.registers.iter_mut() {
            *slot = reader.i64()?;
        }
        reader.finish()?;
        Ok(sketch)
    }
}

const MAGIC: &[u8; 4] = b"FTWR";
const VERSION: u16 = 1;
const MODE_BINOMIAL: u8 = 1;
const MODE_INTEGER: u8 = 2;

fn write_header(params: &TowerParams, orders: &[u32], integer: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(orders.len() as u32).to_le_bytes());
    for p in orders {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&params.m.to_le_bytes());
    out.extend_from_slice(&params.a.to_le_bytes());
    out.extend_from_slice(&params.b.to_le_bytes());
    out.extend_from_slice(&params.seed.to_le_bytes());
    let mut mode = 0u8;
    if params.mode == TowerMode::Binomial {
        mode |= MODE_BINOMIAL;
    }
    if integer {
        mode |= MODE_INTEGER;
    }
    out.push(mode);
    out
}

struct Header {
    orders: Vec<u32>,
    params: TowerParams,
    integer: bool,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::CorruptSketch(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice has length N"))
    }

    fn u16(&mut self) -> Result<u16> {
        self.take().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }

    fn i64(&mut self) -> Result<i64> {
        self.take().map(i64::from_le_bytes)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::CorruptSketch(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_header(reader: &mut Reader<'_>) -> Result<Header> {
    if &reader.take::<4>()? != MAGIC {
        return Err(Error::CorruptSketch("bad magic".into()));
    }
    let version = reader.u16()?;
    if version != VERSION {
        return Err(Error::CorruptSketch(format!(
            "unsupported version {version}"
        )));
    }
    let d = reader.u32()? as usize;
    if d > 64 {
        return Err(Error::CorruptSketch(format!("implausible rank {d}")));
    }
    let orders = (0..d).map(|_| reader.u32()).collect::<Result<Vec<_>>>()?;
    let m = reader.u32()?;
    let a = reader.i64()?;
    let b = reader.i64()?;
    let seed = reader.u64()?;
    let [mode] = reader.take::<1>()?;
    if mode & !(MODE_BINOMIAL | MODE_INTEGER) != 0 {
        return Err(Error::CorruptSketch(format!(
            "unknown mode byte {mode:#04x}"
        )));
    }
    let integer = mode & MODE_INTEGER != 0;
    if integer != orders.is_empty() {
        return Err(Error::CorruptSketch(
            "mode byte disagrees with group rank".into(),
        ));
    }
    let tower_mode = if mode & MODE_BINOMIAL != 0 {
        TowerMode::Binomial
    } else {
        TowerMode::Poisson
    };
    let params = TowerParams::new(m, a, b, seed, tower_mode)
        .map_err(|e| Error::CorruptSketch(e.to_string()))?;
    Ok(Header {
        orders,
        params,
        integer,
    })
}
