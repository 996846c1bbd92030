//! Trial orchestration and CSV emission.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hsketch_core::{
    sample_f_moment, ColumnAggregates, Complex, EstimateOptions, FunctionTable, GroupDescriptor,
    GroupElement, IntegerTowerSketch, LevelSummary, SamplerSketch, SketchConfig, TowerMode,
    TowerParams, TowerSketch,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::workload::{gen_stream, gen_union, Stream, UnionSpec, ValueDomain, WorkloadSpec};

/// CSV header shared by every experiment.
pub const CSV_HEADER: &str = "workload,scheme,quantity,trial,seed,estimate,imag_residual,truth";

/// A sketching scheme under test.
#[derive(Clone, Debug, PartialEq)]
pub enum Scheme {
    /// Triple tower; `range` overrides the default cells `[0, 22m)`.
    Fourier {
        m: u32,
        mode: TowerMode,
        range: Option<(i64, i64)>,
    },
    /// Level sampler with `r`-fold splitter buckets.
    Fingerprint { m_prime: u32, r: usize },
    /// Level sampler that reads emptiness and singletons from ground truth.
    IdealOracle { m_prime: u32 },
}

impl Scheme {
    pub fn fourier(m: u32) -> Self {
        Self::Fourier {
            m,
            mode: TowerMode::Poisson,
            range: None,
        }
    }

    /// Name used in the `scheme` column.
    pub fn name(&self) -> String {
        match self {
            Self::Fourier { .. } => "fourier".into(),
            Self::Fingerprint { r, .. } => format!("fingerprint-r{r}"),
            Self::IdealOracle { .. } => "ideal-oracle".into(),
        }
    }

    fn tower_params(&self, seed: u64) -> Result<TowerParams> {
        match self {
            Self::Fourier {
                m,
                mode,
                range: None,
            } => Ok(TowerParams::with_default_range(*m, seed, *mode)?),
            Self::Fourier {
                m,
                mode,
                range: Some((a, b)),
            } => Ok(TowerParams::new(*m, *a, *b, seed, *mode)?),
            _ => Err(HarnessError::InvalidExperiment(format!(
                "{} is not a tower scheme",
                self.name()
            ))),
        }
    }
}

/// A quantity estimated in every trial.
#[derive(Clone, Debug, PartialEq)]
pub enum Quantity {
    /// Number of coordinates nonzero modulo `p`.
    Support { p: u32 },
    /// Number of coordinates equal to `j != 0` modulo `p`.
    Modulo { p: u32, j: u64 },
    /// `Σ_v (f(x(v)) - f(0))` for `f` over the workload group.
    Moment { name: String, f: FunctionTable<f64> },
}

impl Quantity {
    pub fn name(&self) -> String {
        match self {
            Self::Support { .. } => "lambda0".into(),
            Self::Modulo { j, .. } => format!("lambda{j}"),
            Self::Moment { name, .. } => name.clone(),
        }
    }

    /// The counts `λ_0, λ_1, ..., λ_{p-1}` modulo `p`.
    pub fn modulo_family(p: u32) -> Vec<Self> {
        std::iter::once(Self::Support { p })
            .chain((1..u64::from(p)).map(|j| Self::Modulo { p, j }))
            .collect()
    }

    fn modulus(&self) -> Option<u32> {
        match self {
            Self::Support { p } | Self::Modulo { p, .. } => Some(*p),
            Self::Moment { .. } => None,
        }
    }
}

/// What the trials sketch.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    /// One stream, several quantities.
    Moments {
        workload: WorkloadSpec,
        quantities: Vec<Quantity>,
    },
    /// Two streams with shared randomness, union support size.
    Union(UnionSpec),
}

impl Task {
    pub fn name(&self) -> &str {
        match self {
            Self::Moments { workload, .. } => &workload.name,
            Self::Union(spec) => &spec.name,
        }
    }
}

/// A batch of trials over one or more tasks and schemes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    pub schemes: Vec<Scheme>,
    pub trials: u32,
    /// Trial `t` uses seed `base_seed + t` for every sketch; workloads are
    /// fixed by their own shuffle seeds.
    pub base_seed: u64,
    pub options: EstimateOptions,
    pub output: Option<PathBuf>,
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub workload: String,
    pub scheme: String,
    pub quantity: String,
    pub trial: u32,
    pub seed: u64,
    pub estimate: f64,
    pub imag_residual: f64,
    pub truth: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::InvalidExperiment(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.tasks.is_empty() || self.schemes.is_empty() {
            return bad("at least one task and one scheme are required".into());
        }
        for scheme in &self.schemes {
            if let Scheme::Fourier { .. } = scheme {
                scheme.tower_params(self.base_seed)?;
            }
        }
        for task in &self.tasks {
            match task {
                Task::Union(_) => {
                    if let Some(s) = self
                        .schemes
                        .iter()
                        .find(|s| !matches!(s, Scheme::Fourier { .. }))
                    {
                        return bad(format!("union needs a tower scheme, got {}", s.name()));
                    }
                }
                Task::Moments {
                    workload,
                    quantities,
                } => {
                    if quantities.is_empty() {
                        return bad(format!("workload {} has no quantities", workload.name));
                    }
                    for q in quantities {
                        check_quantity(&workload.domain, q, &self.schemes)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_quantity(domain: &ValueDomain, q: &Quantity, schemes: &[Scheme]) -> Result<()> {
    let bad = |msg: String| Err(HarnessError::InvalidExperiment(msg));
    match (domain, q) {
        (_, Quantity::Modulo { p, j }) if *j == 0 || *j >= u64::from(*p) => {
            bad(format!("lambda{j} modulo {p}"))
        }
        (ValueDomain::Integer, Quantity::Moment { name, .. }) => bad(format!(
            "moment {name} needs a group workload, not an integer one"
        )),
        (ValueDomain::Integer, _) => match schemes
            .iter()
            .find(|s| !matches!(s, Scheme::Fourier { .. }))
        {
            Some(s) => bad(format!("{} cannot sketch integer workloads", s.name())),
            None => Ok(()),
        },
        (ValueDomain::Group(g), Quantity::Moment { name, f }) if f.group() != g => bad(format!(
            "moment {name} is over a different group than the workload"
        )),
        (ValueDomain::Group(g), q) => match q.modulus() {
            Some(p) if g.orders() != [p] => bad(format!("{} needs a Z_{p} workload", q.name())),
            _ => Ok(()),
        },
    }
}

/// Runs every (task, scheme, trial) and returns rows ordered by task,
/// scheme, trial, quantity. Writes the CSV when `output` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<Row>> {
    config.validate()?;
    let pool = thread_pool()?;
    let mut rows = Vec::new();
    for task in &config.tasks {
        let prepared = Prepared::new(task)?;
        for scheme in &config.schemes {
            let per_trial: Vec<Result<Vec<Row>>> = pool.install(|| {
                (0..config.trials)
                    .into_par_iter()
                    .map(|t| {
                        prepared.trial(
                            scheme,
                            t,
                            config.base_seed.wrapping_add(u64::from(t)),
                            &config.options,
                        )
                    })
                    .collect()
            });
            for r in per_trial {
                rows.extend(r?);
            }
        }
    }
    if let Some(path) = &config.output {
        write_rows(path, &rows)?;
    }
    Ok(rows)
}

/// Pool capped by `HSKETCH_THREADS` when set.
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("HSKETCH_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| {
            HarnessError::Config(format!("HSKETCH_THREADS={v} is not a thread count"))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

pub fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let file = File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    write_rows_to(&mut out, rows).map_err(|source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    out.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_rows_to<W: Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record(CSV_HEADER.split(','))?;
    }
    writer.flush()?;
    Ok(())
}

/// Stream and truth materialized once per task.
enum Prepared<'a> {
    Moments {
        name: &'a str,
        stream: Stream,
        support: Vec<(u64, GroupElement)>,
        quantities: Vec<(&'a Quantity, f64)>,
    },
    Union {
        name: &'a str,
        group: GroupDescriptor,
        a: Vec<(u64, GroupElement)>,
        b: Vec<(u64, GroupElement)>,
        truth: f64,
    },
}

impl<'a> Prepared<'a> {
    fn new(task: &'a Task) -> Result<Self> {
        match task {
            Task::Moments {
                workload,
                quantities,
            } => {
                let stream = gen_stream(workload)?;
                let support = match &workload.domain {
                    ValueDomain::Group(g) => stream.truth.group_support(g)?,
                    ValueDomain::Integer => Vec::new(),
                };
                let quantities = quantities
                    .iter()
                    .map(|q| {
                        let truth = match q {
                            Quantity::Support { p } => stream.truth.support_mod(*p) as f64,
                            Quantity::Modulo { p, j } => stream.truth.count_mod(*p, *j) as f64,
                            Quantity::Moment { f, .. } => stream.truth.moment(f)?,
                        };
                        Ok((q, truth))
                    })
                    .collect::<Result<_>>()?;
                Ok(Self::Moments {
                    name: &workload.name,
                    stream,
                    support,
                    quantities,
                })
            }
            Task::Union(spec) => {
                let u = gen_union(spec)?;
                let convert =
                    |ups: &[crate::workload::Update]| -> Result<Vec<(u64, GroupElement)>> {
                        ups.iter()
                            .map(|x| Ok((x.v, x.group_value(&u.group)?)))
                            .collect()
                    };
                Ok(Self::Union {
                    name: &spec.name,
                    a: convert(&u.a)?,
                    b: convert(&u.b)?,
                    group: u.group,
                    truth: u.union_size as f64,
                })
            }
        }
    }

    fn trial(
        &self,
        scheme: &Scheme,
        trial: u32,
        seed: u64,
        options: &EstimateOptions,
    ) -> Result<Vec<Row>> {
        let row = |workload: &str, quantity: String, value: Complex<f64>, truth: f64| Row {
            workload: workload.to_string(),
            scheme: scheme.name(),
            quantity,
            trial,
            seed,
            estimate: value.re,
            imag_residual: value.im.abs(),
            truth,
        };
        match self {
            Self::Union {
                name,
                group,
                a,
                b,
                truth,
            } => {
                let config = SketchConfig::new(group.clone(), scheme.tower_params(seed)?);
                let sa = tower_from(&config, a)?;
                let sb = tower_from(&config, b)?;
                let report = hsketch_core::estimate_union::<f64>(&sa, &sb, options)?;
                let value = Complex::new(report.estimate, report.imag_residual);
                Ok(vec![row(name, "union".into(), value, *truth)])
            }
            Self::Moments {
                name,
                stream,
                support,
                quantities,
            } => {
                let values = match scheme {
                    Scheme::Fourier { .. } => {
                        fourier_values(scheme, stream, quantities, seed, options)?
                    }
                    Scheme::Fingerprint { m_prime, r } => {
                        let group = group_of(stream)?;
                        let mut sketch = SamplerSketch::new(group.clone(), *m_prime, *r, seed)?;
                        for u in &stream.updates {
                            sketch.update(u.v, &u.group_value(group)?)?;
                        }
                        sampler_values(&sketch.summary(), group, quantities)?
                    }
                    Scheme::IdealOracle { m_prime } => {
                        let summary = hsketch_core::ideal_oracle_summary(*m_prime, seed, support);
                        sampler_values(&summary, group_of(stream)?, quantities)?
                    }
                };
                Ok(quantities
                    .iter()
                    .zip(values)
                    .map(|((q, truth), v)| row(name, q.name(), v, *truth))
                    .collect())
            }
        }
    }
}

fn group_of(stream: &Stream) -> Result<&GroupDescriptor> {
    match &stream.truth.domain {
        ValueDomain::Group(g) => Ok(g),
        ValueDomain::Integer => Err(HarnessError::InvalidExperiment(
            "sampler on an integer workload".into(),
        )),
    }
}

fn tower_from(config: &SketchConfig, updates: &[(u64, GroupElement)]) -> Result<TowerSketch> {
    let mut sketch = TowerSketch::new(config.clone());
    for (v, y) in updates {
        sketch.update(*v, y)?;
    }
    Ok(sketch)
}

fn fourier_values(
    scheme: &Scheme,
    stream: &Stream,
    quantities: &[(&Quantity, f64)],
    seed: u64,
    options: &EstimateOptions,
) -> Result<Vec<Complex<f64>>> {
    let params = scheme.tower_params(seed)?;
    let group_sketch = match &stream.truth.domain {
        ValueDomain::Group(g) => {
            let mut sketch = TowerSketch::new(SketchConfig::new(g.clone(), params));
            for u in &stream.updates {
                sketch.update(u.v, &u.group_value(g)?)?;
            }
            Some(sketch)
        }
        ValueDomain::Integer => None,
    };
    let integer_sketch = match group_sketch {
        Some(_) => None,
        None => {
            let mut sketch = IntegerTowerSketch::new(params);
            for u in &stream.updates {
                sketch.update(u.v, u.y[0])?;
            }
            Some(sketch)
        }
    };
    let mut cache: Vec<(u32, ColumnAggregates<f64>)> = Vec::new();
    let mut out = Vec::with_capacity(quantities.len());
    for (q, _) in quantities {
        let key = q.modulus().unwrap_or(0);
        let i = match cache.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let view: Cow<'_, TowerSketch> = match (&group_sketch, &integer_sketch, q.modulus())
                {
                    (Some(s), _, _) => Cow::Borrowed(s),
                    (None, Some(s), Some(p)) => Cow::Owned(s.reduce_mod(p)?),
                    _ => {
                        return Err(HarnessError::InvalidExperiment(
                            "moment on an integer workload".into(),
                        ))
                    }
                };
                cache.push((key, ColumnAggregates::new(&view, options)));
                cache.len() - 1
            }
        };
        let agg = &cache[i].1;
        let report = match q {
            Quantity::Support { p } => agg.support(*p, options)?,
            Quantity::Modulo { p, j } => agg.modulo(*p, *j, options)?,
            Quantity::Moment { f, .. } => agg.estimate(&hsketch_core::dft(f), options)?,
        };
        out.push(Complex::new(report.estimate, report.imag_residual));
    }
    Ok(out)
}

/// Sampler estimates; quantities the sampler cannot answer become NaN.
fn sampler_values(
    summary: &LevelSummary,
    group: &GroupDescriptor,
    quantities: &[(&Quantity, f64)],
) -> Result<Vec<Complex<f64>>> {
    let nan = Complex::new(f64::NAN, f64::NAN);
    let mut out = Vec::with_capacity(quantities.len());
    for (q, _) in quantities {
        let value = match q {
            Quantity::Support { .. } => match summary.support_estimate::<f64>().value() {
                Ok(v) => Complex::new(v, 0.0),
                Err(_) => nan,
            },
            Quantity::Modulo { j, .. } => {
                let target = group.cyclic_element(*j as i64)?;
                let f = FunctionTable::from_fn(group.clone(), |x| {
                    Complex::new(f64::from(u8::from(*x == target)), 0.0)
                });
                sample_f_moment(summary, &f).unwrap_or(nan)
            }
            Quantity::Moment { f, .. } => sample_f_moment(summary, f).unwrap_or(nan),
        };
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_workload() -> WorkloadSpec {
        WorkloadSpec {
            name: "small".into(),
            domain: ValueDomain::Group(GroupDescriptor::cyclic(7).unwrap()),
            value_counts: vec![(vec![1], 60), (vec![3], 40)],
            universe: 1 << 20,
            shuffle_seed: 3,
            cancellation_pairs: 10,
        }
    }

    fn config(schemes: Vec<Scheme>, trials: u32) -> ExperimentConfig {
        ExperimentConfig {
            tasks: vec![Task::Moments {
                workload: small_workload(),
                quantities: Quantity::modulo_family(7),
            }],
            schemes,
            trials,
            base_seed: 100,
            options: EstimateOptions::default(),
            output: None,
        }
    }

    #[test]
    fn one_row_per_quantity_and_trial() {
        let rows = run_experiment(&config(vec![Scheme::fourier(16)], 1)).unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[0].quantity, "lambda0");
        assert_eq!(rows[0].truth, 100.0);
        assert_eq!(rows[1].truth, 60.0);
        assert_eq!(rows[3].truth, 40.0);
        assert!(rows.iter().all(|r| r.seed == 100 && r.trial == 0));
    }

    #[test]
    fn rows_are_ordered_and_deterministic() {
        let cfg = config(
            vec![Scheme::fourier(8), Scheme::IdealOracle { m_prime: 16 }],
            3,
        );
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_rows_to(&mut ba, &a).unwrap();
        write_rows_to(&mut bb, &b).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(a.len(), 2 * 3 * 7);
        assert_eq!(a[7].trial, 1);
        assert_eq!(a[21].scheme, "ideal-oracle");
        let header = String::from_utf8(ba).unwrap();
        assert!(header.starts_with(CSV_HEADER));
    }

    #[test]
    fn invalid_configurations() {
        assert!(run_experiment(&config(vec![Scheme::fourier(8)], 0)).is_err());
        let mut cfg = config(vec![Scheme::fourier(8)], 1);
        cfg.tasks = vec![Task::Moments {
            workload: small_workload(),
            quantities: vec![Quantity::Support { p: 5 }],
        }];
        assert!(matches!(
            run_experiment(&cfg),
            Err(HarnessError::InvalidExperiment(_))
        ));
        let mut int = small_workload();
        int.domain = ValueDomain::Integer;
        int.value_counts = vec![(vec![7], 5)];
        let mut cfg = config(vec![Scheme::Fingerprint { m_prime: 8, r: 2 }], 1);
        cfg.tasks = vec![Task::Moments {
            workload: int,
            quantities: Quantity::modulo_family(7),
        }];
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn integer_workload_reduces_per_modulus() {
        let workload = WorkloadSpec {
            name: "int".into(),
            domain: ValueDomain::Integer,
            value_counts: vec![(vec![7], 50), (vec![2], 30)],
            universe: 1 << 20,
            shuffle_seed: 0,
            cancellation_pairs: 5,
        };
        let cfg = ExperimentConfig {
            tasks: vec![Task::Moments {
                workload,
                quantities: vec![Quantity::Support { p: 7 }, Quantity::Support { p: 5 }],
            }],
            schemes: vec![Scheme::fourier(16)],
            trials: 1,
            base_seed: 0,
            options: EstimateOptions::default(),
            output: None,
        };
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!((rows[0].truth, rows[1].truth), (30.0, 80.0));
    }

    #[test]
    fn union_rows() {
        let spec = UnionSpec {
            name: "u".into(),
            p: 7,
            only_a: 40,
            only_b: 40,
            both: 20,
            universe: 1 << 20,
            shuffle_seed: 0,
        };
        let cfg = ExperimentConfig {
            tasks: vec![Task::Union(spec)],
            schemes: vec![Scheme::fourier(16)],
            trials: 2,
            base_seed: 0,
            options: EstimateOptions::default(),
            output: None,
        };
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows
            .iter()
            .all(|r| r.quantity == "union" && r.truth == 100.0));
    }
}
