//! Load sampling, dataset generation and the dataset CSV/metadata format.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case::GridCase;
use crate::par::{self, Execution};

use super::{verify_kkt, DispatchError, Dispatcher, SolverKind, KKT_TOL};

/// Redraws allowed per point when a sample is infeasible.
pub const MAX_RETRIES: usize = 100;

/// Per-sample random stream: ChaCha8 keyed by the dataset seed, with the
/// sample index as the stream id. Independent of evaluation order.
pub type SampleStream = ChaCha8Rng;

pub fn sample_stream(seed: u64, index: usize) -> SampleStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws each bus load uniformly from `[(1−r)·d, (1+r)·d]`.
pub fn sample_loads<R: Rng + ?Sized>(case: &GridCase, range_fraction: f64, stream: &mut R) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&range_fraction));
    case.buses
        .iter()
        .map(|b| {
            let u: f64 = stream.gen();
            if range_fraction == 0.0 || b.p_load_nominal == 0.0 {
                b.p_load_nominal
            } else {
                b.p_load_nominal * (1.0 - range_fraction + 2.0 * range_fraction * u)
            }
        })
        .collect()
}

/// One market observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    /// MW per bus (dense order).
    pub loads: Vec<f64>,
    /// MW per generator in case order; zero for out-of-service units.
    pub p_gen: Vec<f64>,
    /// $/MWh per bus.
    pub lmp: Vec<f64>,
    pub p_agg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub id: usize,
    pub bus: usize,
    pub in_service: bool,
}

/// Provenance and topology needed to interpret the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub case_fingerprint: String,
    pub seed: u64,
    pub range_fraction: f64,
    pub solver_kind: SolverKind,
    pub n_points: usize,
    pub retries: usize,
    pub kkt_tol: f64,
    pub base_mva: f64,
    pub bus_ids: Vec<usize>,
    pub generators: Vec<GeneratorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub points: Vec<DataPoint>,
}

impl Dataset {
    /// Dense bus index of generator `k` (case order).
    pub fn generator_bus_index(&self, k: usize) -> usize {
        let bus = self.meta.generators[k].bus;
        self.meta
            .bus_ids
            .iter()
            .position(|&b| b == bus)
            .expect("generator bus listed in metadata")
    }

    /// Positions (case order) of in-service generators.
    pub fn in_service(&self) -> Vec<usize> {
        self.meta
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service)
            .map(|(k, _)| k)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub n_points: usize,
    pub range_fraction: f64,
    pub seed: u64,
    pub solver: SolverKind,
    pub max_retries: usize,
    pub kkt_tol: f64,
    pub execution: Execution,
}

impl DatasetOptions {
    pub fn new(n_points: usize, range_fraction: f64, seed: u64, solver: SolverKind) -> Self {
        Self {
            n_points,
            range_fraction,
            seed,
            solver,
            max_retries: MAX_RETRIES,
            kkt_tol: KKT_TOL,
            execution: Execution::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// Generates `n_points` KKT-verified observations. Sample `i` draws from
/// [`sample_stream`]`(seed, i)`, so the result does not depend on
/// [`Execution`].
pub fn generate_dataset(case: &GridCase, opts: &DatasetOptions) -> Result<Dataset, DispatchError> {
    if opts.n_points == 0 {
        return Err(DispatchError::EmptyRequest);
    }
    if !(0.0..1.0).contains(&opts.range_fraction) {
        return Err(DispatchError::RangeFraction(opts.range_fraction));
    }
    let solver = Dispatcher::new(case, opts.solver)?;

    let results = par::map_indexed(opts.n_points, opts.execution, |i| {
        let mut stream = sample_stream(opts.seed, i);
        let mut last = String::new();
        for attempt in 0..=opts.max_retries {
            let loads = sample_loads(case, opts.range_fraction, &mut stream);
            match solver.solve(&loads) {
                Ok(sol) => {
                    let report = verify_kkt(case, &loads, &sol, opts.kkt_tol);
                    if !report.passed {
                        return Err(DispatchError::KktViolation { point: i, report });
                    }
                    let p_agg = sol.p_gen.iter().sum();
                    let point = DataPoint {
                        loads,
                        p_gen: sol.p_gen,
                        lmp: sol.lmp,
                        p_agg,
                    };
                    return Ok((point, attempt));
                }
                Err(e @ (DispatchError::InfeasibleDemand { .. } | DispatchError::Infeasible)) => {
                    last = e.to_string();
                }
                Err(e) => return Err(e),
            }
        }
        Err(DispatchError::GenerationFailure {
            point: i,
            retries: opts.max_retries,
            last,
        })
    });

    let mut points = Vec::with_capacity(opts.n_points);
    let mut retries = 0;
    for r in results {
        let (p, k) = r?;
        retries += k;
        points.push(p);
    }

    Ok(Dataset {
        meta: DatasetMeta {
            case_fingerprint: case.fingerprint(),
            seed: opts.seed,
            range_fraction: opts.range_fraction,
            solver_kind: opts.solver,
            n_points: opts.n_points,
            retries,
            kkt_tol: opts.kkt_tol,
            base_mva: case.base_mva,
            bus_ids: case.bus_ids(),
            generators: case
                .generators
                .iter()
                .map(|g| GeneratorInfo {
                    id: g.id,
                    bus: g.bus,
                    in_service: g.in_service,
                })
                .collect(),
        },
        points,
    })
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a dataset as `(csv, metadata_json)`.
///
/// Columns: `point_id, P_D_<bus>…, P_G_<gen>…, lambda_<bus>…, P_GA`, buses in
/// ascending id order and generators in case order, values with 17
/// significant digits.
pub fn write_dataset(ds: &Dataset) -> (String, String) {
    let mut bus_order: Vec<usize> = (0..ds.meta.bus_ids.len()).collect();
    bus_order.sort_by_key(|&i| ds.meta.bus_ids[i]);
    let mut gen_order: Vec<usize> = (0..ds.meta.generators.len()).collect();
    gen_order.sort_by_key(|&k| ds.meta.generators[k].id);

    let mut out = String::from("point_id");
    for &i in &bus_order {
        write!(out, ",P_D_{}", ds.meta.bus_ids[i]).unwrap();
    }
    for &k in &gen_order {
        write!(out, ",P_G_{}", ds.meta.generators[k].id).unwrap();
    }
    for &i in &bus_order {
        write!(out, ",lambda_{}", ds.meta.bus_ids[i]).unwrap();
    }
    out.push_str(",P_GA\n");

    for (pid, p) in ds.points.iter().enumerate() {
        out.push_str(&pid.to_string());
        for &i in &bus_order {
            out.push(',');
            out.push_str(&fmt17(p.loads[i]));
        }
        for &k in &gen_order {
            out.push(',');
            out.push_str(&fmt17(p.p_gen[k]));
        }
        for &i in &bus_order {
            out.push(',');
            out.push_str(&fmt17(p.lmp[i]));
        }
        out.push(',');
        out.push_str(&fmt17(p.p_agg));
        out.push('\n');
    }

    let mut meta = serde_json::to_string_pretty(&ds.meta).expect("metadata serializes");
    meta.push('\n');
    (out, meta)
}

/// Parses a dataset written by [`write_dataset`].
pub fn read_dataset(csv_text: &str, meta_text: &str) -> Result<Dataset, DispatchError> {
    let meta: DatasetMeta =
        serde_json::from_str(meta_text).map_err(|e| DispatchError::Format(format!("metadata: {e}")))?;
    let nb = meta.bus_ids.len();
    let ng = meta.generators.len();

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| DispatchError::Format(e.to_string()))?
        .clone();

    let col = |name: &str| -> Result<usize, DispatchError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DispatchError::Format(format!("missing column `{name}`")))
    };
    let load_cols = meta
        .bus_ids
        .iter()
        .map(|b| col(&format!("P_D_{b}")))
        .collect::<Result<Vec<_>, _>>()?;
    let gen_cols = meta
        .generators
        .iter()
        .map(|g| col(&format!("P_G_{}", g.id)))
        .collect::<Result<Vec<_>, _>>()?;
    let lmp_cols = meta
        .bus_ids
        .iter()
        .map(|b| col(&format!("lambda_{b}")))
        .collect::<Result<Vec<_>, _>>()?;
    let agg_col = col("P_GA")?;

    let mut points = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DispatchError::Format(e.to_string()))?;
        let num = |c: usize| -> Result<f64, DispatchError> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| DispatchError::Format(format!("row {}, column {}: not a number", row + 1, c + 1)))
        };
        let mut p = DataPoint {
            loads: Vec::with_capacity(nb),
            p_gen: Vec::with_capacity(ng),
            lmp: Vec::with_capacity(nb),
            p_agg: num(agg_col)?,
        };
        for &c in &load_cols {
            p.loads.push(num(c)?);
        }
        for &c in &gen_cols {
            p.p_gen.push(num(c)?);
        }
        for &c in &lmp_cols {
            p.lmp.push(num(c)?);
        }
        points.push(p);
    }
    if points.len() != meta.n_points {
        return Err(DispatchError::Format(format!(
            "metadata lists {} points, csv has {}",
            meta.n_points,
            points.len()
        )));
    }
    Ok(Dataset { meta, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_native_case;

    fn two_gen() -> GridCase {
        parse_native_case(include_str!("../../fixtures/two_gen.json")).unwrap()
    }

    #[test]
    fn zero_range_returns_nominal() {
        let case = two_gen();
        let mut s = sample_stream(3, 0);
        assert_eq!(sample_loads(&case, 0.0, &mut s), vec![4.0]);
    }

    #[test]
    fn draws_stay_in_range() {
        let mut case = two_gen();
        case.buses[0].p_load_nominal = 100.0;
        let mut s = sample_stream(11, 0);
        for _ in 0..10_000 {
            let d = sample_loads(&case, 0.2, &mut s)[0];
            assert!((80.0..=120.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn same_seed_same_loads() {
        let case = two_gen();
        let a = sample_loads(&case, 0.3, &mut sample_stream(5, 7));
        let b = sample_loads(&case, 0.3, &mut sample_stream(5, 7));
        let c = sample_loads(&case, 0.3, &mut sample_stream(5, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_nominal_point() {
        let case = two_gen();
        let ds = generate_dataset(&case, &DatasetOptions::new(1, 0.0, 0, SolverKind::EconomicDispatch)).unwrap();
        assert_eq!(ds.points.len(), 1);
        assert_eq!(ds.points[0].loads, vec![4.0]);
        let expect = crate::dispatch::economic_dispatch(&case, &[4.0]).unwrap();
        assert_eq!(ds.points[0].p_gen, expect.p_gen);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let case = two_gen();
        let ds = generate_dataset(&case, &DatasetOptions::new(20, 0.5, 9, SolverKind::EconomicDispatch)).unwrap();
        let (csv, meta) = write_dataset(&ds);
        assert!(csv.starts_with("point_id,P_D_1,P_G_1,P_G_2,lambda_1,P_GA\n"));
        let back = read_dataset(&csv, &meta).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn infeasible_everywhere_fails_after_retries() {
        let mut case = two_gen();
        case.buses[0].p_load_nominal = 100.0;
        let mut opts = DatasetOptions::new(2, 0.1, 1, SolverKind::EconomicDispatch);
        opts.max_retries = 3;
        match generate_dataset(&case, &opts) {
            Err(DispatchError::GenerationFailure { point: 0, retries: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_range() {
        let case = two_gen();
        assert!(matches!(
            generate_dataset(&case, &DatasetOptions::new(1, 1.0, 0, SolverKind::EconomicDispatch)),
            Err(DispatchError::RangeFraction(_))
        ));
    }
}
