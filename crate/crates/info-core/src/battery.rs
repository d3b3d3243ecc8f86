//! Randomized property battery over small discrete instances.
//!
//! Instance `i` of a run seeded with `s` is generated from its own ChaCha
//! stream, so any single instance can be regenerated from `(s, i)` or
//! replayed from its serialized text form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{complexity_bound_check, multiview_query_check};
use crate::dist::{text, ConditionalPmf, JointPmf, Pmf};
use crate::error::{InfoError, Result};
use crate::measures::{
    conditional_mutual_information, entropy, kl_divergence, mutual_information,
    superfluousness_identity_residual,
};

/// Largest alphabet drawn for any variable.
pub const MAX_ALPHABET: usize = 8;
pub const IDENTITY_TOL: f64 = 1e-12;
pub const EXTREME_TOL: f64 = 1e-9;
pub const NONNEG_TOL: f64 = 1e-12;

/// One bundle of random objects; every check draws from the same bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub index: u64,
    /// Unconstrained joint over `(X, Q, Z)`.
    pub joint: JointPmf,
    pub source: Pmf,
    pub encoder: ConditionalPmf,
    pub prior: Pmf,
    pub transform: ConditionalPmf,
    /// Deterministic query over `source`'s alphabet.
    pub query_map: ConditionalPmf,
    /// Deterministic code over `source`'s alphabet, nested with `query_map`
    /// (one refines the other).
    pub code_map: ConditionalPmf,
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, allow_zeros: bool) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if allow_zeros && rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.01..1.0)
                }
            })
            .collect();
        if w.iter().any(|&v| v > 0.0) {
            return w;
        }
    }
}

fn random_pmf(rng: &mut ChaCha8Rng, n: usize, allow_zeros: bool) -> Pmf {
    Pmf::from_weights(&random_weights(rng, n, allow_zeros)).expect("positive weights")
}

fn random_channel(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ConditionalPmf {
    let data = (0..rows)
        .flat_map(|_| random_pmf(rng, cols, true).probs().to_vec())
        .collect();
    ConditionalPmf::from_flat(rows, cols, data).expect("rows are normalized")
}

/// Nested partitions of `0..n`: a fine labelling and a coarse one that is a
/// function of it. Returns `(fine, coarse)` as deterministic tables.
fn nested_partitions(rng: &mut ChaCha8Rng, n: usize) -> (ConditionalPmf, ConditionalPmf) {
    let n_fine = rng.random_range(1..=n);
    let n_coarse = rng.random_range(1..=n_fine);
    let fine_of: Vec<usize> = (0..n).map(|x| if x < n_fine { x } else { rng.random_range(0..n_fine) }).collect();
    let coarse_of_fine: Vec<usize> = (0..n_fine)
        .map(|f| if f < n_coarse { f } else { rng.random_range(0..n_coarse) })
        .collect();
    let fine = ConditionalPmf::deterministic(n, n_fine, |x| fine_of[x]).unwrap();
    let coarse = ConditionalPmf::deterministic(n, n_coarse, |x| coarse_of_fine[fine_of[x]]).unwrap();
    (fine, coarse)
}

pub fn generate_instance(seed: u64, index: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let dim = |rng: &mut ChaCha8Rng| rng.random_range(2..=MAX_ALPHABET.min(5));
    let shape = vec![dim(&mut rng), dim(&mut rng), dim(&mut rng)];
    let joint_table = random_pmf(&mut rng, shape.iter().product(), true);
    let joint = JointPmf::new(
        shape,
        vec!["X".into(), "Q".into(), "Z".into()],
        joint_table.probs().to_vec(),
    )
    .expect("valid joint");

    let nx = rng.random_range(2..=MAX_ALPHABET);
    let nz = rng.random_range(2..=MAX_ALPHABET);
    let nv = rng.random_range(2..=MAX_ALPHABET);
    let source = random_pmf(&mut rng, nx, true);
    let encoder = random_channel(&mut rng, nx, nz);
    let prior = random_pmf(&mut rng, nz, false);
    let transform = random_channel(&mut rng, nx, nv);
    let (fine, coarse) = nested_partitions(&mut rng, nx);
    let (query_map, code_map) = if rng.random_bool(0.5) {
        (fine, coarse)
    } else {
        (coarse, fine)
    };
    Instance {
        seed,
        index,
        joint,
        source,
        encoder,
        prior,
        transform,
        query_map,
        code_map,
    }
}

impl Instance {
    pub fn to_text(&self) -> String {
        let mut out = format!("# seed: {}\n# index: {}\n", self.seed, self.index);
        let sections: [(&str, String); 7] = [
            ("joint", text::joint_to_string(&self.joint)),
            ("source", text::pmf_to_string(&self.source)),
            ("encoder", text::conditional_to_string(&self.encoder)),
            ("prior", text::pmf_to_string(&self.prior)),
            ("transform", text::conditional_to_string(&self.transform)),
            ("query_map", text::conditional_to_string(&self.query_map)),
            ("code_map", text::conditional_to_string(&self.code_map)),
        ];
        for (name, body) in sections {
            out.push_str(&format!("[{name}]\n{body}"));
        }
        out
    }

    pub fn from_text(src: &str) -> Result<Instance> {
        let mut seed = 0;
        let mut index = 0;
        let mut sections: Vec<(String, String)> = Vec::new();
        for (i, line) in src.lines().enumerate() {
            let t = line.trim();
            if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                sections.push((name.to_string(), String::new()));
                continue;
            }
            if sections.is_empty() {
                let parse = |v: &str| {
                    v.trim().parse::<u64>().map_err(|e| InfoError::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })
                };
                if let Some(v) = t.strip_prefix("# seed:") {
                    seed = parse(v)?;
                } else if let Some(v) = t.strip_prefix("# index:") {
                    index = parse(v)?;
                }
                continue;
            }
            let body = &mut sections.last_mut().unwrap().1;
            body.push_str(line);
            body.push('\n');
        }
        let get = |name: &str| {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| b.as_str())
                .ok_or_else(|| InfoError::Parse {
                    line: 0,
                    message: format!("missing section [{name}]"),
                })
        };
        Ok(Instance {
            seed,
            index,
            joint: text::parse_joint(get("joint")?)?
                .with_labels(&["X", "Q", "Z"])?,
            source: text::parse_pmf(get("source")?)?,
            encoder: text::parse_conditional(get("encoder")?)?,
            prior: text::parse_pmf(get("prior")?)?,
            transform: text::parse_conditional(get("transform")?)?,
            query_map: text::parse_conditional(get("query_map")?)?,
            code_map: text::parse_conditional(get("code_map")?)?,
        })
    }
}

/// Names of the checks in the order they are evaluated.
pub const CHECKS: [&str; 7] = [
    "nonnegativity",
    "superfluousness_identity",
    "sufficiency_iff_equal_information",
    "lossless_extreme",
    "closed_channel_extreme",
    "complexity_decomposition",
    "multiview_equality",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// The quantity compared against the tolerance (a residual or a margin).
    pub value: f64,
    pub passed: bool,
}

fn outcome(name: &'static str, value: f64, passed: bool) -> CheckOutcome {
    CheckOutcome {
        name,
        value,
        passed,
    }
}

/// Evaluates every check on one instance.
pub fn check_instance(inst: &Instance) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::with_capacity(CHECKS.len());

    let j = &inst.joint;
    let mut lowest = f64::INFINITY;
    for axis in 0..3 {
        lowest = lowest.min(entropy(&j.marginal_pmf(axis)?));
        lowest = lowest.min(conditional_mutual_information(j, axis)?);
    }
    for pair in [[0, 1], [0, 2], [1, 2]] {
        lowest = lowest.min(mutual_information(&j.marginal(&pair)?)?);
    }
    let marginal = inst.encoder.push_forward(&inst.source)?;
    lowest = lowest.min(kl_divergence(&marginal, &inst.prior)?);
    out.push(outcome(CHECKS[0], lowest, lowest >= -NONNEG_TOL));

    let r = superfluousness_identity_residual(j)?;
    out.push(outcome(CHECKS[1], r.abs(), r.abs() < IDENTITY_TOL));

    // Nested deterministic query and code over the same source.
    let nested = JointPmf::from_markov(&inst.source, &inst.query_map, &inst.code_map)?;
    let suff = conditional_mutual_information(&nested, 2)?;
    let sup = conditional_mutual_information(&nested, 1)?;
    let i_xz = mutual_information(&nested.marginal(&[0, 2])?)?;
    let i_xq = mutual_information(&nested.marginal(&[0, 1])?)?;
    let both_zero = suff < EXTREME_TOL && sup < EXTREME_TOL;
    let equal_info = (i_xz - i_xq).abs() < EXTREME_TOL;
    out.push(outcome(CHECKS[2], (i_xz - i_xq).abs(), both_zero == equal_info));

    // Identity query, code a bijection of the data.
    let n = inst.source.len();
    let shift = (inst.index as usize % n).max(1);
    let identity = ConditionalPmf::identity(n)?;
    let bijection = ConditionalPmf::deterministic(n, n, |x| (x + shift) % n)?;
    let lossless = JointPmf::from_markov(&inst.source, &identity, &bijection)?;
    let i_xz = mutual_information(&lossless.marginal(&[0, 2])?)?;
    let gap = (i_xz - entropy(&inst.source)).abs();
    out.push(outcome(CHECKS[3], gap, gap < EXTREME_TOL));

    // Query independent of the data; the matched code is too.
    let blind_query = ConditionalPmf::constant(n, &inst.prior)?;
    let blind_code = ConditionalPmf::constant(n, &inst.transform.row_pmf(0))?;
    let closed = JointPmf::from_markov(&inst.source, &blind_query, &blind_code)?;
    let i_xq = mutual_information(&closed.marginal(&[0, 1])?)?;
    let i_xz = mutual_information(&closed.marginal(&[0, 2])?)?;
    out.push(outcome(
        CHECKS[4],
        i_xz.max(i_xq),
        i_xq < EXTREME_TOL && i_xz < EXTREME_TOL,
    ));

    let b = complexity_bound_check(&inst.encoder, &inst.prior, &inst.source)?;
    let r = b.residual().abs();
    out.push(outcome(
        CHECKS[5],
        r,
        r < IDENTITY_TOL && b.expected_kl >= b.mutual_info - NONNEG_TOL && b.marginal_kl >= -NONNEG_TOL,
    ));

    let m = multiview_query_check(&inst.transform, &inst.encoder, &inst.source)?;
    let d = (m.i_qz - m.i_xz).abs();
    out.push(outcome(CHECKS[6], d, d < IDENTITY_TOL));

    Ok(out)
}

/// Aggregate over a run.
#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub seed: u64,
    pub count: u64,
    /// `(check, worst value, number of failures)` in [`CHECKS`] order.
    pub summary: Vec<(&'static str, f64, usize)>,
    pub failures: Vec<(Instance, CheckOutcome)>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_battery(seed: u64, count: u64) -> Result<BatteryReport> {
    if count == 0 {
        return Err(InfoError::Empty);
    }
    let mut summary: Vec<(&'static str, f64, usize)> = CHECKS.iter().map(|&c| (c, 0.0, 0)).collect();
    let mut failures = Vec::new();
    for index in 0..count {
        let inst = generate_instance(seed, index);
        for (slot, o) in summary.iter_mut().zip(check_instance(&inst)?) {
            // Nonnegativity reports the smallest value; everything else the largest.
            slot.1 = if o.name == CHECKS[0] {
                if index == 0 { o.value } else { slot.1.min(o.value) }
            } else {
                slot.1.max(o.value)
            };
            if !o.passed {
                slot.2 += 1;
                failures.push((inst.clone(), o));
            }
        }
    }
    Ok(BatteryReport {
        seed,
        count,
        summary,
        failures,
    })
}
