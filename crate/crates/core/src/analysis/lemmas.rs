use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::circuit::{unpack, Bit, Circuit, GateFn};
use crate::dist::{
    certify_properties, DiscreteDistribution, GenerativeDistribution, LabeledProduct, ProductDistribution,
    TIE_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::train::{derive_hyperparams, train_layerwise, AlignmentTarget, Variant};

/// Outcome of one lemma check on one instance. `margin >= 0` means the
/// instance satisfies the statement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub lemma: String,
    pub params: serde_json::Value,
    pub margin: f64,
    pub pass: bool,
}

impl Verdict {
    fn new(lemma: &str, params: serde_json::Value, margin: f64, pass: bool) -> Verdict {
        Verdict {
            lemma: lemma.to_string(),
            params,
            margin,
            pass,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaScope {
    #[default]
    All,
    ParityCircuit,
    ParityCorrelationGap,
    ProductProperties,
    GenerativeCorrelation,
    GenerativePushforward,
    GradientAlignment,
}

impl LemmaScope {
    pub const NAMES: [&'static str; 7] = [
        "all",
        "parity_circuit",
        "parity_correlation_gap",
        "product_properties",
        "generative_correlation",
        "generative_pushforward",
        "gradient_alignment",
    ];

    fn covers(self, other: LemmaScope) -> bool {
        self == LemmaScope::All || self == other
    }
}

impl std::str::FromStr for LemmaScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<LemmaScope> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::InvalidRange(format!("unknown scope {s:?}; expected one of {:?}", LemmaScope::NAMES)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuiteConfig {
    #[serde(default)]
    pub scope: LemmaScope,
    pub max_depth: usize,
    pub parity_circuits: usize,
    pub parity_products: usize,
    pub generative_circuits: usize,
    pub seed: u64,
}

impl Default for LemmaSuiteConfig {
    fn default() -> LemmaSuiteConfig {
        LemmaSuiteConfig {
            scope: LemmaScope::All,
            max_depth: 3,
            parity_circuits: 50,
            parity_products: 20,
            generative_circuits: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub lemma: String,
    pub instances: usize,
    pub passed: usize,
    pub min_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuiteReport {
    pub config: LemmaSuiteConfig,
    pub summaries: Vec<LemmaSummary>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl LemmaSuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn two_thirds_pow(i: usize) -> BigRational {
    BigRational::new(BigInt::from(2).pow(i as u32), BigInt::from(3).pow(i as u32))
}

/// Compares the parity circuit with the direct product of the relevant
/// coordinates on every input. Margin is minus the number of mismatches.
pub fn check_parity_circuit(c: &Circuit, relevant: &[usize]) -> Result<Verdict> {
    let n = c.n_inputs();
    if n > 1 << 16 || c.depth() > 4 {
        return Err(Error::TooLarge(format!("{n} inputs is too many to enumerate")));
    }
    let mut mismatches = 0u64;
    for bits in 0..1u64 << n {
        let x = unpack(bits, n);
        let want = relevant.iter().fold(Bit::Pos, |acc, &j| acc * x[j]);
        mismatches += (c.eval(&x)? != want) as u64;
    }
    Ok(Verdict::new(
        "parity_circuit",
        json!({"depth": c.depth(), "relevant": relevant}),
        0.0 - mismatches as f64,
        mismatches == 0,
    ))
}

/// At every influencing node of `c`: `|E[z y]| - |E[y]| >= (2 xi)^k` and
/// `P[z = +1]` in `(xi, 1 - xi)`.
pub fn check_parity_gap(chain: &[DiscreteDistribution], c: &Circuit, xi: f64, k: usize) -> Result<Verdict> {
    let bound = (2.0 * xi).powi(k as i32);
    let ey = chain[0].mean_label_exact().abs();
    let mut margin = f64::INFINITY;
    let mut marginals_ok = true;
    for level in 1..=c.depth() {
        let infl = c.level_influences(
            level,
            crate::circuit::InfluenceMode::Analytic,
            crate::circuit::InfluenceReading::RemainingCircuit,
        )?;
        for (j, est) in infl.iter().enumerate() {
            if est.is_exact_zero() {
                continue;
            }
            let gap = to_f64(&(chain[level].correlation_exact(j)?.abs() - &ey));
            margin = margin.min(gap - bound);
            let m = to_f64(&chain[level].marginal_pos(j)?);
            marginals_ok &= m > xi && m < 1.0 - xi;
        }
    }
    Ok(Verdict::new(
        "parity_correlation_gap",
        json!({"depth": c.depth(), "xi": xi, "k": k, "bound": bound}),
        margin,
        margin >= -TIE_TOLERANCE && marginals_ok,
    ))
}

/// For a product input distribution that is `nondegeneracy`-non-degenerate,
/// with `delta = min(certified delta, nondegeneracy)` unless overridden:
/// the three structural properties hold, the pattern lower bound is at
/// least `delta^2 / 4`, and every influencing node has `P[z = +1]` in
/// `(delta / 2, 1 - delta / 2)`.
pub fn check_product_properties(
    chain: &[DiscreteDistribution],
    c: &Circuit,
    nondegeneracy: f64,
    delta_override: Option<f64>,
) -> Result<Verdict> {
    let report = certify_properties(chain, c)?;
    let props = report.properties.as_ref().expect("certify_properties fills properties");
    let delta = delta_override.unwrap_or_else(|| props.delta_certified.unwrap_or(nondegeneracy).min(nondegeneracy));
    let eps_margin = props.epsilon_certified.map_or(f64::NEG_INFINITY, |e| e - delta * delta / 4.0);
    let corr_margin = props.delta_certified.map_or(0.0, |d| d - delta);
    let mut marg_margin = f64::INFINITY;
    for n in report.nodes.iter().filter(|n| n.influencing) {
        marg_margin = marg_margin.min(n.marginal_pos - delta / 2.0).min(1.0 - delta / 2.0 - n.marginal_pos);
    }
    let margin = eps_margin.min(corr_margin).min(marg_margin);
    let pass = props.property1
        && props.property2
        && props.property3
        && eps_margin >= -TIE_TOLERANCE
        && corr_margin >= -TIE_TOLERANCE
        && marg_margin > 0.0;
    Ok(Verdict::new(
        "product_properties",
        json!({"depth": c.depth(), "delta": delta, "epsilon": props.epsilon_certified}),
        margin,
        pass,
    ))
}

/// Every node at level `i` has `|E[z y]| = (2/3)^i` exactly. One verdict
/// per level, with margin `min_j |c| - E[y] - (2/3)^d`.
pub fn check_generative_correlations(chain: &[DiscreteDistribution], c: &Circuit) -> Result<Vec<Verdict>> {
    let d = c.depth();
    let floor = two_thirds_pow(d);
    let ey = chain[0].mean_label_exact();
    let mut out = Vec::new();
    for (level, dist) in chain.iter().enumerate().skip(1) {
        let target = two_thirds_pow(level);
        let mut exact = true;
        let mut min_corr: Option<BigRational> = None;
        for j in 0..dist.dim() {
            let a = dist.correlation_exact(j)?.abs();
            exact &= a == target;
            if min_corr.as_ref().is_none_or(|m| a < *m) {
                min_corr = Some(a);
            }
        }
        let min_corr = min_corr.expect("levels are nonempty");
        let margin = to_f64(&(min_corr - &ey - &floor));
        out.push(Verdict::new(
            "generative_correlation",
            json!({"depth": d, "level": level, "circuit": gate_names(c)}),
            margin,
            exact && margin >= -TIE_TOLERANCE,
        ));
    }
    Ok(out)
}

fn gate_names(c: &Circuit) -> Vec<Vec<String>> {
    c.layers().iter().map(|l| l.iter().map(|g| g.to_string()).collect()).collect()
}

/// `D^(i)` pushed through layer `i` matches `D^(i-1)`. Margin is minus the
/// total variation distance.
pub fn check_pushforward(
    upper: &DiscreteDistribution,
    lower: &DiscreteDistribution,
    c: &Circuit,
) -> Result<Verdict> {
    let level = upper.dim().trailing_zeros() as usize;
    if level == 0 {
        return Err(Error::InvalidRange("level 0 has no layer above it".into()));
    }
    let tv = to_f64(&upper.pushforward(c, level - 1)?.tv_distance(lower)?);
    Ok(Verdict::new(
        "generative_pushforward",
        json!({"depth": c.depth(), "level": level, "tv": tv}),
        0.0 - tv,
        tv < 1e-12,
    ))
}

/// Trains on the exact generative distribution of `c` with the alignment
/// diagnostic switched on.
pub fn check_alignment(c: &Circuit, seed: u64) -> Result<Verdict> {
    let data = GenerativeDistribution::new(c.clone())?.enumerate()?;
    let report = certify_properties(&data.chain(c)?, c)?;
    let props = report.properties.expect("certify_properties fills properties");
    let delta = two_thirds_pow(c.depth()).to_f64().unwrap_or(0.0);
    let eps = props
        .epsilon_certified
        .ok_or_else(|| Error::PreconditionViolated("no positive pattern probability".into()))?;
    let mut cfg = derive_hyperparams(c.n_inputs(), c.depth(), 0.1, delta, Some(eps), data.mean_label(), Variant::Structured)?;
    cfg.seed = seed;
    let out = train_layerwise(
        &data,
        &cfg,
        Some(AlignmentTarget {
            circuit: c,
            epsilon: eps,
            delta,
            every: 50,
        }),
    )?;
    let a = out.alignment.unwrap_or_default();
    Ok(Verdict::new(
        "gradient_alignment",
        json!({"depth": c.depth(), "seed": seed, "checks": a.checks, "failures": a.failures}),
        a.min_slack.unwrap_or(f64::NEG_INFINITY),
        a.checks > 0 && a.failures == 0 && a.skipped_layers.is_empty(),
    ))
}

const AND_OR: [GateFn; 4] = [GateFn::AND, GateFn::OR, GateFn::NAND, GateFn::NOR];

/// `p` on a 1/64 grid with `p` in `(xi, 1/2 - xi)` or `(1/2 + xi, 1 - xi)`
/// for `xi = 1/16`.
fn banded_p<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let lo: Vec<u32> = (5..28).chain(37..60).collect();
    *lo.choose(rng).expect("nonempty") as f64 / 64.0
}

pub const PARITY_XI: f64 = 1.0 / 16.0;

pub fn run_lemma_suite(cfg: &LemmaSuiteConfig) -> Result<LemmaSuiteReport> {
    if cfg.max_depth == 0 || cfg.max_depth > 4 {
        return Err(Error::InvalidRange(format!("max depth {} must lie in 1..=4", cfg.max_depth)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut verdicts = Vec::new();

    let scope = cfg.scope;
    let want_products = scope.covers(LemmaScope::ParityCorrelationGap) || scope.covers(LemmaScope::ProductProperties);
    let want_generative =
        scope.covers(LemmaScope::GenerativeCorrelation) || scope.covers(LemmaScope::GenerativePushforward);

    for _ in 0..cfg.parity_circuits * scope.covers(LemmaScope::ParityCircuit) as usize {
        let d = rng.gen_range(1..=cfg.max_depth);
        let n = 1usize << d;
        let k = rng.gen_range(1..=n);
        let mut relevant: Vec<usize> = (0..n).collect();
        relevant.shuffle(&mut rng);
        relevant.truncate(k);
        let c = Circuit::parity(d, &relevant)?;
        verdicts.push(check_parity_circuit(&c, &relevant)?);
    }

    for _ in 0..cfg.parity_products * want_products as usize {
        let d = rng.gen_range(1..=cfg.max_depth);
        let n = 1usize << d;
        let k = rng.gen_range(1..=n.min(4));
        let mut relevant: Vec<usize> = (0..n).collect();
        relevant.shuffle(&mut rng);
        relevant.truncate(k);
        let pd = ProductDistribution::new((0..n).map(|_| banded_p(&mut rng)).collect())?;
        let c = Circuit::parity(d, &relevant)?;
        let chain = LabeledProduct::new(pd.clone(), c.clone())?.enumerate()?.chain(&c)?;
        if scope.covers(LemmaScope::ParityCorrelationGap) {
            let mut v = check_parity_gap(&chain, &c, PARITY_XI, k)?;
            v.params["p"] = json!(pd.p());
            v.params["relevant"] = json!(relevant);
            verdicts.push(v);
        }
        if scope.covers(LemmaScope::ProductProperties) {
            let mut v = check_product_properties(&chain, &c, pd.non_degeneracy(), None)?;
            v.params["p"] = json!(pd.p());
            v.params["relevant"] = json!(relevant);
            verdicts.push(v);
        }
    }

    for _ in 0..cfg.generative_circuits * want_generative as usize {
        let d = rng.gen_range(1..=cfg.max_depth);
        let c = Circuit::random(d, &AND_OR, &mut rng)?;
        let g = GenerativeDistribution::new(c.clone())?;
        if scope.covers(LemmaScope::GenerativeCorrelation) {
            verdicts.extend(check_generative_correlations(&g.enumerate()?.chain(&c)?, &c)?);
        }
        if scope.covers(LemmaScope::GenerativePushforward) {
            let levels = (0..=d).map(|i| g.enumerate_level(i)).collect::<Result<Vec<_>>>()?;
            for i in 1..=d {
                verdicts.push(check_pushforward(&levels[i], &levels[i - 1], &c)?);
            }
        }
    }

    if scope.covers(LemmaScope::GradientAlignment) {
        let c = Circuit::random(cfg.max_depth.min(3), &AND_OR, &mut rng)?;
        verdicts.push(check_alignment(&c, rng.gen())?);
    }

    let mut summaries: Vec<LemmaSummary> = Vec::new();
    for v in &verdicts {
        match summaries.iter_mut().find(|s| s.lemma == v.lemma) {
            Some(s) => {
                s.instances += 1;
                s.passed += v.pass as usize;
                s.min_margin = s.min_margin.min(v.margin);
            }
            None => summaries.push(LemmaSummary {
                lemma: v.lemma.clone(),
                instances: 1,
                passed: v.pass as usize,
                min_margin: v.margin,
            }),
        }
    }
    Ok(LemmaSuiteReport {
        config: cfg.clone(),
        pass: verdicts.iter().all(|v| v.pass),
        summaries,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::parity_correlation_bound;

    fn product_chain(p: f64, d: usize, relevant: &[usize]) -> (Circuit, Vec<DiscreteDistribution>) {
        let c = Circuit::parity(d, relevant).unwrap();
        let pd = ProductDistribution::constant(1 << d, p).unwrap();
        let chain = LabeledProduct::new(pd, c.clone()).unwrap().enumerate().unwrap().chain(&c).unwrap();
        (c, chain)
    }

    #[test]
    fn suite_passes_on_small_config() {
        let r = run_lemma_suite(&LemmaSuiteConfig {
            scope: LemmaScope::All,
            max_depth: 2,
            parity_circuits: 5,
            parity_products: 4,
            generative_circuits: 4,
            seed: 3,
        })
        .unwrap();
        assert!(r.pass, "{}", r.to_json());
        assert_eq!(r.summaries.len(), 6);
    }

    #[test]
    fn scope_selects_one_check() {
        let cfg = LemmaSuiteConfig {
            scope: "generative-pushforward".parse().unwrap(),
            generative_circuits: 3,
            ..LemmaSuiteConfig::default()
        };
        let r = run_lemma_suite(&cfg).unwrap();
        assert!(r.pass);
        assert!(r.verdicts.iter().all(|v| v.lemma == "generative_pushforward"));
        assert!("bogus".parse::<LemmaScope>().is_err());
        for name in LemmaScope::NAMES {
            assert!(name.parse::<LemmaScope>().is_ok());
        }
    }

    #[test]
    fn corrupted_parity_circuit_fails() {
        let mut c = Circuit::parity(2, &[0, 1, 3]).unwrap();
        let g = c.gate(1, 0);
        c.set_gate(1, 0, g.negated());
        let v = check_parity_circuit(&c, &[0, 1, 3]).unwrap();
        assert!(!v.pass && v.margin < 0.0);
    }

    #[test]
    fn gap_check_agrees_with_certifier() {
        let (c, chain) = product_chain(0.25, 2, &[0, 2]);
        let v = check_parity_gap(&chain, &c, PARITY_XI, 2).unwrap();
        let pd = ProductDistribution::constant(4, 0.25).unwrap();
        let r = parity_correlation_bound(&pd, &[0, 2], PARITY_XI).unwrap();
        assert_eq!(v.pass, r.pass);
        assert!(v.pass);
        let min = r.records.iter().map(|x| x.margin).fold(f64::INFINITY, f64::min);
        assert!((v.margin - min).abs() < 1e-15);
    }

    #[test]
    fn uniform_inputs_fail_gap_check() {
        let (c, chain) = product_chain(0.5, 2, &[0, 1, 2]);
        let v = check_parity_gap(&chain, &c, PARITY_XI, 3).unwrap();
        assert!(!v.pass, "{v:?}");
    }

    #[test]
    fn oversized_delta_fails_product_check() {
        let (c, chain) = product_chain(0.25, 2, &[1, 2]);
        assert!(check_product_properties(&chain, &c, 0.25, None).unwrap().pass);
        assert!(!check_product_properties(&chain, &c, 0.25, Some(0.9)).unwrap().pass);
    }

    #[test]
    fn product_chain_fails_generative_check() {
        let c = Circuit::uniform(2, GateFn::AND).unwrap();
        let chain = LabeledProduct::new(ProductDistribution::uniform(4), c.clone())
            .unwrap()
            .enumerate()
            .unwrap()
            .chain(&c)
            .unwrap();
        assert!(check_generative_correlations(&chain, &c).unwrap().iter().any(|v| !v.pass));
        let g = GenerativeDistribution::new(c.clone()).unwrap();
        let vs = check_generative_correlations(&g.enumerate().unwrap().chain(&c).unwrap(), &c).unwrap();
        assert!(vs.iter().all(|v| v.pass));
        assert!(vs[0].margin > 0.0 && vs[1].margin.abs() < 1e-12);
    }

    #[test]
    fn wrong_circuit_fails_pushforward_check() {
        let c = Circuit::uniform(2, GateFn::AND).unwrap();
        let other = Circuit::uniform(2, GateFn::OR).unwrap();
        let g = GenerativeDistribution::new(c.clone()).unwrap();
        let (up, low) = (g.enumerate_level(2).unwrap(), g.enumerate_level(1).unwrap());
        assert!(check_pushforward(&up, &low, &c).unwrap().pass);
        let v = check_pushforward(&up, &low, &other).unwrap();
        assert!(!v.pass && v.margin < -1e-3);
    }

    #[test]
    fn exact_two_thirds_values() {
        assert_eq!(two_thirds_pow(0), BigRational::from_integer(BigInt::from(1)));
        assert_eq!(two_thirds_pow(3), BigRational::new(BigInt::from(8), BigInt::from(27)));
    }
}
