use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use circuitlearn::analysis::{exact_rank_i64, numeric_rank, rank_bound_check, QuantizedShallowNet};
use circuitlearn::circuit::{pack, Bit, Circuit, GateFn};
use circuitlearn::dist::{GenerativeDistribution, LabeledProduct, ProductDistribution};

/// Plain Gauss-Jordan rank over the rationals.
fn oracle_rank(m: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<BigRational>> = m
        .iter()
        .map(|r| r.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect())
        .collect();
    let cols = a.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..a.len()).find(|&r| !a[r][c].is_zero()) else { continue };
        a.swap(rank, p);
        let pivot = a[rank][c].clone();
        for r in 0..a.len() {
            if r != rank && !a[r][c].is_zero() {
                let f = &a[r][c] / &pivot;
                for j in c..cols {
                    let t = &f * &a[rank][j];
                    a[r][j] -= t;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn bits(n: usize) -> impl Strategy<Value = Vec<Bit>> {
    prop::collection::vec(any::<bool>().prop_map(Bit::from_bool), n)
}

fn gate() -> impl Strategy<Value = GateFn> {
    (0u8..16).prop_map(GateFn::from_mask)
}

fn circuit(depth: usize) -> impl Strategy<Value = Circuit> {
    let layers: Vec<_> = (1..=depth).map(|i| prop::collection::vec(gate(), 1 << (i - 1))).collect();
    layers.prop_map(|l| Circuit::from_layers(l).unwrap())
}

fn and_or_circuit(depth: usize) -> impl Strategy<Value = Circuit> {
    let g = prop::sample::select(vec![GateFn::AND, GateFn::OR, GateFn::NAND, GateFn::NOR]);
    let layers: Vec<_> = (1..=depth).map(|i| prop::collection::vec(g.clone(), 1 << (i - 1))).collect();
    layers.prop_map(|l| Circuit::from_layers(l).unwrap())
}

fn matrix() -> impl Strategy<Value = Vec<Vec<i64>>> {
    (1usize..7, 1usize..7).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(-3i64..=3, c), r))
}

proptest! {
    #[test]
    fn exact_rank_matches_oracle(m in matrix()) {
        prop_assert_eq!(exact_rank_i64(&m), oracle_rank(&m));
    }

    #[test]
    fn numeric_rank_matches_exact_on_small_integers(m in matrix()) {
        let f: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        prop_assert_eq!(numeric_rank(&f), exact_rank_i64(&m));
    }

    #[test]
    fn product_rank_is_bounded_by_inner_dimension(
        inner in 1usize..4,
        a in prop::collection::vec(prop::collection::vec(-2i64..=2, 3), 6),
        b in prop::collection::vec(prop::collection::vec(-2i64..=2, 6), 3),
    ) {
        let prod: Vec<Vec<i64>> = a
            .iter()
            .map(|row| (0..6).map(|j| (0..inner).map(|t| row[t] * b[t][j]).sum()).collect())
            .collect();
        prop_assert!(exact_rank_i64(&prod) <= inner);
    }

    #[test]
    fn rank_bound_holds(seed in any::<u64>(), n in 1usize..=4, k in 1usize..=8, bound in 1i64..=3) {
        let net = QuantizedShallowNet::random(n, k, bound, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = rank_bound_check(&net).unwrap();
        prop_assert!(r.pass && r.ranks_agree && r.structure_pass);
        prop_assert!(r.rank_exact as u64 <= net.rank_bound());
    }

    #[test]
    fn packed_eval_agrees(c in circuit(4), x in bits(16)) {
        prop_assert_eq!(c.eval(&x).unwrap().is_pos(), c.eval_packed(pack(&x)));
    }

    #[test]
    fn parity_circuit_computes_product(mask in 1u16.., x in bits(16)) {
        let relevant: Vec<usize> = (0..16).filter(|j| mask >> j & 1 == 1).collect();
        let c = Circuit::parity(4, &relevant).unwrap();
        let expected = relevant.iter().fold(Bit::Pos, |acc, &j| acc * x[j]);
        prop_assert_eq!(c.eval(&x).unwrap(), expected);
    }

    #[test]
    fn circuit_json_round_trips(c in circuit(3)) {
        prop_assert_eq!(Circuit::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn negation_flips_every_output(g in gate(), a in any::<bool>(), b in any::<bool>()) {
        let (a, b) = (Bit::from_bool(a), Bit::from_bool(b));
        prop_assert_eq!(g.negated().eval(a, b), -g.eval(a, b));
        prop_assert_eq!(g.negated().negated(), g);
    }

    #[test]
    fn generative_samples_are_consistent(c in and_or_circuit(3), seed in any::<u64>()) {
        let g = GenerativeDistribution::new(c.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in g.sample_n(20, &mut rng) {
            prop_assert_eq!(c.eval(&s.x).unwrap(), s.y);
        }
    }

    #[test]
    fn enumerated_product_is_a_distribution(
        p in prop::collection::vec(0.05f64..0.95, 4),
        c in circuit(2),
    ) {
        let d = LabeledProduct::new(ProductDistribution::new(p).unwrap(), c.clone()).unwrap().enumerate().unwrap();
        let total = (0..d.len()).fold(BigRational::zero(), |acc, i| acc + d.probability(i));
        prop_assert!(total.is_one());
        prop_assert!(d.atoms().iter().all(|a| c.eval(&a.x).unwrap() == a.y));
        let chain = d.chain(&c).unwrap();
        prop_assert_eq!(chain.len(), 3);
        prop_assert!(chain[0].mean_label_exact() == d.mean_label_exact());
        prop_assert!(d.tv_distance(&d).unwrap().is_zero());
    }
}
