use pao::model::{next_permutation, Budget, Domain, Market, Priorities};
use pao::rules::Rule;
use rayon::prelude::*;

fn all_tables(n: usize, m: usize) -> Vec<Priorities> {
    let mut perms = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        perms.push(p.clone());
        if !next_permutation(&mut p) {
            break;
        }
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        out.push(Priorities::new(n, idx.iter().map(|&i| perms[i].clone()).collect()).unwrap());
        let mut k = 0;
        loop {
            if k == m {
                return out;
            }
            idx[k] += 1;
            if idx[k] < perms.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn assert_same(direct: &Rule, genda: &Rule) -> usize {
    let market = direct.market();
    let space = market.space(Budget::default()).unwrap();
    let count = space.profile_count(market.n(), Budget::default()).unwrap();
    let mismatches: Vec<usize> = (0..count)
        .into_par_iter()
        .filter(|&idx| {
            let mut ids = vec![0; market.n()];
            space.decode(market.n(), idx, &mut ids);
            let p = space.profile(&ids);
            direct.evaluate(&p).unwrap() != genda.evaluate(&p).unwrap()
        })
        .collect();
    if let Some(&idx) = mismatches.first() {
        let mut ids = vec![0; market.n()];
        space.decode(market.n(), idx, &mut ids);
        let p = space.profile(&ids);
        panic!(
            "{}: {} mismatches, first {:?}: direct {:?} genda {:?}",
            direct.name(),
            mismatches.len(),
            p,
            direct.evaluate(&p).unwrap(),
            genda.evaluate(&p).unwrap()
        );
    }
    count
}

#[test]
fn bespoke_equals_generalized_da_all_tables_small() {
    for (n, m) in [(1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2)] {
        let market = Market::new(n, m);
        for pri in all_tables(n, m) {
            for rule in [
                Rule::ttc(market.clone(), pri.clone()).unwrap(),
                Rule::da(market.clone(), pri.clone()).unwrap(),
                Rule::boston(market.clone(), pri.clone()).unwrap(),
            ] {
                assert_same(&rule, &rule.via_genda().unwrap());
            }
        }
        let scores: Vec<f64> = (0..n).map(|a| 10.0 + (a * 7 % 5) as f64 + a as f64 * 0.5).collect();
        let sd = Rule::sd(market.clone(), &scores).unwrap();
        assert_same(&sd, &sd.via_genda().unwrap());
    }
}

#[test]
fn bespoke_equals_generalized_da_three_by_three() {
    let market = Market::new(3, 3);
    let tables = all_tables(3, 3);
    assert_eq!(tables.len(), 216);
    for pri in &tables {
        let ttc = Rule::ttc(market.clone(), pri.clone()).unwrap();
        assert_eq!(assert_same(&ttc, &ttc.via_genda().unwrap()), 13_824);
    }
    for pri in tables.iter().step_by(7) {
        for rule in [Rule::da(market.clone(), pri.clone()).unwrap(), Rule::boston(market.clone(), pri.clone()).unwrap()] {
            assert_same(&rule, &rule.via_genda().unwrap());
        }
    }
    for scores in [[90.0, 50.0, 70.0], [1.0, 2.0, 3.0]] {
        let sd = Rule::sd(market.clone(), &scores).unwrap();
        assert_same(&sd, &sd.via_genda().unwrap());
    }
}

#[test]
fn capacities_da_and_boston() {
    let market = Market::with_labels(
        vec!["a".into(), "b".into(), "c".into()],
        vec![("x".into(), 2), ("y".into(), 1)],
        Domain::Full,
    )
    .unwrap();
    for pri in all_tables(3, 2) {
        for rule in [Rule::da(market.clone(), pri.clone()).unwrap(), Rule::boston(market.clone(), pri.clone()).unwrap()] {
            assert_same(&rule, &rule.via_genda().unwrap());
        }
    }
    let sd = Rule::sd(market.clone(), &[3.0, 9.0, 5.0]).unwrap();
    assert_same(&sd, &sd.via_genda().unwrap());
}

#[test]
fn presets_are_individually_rational() {
    let market = Market::new(3, 3);
    let pri = Priorities::new(3, vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]).unwrap();
    let space = market.space(Budget::default()).unwrap();
    for rule in [
        Rule::ttc(market.clone(), pri.clone()).unwrap(),
        Rule::da(market.clone(), pri.clone()).unwrap(),
        Rule::boston(market.clone(), pri.clone()).unwrap(),
        Rule::sd(market.clone(), &[3.0, 2.0, 1.0]).unwrap(),
    ] {
        let mut ids = [0; 3];
        for idx in 0..space.profile_count(3, Budget::default()).unwrap() {
            space.decode(3, idx, &mut ids);
            let p = space.profile(&ids);
            let mu = rule.evaluate(&p).unwrap();
            for a in 0..3 {
                assert!(p[a].is_acceptable(mu.get(a)), "{} not IR at {p:?}", rule.name());
            }
        }
    }
}
