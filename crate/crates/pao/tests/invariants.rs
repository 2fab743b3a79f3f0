use std::sync::Arc;

use proptest::prelude::*;

use pao::engine::{
    check_menus, osp_to_pao, run_pao, run_straightforward, transcript_jsonl, CanonicalMenus, GendaMenus,
    PaoTranscript,
};
use pao::experiments::{
    analyze_records, generate_market, metrics_from, run_battery, write_battery, recompute_battery, AgentMix, Arm, BatteryConfig,
    Environment, TreatmentPlan,
};
use pao::model::{
    is_consistent, Budget, ChoiceHistory, CollectiveHistory, Domain, Market, Obj, Preference, Priorities,
};
use pao::osp::{
    build_osp_sd, build_osp_ttc, check_acyclic, play_millipede, random_actions, MillipedeStrategy, Node, NodeKind,
};
use pao::rules::{run_generalized_da, Rule};
use pao::session::{derive_tokens, replay, EngineChoice, EventKind, Mechanism, Session, SessionConfig, Submission};
use pao::strategies::{all_straightforward, seeded_random, Strategy as PaoStrategy};
use pao::table::RuleTable;

#[derive(Clone, Debug)]
struct Case {
    n: usize,
    m: usize,
    /// Per object, agents from highest priority down.
    priorities: Vec<Vec<usize>>,
    scores: Vec<f64>,
    /// Per agent, a permutation of `0..=m` where `m` stands for `∅`.
    prefs: Vec<Vec<usize>>,
}

impl Case {
    fn market(&self) -> Market {
        Market::new(self.n, self.m)
    }

    fn priorities(&self) -> Priorities {
        Priorities::new(self.n, self.priorities.clone()).unwrap()
    }

    fn profile(&self) -> Vec<Preference> {
        self.prefs
            .iter()
            .map(|p| {
                let order: Vec<Option<usize>> = p.iter().map(|&i| (i < self.m).then_some(i)).collect();
                Preference::from_indices(self.m, &order).unwrap()
            })
            .collect()
    }

    fn rule(&self, name: &str) -> Rule {
        Rule::preset(name, &self.market(), Some(&self.priorities()), Some(&self.scores)).unwrap()
    }
}

fn case(n: std::ops::RangeInclusive<usize>, m: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Case> {
    (n, m).prop_flat_map(|(n, m)| {
        let agents: Vec<usize> = (0..n).collect();
        let slots: Vec<usize> = (0..=m).collect();
        (
            proptest::collection::vec(Just(agents.clone()).prop_shuffle(), m),
            Just(agents).prop_shuffle(),
            proptest::collection::vec(Just(slots).prop_shuffle(), n),
        )
            .prop_map(move |(priorities, order, prefs)| {
                let mut scores = vec![0.0; n];
                for (k, &a) in order.iter().enumerate() {
                    scores[a] = 100.0 - 7.5 * k as f64;
                }
                Case { n, m, priorities, scores, prefs }
            })
    })
}

const RULES: [&str; 4] = ["sd", "ttc", "da", "boston"];

fn canonical(rule: &Rule) -> CanonicalMenus {
    CanonicalMenus::new(Arc::new(RuleTable::new(rule, Budget::default()).unwrap()))
}

/// Each later menu sits strictly inside the previous one with the previous pick removed.
fn assert_menus_shrink(tr: &PaoTranscript) {
    for hi in &tr.history.agents {
        for w in hi.offers.windows(2) {
            assert!(w[1].menu.is_subset(w[0].menu.without(w[0].choice)), "{:?} then {:?}", w[0], w[1]);
            assert!(w[1].menu.len() < w[0].menu.len());
        }
    }
}

fn assert_final_is_last_choice(tr: &PaoTranscript) {
    if let Some(a) = &tr.allocation {
        for (i, hi) in tr.history.agents.iter().enumerate() {
            assert_eq!(a.get(i), hi.last_choice().unwrap_or(Obj::NULL));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn straightforward_histories_are_consistent_and_menus_shrink(c in case(1..=4, 1..=4), r in 0usize..4) {
        let rule = c.rule(RULES[r]);
        let profile = c.profile();
        let genda = GendaMenus::for_rule(&rule).unwrap();
        let tr = run_straightforward(&genda, &profile).unwrap();
        for (p, h) in profile.iter().zip(&tr.history.agents) {
            prop_assert!(is_consistent(p, h).unwrap());
        }
        assert_menus_shrink(&tr);
        assert_final_is_last_choice(&tr);
        prop_assert_eq!(tr.outcome().unwrap(), &rule.evaluate(&profile).unwrap());
    }

    #[test]
    fn canonical_transcripts_are_consistent_and_shrink(c in case(1..=3, 1..=3), r in 0usize..4) {
        prop_assume!(c.n * c.m <= 6);
        let rule = c.rule(RULES[r]);
        let profile = c.profile();
        let tr = run_straightforward(&canonical(&rule), &profile).unwrap();
        for (p, h) in profile.iter().zip(&tr.history.agents) {
            prop_assert!(is_consistent(p, h).unwrap());
        }
        assert_menus_shrink(&tr);
        assert_final_is_last_choice(&tr);
    }

    #[test]
    fn random_play_respects_the_menu_contract(c in case(1..=5, 1..=5), r in 0usize..4, seed in any::<u64>()) {
        let rule = c.rule(RULES[r]);
        let genda = GendaMenus::for_rule(&rule).unwrap();
        let mut s: Vec<Box<dyn PaoStrategy>> =
            (0..c.n).map(|a| Box::new(seeded_random(seed ^ a as u64)) as Box<dyn PaoStrategy>).collect();
        let tr = run_pao(&genda, &mut s).unwrap();
        assert_menus_shrink(&tr);
        assert_final_is_last_choice(&tr);
        let mut h = CollectiveHistory::empty(c.n);
        for p in &tr.periods {
            check_menus(&c.market(), &h, &p.menus).unwrap();
            for a in 0..c.n {
                if let Some(x) = p.choices[a] {
                    h.agents[a].push(p.menus[a], x).unwrap();
                }
            }
        }
    }

    #[test]
    fn consistent_sets_equal_a_direct_filter(c in case(1..=2, 1..=3), seed in any::<u64>()) {
        let rule = c.rule("da");
        let genda = GendaMenus::for_rule(&rule).unwrap();
        let mut s: Vec<Box<dyn PaoStrategy>> =
            (0..c.n).map(|a| Box::new(seeded_random(seed.wrapping_add(a as u64))) as Box<dyn PaoStrategy>).collect();
        let tr = run_pao(&genda, &mut s).unwrap();
        let space = c.market().space(Budget::default()).unwrap();
        for h in &tr.history.agents {
            // Every prefix of a PAO history is a history too.
            for k in 0..=h.len() {
                let prefix = ChoiceHistory::from_offers(h.offers[..k].to_vec());
                let got: Vec<usize> = space.consistent_set(&prefix).unwrap().iter().collect();
                let want: Vec<usize> =
                    (0..space.len()).filter(|&i| is_consistent(space.get(i), &prefix).unwrap()).collect();
                prop_assert!(!want.is_empty());
                prop_assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn profile_consistency_factorizes(c in case(1..=2, 1..=2), seed in any::<u64>()) {
        let rule = c.rule("ttc");
        let table = RuleTable::new(&rule, Budget::default()).unwrap();
        let genda = GendaMenus::for_rule(&rule).unwrap();
        let mut s: Vec<Box<dyn PaoStrategy>> =
            (0..c.n).map(|a| Box::new(seeded_random(seed.rotate_left(a as u32 * 7))) as Box<dyn PaoStrategy>).collect();
        let tr = run_pao(&genda, &mut s).unwrap();
        let sets: Vec<_> = tr.history.agents.iter().map(|h| table.space().consistent_set(h).unwrap()).collect();
        let mut product = Vec::new();
        table.for_each_in_product(&sets, |i| product.push(i)).unwrap();
        product.sort_unstable();
        let direct: Vec<usize> = (0..table.profile_count())
            .filter(|&i| {
                let p = table.profile(i);
                p.iter().zip(&tr.history.agents).all(|(q, h)| is_consistent(q, h).unwrap())
            })
            .collect();
        prop_assert_eq!(product, direct);
    }

    #[test]
    fn generalized_da_stops_within_the_guard(c in case(1..=6, 1..=6), r in 0usize..4) {
        let rule = c.rule(RULES[r]).via_genda().unwrap();
        let psi = rule.update_function().unwrap();
        let run = run_generalized_da(psi.as_ref(), &c.market(), &c.profile()).unwrap();
        prop_assert!(run.steps <= c.n * (c.m + 1), "{} steps", run.steps);
        run.allocation.validate(&c.market()).unwrap();
    }

    #[test]
    fn rules_are_deterministic_and_individually_rational(c in case(1..=6, 1..=6), r in 0usize..4) {
        let rule = c.rule(RULES[r]);
        let profile = c.profile();
        let a = rule.evaluate(&profile).unwrap();
        prop_assert_eq!(&a, &rule.evaluate(&profile).unwrap());
        a.validate(&c.market()).unwrap();
        for (i, p) in profile.iter().enumerate() {
            prop_assert!(p.weakly_prefers(a.get(i), Obj::NULL));
        }
    }

    #[test]
    fn canonical_menus_of_ir_rules_offer_null(c in case(1..=2, 1..=3), r in 0usize..4, quitter in 0usize..2) {
        let rule = c.rule(RULES[r]);
        let menus = canonical(&rule);
        let profile = c.profile();
        let tr = run_straightforward(&menus, &profile).unwrap();
        for p in &tr.periods {
            for m in p.menus.iter().filter(|m| !m.is_empty()) {
                prop_assert!(m.contains(Obj::NULL), "{:?}", m);
            }
        }
        // Taking ∅ at the first menu ends the agent's participation empty-handed.
        let quitter = quitter % c.n;
        let mut s = all_straightforward(&profile);
        s[quitter] = Box::new(pao::strategies::scripted(vec![Obj::NULL]));
        let tr = run_pao(&menus, &mut s).unwrap();
        prop_assert_eq!(tr.history.agents[quitter].len(), 1);
        prop_assert_eq!(tr.outcome().unwrap().get(quitter), Obj::NULL);
    }

    #[test]
    fn canonical_and_genda_agree_on_outcomes(c in case(1..=3, 1..=3), r in 0usize..4) {
        prop_assume!(c.n * c.m <= 6);
        let rule = c.rule(RULES[r]);
        let profile = c.profile();
        let a = run_straightforward(&canonical(&rule), &profile).unwrap();
        let b = run_straightforward(&GendaMenus::for_rule(&rule).unwrap(), &profile).unwrap();
        prop_assert_eq!(a.outcome().unwrap(), b.outcome().unwrap());
    }

    #[test]
    fn transcripts_are_deterministic(c in case(1..=5, 1..=5), r in 0usize..4, seed in any::<u64>()) {
        let rule = c.rule(RULES[r]);
        let genda = GendaMenus::for_rule(&rule).unwrap();
        let run = || {
            let mut s: Vec<Box<dyn PaoStrategy>> =
                (0..c.n).map(|a| Box::new(seeded_random(seed ^ (a as u64) << 32)) as Box<dyn PaoStrategy>).collect();
            transcript_jsonl(&run_pao(&genda, &mut s).unwrap(), &c.market())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn acyclicity_survives_agent_removal(c in case(2..=6, 1..=5), gone in 0usize..6) {
        let pri = c.priorities();
        prop_assume!(check_acyclic(&pri));
        let gone = gone % c.n;
        let relabel = |a: usize| if a > gone { a - 1 } else { a };
        let rest: Vec<Vec<usize>> =
            c.priorities.iter().map(|o| o.iter().filter(|&&a| a != gone).map(|&a| relabel(a)).collect()).collect();
        prop_assert!(check_acyclic(&Priorities::new(c.n - 1, rest).unwrap()));
    }

    #[test]
    fn osp_pass_options_follow_the_game(c in case(1..=5, 1..=5), seed in any::<u64>(), ttc in any::<bool>()) {
        let market = c.market();
        let game = if ttc {
            prop_assume!(check_acyclic(&c.priorities()));
            build_osp_ttc(&market, &c.priorities()).unwrap()
        } else {
            build_osp_sd(&market, &c.scores).unwrap()
        };
        let mut s: Vec<Box<dyn MillipedeStrategy>> =
            (0..c.n).map(|a| Box::new(random_actions(seed ^ a as u64)) as Box<dyn MillipedeStrategy>).collect();
        let tr = play_millipede(&game, &mut s).unwrap();
        let mut state = game.root();
        for mv in &tr.moves {
            let Node::Decision(d) = game.node(&state).unwrap() else { unreachable!() };
            match d.kind {
                NodeKind::Serial | NodeKind::Pick => prop_assert!(!d.pass),
                NodeKind::Interview => prop_assert!(d.pass),
            }
            prop_assert!(d.clinch.contains(Obj::NULL));
            state = game.apply(&state, mv.action).unwrap();
        }
        prop_assert!(matches!(game.node(&state).unwrap(), Node::Terminal(_)));
        tr.allocation.validate(&market).unwrap();
    }

    #[test]
    fn osp_adapter_matches_greedy_play(c in case(1..=4, 1..=4), ttc in any::<bool>()) {
        let market = c.market();
        let game = if ttc {
            prop_assume!(check_acyclic(&c.priorities()));
            build_osp_ttc(&market, &c.priorities()).unwrap()
        } else {
            build_osp_sd(&market, &c.scores).unwrap()
        };
        let profile = c.profile();
        let greedy = pao::osp::play_greedy(&game, &profile).unwrap();
        let adapter = osp_to_pao(Arc::new(game));
        let tr = run_straightforward(&adapter, &profile).unwrap();
        assert_menus_shrink(&tr);
        prop_assert_eq!(tr.outcome().unwrap(), &greedy.allocation);
        prop_assert_eq!(&greedy.allocation, &c.rule(if ttc { "ttc" } else { "sd" }).evaluate(&profile).unwrap());
    }

    #[test]
    fn osp_adapter_matches_greedy_play_on_generated_markets(seed in 1u64..1_000_000, n in 3usize..=8, m in 3usize..=8) {
        let draw = generate_market(seed, 0, Environment::TtcAcyclic, n, m);
        let market = draw.market();
        let pri = draw.priorities().unwrap().unwrap();
        let game = Arc::new(build_osp_ttc(&market, &pri).unwrap());
        let greedy = pao::osp::play_greedy(&game, &draw.profile).unwrap();
        let tr = run_straightforward(&osp_to_pao(game), &draw.profile).unwrap();
        assert_menus_shrink(&tr);
        prop_assert_eq!(tr.outcome().unwrap(), &greedy.allocation);
        prop_assert_eq!(&greedy.allocation, &Rule::ttc(market, pri).unwrap().evaluate(&draw.profile).unwrap());
    }
}

fn battery(seeds: Vec<u64>, mix: &str, n: usize, m: usize) -> BatteryConfig {
    BatteryConfig { plan: TreatmentPlan::table1(), mix: AgentMix::parse(mix, n).unwrap(), seeds, groups: 2, n, m }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn batteries_are_deterministic_and_recomputable(seed in 1u64..10_000, mix in prop::sample::select(vec!["half-random", "all-random", "t,r,r,t"])) {
        let config = battery(vec![seed, seed + 1], mix, 4, 4);
        let records = run_battery(&config).unwrap();
        prop_assert_eq!(&records, &run_battery(&config).unwrap());
        let metrics = metrics_from(&analyze_records(&records).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_battery(dir.path(), &config, &records).unwrap();
        prop_assert_eq!(recompute_battery(dir.path()).unwrap(), metrics);
    }

    #[test]
    fn truthful_batteries_rank_as_the_rules_do(seed in 1u64..10_000) {
        let records = run_battery(&battery(vec![seed], "all-truthful", 5, 5)).unwrap();
        let metrics = metrics_from(&analyze_records(&records).unwrap()).unwrap();
        for cell in &metrics {
            let (mut sum, mut count) = (0usize, 0usize);
            for r in records.iter().filter(|r| r.arm == cell.arm && r.environment == cell.environment) {
                let direct = r.draw.rule().unwrap().evaluate(&r.draw.profile).unwrap();
                for (a, truth) in r.draw.profile.iter().enumerate() {
                    sum += truth.order().iter().position(|&o| o == direct.get(a)).unwrap() + 1;
                    count += 1;
                }
            }
            prop_assert_eq!(cell.avg_rank, sum as f64 / count as f64, "{:?} {:?}", cell.arm, cell.environment);
            prop_assert_eq!(cell.truthful_rate, 1.0);
            if cell.arm != Arm::Direct {
                prop_assert_eq!(cell.equilibrium_allocation_rate, 1.0);
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Command {
    Pick { seat: usize, slot: usize, stale: bool },
    Expire,
}

fn command(n: usize, m: usize) -> impl Strategy<Value = Command> {
    prop_oneof![
        8 => (0..n, 0..=m, prop::bool::weighted(0.1)).prop_map(|(seat, slot, stale)| Command::Pick { seat, slot, stale }),
        1 => Just(Command::Expire),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn session_logs_are_append_only_with_one_choice_per_seat_and_period(
        c in case(3..=3, 3..=3),
        commands in proptest::collection::vec(command(3, 3), 1..60),
    ) {
        let market = c.market().with_domain(Domain::Full);
        let cfg = SessionConfig {
            market: pao::model::MarketFile::from_parts(&market, Some(&c.priorities()), Some(&c.scores)),
            mechanism: Mechanism::Pao,
            rule: "da".into(),
            engine: EngineChoice::Genda,
            tokens: None,
            deadline_ms: Some(1),
            default_policy: Some(pao::session::DefaultPolicy::BestByDeclared),
            idempotency_key: None,
            budget: None,
        };
        let id = cfg.session_id(0);
        let (tokens, admin) = derive_tokens(&id, c.n, "prop");
        let mut s = Session::create(id, cfg, tokens.clone(), admin).unwrap();
        for (t, p) in tokens.iter().zip(c.profile()) {
            s.join(t, Some(p)).unwrap();
        }
        for cmd in commands {
            let before = s.log().to_vec();
            let ok = match cmd {
                Command::Pick { seat, slot, stale } => {
                    let object = Obj::from_slot(slot, c.m);
                    let period = if stale { Some(s.period + 1) } else { None };
                    s.submit(&tokens[seat], period, Submission::Pick { object }).is_ok()
                }
                Command::Expire => s.expire(s.period).is_ok(),
            };
            prop_assert!(s.log().starts_with(&before));
            if !ok {
                prop_assert_eq!(s.log(), &before[..]);
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, e) in s.log().iter().enumerate() {
            prop_assert_eq!(e.seq, i);
            if let EventKind::Choice { period, seat, .. } | EventKind::Defaulted { period, seat, .. } = &e.kind {
                prop_assert!(seen.insert((*period, *seat)), "two choices by seat {} in period {}", seat, period);
            }
        }
        let again = replay(s.log()).unwrap();
        prop_assert_eq!(again.log(), s.log());
        prop_assert_eq!(again.result_view(), s.result_view());
        // Views carry the seat's own history and nobody else's.
        let labels = market.agent_labels();
        for seat in 0..c.n {
            let view = s.participant_view(seat);
            prop_assert_eq!(view.picks.len(), s.history.agents[seat].len());
            for (pv, offer) in view.picks.iter().zip(&s.history.agents[seat].offers) {
                prop_assert_eq!(&pv.pick, market.label(offer.choice));
            }
            let text = serde_json::to_string(&view).unwrap();
            for other in (0..c.n).filter(|&o| o != seat) {
                let quoted = format!("\"{}\"", labels[other]);
                prop_assert!(!text.contains(&quoted));
                prop_assert!(!text.contains(&tokens[other]));
            }
        }
    }
}
