mod common;

use common::{brute_force, greedy, lattice_tokens, random_lattice, random_model, rng};
use draftlat::engine::{greedy_decode, verify_draft};
use draftlat::lattice::build_lattice;
use draftlat::ngram::{count, estimate_katz, read_arpa, write_arpa, NgramModel, PruneConfig};
use draftlat::analysis::repetition_stats;
use draftlat::rescoring::{global_rescore, global_rescore_with_stats};
use draftlat::{TokenId, Vocabulary};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::Rng;

fn arpa_text(model: &NgramModel) -> String {
    let mut buf = Vec::new();
    write_arpa(model, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn corpus(seed: u64, n_words: usize, n_sent: usize) -> (Vocabulary, Vec<Vec<TokenId>>) {
    let mut r = rng(seed);
    let words: Vec<String> = (0..n_words).map(|i| format!("v{i}")).collect();
    let vocab = Vocabulary::from_words(&words);
    let ids: Vec<TokenId> = words.iter().map(|w| vocab.id(w).unwrap()).collect();
    let sents = (0..n_sent)
        .map(|_| {
            let len = r.random_range(1..=8);
            // a skewed pick so that some n-grams repeat often
            (0..len).map(|_| ids[r.random_range(0..ids.len()).min(r.random_range(0..ids.len()))]).collect()
        })
        .collect();
    (vocab, sents)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn pbest_matches_enumeration(seed in any::<u64>(), coarse in any::<bool>(), alpha in 0.0f64..3.0, p in 1usize..12) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let lat = random_lattice(&mut r, &lattice_tokens(&model), coarse);
        let got = global_rescore(&lat, Some(&model), alpha, p).unwrap();
        let want = brute_force(&lat, Some(&model), alpha);
        prop_assert_eq!(got.len(), p.min(want.len()));
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g.combined_score - w.3).abs() < 1e-9, "{} vs {}", g.combined_score, w.3);
            prop_assert!((g.lm_score - w.2).abs() < 1e-9);
        }
        if !coarse {
            let toks: Vec<_> = got.iter().map(|c| c.tokens.clone()).collect();
            let wtoks: Vec<_> = want.iter().take(p).map(|w| w.0.clone()).collect();
            prop_assert_eq!(toks, wtoks);
        }
    }

    #[test]
    fn pbest_lists_are_nested(seed in any::<u64>(), alpha in 0.0f64..2.0, p in 1usize..10) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let lat = random_lattice(&mut r, &lattice_tokens(&model), true);
        let small = global_rescore(&lat, Some(&model), alpha, p).unwrap();
        let large = global_rescore(&lat, Some(&model), alpha, p + 3).unwrap();
        prop_assert_eq!(&large[..small.len()], &small[..]);
        let mut seen = std::collections::HashSet::new();
        prop_assert!(large.iter().all(|c| seen.insert(c.tokens.clone())));
        prop_assert!(large.windows(2).all(|w| w[0].combined_score >= w[1].combined_score - 1e-12));
    }

    #[test]
    fn scaling_lattice_and_alpha_keeps_the_ranking(seed in any::<u64>(), alpha in 0.0f64..2.0) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let lat = random_lattice(&mut r, &lattice_tokens(&model), false);
        // doubling is exact, so the scaled problem has exactly doubled scores
        let heads: Vec<Vec<(TokenId, f64)>> =
            lat.steps().iter().map(|s| s.iter().map(|a| (a.token, 2.0 * a.weight)).collect()).collect();
        let scaled = build_lattice(&heads, lat.steps().iter().map(Vec::len).max().unwrap(), lat.prefix()).unwrap();
        let a = global_rescore(&lat, Some(&model), alpha, 6).unwrap();
        let b = global_rescore(&scaled, Some(&model), 2.0 * alpha, 6).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.tokens, &y.tokens);
            prop_assert!((2.0 * x.combined_score - y.combined_score).abs() < 1e-9);
        }
    }

    #[test]
    fn dp_states_stay_within_the_context_bound(seed in any::<u64>(), p in 1usize..8) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let lat = random_lattice(&mut r, &lattice_tokens(&model), false);
        let (_, stats) = global_rescore_with_stats(&lat, Some(&model), 1.0, p).unwrap();
        let width = model.order() - 1;
        let sizes: Vec<usize> = lat.steps().iter().map(|s| s.len()).collect();
        let bound = |i: usize| sizes[i.saturating_sub(width)..i].iter().product::<usize>();
        let total: usize = 1 + (1..=sizes.len()).map(bound).sum::<usize>();
        let largest = (1..=sizes.len()).map(bound).max().unwrap_or(1).max(1);
        prop_assert!(stats.states <= total, "{} states, bound {}", stats.states, total);
        prop_assert!(stats.max_states <= largest);
        let (_, plain) = global_rescore_with_stats(&lat, None, 1.0, p).unwrap();
        prop_assert_eq!(plain.max_states, 1);
    }

    #[test]
    fn verify_counts_the_greedy_prefix(seed in any::<u64>(), keep in 0usize..6, len in 1usize..8) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let prefix = vec![Vocabulary::BOS_ID, greedy(&model, &[Vocabulary::BOS_ID])];
        let ids: Vec<TokenId> = model.vocab().ids().collect();
        let keep = keep.min(len);
        let mut draft = greedy_decode(&model, &prefix, keep);
        draft.extend((keep..len).map(|_| *ids.choose(&mut r).unwrap()));
        // naive oracle: re-decode the base model from scratch after every token
        let mut want = 0;
        while want < draft.len() {
            let ctx = [&prefix[..], &draft[..want]].concat();
            if greedy(&model, &ctx) != draft[want] {
                break;
            }
            want += 1;
        }
        prop_assert!(want >= keep);
        prop_assert_eq!(verify_draft(&model, &prefix, &draft), want);
    }

    #[test]
    fn repetition_matches_a_naive_recount(drafts in prop::collection::vec(prop::collection::vec(0u32..4, 2..10), 1..8)) {
        let drafts: Vec<Vec<TokenId>> = drafts.into_iter().map(|d| d.into_iter().map(TokenId).collect()).collect();
        let stats = repetition_stats(&drafts).unwrap();
        let (mut same, mut pairs, mut runs) = (0, 0, 0);
        for d in &drafts {
            for i in 1..d.len() {
                pairs += 1;
                same += usize::from(d[i] == d[i - 1]);
            }
            let mut best = 0;
            for i in 0..d.len() {
                let run = d[i..].iter().take_while(|&&t| t == d[i]).count();
                best = best.max(run);
            }
            runs += best;
        }
        prop_assert_eq!(stats.pairs, pairs);
        prop_assert!((stats.pct_consec - 100.0 * same as f64 / pairs as f64).abs() < 1e-12);
        prop_assert!((stats.max_run_avg - runs as f64 / drafts.len() as f64).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn raising_a_threshold_never_adds_ngrams(seed in any::<u64>(), m in 2usize..=3, c in 1u64..4) {
        let (vocab, sents) = corpus(seed, 6, 30);
        let counts = count(&sents, 3, &vocab).unwrap();
        let loose = estimate_katz(&counts, &PruneConfig::default().with_min_count(m, c)).unwrap();
        let tight = estimate_katz(&counts, &PruneConfig::default().with_min_count(m, c + 1)).unwrap();
        prop_assert!(tight.num_ngrams(m) <= loose.num_ngrams(m));
        prop_assert_eq!(tight.num_ngrams(1), loose.num_ngrams(1));
    }

    #[test]
    fn ngram_cap_is_respected(seed in any::<u64>(), extra in 0usize..40) {
        let (vocab, sents) = corpus(seed, 6, 30);
        let counts = count(&sents, 3, &vocab).unwrap();
        let full = estimate_katz(&counts, &PruneConfig::default()).unwrap();
        let cap = full.num_ngrams(1) + extra;
        let capped = estimate_katz(&counts, &PruneConfig::default().with_max_ngrams(cap)).unwrap();
        prop_assert!(capped.total_ngrams() <= cap.max(full.num_ngrams(1)));
        prop_assert_eq!(capped.num_ngrams(1), full.num_ngrams(1));
        for m in 1..=3 {
            prop_assert!(capped.num_ngrams(m) <= full.num_ngrams(m));
        }
    }

    #[test]
    fn arpa_is_deterministic_and_round_trips(seed in any::<u64>()) {
        let (vocab, sents) = corpus(seed, 5, 20);
        let counts = count(&sents, 3, &vocab).unwrap();
        let model = estimate_katz(&counts, &PruneConfig::default()).unwrap();
        let again = estimate_katz(&count(&sents, 3, &vocab).unwrap(), &PruneConfig::default()).unwrap();
        let text = arpa_text(&model);
        prop_assert_eq!(&text, &arpa_text(&again));
        let back = read_arpa(text.as_bytes()).unwrap();
        prop_assert_eq!(&text, &arpa_text(&back));
        prop_assert_eq!(back.vocab().words(), model.vocab().words());
        let ids: Vec<TokenId> = model.vocab().ids().collect();
        for s in &sents {
            let mut ctx = vec![Vocabulary::BOS_ID];
            for &w in s.iter().chain([&Vocabulary::EOS_ID]) {
                for &v in &ids[..3] {
                    let (a, b) = (model.log10_prob(&ctx, v), back.log10_prob(&ctx, v));
                    prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
                }
                ctx.push(w);
            }
        }
    }
}
