use proptest::prelude::*;

use persona_survey::dataset::{
    build_record, render_chatml, split_dataset, ChatRecord, SplitSpec, StratifyKey, Template,
};
use persona_survey::eval::overlap::rouge_n_tokens;
use persona_survey::eval::{
    evaluate_question, length_similarity, semantic_f1, sentence_count_similarity, sentiment_score,
    sentiment_similarity, tokenize, EvalContext, HashedTrigramProvider, SentimentLexicon,
};
use persona_survey::jsonl::{from_jsonl_str, to_jsonl_string};
use persona_survey::persona::PersonaCard;
use persona_survey::question_bank::{Domain, QuestionBank, SurveyQuestion};
use persona_survey::report::{aggregate, Average, GroupKey};

fn bank() -> &'static QuestionBank {
    static BANK: std::sync::OnceLock<QuestionBank> = std::sync::OnceLock::new();
    BANK.get_or_init(QuestionBank::bundled)
}

fn ctx() -> &'static EvalContext {
    static CTX: std::sync::OnceLock<EvalContext> = std::sync::OnceLock::new();
    CTX.get_or_init(EvalContext::default)
}

fn question() -> impl Strategy<Value = SurveyQuestion> {
    (0..bank().len()).prop_map(|i| bank().iter().nth(i).unwrap().clone())
}

const WORDS: &[&str] = &[
    "yes", "no", "I", "agree", "strongly", "often", "never", "good", "terrible", "happy", "work", "health", "my",
    "family", "money", "Dr.", "3.5", "it", "is", "very", "not", "the", "clinic", "always", "rarely", "sometimes",
];

/// Text with at least one token, sentence punctuation sprinkled in.
fn wordy_text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(WORDS), prop::sample::select(&[" ", " ", " ", ". ", "! ", ", ", "? "][..])), 1..40)
        .prop_map(|parts| parts.into_iter().map(|(w, sep)| format!("{w}{sep}")).collect::<String>())
}

/// Arbitrary text, including empty and punctuation-only strings.
fn any_text() -> impl Strategy<Value = String> {
    prop_oneof![wordy_text(), ".{0,80}", Just(String::new()), "[ .!?,]{0,10}"]
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn every_metric_in_unit_range(q in question(), gen in any_text(), reference in any_text()) {
        let ev = evaluate_question(&q, &gen, &reference, ctx()).unwrap();
        for (name, v) in persona_survey::eval::MetricVector::FIELDS.iter().zip(ev.metrics.values()) {
            prop_assert!(in_unit(v), "{name} = {v}");
        }
        let s = sentiment_score(&gen, &ctx().lexicon);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn identity_for_similarity_metrics(q in question(), text in wordy_text()) {
        let m = evaluate_question(&q, &text, &text, ctx()).unwrap().metrics;
        for v in [m.bleu, m.rouge1_f, m.rouge2_f, m.rouge_l_f, m.semantic_f1, m.length_sim, m.sentence_count_sim, m.sentiment_sim] {
            prop_assert_eq!(v, 1.0, "{:?}", m);
        }
    }

    #[test]
    fn symmetric_metrics(a in any_text(), b in any_text()) {
        let lex = &ctx().lexicon;
        prop_assert_eq!(length_similarity(&a, &b), length_similarity(&b, &a));
        prop_assert_eq!(sentence_count_similarity(&a, &b), sentence_count_similarity(&b, &a));
        prop_assert_eq!(sentiment_similarity(&a, &b, lex), sentiment_similarity(&b, &a, lex));
        let p = HashedTrigramProvider::default();
        let (ta, tb) = (tokenize(&a), tokenize(&b));
        prop_assert_eq!(semantic_f1(&ta, &tb, &p, None).unwrap().f1, semantic_f1(&tb, &ta, &p, None).unwrap().f1);
    }

    #[test]
    fn appending_unmatched_token_never_raises_rouge_recall(a in wordy_text(), b in wordy_text(), n in 1usize..=2) {
        let (c, r) = (tokenize(&a), tokenize(&b));
        let mut longer = c.clone();
        longer.push("zzzunmatched".to_string());
        prop_assert!(rouge_n_tokens(&longer, &r, n).recall <= rouge_n_tokens(&c, &r, n).recall + 1e-12);
    }
}

fn delimiter_free() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.?!\n]{1,30}"
}

fn record_strategy() -> impl Strategy<Value = ChatRecord> {
    (question(), delimiter_free(), prop::option::of(delimiter_free()), 0usize..1000).prop_map(|(q, desc, resp, i)| {
        let p = PersonaCard::new(None, desc);
        build_record(&p, &q, resp.as_deref(), i)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rendered_input_is_prefix(r in record_strategy(), native in any::<bool>()) {
        let t = if native { Template::NativePassthrough } else { Template::Fallback };
        let out = render_chatml(&r, t);
        prop_assert!(!out.input_text.is_empty());
        prop_assert!(out.full_text.starts_with(&out.input_text));
    }

    #[test]
    fn rendering_is_injective(a in record_strategy(), b in record_strategy()) {
        let contents = |r: &ChatRecord| r.messages.iter().map(|m| m.content.clone()).collect::<Vec<_>>();
        if contents(&a) != contents(&b) {
            prop_assert_ne!(render_chatml(&a, Template::Fallback).full_text, render_chatml(&b, Template::Fallback).full_text);
        }
    }

    #[test]
    fn native_rendering_is_injective_for_any_contents(s1 in ".{0,20}", u1 in ".{0,20}", s2 in ".{0,20}", u2 in ".{0,20}") {
        let q = bank().get("fin_yn_1").unwrap();
        let mut a = build_record(&PersonaCard::new(Some("p".into()), "x"), q, None, 0);
        let mut b = a.clone();
        a.messages[0].content = s1.clone();
        a.messages[2].content = u1.clone();
        b.messages[0].content = s2.clone();
        b.messages[2].content = u2.clone();
        if (s1, u1) != (s2, u2) {
            prop_assert_ne!(render_chatml(&a, Template::NativePassthrough).full_text, render_chatml(&b, Template::NativePassthrough).full_text);
        }
    }

    #[test]
    fn jsonl_round_trip(records in prop::collection::vec(record_strategy(), 0..100)) {
        let text = to_jsonl_string(&records);
        prop_assert_eq!(text.lines().count(), records.len());
        let back: Vec<ChatRecord> = from_jsonl_str(&text).unwrap();
        prop_assert_eq!(back, records);
    }
}

fn dataset(domains: &[(Domain, usize)]) -> Vec<ChatRecord> {
    let p = PersonaCard::new(Some("p".into()), "someone");
    let mut out = Vec::new();
    for &(d, n) in domains {
        let pool: Vec<&SurveyQuestion> = bank().iter().filter(|q| q.domain == d).collect();
        for k in 0..n {
            let i = out.len();
            out.push(build_record(&p, pool[(k * 7) % pool.len()], None, i));
        }
    }
    out
}

fn sizes() -> impl Strategy<Value = Vec<(Domain, usize)>> {
    prop::collection::vec(0usize..60, 10).prop_map(|v| Domain::ALL.into_iter().zip(v).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_partition_and_stratum_bounds(counts in sizes(), seed in any::<u64>(), by_qtype in any::<bool>()) {
        let recs = dataset(&counts);
        prop_assume!(!recs.is_empty());
        let mut keys = vec![StratifyKey::Domain];
        if by_qtype {
            keys.push(StratifyKey::Qtype);
        }
        let spec = SplitSpec::new(seed).stratified(&keys);
        let s = split_dataset(&recs, &spec).unwrap();
        let mut ids: Vec<&str> = s.train.iter().chain(&s.val).chain(&s.test).map(|r| r.id.as_str()).collect();
        prop_assert_eq!(ids.len(), recs.len());
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), recs.len());

        let stratum = |r: &ChatRecord| (r.meta.domain, if by_qtype { Some(r.meta.question_type) } else { None });
        let mut strata: Vec<_> = recs.iter().map(stratum).collect();
        strata.sort();
        strata.dedup();
        for st in strata {
            let n = |v: &[ChatRecord]| v.iter().filter(|r| stratum(r) == st).count() as f64;
            let total = n(&recs);
            for (part, frac) in [(&s.train, 0.8), (&s.val, 0.1), (&s.test, 0.1)] {
                prop_assert!((n(part) - total * frac).abs() < 1.0, "{st:?}");
            }
        }
        prop_assert_eq!(split_dataset(&recs, &spec).unwrap(), s);
    }

    #[test]
    fn aggregation_is_linear_and_order_free(xs in prop::collection::vec(prop::array::uniform11(0.0f64..=1.0), 2..40), cut in 1usize..39, seed in any::<u64>()) {
        prop_assume!(cut < xs.len());
        let mv = |a: &[f64; 11]| persona_survey::eval::MetricVector {
            bleu: a[0], rouge1_f: a[1], rouge2_f: a[2], rouge_l_f: a[3], semantic_f1: a[4], quality: a[5],
            length_sim: a[6], sentence_count_sim: a[7], sentiment_sim: a[8], distinct1: a[9], distinct2: a[10],
        };
        let items: Vec<_> = xs.iter().map(|a| (GroupKey::model("m"), mv(a), Domain::Finance)).collect();
        let whole = &aggregate(&items, Average::Micro).unwrap()[0];
        let left = &aggregate(&items[..cut], Average::Micro).unwrap()[0];
        let right = &aggregate(&items[cut..], Average::Micro).unwrap()[0];
        for f in persona_survey::eval::MetricVector::FIELDS {
            let combined = (left.get(f).unwrap() * left.count as f64 + right.get(f).unwrap() * right.count as f64) / whole.count as f64;
            prop_assert!((whole.get(f).unwrap() - combined).abs() < 1e-12);
        }
        let mut shuffled = items.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let again = &aggregate(&shuffled, Average::Micro).unwrap()[0];
        for f in persona_survey::eval::MetricVector::FIELDS {
            prop_assert!((whole.get(f).unwrap() - again.get(f).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn lexicon_tokens_are_lowercase_and_unique() {
    let text = include_str!("../data/sentiment_lexicon.tsv");
    let lex = SentimentLexicon::parse(text).unwrap();
    let lines = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count();
    assert_eq!(lex.len(), lines);
    assert!((550..=700).contains(&lex.len()));
}
