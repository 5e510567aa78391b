use std::time::Instant;

use persona_survey::question_bank::{sample_questions, Domain, QuestionBank, QuestionType, TypeRatios};

#[test]
fn single_question_draws_follow_default_ratios() {
    let bank = QuestionBank::bundled();
    let ratios = TypeRatios::default();
    let started = Instant::now();
    let mut counts = [0usize; 4];
    for seed in 0..10_000u64 {
        let q = sample_questions(&bank, Domain::Education, 1, &ratios, seed).unwrap();
        counts[q[0].qtype.index()] += 1;
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
    for t in QuestionType::ALL {
        let share = counts[t.index()] as f64 / 10_000.0;
        assert!((share - ratios.get(t)).abs() <= 0.01, "{t:?}: {share}");
    }
}

#[test]
fn default_ratios_are_the_reference_mix() {
    assert_eq!(TypeRatios::default().as_array(), [0.427, 0.317, 0.183, 0.073]);
}
