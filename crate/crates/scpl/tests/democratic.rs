mod common;

use common::{checked, democratic};
use scpl::verifier::verify_trace;

#[test]
fn admissions_and_removals_follow_the_tally() {
    let program = checked("democratic_group");
    let mut decided = 0;
    for seed in 0..10 {
        let run = democratic::run(program.clone(), seed, 3).unwrap();
        assert!(!run.outcomes.is_empty(), "seed {seed}: nothing was decided");
        for o in &run.outcomes {
            assert!(o.agrees(), "seed {seed}: {o:?}");
            // Everyone who was a member when the ballot started votes.
            assert!(o.voters.iter().any(|v| &**v == democratic::FOUNDER), "seed {seed}: {o:?}");
        }
        decided += run.outcomes.len();
        let report = verify_trace(program.clone(), run.runtime.trace());
        assert!(report.passed(), "seed {seed}\n{}", report.to_text());
    }
    assert_eq!(decided, 30);
}

#[test]
fn ties_reject() {
    // A proposal is applied only with a strictly positive tally.
    let program = checked("democratic_group");
    let tied = (0..200)
        .flat_map(|seed| democratic::run(program.clone(), seed, 2).unwrap().outcomes)
        .find(|o| o.expected_tally == 0)
        .expect("some seed produces a tie");
    assert!(tied.agrees() && !tied.applied, "{tied:?}");
}
