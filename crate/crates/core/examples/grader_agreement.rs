//! Cohen's kappa between two human graders, then listing the cells they
//! disagree on and resolving one.

use std::error::Error;

use qagrade::agreement::{agreement_report, reconcile};
use qagrade::fixture;
use qagrade::model::Grade;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let assignment = fixture::assignment();
    let a = fixture::label_set("grader_a");
    let b = fixture::label_set("grader_b");

    let report = agreement_report(&a, &b, &assignment, None)?;
    println!(
        "{} vs {}: kappa {:.4}, raw {:.4}, p_e {:.4}, {} pairs",
        report.candidate, report.reference, report.kappa, report.raw, report.p_e, report.n_pairs
    );
    println!("confusion {:?}", report.counts);
    if let Some(f) = &report.final_score {
        println!("final-score kappa {:.4} over {} responses", f.kappa, f.n_responses);
    }

    let mut rec = reconcile(&a, &b)?;
    for d in rec.pending() {
        println!("{}: {} vs {}", d.id, d.label_a, d.label_b);
    }
    let first = rec.disagreements[0].id.clone();
    rec.resolve(&first, Grade::ONE, "head_ta", Some(0))?;
    println!("{} still open", rec.pending().count());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
