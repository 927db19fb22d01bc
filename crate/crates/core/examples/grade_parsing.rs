//! Pulling the binary grade out of free-text model replies.

use std::error::Error;

use qagrade::grading::parse_grade;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let replies = [
        "The student\u{2019}s score is 1. The answer names the hydroxyl group.",
        "The student's score is 0. Molecule 3 is never mentioned.",
        "Score: 1\nCorrect polarity argument.",
        "I would give this a 7.",
        "",
    ];
    for reply in replies {
        match parse_grade(reply) {
            Ok(parsed) => println!("{} via {:?}: {:?}", parsed.grade, parsed.pattern, reply),
            Err(e) => println!("rejected {reply:?}: {e}"),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
