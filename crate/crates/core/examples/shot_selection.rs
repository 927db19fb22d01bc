//! Exemplar responses by clustering embeddings, compared with a seeded
//! random pick.

use std::error::Error;

use qagrade::fixture;
use qagrade::gateway::TestEmbedding;
use qagrade::shots::{embed_responses, random_shots, select_shots, KMeansParams};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let responses = fixture::responses().responses;
    let matrix = embed_responses(&responses, &TestEmbedding::new(384))?;

    let (clustered, fit) = select_shots(&responses, &matrix, &KMeansParams::new(4, 0))?;
    println!("clustering: {} (inertia {:.3}, {} iterations)", clustered.shot_ids.join(" "), fit.inertia, fit.iterations);
    for (c, _) in fit.centroids.iter().enumerate() {
        let size = fit.assignments.iter().filter(|&&a| a == c).count();
        println!("  cluster {c}: {size} responses");
    }

    let random = random_shots(&responses, 4, 0)?;
    println!("random:     {}", random.shot_ids.join(" "));
    println!("{} responses left to grade", clustered.eval_ids.len());
    assert!(clustered.is_partition_of(&responses) && random.is_partition_of(&responses));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
