//! Plain k-means on a handful of 2-D points.

use std::error::Error;

use qagrade::shots::{kmeans, KMeansParams};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let points: Vec<Vec<f64>> = [(0.0, 0.1), (0.2, 0.0), (0.1, 0.3), (9.0, 9.2), (9.1, 8.8), (8.9, 9.0), (0.0, 9.0), (0.3, 9.1)]
        .iter()
        .map(|&(x, y)| vec![x, y])
        .collect();
    let fit = kmeans(&points, &KMeansParams::new(3, 7))?;
    for (c, centre) in fit.centroids.iter().enumerate() {
        let members: Vec<usize> = (0..points.len()).filter(|&i| fit.assignments[i] == c).collect();
        println!("centre ({:.2}, {:.2}): points {members:?}", centre[0], centre[1]);
    }
    println!("inertia by step: {:?}", fit.inertia_history);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
