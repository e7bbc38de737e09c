//! Builds the interaction graph of a small crowd and shows the normalized
//! adjacency the graph convolutions aggregate over.
//!
//!     cargo run --example graph_construction

use stgcnn_cvae::stgraph::{kernel_adjacency, AdjacencySeries};

fn print_matrix(title: &str, n: usize, data: &[f64]) {
    println!("{title}");
    for row in data.chunks(n) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:7.3}")).collect();
        println!("  {}", cells.join(" "));
    }
}

fn main() -> stgcnn_cvae::Result<()> {
    // three pedestrians: two walking side by side, one far away
    let frames: Vec<Vec<[f64; 2]>> = (0..4)
        .map(|t| {
            let t = t as f64 * 0.4;
            vec![[t, 0.0], [t, 0.8], [6.0 - t, 3.0]]
        })
        .collect();

    let raw = kernel_adjacency(&frames[0]);
    print_matrix("inverse-distance weights, frame 0", 3, raw.data());

    let series = AdjacencySeries::from_positions(&frames)?;
    let norm = series.normalize();
    print_matrix("D^-1/2 (A + I) D^-1/2, frame 0", 3, norm.frame(0));

    let row_sums: Vec<f64> = norm.frame(0).chunks(3).map(|r| r.iter().sum()).collect();
    println!("row sums {row_sums:.3?}");

    let extended = norm.extend_with_last(6)?;
    println!("frames {} -> {} after repeating the last one", norm.frames(), extended.frames());
    Ok(())
}
