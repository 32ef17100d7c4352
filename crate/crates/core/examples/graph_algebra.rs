//! Incidence matrices, Laplacians and subgraphs of small interconnection graphs.
use phnet::graph::{incidence_matrix, is_acyclic, laplacian, Graph};

fn main() -> phnet::error::Result<()> {
    let ring = Graph::cycle(4)?;
    let b = incidence_matrix(&ring);
    println!("ring of 4: incidence{b}");
    println!("Laplacian (B Bᵀ){}", laplacian(&ring));
    println!("acyclic: {}", is_acyclic(&ring));

    // Edges in files are 1-based and oriented from → to.
    let tree = Graph::from_one_based(4, &[(1, 2), (2, 3), (2, 4)])?;
    println!("star-like tree: acyclic = {}, edges = {:?}", is_acyclic(&tree), tree.edges_one_based());

    let sub = Graph::complete(5)?.induced(&[0, 2, 4])?;
    println!("subgraph of K5 on nodes 1,3,5 has {} edges", sub.num_edges());
    Ok(())
}
