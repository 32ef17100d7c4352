//! Energy families: values, gradients, inverse gradients and Bregman distances.
use nalgebra::{dmatrix, dvector};
use phnet::energy::Hamiltonian;

fn main() -> phnet::error::Result<()> {
    let quad = Hamiltonian::quadratic(dmatrix![2.0, 0.5; 0.5, 1.0], dvector![0.1, -0.2])?;
    let z = dvector![0.3, -0.4];
    println!("quadratic: H = {:.6}, ∇H = {}", quad.value(&z)?, quad.gradient(&z)?.transpose());
    let w = quad.gradient(&z)?;
    println!("inverse gradient recovers z: {}", quad.inverse_gradient(&w)?.transpose());

    // Line energy of an AC power line: −γ cos(angle difference).
    let line = Hamiltonian::neg_cosine(dvector![5.0])?;
    for angle in [0.0, 0.5, 1.2] {
        let a = dvector![angle];
        println!(
            "line at {angle:.1} rad: flow γ sin = {:.4}, Bregman from 0 = {:.6}",
            line.gradient(&a)?[0],
            line.bregman(&a, &dvector![0.0])?
        );
    }
    // Angles outside (−π/2, π/2) are rejected.
    println!("angle 2.0 rad: {}", line.value(&dvector![2.0]).unwrap_err());
    Ok(())
}
