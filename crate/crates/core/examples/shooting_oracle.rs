//! Prints the ground-state energy E_1 from the independent shooting oracle.
//! Run with `cargo run --example shooting_oracle`.

#[path = "../tests/common/shooting.rs"]
mod shooting;

fn main() {
    let res = shooting::shoot();
    println!("E1 = {:.12}", res.e1);
    println!("nehari defect = {:.3e}", res.nehari_defect);
    println!("omega_1(0) = {:.12}", res.profile[0].1);
}
