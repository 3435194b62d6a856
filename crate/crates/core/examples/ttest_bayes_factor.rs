//! One-sample and two-sample Bayesian t-tests: marginals, the Bayes factor
//! trajectory, and its invariance under rescaling the data.

use optstop::{EffectPrior, GroupElement, GroupKind, InvariantModelPair};

fn main() -> optstop::Result<()> {
    let x = [0.42, 1.31, -0.27, 0.88, 1.05, 0.64, 1.72, -0.11, 0.93, 0.58];

    let one = InvariantModelPair::one_sample_t(1.0)?;
    println!("one-sample t-test, Cauchy(1) effect prior");
    println!("  log p0(x) = {:.10}", one.log_marginal_null(&x)?);
    println!("  log p1(x) = {:.10}", one.log_marginal_alt(&x)?);
    println!("  log BF10  = {:.10}", one.log_bf(&x)?);

    let traj = one.trajectory(&x)?;
    for n in traj.first_index()..=traj.horizon() {
        println!(
            "    n = {n:>2}: BF10 = {:.4}",
            traj.log_beta(n).unwrap().exp()
        );
    }

    let g = GroupElement::scale(37.5)?;
    println!(
        "  log BF10 after scaling by 37.5: {:.10}",
        one.log_bf(&g.act(&x))?
    );

    let two = InvariantModelPair::new(
        GroupKind::LocationScale,
        EffectPrior::Cauchy(2f64.sqrt() / 2.0),
    )?;
    let h = GroupElement::location_scale(0.2, -4.0)?;
    println!("\ntwo-sample t-test (alternating groups), Cauchy(0.707) effect prior");
    println!("  log BF10            = {:.10}", two.log_bf(&x)?);
    println!("  log BF10 after x.h  = {:.10}", two.log_bf(&h.act(&x))?);
    Ok(())
}
