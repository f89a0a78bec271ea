//! From PSNR snapshots to task weights and integer sample quotas.

use degrade_mt::rebalance::{equivalence_oracle, plan_interval, write_plan_csv, TaskSnapshot};

fn main() -> degrade_mt::Result<()> {
    let reference = [29.0, 26.4, 25.9, 25.1];
    let early = [27.2, 26.1, 22.8, 22.3];
    let late = [28.7, 26.9, 25.8, 24.9];
    let mut plans = Vec::new();
    for (k, shared) in [(0, early), (4, late)] {
        let snaps: Vec<TaskSnapshot> = (0..4)
            .map(|i| TaskSnapshot::new(i, reference[i], shared[i]))
            .collect::<degrade_mt::Result<_>>()?;
        let plan = plan_interval(k, &snaps, 1600, 1.0, 16)?;
        println!("interval {k}");
        for i in 0..4 {
            println!(
                "  task {i}: distance {:+.2} dB  weight {:.4}  quota {}",
                plan.distances[i], plan.weights[i], plan.quotas[i]
            );
        }
        println!("  total {}", plan.quotas.iter().sum::<usize>());
        plans.push(plan);
    }

    let losses = vec![vec![0.2, 0.4, 0.3], vec![0.9], vec![0.5, 0.1]];
    let (a, b) = equivalence_oracle(&losses, &[0.5, 0.3, 0.2])?;
    println!("weighted task loss {a:.12}  vs sample-weighted loss {b:.12}");

    let mut csv = Vec::new();
    write_plan_csv(&plans, &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
