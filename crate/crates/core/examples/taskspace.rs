//! Partition the degradation rectangle into tasks and inspect their
//! validation sets and training batches.

use degrade_mt::pool::HrPool;
use degrade_mt::taskspace::{make_training_batch, sample_config, TaskSpaceConfig};

fn main() -> degrade_mt::Result<()> {
    let cfg = TaskSpaceConfig::default();
    print!("{}", cfg.to_toml());
    let (train, val) = HrPool::synthetic(24, 64, 3).to_luma()?.split(4)?;
    let taskset = cfg.build(&train, &val)?;
    for task in &taskset.tasks {
        let s = &task.subspace;
        println!(
            "task {} {:<7} blur [{:.2}, {:.2})  noise [{:.3}, {:.3})  area {:.4}",
            task.id,
            task.name(),
            s.blur_range.0,
            s.blur_range.1,
            s.noise_range.0,
            s.noise_range.1,
            s.area()
        );
        let c = sample_config(s, 42);
        println!("    sample: blur {:.3} noise {:.4} quality {}", c.blur_sigma, c.noise_sigma, c.jpeg_quality);
        let pair = &task.val_pairs()[0];
        println!(
            "    {} validation pairs, HR {}x{} -> LR {}x{}",
            task.val_pairs().len(),
            pair.hr.height(),
            pair.hr.width(),
            pair.lr.height(),
            pair.lr.width()
        );
        let batch = make_training_batch(task, 4, 0, 32, 9)?;
        assert!(batch.iter().all(|p| s.contains_config(&p.config)));
    }
    for (b, n) in [(0.5, 0.01), (2.0, 0.01), (0.5, 0.08), (2.9, 0.1)] {
        let id = taskset.locate(b, n).expect("inside the rectangle");
        println!("blur {b}, noise {n} -> {}", taskset.tasks[id].name());
    }
    Ok(())
}
