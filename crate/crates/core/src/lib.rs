//! Finite-element simulation of skeletal muscle-tendon units as nearly
//! incompressible, fibre-reinforced solids.

pub mod assembly;
pub mod config;
pub mod constitutive;
pub mod dynamics;
pub mod elements;
pub mod error;
pub mod export;
pub mod kinematics;
pub mod mesh;
pub mod scenarios;
pub mod solver;
pub mod sparse;
pub mod tensor;

pub use error::{MyoError, Result};

/// Sets the worker count used by assembly and the sparse factorization.
/// `deterministic` forces a single thread. Call at most once per process.
pub fn configure_threads(threads: Option<usize>, deterministic: bool) -> Result<()> {
    let n = if deterministic { Some(1) } else { threads };
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(MyoError::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| MyoError::Config(format!("thread pool: {e}")))?;
    faer::set_global_parallelism(if n == 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(n)
    });
    Ok(())
}
