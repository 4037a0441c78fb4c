//! Fixtures shared by the benchmarks.

use alterbt_core::landscape::{axis, default_levels, extract_contours, ContourRegionSet, Grid, PlaneBasis};
use alterbt_core::model::Model;
use alterbt_core::taskgen::{Task, TaskSpec};
use alterbt_core::text::ParallelCorpus;
use alterbt_core::{ParameterVector, TrainConfig};

pub struct Fixture {
    pub model: Model,
    pub params: ParameterVector,
    pub corpus: ParallelCorpus,
}

/// Default-sized model with fresh parameters and a sample of the default task.
pub fn fixture(pairs: usize) -> Fixture {
    let task = Task::new(TaskSpec::default()).unwrap();
    let corpus = task.sample_parallel(pairs).unwrap();
    let model = Model::new(TrainConfig::default().model_config(task.vocabulary().len())).unwrap();
    let params = model.init_params();
    Fixture { model, params, corpus }
}

/// A bumpy 31x31 surface, its contour regions, and a skewed 3-d plane.
pub fn landscape() -> (Grid, ContourRegionSet, PlaneBasis) {
    let (xs, ys) = (axis(-0.5, 1.5, 31), axis(-0.5, 1.5, 31));
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let bump = |cx: f64, cy: f64, w: f64| (-((x - cx).powi(2) + (y - cy).powi(2)) / (w * w)).exp();
            values.push(10.0 + 40.0 * bump(0.2, 0.1, 0.4) + 30.0 * bump(0.9, 0.8, 0.3) - 5.0 * bump(0.5, 0.5, 0.2));
        }
    }
    let grid = Grid::new(xs, ys, values).unwrap();
    let regions = extract_contours(&grid, &default_levels(&grid, 6)).unwrap();
    let v = |a: [f64; 3]| ParameterVector::from_vec(a.to_vec());
    let plane = PlaneBasis::from_params(v([0.0, 0.0, 1.0]), v([1.0, 0.2, 0.0]), v([0.3, 1.0, -0.5])).unwrap();
    (grid, regions, plane)
}
