use mcaurora::container::{read_snapshot, write_snapshot};
use mcaurora::descriptors::{ChannelReduction, DescriptorExtractor, HardcodedSpec, Reduction};
use mcaurora::engine::{
    ContainerSpec, CuriosityConfig, Engine, EngineConfig, MutationConfig, SharingStrategy, TrainingStrategy,
};
use mcaurora::metrics::MetricSnapshot;
use mcaurora::tasks::ToyTask;
use mcaurora::{Evaluation, Genome, GridContainer, ObservationMatrix, Solution};

fn spec(a: usize, b: usize) -> ContainerSpec {
    let c = |channel, lo, hi| ChannelReduction {
        channel,
        reduction: Reduction::Final,
        lo,
        hi,
    };
    ContainerSpec {
        shape: vec![8, 8],
        extractor: DescriptorExtractor::hardcoded(HardcodedSpec {
            name: format!("{a}-{b}"),
            components: vec![c(a, -10.24, 10.24), c(b, -10.24, 10.24)],
        }),
    }
}

#[test]
fn metrics_recomputed_from_a_snapshot_match_the_engine() {
    let cfg = EngineConfig {
        seed: 5,
        init_budget: 150,
        eval_budget: 600,
        batch_size: 50,
        sharing: SharingStrategy::Shared,
        training: TrainingStrategy::None,
        mutation: MutationConfig { p_mut: 0.5, eta: 20.0 },
        curiosity: CuriosityConfig::default(),
        learning: None,
    };
    let mut engine = Engine::new(Box::new(ToyTask::new()), cfg, vec![spec(0, 1), spec(2, 3), spec(0, 2)]).unwrap();
    engine.initialize().unwrap();
    while !engine.finished() {
        engine.run_batch().unwrap();
    }
    let logged = engine.snapshot().unwrap();

    let mut buf = Vec::new();
    write_snapshot(&mut buf, engine.containers()).unwrap();
    let records = read_snapshot(std::str::from_utf8(&buf).unwrap()).unwrap();
    let mut rebuilt: Vec<GridContainer> = engine
        .containers()
        .iter()
        .map(|c| GridContainer::unit(c.id(), c.shape().to_vec()).unwrap())
        .collect();
    for r in records {
        let eval = Evaluation {
            fitness: r.fitness,
            observations: ObservationMatrix::zeros(1, 1),
            episode_count: 1,
            unstable_episodes: 0,
        };
        let mut s = Solution::new(r.solution_id, Genome(r.genome), eval);
        s.descriptors.insert(r.container_id, r.fd);
        let c = &mut rebuilt[r.container_id];
        assert_eq!(c.bin_for(&s).unwrap(), r.bin);
        assert!(c.add(s).unwrap().accepted());
    }
    let recomputed = MetricSnapshot::compute(
        logged.iteration,
        logged.evals,
        &rebuilt,
        (-81.0, 0.0),
        logged.fd_abs_corr,
        logged.depot_size,
    );
    assert_eq!(recomputed, logged);
    assert_eq!(MetricSnapshot::from_csv_row(&logged.csv_row()).unwrap(), logged);
}
