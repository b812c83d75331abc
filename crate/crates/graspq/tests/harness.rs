use std::fs;

use graspq::checkpoint::{self, Checkpoint};
use graspq::commands::{cmd_ablate, cmd_eval, cmd_plot, cmd_train, ABLATION_FILE, CHECKPOINT_FILE, LOG_FILE};
use graspq::config::ConfigError;
use graspq::frames::{write_pgm, write_ppm};
use graspq::plot::{moving_average, render_svg};
use graspq::trainlog::{final_success, read_log, write_log, HEADER};
use graspq::{HarnessError, RunConfig};
use graspq_core::servo::{evaluate, Algorithm, EpisodeLog};
use graspq_core::tensornet::Tensor;
use graspq_core::world::{GraspWorld, ObjectKind};

const TINY: &str = "\
# small enough to train in well under a second
image_size = 8
supersample = 1
channels = 2, 3, 3
paddings = 2, 2, 1
fusion_channels = 2
vision_hidden = 4
motor_hidden = 4
head_hidden = 4
episodes = 6
warmup = 10
batch_size = 4
target_sync = 10
max_steps = 12
seed = 3
";

fn tiny() -> RunConfig {
    RunConfig::parse(TINY).unwrap()
}

#[test]
fn config_round_trips_through_text() {
    let c = tiny();
    assert_eq!(c.train.world.image_size, 8);
    assert_eq!(c.train.network.image_size, 8);
    assert_eq!(c.train.network.channels, [2, 3, 3]);
    let back = RunConfig::parse(&c.to_text()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert_ne!(RunConfig::default().hash(), c.hash());
}

#[test]
fn config_errors_name_the_line_and_key() {
    let err = RunConfig::parse("seed = 1\n\nlearning_rte = 0.1").unwrap_err();
    assert_eq!(err, ConfigError::UnknownKey { line: 3, key: "learning_rte".into() });

    let err = RunConfig::parse("gamma = 1.5").unwrap_err();
    match &err {
        ConfigError::InvalidValue { line, key, value, .. } => {
            assert_eq!((*line, key.as_str(), value.as_str()), (1, "gamma", "1.5"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("line 1") && err.to_string().contains("gamma"));

    assert_eq!(
        RunConfig::parse("seed = 1\nseed = 2").unwrap_err(),
        ConfigError::Duplicate { line: 2, key: "seed".into() }
    );
    assert!(matches!(RunConfig::parse("# ok\njust words"), Err(ConfigError::Syntax { line: 2, .. })));
    assert!(matches!(
        RunConfig::parse("objects = cube, pyramid"),
        Err(ConfigError::InvalidValue { line: 1, .. })
    ));
    assert!(matches!(RunConfig::parse("batch_size = 0"), Err(ConfigError::InvalidValue { .. })));
    assert!(matches!(RunConfig::parse("algorithm = sarsa"), Err(ConfigError::InvalidValue { .. })));
}

#[test]
fn objects_key_accepts_all_and_lists() {
    let c = RunConfig::parse("objects = all").unwrap();
    assert_eq!(c.train.objects, ObjectKind::ALL.to_vec());
    let c = RunConfig::parse("objects = sphere,cube").unwrap();
    assert_eq!(c.train.objects, vec![ObjectKind::Sphere, ObjectKind::Cube]);
}

fn sample_log() -> Vec<EpisodeLog> {
    (0..20)
        .map(|i| EpisodeLog {
            episode: i,
            total_return: 10.0 - 0.025 * i as f64,
            steps: 3 + i as u32,
            success: i % 3 == 0,
            epsilon: 1.0 - 0.05 * i as f64,
            loss: if i < 2 { 0.0 } else { 0.125 / i as f64 },
        })
        .collect()
}

#[test]
fn training_log_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(LOG_FILE);
    let rows = sample_log();
    write_log(&path, &rows).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    assert_eq!(text.lines().count(), rows.len() + 1);
    let back = read_log(&path).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!((a.episode, a.steps, a.success), (b.episode, b.steps, b.success));
        assert!((a.total_return - b.total_return).abs() < 1e-6);
        assert!((a.epsilon - b.epsilon).abs() < 1e-6);
        assert!((a.loss - b.loss).abs() < 1e-8);
    }
    // last two of twenty episodes are 18 (success) and 19
    assert_eq!(final_success(&rows), 0.5);
}

#[test]
fn malformed_log_rows_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "episode,return,steps,success,epsilon,loss\n0,1.0,3,1,0.5,0.0\n1,x,3,0,0.5,0.0\n").unwrap();
    match read_log(&path).unwrap_err() {
        HarnessError::Csv { row, .. } => assert_eq!(row, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn moving_average_and_svg() {
    assert_eq!(moving_average(&[1.0, 0.0, 1.0, 1.0], 2), vec![1.0, 0.5, 0.5, 1.0]);
    let series = vec![
        ("ddqn".to_string(), vec![0.0, 0.5, 1.0]),
        ("dqn".to_string(), vec![0.0, 0.25, 0.5]),
    ];
    let svg = render_svg("curves", "success", &series);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("ddqn") && svg.contains("dqn") && svg.contains("curves"));
}

#[test]
fn image_frames_have_netpbm_headers() {
    let dir = tempfile::tempdir().unwrap();
    let img = Tensor::new(vec![4, 2, 3], (0..24).map(|i| i as f64 / 23.0).collect()).unwrap();
    let ppm = dir.path().join("a.ppm");
    let pgm = dir.path().join("a.pgm");
    write_ppm(&ppm, &img).unwrap();
    write_pgm(&pgm, &img, 3).unwrap();
    let p6 = fs::read(&ppm).unwrap();
    assert!(p6.starts_with(b"P6\n3 2\n255\n"));
    assert_eq!(p6.len(), b"P6\n3 2\n255\n".len() + 3 * 6);
    assert_eq!(p6[p6.len() - 1], (17.0f64 / 23.0 * 255.0).round() as u8);
    let p5 = fs::read(&pgm).unwrap();
    assert!(p5.starts_with(b"P5\n3 2\n255\n"));
    assert_eq!(*p5.last().unwrap(), 255);
}

#[test]
fn train_writes_artifacts_and_checkpoint_restores_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny();
    config.debug_frames = 1;
    let report = cmd_train(&config, dir.path(), false).unwrap();
    assert_eq!(report.log.len(), 6);
    assert_eq!(read_log(&report.log_path).unwrap().len(), 6);
    assert!(dir.path().join("frames").read_dir().unwrap().count() >= 3);

    let bytes = fs::read(dir.path().join(CHECKPOINT_FILE)).unwrap();
    let ck = checkpoint::decode(&bytes).unwrap();
    assert_eq!(ck.config, config);
    assert_eq!(ck.episodes, 6);
    assert_eq!(checkpoint::encode(&ck).unwrap(), bytes);

    let world = GraspWorld::new(config.train.world.clone()).unwrap();
    let fresh = evaluate(&world, &mut &ck.model, ObjectKind::Cube, 5, 11).unwrap();
    let reloaded = checkpoint::load(&report.checkpoint_path).unwrap();
    let again = evaluate(&world, &mut &reloaded.model, ObjectKind::Cube, 5, 11).unwrap();
    assert_eq!(fresh, again);

    let per_object = cmd_eval(&report.checkpoint_path, 3, 0).unwrap();
    assert_eq!(per_object.len(), 3);
    assert!(per_object.iter().all(|(_, r)| r.episodes == 3));
}

#[test]
fn tabular_checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny().with_algorithm(Algorithm::QLearning);
    let report = cmd_train(&config, dir.path(), false).unwrap();
    let ck = checkpoint::load(&report.checkpoint_path).unwrap();
    let bytes = fs::read(&report.checkpoint_path).unwrap();
    assert_eq!(checkpoint::encode(&ck).unwrap(), bytes);
    let Checkpoint { model, .. } = ck;
    assert!(matches!(model, graspq_core::servo::Model::Table(ref t) if !t.is_empty()));
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_train(&tiny(), dir.path(), false).unwrap();
    let bytes = fs::read(&report.checkpoint_path).unwrap();
    assert!(checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(checkpoint::decode(&bad).unwrap_err().contains("magic"));
    let mut bad = bytes.clone();
    // first byte of the embedded config text
    bad[28] ^= 1;
    assert!(checkpoint::decode(&bad).is_err());
    let mut longer = bytes;
    longer.push(0);
    assert!(checkpoint::decode(&longer).is_err());
}

#[test]
fn ablation_covers_every_view_object_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny();
    config.ablate_seeds = 2;
    config.train.episodes = 3;
    config.jobs = 2;
    let rows = cmd_ablate(&config, dir.path(), false).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.success.len() == 2));
    let text = fs::read_to_string(dir.path().join(ABLATION_FILE)).unwrap();
    assert_eq!(text.lines().next().unwrap(), "view,object,seed3,seed4");
    assert_eq!(text.lines().count(), 7);
    assert_eq!(dir.path().join("runs").read_dir().unwrap().count(), 12);

    // running on one thread gives the same numbers
    let serial_dir = tempfile::tempdir().unwrap();
    config.jobs = 1;
    assert_eq!(cmd_ablate(&config, serial_dir.path(), false).unwrap(), rows);
}

#[test]
fn plot_reads_logs_and_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("ddqn.csv");
    let b = dir.path().join("dqn.csv");
    write_log(&a, &sample_log()).unwrap();
    write_log(&b, &sample_log()).unwrap();
    let out = dir.path().join("curves.svg");
    cmd_plot(&[a, b], &out).unwrap();
    let svg = fs::read_to_string(&out).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(cmd_plot(&[dir.path().join("missing.csv")], &out).is_err());
}
