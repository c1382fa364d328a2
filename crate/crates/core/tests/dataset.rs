use std::time::Instant;

use simrepr::dataset::{image_paths, read_manifest, record_episodes, write_manifest, Manifest, ManifestHeader, Record};
use simrepr::semantic::CategoryMap;
use simrepr::sim::episode::generate_episodes;
use simrepr::sim::scene::train_corridor;
use simrepr::sim::{CameraIntrinsics, DirectionCommand, EpisodeConfig, Pose, Vec2};
use simrepr::{BBox, Detection, Error, RiskCategory, RngStream};

fn synthetic(n: usize) -> Manifest {
    let records = (0..n)
        .map(|i| {
            let (episode, step) = (i / 100, i % 100);
            let (depth, classes) = image_paths(episode, step);
            Record {
                episode,
                step,
                recovery: episode % 5 == 0,
                scene: "train_corridor".into(),
                seed: 3,
                depth,
                classes,
                detections: vec![Detection {
                    class_name: "person".into(),
                    category: RiskCategory::new(6).unwrap(),
                    bbox: BBox::new(10, 20, 40, 90),
                }],
                command: DirectionCommand::TurnLeft,
                action: [0.5 + i as f64 * 1e-6, -0.25],
                pose: Pose::new(1.0 + i as f64 * 1e-3, 2.5, 0.3),
                pedestrians: vec![Vec2::new(4.0, 1.25), Vec2::new(-3.0, 7.5)],
            }
        })
        .collect();
    Manifest { header: ManifestHeader::new("train_corridor", 3, n / 100, EpisodeConfig::default()), records }
}

#[test]
fn reference_scale_manifest_reads_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.jsonl");
    let m = synthetic(36_000);
    write_manifest(&m, &path).unwrap();
    let t = Instant::now();
    let back = read_manifest(&path).unwrap();
    let elapsed = t.elapsed();
    assert_eq!(back, m);
    assert!(elapsed.as_secs_f64() < 2.0, "{elapsed:?}");
}

#[test]
fn corrupt_line_reports_its_offset() {
    let mut text = Vec::new();
    synthetic(3).to_writer(&mut text).unwrap();
    let text = String::from_utf8(text).unwrap();
    let second = text.match_indices('\n').nth(1).unwrap().0 + 1;
    let broken = format!("{}{{\"episode\": oops}}\n", &text[..second]);
    match Manifest::from_reader(broken.as_bytes()) {
        Err(Error::Malformed { offset, .. }) => assert_eq!(offset, second),
        other => panic!("{other:?}"),
    }
}

#[test]
fn written_images_do_not_depend_on_worker_count() {
    let scene = train_corridor();
    let cfg = EpisodeConfig { steps: 8, camera: CameraIntrinsics::with_size(48, 36), ..EpisodeConfig::default() };
    let eps = generate_episodes(&scene, &cfg, &CategoryMap::default(), 3, &RngStream::new(12)).unwrap();
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let m = pool.install(|| record_episodes(Some(dir.path()), &scene, 12, &cfg, &eps)).unwrap();
        let files: Vec<Vec<u8>> = m
            .records
            .iter()
            .flat_map(|r| [std::fs::read(dir.path().join(&r.depth)).unwrap(), std::fs::read(dir.path().join(&r.classes)).unwrap()])
            .collect();
        (m, files)
    };
    let (m1, f1) = run(1);
    let (m3, f3) = run(3);
    assert_eq!(m1, m3);
    assert_eq!(f1, f3);
    assert_eq!(m1.records.len(), 24);
}
