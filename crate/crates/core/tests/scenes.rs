use std::path::PathBuf;

use simrepr::sim::scene::{test_corridor, train_corridor};
use simrepr::sim::Scene;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(format!("{name}.json"))
}

#[test]
fn shipped_scene_files_match_builtins() {
    for scene in [train_corridor(), test_corridor()] {
        let loaded = Scene::load(&shipped(&scene.name)).unwrap();
        assert_eq!(loaded, scene);
        assert_eq!(Scene::resolve(shipped(&scene.name).to_str().unwrap()).unwrap(), scene);
    }
}

#[test]
fn invalid_scene_files_are_rejected() {
    let mut s = train_corridor();
    s.routes[0].nodes = vec![0, 0];
    assert!(Scene::from_json(&s.to_json()).is_err());
    let mut s = train_corridor();
    s.obstacles[0].height = 0.0;
    assert!(Scene::from_json(&s.to_json()).is_err());
    assert!(Scene::from_json("{\"name\": 3}").is_err());
    assert!(Scene::resolve("no_such_scene").is_err());
}
