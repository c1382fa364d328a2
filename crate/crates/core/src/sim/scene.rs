//! Scene description: walls, static obstacles, pedestrian proxies, the
//! corridor navigation graph and evaluation routes.
//!
//! Scenes are plain JSON. Two built-in scenes are generated from corridor
//! layouts: `train_corridor` and `test_corridor` (a different building
//! structure with different obstacles).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{closest_on_aabb, closest_on_segment, ray_aabb_span, ray_circle_span, Vec2};
use crate::error::{Error, Result};

pub const ROBOT_RADIUS: f64 = 0.2;
pub const DEFAULT_WALL_HEIGHT: f64 = 2.5;

fn default_wall_height() -> f64 {
    DEFAULT_WALL_HEIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: Vec2,
    pub b: Vec2,
    #[serde(default = "default_wall_height")]
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Footprint {
    Box { center: Vec2, half: Vec2 },
    Cylinder { center: Vec2, radius: f64 },
}

impl Footprint {
    pub fn center(&self) -> Vec2 {
        match *self {
            Footprint::Box { center, .. } | Footprint::Cylinder { center, .. } => center,
        }
    }

    /// Closest footprint point to `p` (`p` itself when inside).
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        match *self {
            Footprint::Box { center, half } => closest_on_aabb(p, center - half, center + half),
            Footprint::Cylinder { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n <= radius {
                    p
                } else {
                    center + d * (radius / n)
                }
            }
        }
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        self.closest_point(p).dist(p)
    }

    /// Ray parameters where the ray enters and leaves the footprint.
    pub fn ray_span(&self, origin: Vec2, dir: Vec2) -> Option<(f64, f64)> {
        match *self {
            Footprint::Box { center, half } => ray_aabb_span(origin, dir, center - half, center + half),
            Footprint::Cylinder { center, radius } => ray_circle_span(origin, dir, center, radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    #[serde(rename = "class")]
    pub class_name: String,
    pub footprint: Footprint,
    pub height: f64,
}

/// Cylinder walking back and forth along a polyline at constant speed,
/// pausing `pause` seconds at each end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianDef {
    pub path: Vec<Vec2>,
    pub speed: f64,
    #[serde(default)]
    pub pause: f64,
    #[serde(default = "PedestrianDef::default_radius")]
    pub radius: f64,
    #[serde(default = "PedestrianDef::default_height")]
    pub height: f64,
}

impl PedestrianDef {
    fn default_radius() -> f64 {
        0.25
    }

    fn default_height() -> f64 {
        1.75
    }

    pub fn path_length(&self) -> f64 {
        self.path.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Duration of one full out-and-back cycle.
    pub fn period(&self) -> f64 {
        2.0 * (self.path_length() / self.speed + self.pause)
    }

    /// Position and unit facing direction `along` meters down the path.
    fn point_at(&self, along: f64) -> (Vec2, Vec2) {
        let mut rest = along;
        let last = self.path.len() - 2;
        for (k, w) in self.path.windows(2).enumerate() {
            let seg = w[0].dist(w[1]);
            if rest <= seg || k == last {
                let dir = (w[1] - w[0]).normalized();
                return (w[0] + dir * rest.clamp(0.0, seg), dir);
            }
            rest -= seg;
        }
        unreachable!("path has at least one segment")
    }

    /// Position and facing direction at walking clock `tau` seconds. While
    /// paused the pedestrian faces the direction it will leave in.
    pub fn pose_at(&self, tau: f64) -> (Vec2, Vec2) {
        if self.path.len() < 2 {
            return (self.path.first().copied().unwrap_or_default(), Vec2::new(1.0, 0.0));
        }
        let len = self.path_length();
        let walk = len / self.speed;
        let u = tau.rem_euclid(self.period());
        if u < walk {
            self.point_at(u * self.speed)
        } else if u < walk + self.pause {
            let (p, d) = self.point_at(len);
            (p, -d)
        } else if u < 2.0 * walk + self.pause {
            let (p, d) = self.point_at(len - (u - walk - self.pause) * self.speed);
            (p, -d)
        } else {
            self.point_at(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDef {
    pub name: String,
    /// Consecutive navigation-graph nodes, each pair joined by an edge.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    #[serde(default)]
    pub floor: bool,
    pub corridor_width: f64,
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianDef>,
    /// Corridor centerline graph; intersections are nodes of degree >= 3.
    #[serde(default)]
    pub nodes: Vec<Vec2>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub routes: Vec<RouteDef>,
}

/// What a query point or ray touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Thing {
    Wall(usize),
    Obstacle(usize),
    Pedestrian(usize),
}

impl Scene {
    pub fn empty(name: &str) -> Self {
        Self {
            name: name.to_string(),
            floor: false,
            corridor_width: 2.4,
            walls: Vec::new(),
            obstacles: Vec::new(),
            pedestrians: Vec::new(),
            nodes: Vec::new(),
            edges: Vec::new(),
            routes: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Built-in scene name, or a path to a JSON scene file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "train_corridor" => Ok(train_corridor()),
            "test_corridor" => Ok(test_corridor()),
            other => {
                let p = Path::new(other);
                if p.exists() {
                    Self::load(p)
                } else {
                    Err(Error::Unknown { kind: "scene", name: other.to_string() })
                }
            }
        }
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in &self.walls {
            for p in [w.a, w.b] {
                lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        (lo, hi)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e[0] == node || e[1] == node).count()
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e[0] == node {
                    Some(e[1])
                } else if e[1] == node {
                    Some(e[0])
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.iter().any(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
    }

    pub fn route(&self, name: &str) -> Result<&RouteDef> {
        self.routes.iter().find(|r| r.name == name).ok_or_else(|| Error::Unknown { kind: "route", name: name.to_string() })
    }

    /// Distance from `p` to the nearest static geometry and what it was.
    pub fn static_clearance(&self, p: Vec2) -> (f64, Option<Thing>) {
        let mut best = (f64::INFINITY, None);
        for (i, w) in self.walls.iter().enumerate() {
            let d = closest_on_segment(p, w.a, w.b).dist(p);
            if d < best.0 {
                best = (d, Some(Thing::Wall(i)));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            let d = o.footprint.distance(p);
            if d < best.0 {
                best = (d, Some(Thing::Obstacle(i)));
            }
        }
        best
    }

    /// Distance from `p` to the nearest point of the centerline graph.
    pub fn centerline_distance(&self, p: Vec2) -> f64 {
        self.edges.iter().map(|e| closest_on_segment(p, self.nodes[e[0]], self.nodes[e[1]]).dist(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidValue(format!("scene `{}`: {m}", self.name)));
        if !(self.corridor_width > 2.0 * ROBOT_RADIUS) {
            return invalid(format!("corridor width {} too small", self.corridor_width));
        }
        for e in &self.edges {
            if e[0] >= self.nodes.len() || e[1] >= self.nodes.len() || e[0] == e[1] {
                return invalid(format!("bad edge {e:?}"));
            }
        }
        for r in &self.routes {
            if r.nodes.len() < 2 {
                return invalid(format!("route `{}` needs two nodes", r.name));
            }
            for w in r.nodes.windows(2) {
                if !self.has_edge(w[0], w[1]) {
                    return invalid(format!("route `{}` uses missing edge {:?}", r.name, w));
                }
            }
        }
        if !self.walls.is_empty() {
            let (lo, hi) = self.bounds();
            for o in &self.obstacles {
                let c = o.footprint.center();
                if c.x < lo.x || c.x > hi.x || c.y < lo.y || c.y > hi.y {
                    return invalid(format!("obstacle `{}` outside the walls", o.class_name));
                }
                if !(o.height > 0.0) {
                    return invalid(format!("obstacle `{}` has no height", o.class_name));
                }
            }
        }
        for (i, ped) in self.pedestrians.iter().enumerate() {
            if ped.path.len() < 2 || !(ped.speed > 0.0) || !(ped.radius > 0.0) {
                return invalid(format!("pedestrian {i} needs a path, speed and radius"));
            }
            let period = ped.period();
            let n = (ped.path_length() / 0.025).ceil() as usize + 2;
            for k in 0..=n {
                let (p, _) = ped.pose_at(period * k as f64 / n as f64);
                if self.static_clearance(p).0 < ped.radius {
                    return invalid(format!("pedestrian {i} path collides with static geometry"));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Built-in layouts

struct Layout {
    name: &'static str,
    width: f64,
    nodes: Vec<Vec2>,
    edges: Vec<[usize; 2]>,
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Boundary of the union of corridor rectangles, traced on a 0.1 m grid and
/// merged into maximal axis-aligned segments.
fn walls_from_layout(layout: &Layout) -> Vec<Wall> {
    let half = layout.width / 2.0;
    let rects: Vec<(Vec2, Vec2)> = layout
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (layout.nodes[e[0]], layout.nodes[e[1]]);
            (Vec2::new(a.x.min(b.x) - half, a.y.min(b.y) - half), Vec2::new(a.x.max(b.x) + half, a.y.max(b.y) + half))
        })
        .collect();
    let cell = 0.1;
    let lo_x = rects.iter().map(|r| r.0.x).fold(f64::INFINITY, f64::min) - cell;
    let lo_y = rects.iter().map(|r| r.0.y).fold(f64::INFINITY, f64::min) - cell;
    let hi_x = rects.iter().map(|r| r.1.x).fold(f64::NEG_INFINITY, f64::max) + cell;
    let hi_y = rects.iter().map(|r| r.1.y).fold(f64::NEG_INFINITY, f64::max) + cell;
    let nx = ((hi_x - lo_x) / cell).round() as usize;
    let ny = ((hi_y - lo_y) / cell).round() as usize;
    let free = |i: i64, j: i64| -> bool {
        if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
            return false;
        }
        let c = Vec2::new(lo_x + (i as f64 + 0.5) * cell, lo_y + (j as f64 + 0.5) * cell);
        rects.iter().any(|(a, b)| c.x > a.x && c.x < b.x && c.y > a.y && c.y < b.y)
    };
    let mut walls = Vec::new();
    let mut push = |a: Vec2, b: Vec2| {
        walls.push(Wall { a: Vec2::new(round3(a.x), round3(a.y)), b: Vec2::new(round3(b.x), round3(b.y)), height: DEFAULT_WALL_HEIGHT })
    };
    // vertical boundaries at x = lo_x + i * cell
    for i in 0..=nx as i64 {
        let mut run: Option<(i64, bool)> = None;
        for j in 0..=ny as i64 {
            let side = if j < ny as i64 { Some(free(i - 1, j)).filter(|&l| l != free(i, j)) } else { None };
            match (run, side) {
                (Some((_, s)), Some(cur)) if s == cur => {}
                (prev, cur) => {
                    if let Some((start, _)) = prev {
                        let x = lo_x + i as f64 * cell;
                        push(Vec2::new(x, lo_y + start as f64 * cell), Vec2::new(x, lo_y + j as f64 * cell));
                    }
                    run = cur.map(|s| (j, s));
                }
            }
        }
    }
    // horizontal boundaries at y = lo_y + j * cell
    for j in 0..=ny as i64 {
        let mut run: Option<(i64, bool)> = None;
        for i in 0..=nx as i64 {
            let side = if i < nx as i64 { Some(free(i, j - 1)).filter(|&l| l != free(i, j)) } else { None };
            match (run, side) {
                (Some((_, s)), Some(cur)) if s == cur => {}
                (prev, cur) => {
                    if let Some((start, _)) = prev {
                        let y = lo_y + j as f64 * cell;
                        push(Vec2::new(lo_x + start as f64 * cell, y), Vec2::new(lo_x + i as f64 * cell, y));
                    }
                    run = cur.map(|s| (i, s));
                }
            }
        }
    }
    walls
}

/// Obstacle against the corridor wall of edge `from -> to`, `along` meters
/// from `from`; `side` +1 is left of the travel direction.
fn wall_obstacle(layout: &Layout, from: usize, to: usize, along: f64, side: f64, class: &str, size: (f64, f64), height: f64) -> Obstacle {
    let (a, b) = (layout.nodes[from], layout.nodes[to]);
    let dir = (b - a).normalized();
    let (length, depth) = size;
    let offset = layout.width / 2.0 - depth / 2.0 - 0.05;
    let c = a + dir * along + dir.perp() * (side * offset);
    let center = Vec2::new(round3(c.x), round3(c.y));
    let footprint = if class == "plant" || class == "trash_bin" {
        Footprint::Cylinder { center, radius: depth / 2.0 }
    } else if dir.x.abs() > dir.y.abs() {
        Footprint::Box { center, half: Vec2::new(length / 2.0, depth / 2.0) }
    } else {
        Footprint::Box { center, half: Vec2::new(depth / 2.0, length / 2.0) }
    };
    Obstacle { class_name: class.to_string(), footprint, height }
}

/// Pedestrian crossing edge `from -> to` at `along` meters, wall to wall.
fn crossing(layout: &Layout, from: usize, to: usize, along: f64, speed: f64) -> PedestrianDef {
    let (a, b) = (layout.nodes[from], layout.nodes[to]);
    let dir = (b - a).normalized();
    let reach = layout.width / 2.0 - 0.3;
    let c = a + dir * along;
    let p0 = c + dir.perp() * reach;
    let p1 = c - dir.perp() * reach;
    PedestrianDef {
        path: vec![Vec2::new(round3(p0.x), round3(p0.y)), Vec2::new(round3(p1.x), round3(p1.y))],
        speed,
        pause: 3.0,
        radius: 0.25,
        height: 1.75,
    }
}

/// Pedestrian walking along edge `from -> to` in a lane `side * 0.75` m
/// off the centerline, between `start` and `end` meters from `from`.
fn lane_walker(layout: &Layout, from: usize, to: usize, start: f64, end: f64, side: f64, speed: f64) -> PedestrianDef {
    let (a, b) = (layout.nodes[from], layout.nodes[to]);
    let dir = (b - a).normalized();
    let off = dir.perp() * (0.75 * side);
    let p0 = a + dir * start + off;
    let p1 = a + dir * end + off;
    PedestrianDef {
        path: vec![Vec2::new(round3(p0.x), round3(p0.y)), Vec2::new(round3(p1.x), round3(p1.y))],
        speed,
        pause: 1.0,
        radius: 0.25,
        height: 1.75,
    }
}

fn route(name: &str, nodes: &[usize]) -> RouteDef {
    RouteDef { name: name.to_string(), nodes: nodes.to_vec() }
}

/// 3 x 3 grid of corridors, 16 m x 12 m, 2.4 m wide.
pub fn train_corridor() -> Scene {
    //  6 --- 7 --- 8      y = 12
    //  |     |     |
    //  3 --- 4 --- 5      y = 6
    //  |     |     |
    //  0 --- 1 --- 2      y = 0
    let xs = [0.0, 8.0, 16.0];
    let ys = [0.0, 6.0, 12.0];
    let nodes = ys.iter().flat_map(|&y| xs.iter().map(move |&x| Vec2::new(x, y))).collect();
    let layout = Layout {
        name: "train_corridor",
        width: 2.4,
        nodes,
        edges: vec![[0, 1], [1, 2], [3, 4], [4, 5], [6, 7], [7, 8], [0, 3], [3, 6], [1, 4], [4, 7], [2, 5], [5, 8]],
    };
    let l = &layout;
    let obstacles = vec![
        wall_obstacle(l, 0, 1, 3.0, 1.0, "chair", (0.5, 0.5), 0.9),
        wall_obstacle(l, 1, 2, 4.5, -1.0, "trash_bin", (0.44, 0.44), 0.7),
        wall_obstacle(l, 2, 5, 3.0, 1.0, "plant", (0.5, 0.5), 1.2),
        wall_obstacle(l, 5, 8, 3.0, -1.0, "table", (0.8, 0.5), 0.75),
        wall_obstacle(l, 8, 7, 4.0, 1.0, "cabinet", (1.0, 0.45), 1.8),
        wall_obstacle(l, 7, 6, 3.0, -1.0, "box", (0.5, 0.5), 0.6),
        wall_obstacle(l, 6, 3, 3.0, 1.0, "chair", (0.5, 0.5), 0.9),
        wall_obstacle(l, 3, 0, 3.0, -1.0, "cart", (0.9, 0.5), 1.0),
        wall_obstacle(l, 1, 4, 3.0, 1.0, "chair", (0.5, 0.5), 0.9),
        wall_obstacle(l, 4, 7, 3.0, -1.0, "box", (0.5, 0.5), 0.6),
        wall_obstacle(l, 3, 4, 4.0, 1.0, "plant", (0.5, 0.5), 1.2),
        wall_obstacle(l, 4, 5, 4.0, -1.0, "trash_bin", (0.44, 0.44), 0.7),
    ];
    let pedestrians = vec![
        crossing(l, 0, 1, 6.0, 0.8),
        crossing(l, 2, 5, 4.5, 0.7),
        crossing(l, 8, 7, 5.5, 0.8),
        lane_walker(l, 4, 5, 1.6, 6.4, 1.0, 0.9),
        lane_walker(l, 3, 6, 1.6, 4.4, 1.0, 0.8),
    ];
    let routes = vec![
        route("loop_east", &[0, 1, 2, 5, 8]),
        route("cross_north", &[1, 4, 7, 8]),
        route("west_up", &[0, 3, 6, 7]),
        route("middle_east", &[3, 4, 5, 2]),
    ];
    finish(layout, obstacles, pedestrians, routes)
}

/// Eight-node corridor network with one missing corner block, 2.2 m wide.
pub fn test_corridor() -> Scene {
    //  6 --- 5            y = 16
    //  |     |
    //  7 --- 4 --- 3      y = 9
    //  |     |     |
    //  0 --- 1 --- 2      y = 0
    let nodes = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(10.0, 0.0),
        Vec2::new(18.0, 0.0),
        Vec2::new(18.0, 9.0),
        Vec2::new(10.0, 9.0),
        Vec2::new(10.0, 16.0),
        Vec2::new(0.0, 16.0),
        Vec2::new(0.0, 9.0),
    ];
    let layout = Layout {
        name: "test_corridor",
        width: 2.2,
        nodes,
        edges: vec![[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 0], [1, 4], [7, 4]],
    };
    let l = &layout;
    let obstacles = vec![
        wall_obstacle(l, 0, 1, 4.0, -1.0, "cabinet", (1.0, 0.45), 1.8),
        wall_obstacle(l, 1, 2, 3.5, 1.0, "chair", (0.5, 0.5), 0.9),
        wall_obstacle(l, 2, 3, 5.0, -1.0, "box", (0.6, 0.5), 0.7),
        wall_obstacle(l, 3, 4, 3.0, 1.0, "plant", (0.5, 0.5), 1.2),
        wall_obstacle(l, 4, 5, 3.5, -1.0, "chair", (0.5, 0.5), 0.9),
        wall_obstacle(l, 5, 6, 5.0, 1.0, "table", (0.8, 0.5), 0.75),
        wall_obstacle(l, 6, 7, 3.5, -1.0, "trash_bin", (0.44, 0.44), 0.7),
        wall_obstacle(l, 7, 0, 4.5, 1.0, "cart", (0.9, 0.5), 1.0),
        wall_obstacle(l, 1, 4, 4.5, -1.0, "box", (0.5, 0.5), 0.6),
        wall_obstacle(l, 7, 4, 6.0, 1.0, "chair", (0.5, 0.5), 0.9),
    ];
    let pedestrians = vec![
        crossing(l, 0, 1, 7.0, 0.8),
        crossing(l, 4, 5, 5.5, 0.7),
        crossing(l, 7, 4, 3.0, 0.8),
        lane_walker(l, 2, 3, 1.6, 7.4, 1.0, 0.8),
    ];
    let routes = vec![
        route("r0_south_east", &[0, 1, 2, 3]),
        route("r1_center_north", &[0, 1, 4, 5]),
        route("r2_west_cross", &[0, 7, 4, 3]),
        route("r3_north_loop", &[7, 4, 5, 6]),
        route("r4_east_return", &[3, 2, 1, 0]),
        route("r5_center_south", &[5, 4, 1, 2]),
        route("r6_west_down", &[6, 7, 0, 1]),
        route("r7_cross_west", &[3, 4, 7, 6]),
        route("r8_up_center", &[2, 1, 4, 7]),
        route("r9_top_down", &[5, 6, 7, 4]),
    ];
    finish(layout, obstacles, pedestrians, routes)
}

fn finish(layout: Layout, obstacles: Vec<Obstacle>, pedestrians: Vec<PedestrianDef>, routes: Vec<RouteDef>) -> Scene {
    let walls = walls_from_layout(&layout);
    let scene = Scene {
        name: layout.name.to_string(),
        floor: true,
        corridor_width: layout.width,
        walls,
        obstacles,
        pedestrians,
        nodes: layout.nodes,
        edges: layout.edges,
        routes,
    };
    scene.validate().expect("built-in scene is valid");
    scene
}
