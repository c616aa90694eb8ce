//! Regenerates the bundled example meshes:
//! `cargo run -p stochafem --example gen_meshes`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

const PYLON_NODES: [(f64, f64); 46] = [
    (12.11, 0.00), (36.58, 0.00), (15.18, 9.53), (24.47, 9.53), (33.67, 9.53),
    (17.77, 17.61), (24.47, 17.61), (31.09, 17.61), (20.43, 25.69), (28.51, 25.69),
    (18.90, 29.73), (24.47, 29.73), (29.96, 29.73), (17.44, 33.76), (21.16, 33.76),
    (27.78, 33.76), (31.41, 33.76), (19.06, 36.34), (29.88, 36.34), (14.54, 41.77),
    (34.32, 41.77), (0.00, 48.45), (8.56, 48.45), (12.11, 48.45), (14.70, 48.45),
    (17.93, 48.45), (21.88, 48.45), (26.97, 48.45), (31.01, 48.45), (34.16, 48.45),
    (36.74, 48.45), (40.38, 48.45), (48.86, 48.45), (6.46, 50.31), (42.40, 50.31),
    (10.01, 51.32), (38.92, 51.32), (12.11, 51.92), (16.15, 51.92), (20.03, 51.92),
    (24.47, 51.92), (28.91, 51.92), (32.71, 51.92), (36.74, 51.92), (12.11, 60.00),
    (36.74, 60.00),
];

const PYLON_EDGES: [(usize, usize); 91] = [
    // leg chords
    (1, 3), (3, 6), (6, 9), (9, 11), (11, 14), (14, 18), (18, 20), (20, 24),
    (2, 5), (5, 8), (8, 10), (10, 13), (13, 17), (17, 19), (19, 21), (21, 31),
    // horizontals
    (3, 4), (4, 5), (6, 7), (7, 8), (9, 10), (11, 12), (12, 13), (14, 15),
    (15, 16), (16, 17), (18, 19), (20, 21),
    (22, 23), (23, 24), (24, 25), (25, 26), (26, 27), (27, 28), (28, 29), (29, 30),
    (30, 31), (31, 32), (32, 33),
    (38, 39), (39, 40), (40, 41), (41, 42), (42, 43), (43, 44),
    // body bracing
    (1, 4), (2, 4), (3, 7), (5, 7), (4, 7), (7, 9), (7, 10), (7, 12), (9, 12),
    (10, 12), (11, 15), (12, 15), (12, 16), (13, 16), (15, 18), (16, 19), (18, 21),
    (19, 20), (20, 25), (20, 26), (21, 29), (21, 30),
    // cross-arm and peaks
    (24, 38), (25, 39), (27, 40), (28, 42), (30, 43), (31, 44), (27, 41), (28, 41),
    (38, 45), (39, 45), (44, 46), (43, 46),
    (22, 34), (34, 36), (36, 38), (23, 34), (23, 36), (24, 36),
    (33, 35), (35, 37), (37, 44), (32, 35), (32, 37), (31, 37),
];

fn pylon() -> String {
    let mut s = String::from(
        "# 46-node, 91-element pylon frame; square 2 cm x 2 cm steel sections\n\
         group 1 E=2e11 A=4e-4 I=1.3333333333333333e-8 rho=7800\n",
    );
    for (i, (x, y)) in PYLON_NODES.iter().enumerate() {
        writeln!(s, "node {} {x} {y}", i + 1).unwrap();
    }
    for (i, (a, b)) in PYLON_EDGES.iter().enumerate() {
        writeln!(s, "elem {} frame2d {a} {b} 1", i + 1).unwrap();
    }
    s.push_str("fix 1 xyr\nfix 2 xyr\nload 33 y -1000\n");
    s
}

const ROOF_NX: usize = 5;
const ROOF_NY: usize = 21;
const ROOF_SPACING: f64 = 3.0;
const ROOF_DEPTH: f64 = 2.0;

fn roof_top(i: usize, j: usize) -> usize {
    1 + j * ROOF_NX + i
}

fn roof_bottom(i: usize, j: usize) -> usize {
    1 + ROOF_NX * ROOF_NY + j * (ROOF_NX - 1) + i
}

/// Square-on-square double-layer grid: 105 top and 80 bottom nodes,
/// 664 bars including diagonals in the three end bays at each end.
fn roof() -> (String, String) {
    let mut s = String::from("# double-layer roof truss\ngroup 1 E=2.09e11 A=1.6e-3 rho=7850\n");
    let mut field = String::from("# plan-view field mesh over the top-layer nodes\ngroup 1 E=1\n");
    for j in 0..ROOF_NY {
        for i in 0..ROOF_NX {
            let (x, y) = (i as f64 * ROOF_SPACING, j as f64 * ROOF_SPACING);
            writeln!(s, "node {} {x} {y} {ROOF_DEPTH}", roof_top(i, j)).unwrap();
            writeln!(field, "node {} {x} {y}", roof_top(i, j)).unwrap();
        }
    }
    for j in 0..ROOF_NY - 1 {
        for i in 0..ROOF_NX - 1 {
            let (x, y) = ((i as f64 + 0.5) * ROOF_SPACING, (j as f64 + 0.5) * ROOF_SPACING);
            writeln!(s, "node {} {x} {y} 0", roof_bottom(i, j)).unwrap();
        }
    }
    let mut bars = Vec::new();
    for j in 0..ROOF_NY {
        for i in 0..ROOF_NX - 1 {
            bars.push((roof_top(i, j), roof_top(i + 1, j)));
        }
    }
    for j in 0..ROOF_NY - 1 {
        for i in 0..ROOF_NX {
            bars.push((roof_top(i, j), roof_top(i, j + 1)));
        }
    }
    for j in 0..ROOF_NY - 1 {
        for i in 0..ROOF_NX - 2 {
            bars.push((roof_bottom(i, j), roof_bottom(i + 1, j)));
        }
    }
    for j in 0..ROOF_NY - 2 {
        for i in 0..ROOF_NX - 1 {
            bars.push((roof_bottom(i, j), roof_bottom(i, j + 1)));
        }
    }
    for j in 0..ROOF_NY - 1 {
        for i in 0..ROOF_NX - 1 {
            let b = roof_bottom(i, j);
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                bars.push((b, roof_top(i + di, j + dj)));
            }
        }
    }
    for j in (0..3).chain(ROOF_NY - 4..ROOF_NY - 1) {
        for i in 0..ROOF_NX - 1 {
            bars.push((roof_top(i, j), roof_top(i + 1, j + 1)));
        }
    }
    assert_eq!(bars.len(), 664);
    for (e, (a, b)) in bars.iter().enumerate() {
        writeln!(s, "elem {} bar {a} {b} 1", e + 1).unwrap();
    }
    for j in 0..ROOF_NY {
        for i in 0..ROOF_NX {
            if i == 0 || i == ROOF_NX - 1 || j == 0 || j == ROOF_NY - 1 {
                writeln!(s, "fix {} xyz", roof_top(i, j)).unwrap();
            }
        }
    }
    let mut e = 1;
    for j in 0..ROOF_NY - 1 {
        for i in 0..ROOF_NX - 1 {
            let (a, b, c, d) = (roof_top(i, j), roof_top(i + 1, j), roof_top(i + 1, j + 1), roof_top(i, j + 1));
            writeln!(field, "elem {e} tri3 {a} {b} {c} 1").unwrap();
            writeln!(field, "elem {} tri3 {a} {c} {d} 1", e + 1).unwrap();
            e += 2;
        }
    }
    (s, field)
}

const TUNNEL_THETA: usize = 96;
/// Ring radii: lining, backfill, spray and reinforcement layers, then rock
/// graded out to the fixed boundary.
fn tunnel_radii() -> Vec<(f64, usize)> {
    let mut r = vec![(5.0, 0)];
    let mut push = |outer: f64, n: usize, group: usize, grade: f64| {
        let inner = r.last().unwrap().0;
        let total: f64 = (0..n).map(|k| grade.powi(k as i32)).sum();
        let mut acc = 0.0;
        for k in 0..n {
            acc += grade.powi(k as i32);
            r.push((inner + (outer - inner) * acc / total, group));
        }
    };
    push(5.2, 1, 3, 1.0);
    push(5.7, 2, 4, 1.0);
    push(6.65, 3, 5, 1.0);
    push(9.45, 6, 2, 1.0);
    push(40.0, 12, 1, 1.2);
    r
}

fn tunnel() -> String {
    let mut s = String::from(
        "# circular tunnel in rock, O-grid, plane strain\n\
         group 1 E=2.0e9 nu=0.25 rho=2200 plane=strain\n\
         group 2 E=2.6e9 nu=0.20 rho=2300 plane=strain\n\
         group 3 E=2.85e10 nu=0.20 rho=2500 plane=strain\n\
         group 4 E=1.85e10 nu=0.20 rho=2300 plane=strain\n\
         group 5 E=2.85e10 nu=0.20 rho=2200 plane=strain\n",
    );
    let radii = tunnel_radii();
    let id = |ring: usize, t: usize| 1 + ring * TUNNEL_THETA + t % TUNNEL_THETA;
    for (ring, (rad, _)) in radii.iter().enumerate() {
        for t in 0..TUNNEL_THETA {
            let a = 2.0 * std::f64::consts::PI * t as f64 / TUNNEL_THETA as f64;
            writeln!(s, "node {} {} {}", id(ring, t), rad * a.cos(), rad * a.sin()).unwrap();
        }
    }
    let mut e = 1;
    for ring in 0..radii.len() - 1 {
        let group = radii[ring + 1].1;
        for t in 0..TUNNEL_THETA {
            let (a, b, c, d) = (id(ring, t), id(ring, t + 1), id(ring + 1, t + 1), id(ring + 1, t));
            writeln!(s, "elem {e} tri3 {a} {b} {c} {group}").unwrap();
            writeln!(s, "elem {} tri3 {a} {c} {d} {group}", e + 1).unwrap();
            e += 2;
        }
    }
    let outer = radii.len() - 1;
    for t in 0..TUNNEL_THETA {
        writeln!(s, "fix {} xy", id(outer, t)).unwrap();
    }
    s
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("bundled");
    let write = |dir: &str, name: &str, text: String| {
        let d = root.join(dir);
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join(name), text).unwrap();
    };
    write("pylon_like", "mesh.txt", pylon());
    let (roof, field) = roof();
    write("roof_like", "mesh.txt", roof);
    write("roof_like", "field.txt", field);
    write("tunnel_like", "mesh.txt", tunnel());
}
