//! Environment maps: rectangular bounds, wall segments, candidate beacon
//! sites, uniform location sampling, and line-of-sight obstruction counts.
//!
//! Maps are immutable after construction; every query here is read-only.

use rand::Rng;
use thiserror::Error;

/// Distance below which a point is considered to touch a segment.
/// Fixed so grazing-contact decisions are deterministic.
const CONTACT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// A wall: a straight segment with distinct endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid map: {0}")]
    Invalid(String),
}

/// The floor plan all physics queries run against.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentMap {
    width: f64,
    height: f64,
    walls: Vec<Segment>,
    candidates: Vec<Point>,
    /// `(rows, cols)` when the candidates came from a `grid` directive.
    grid_dims: Option<(usize, usize)>,
}

impl EnvironmentMap {
    pub fn new(
        width: f64,
        height: f64,
        walls: Vec<Segment>,
        candidates: Vec<Point>,
    ) -> Result<Self, MapError> {
        Self::build(width, height, walls, candidates, None)
    }

    /// Builds a map whose candidates form a `rows` x `cols` evenly spaced
    /// lattice inset by half a cell from the bounds.
    pub fn with_grid(
        width: f64,
        height: f64,
        walls: Vec<Segment>,
        rows: usize,
        cols: usize,
    ) -> Result<Self, MapError> {
        if rows == 0 || cols == 0 {
            return Err(MapError::Invalid(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let candidates = grid_candidates(width, height, rows, cols);
        Self::build(width, height, walls, candidates, Some((rows, cols)))
    }

    fn build(
        width: f64,
        height: f64,
        walls: Vec<Segment>,
        candidates: Vec<Point>,
        grid_dims: Option<(usize, usize)>,
    ) -> Result<Self, MapError> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(MapError::Invalid(format!("nonpositive width {width}")));
        }
        if !(height > 0.0) || !height.is_finite() {
            return Err(MapError::Invalid(format!("nonpositive height {height}")));
        }
        let inside = |p: &Point| {
            p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.x <= width
                && p.y >= 0.0
                && p.y <= height
        };
        for (i, w) in walls.iter().enumerate() {
            if !inside(&w.a) || !inside(&w.b) {
                return Err(MapError::Invalid(format!(
                    "wall {i} endpoint outside bounds {width}x{height}"
                )));
            }
            if w.a == w.b {
                return Err(MapError::Invalid(format!(
                    "wall {i} has identical endpoints ({}, {})",
                    w.a.x, w.a.y
                )));
            }
        }
        for (i, c) in candidates.iter().enumerate() {
            if !inside(c) {
                return Err(MapError::Invalid(format!(
                    "candidate {i} at ({}, {}) outside bounds {width}x{height}",
                    c.x, c.y
                )));
            }
        }
        for i in 0..candidates.len() {
            for j in (i + 1)..candidates.len() {
                if candidates[i] == candidates[j] {
                    return Err(MapError::Invalid(format!(
                        "candidates {i} and {j} coincide at ({}, {})",
                        candidates[i].x, candidates[i].y
                    )));
                }
            }
        }
        Ok(EnvironmentMap {
            width,
            height,
            walls,
            candidates,
            grid_dims,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn walls(&self) -> &[Segment] {
        &self.walls
    }

    pub fn candidates(&self) -> &[Point] {
        &self.candidates
    }

    pub fn grid_dims(&self) -> Option<(usize, usize)> {
        self.grid_dims
    }

    pub fn diagonal(&self) -> f64 {
        (self.width * self.width + self.height * self.height).sqrt()
    }

    /// Parses the line-oriented map format:
    ///
    /// ```text
    /// bounds W H
    /// grid R C            # or repeated `candidate X Y`
    /// wall X1 Y1 X2 Y2
    /// ```
    ///
    /// `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut bounds: Option<(f64, f64)> = None;
        let mut grid: Option<(usize, usize)> = None;
        let mut candidates: Vec<Point> = Vec::new();
        let mut walls: Vec<(usize, Segment)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            let parse_f64 = |s: &str, what: &str| -> Result<f64, MapError> {
                s.parse::<f64>().map_err(|_| MapError::Parse {
                    line: line_no,
                    msg: format!("invalid {what} `{s}`"),
                })
            };
            let parse_usize = |s: &str, what: &str| -> Result<usize, MapError> {
                s.parse::<usize>().map_err(|_| MapError::Parse {
                    line: line_no,
                    msg: format!("invalid {what} `{s}`"),
                })
            };
            let arity = |want: usize| -> Result<(), MapError> {
                if tokens.len() != want + 1 {
                    Err(MapError::Parse {
                        line: line_no,
                        msg: format!(
                            "`{}` expects {want} arguments, found {}",
                            tokens[0],
                            tokens.len() - 1
                        ),
                    })
                } else {
                    Ok(())
                }
            };
            match tokens[0] {
                "bounds" => {
                    arity(2)?;
                    if bounds.is_some() {
                        return Err(MapError::Parse {
                            line: line_no,
                            msg: "duplicate `bounds` directive".into(),
                        });
                    }
                    bounds = Some((
                        parse_f64(tokens[1], "width")?,
                        parse_f64(tokens[2], "height")?,
                    ));
                }
                "grid" => {
                    arity(2)?;
                    if grid.is_some() {
                        return Err(MapError::Parse {
                            line: line_no,
                            msg: "duplicate `grid` directive".into(),
                        });
                    }
                    if !candidates.is_empty() {
                        return Err(MapError::Parse {
                            line: line_no,
                            msg: "`grid` cannot be combined with explicit candidates".into(),
                        });
                    }
                    grid = Some((
                        parse_usize(tokens[1], "grid rows")?,
                        parse_usize(tokens[2], "grid cols")?,
                    ));
                }
                "candidate" => {
                    arity(2)?;
                    if grid.is_some() {
                        return Err(MapError::Parse {
                            line: line_no,
                            msg: "`candidate` cannot be combined with `grid`".into(),
                        });
                    }
                    candidates.push(Point::new(
                        parse_f64(tokens[1], "candidate x")?,
                        parse_f64(tokens[2], "candidate y")?,
                    ));
                }
                "wall" => {
                    arity(4)?;
                    walls.push((
                        line_no,
                        Segment::new(
                            Point::new(
                                parse_f64(tokens[1], "wall x1")?,
                                parse_f64(tokens[2], "wall y1")?,
                            ),
                            Point::new(
                                parse_f64(tokens[3], "wall x2")?,
                                parse_f64(tokens[4], "wall y2")?,
                            ),
                        ),
                    ));
                }
                other => {
                    return Err(MapError::Parse {
                        line: line_no,
                        msg: format!("unknown directive `{other}`"),
                    });
                }
            }
        }

        let (width, height) = bounds.ok_or(MapError::Invalid(
            "missing `bounds` directive".to_string(),
        ))?;
        let walls = walls.into_iter().map(|(_, s)| s).collect();
        match grid {
            Some((r, c)) => Self::with_grid(width, height, walls, r, c),
            None => Self::new(width, height, walls, candidates),
        }
    }

    /// Serializes to the map file format. Grid-generated candidate sets are
    /// written back as their `grid` directive, so a serialize/parse round
    /// trip reproduces the map exactly.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("bounds {} {}\n", self.width, self.height));
        match self.grid_dims {
            Some((r, c)) => out.push_str(&format!("grid {r} {c}\n")),
            None => {
                for c in &self.candidates {
                    out.push_str(&format!("candidate {} {}\n", c.x, c.y));
                }
            }
        }
        for w in &self.walls {
            out.push_str(&format!("wall {} {} {} {}\n", w.a.x, w.a.y, w.b.x, w.b.y));
        }
        out
    }

    /// Number of walls obstructing the open line-of-sight segment `(p, q)`.
    ///
    /// A wall counts when it properly crosses the sight line, or when one of
    /// its endpoints touches the sight line's interior (within a fixed
    /// tolerance). A wall passing exactly through `p` or `q` does not count,
    /// so transmitters mounted on a wall are not occluded by it; that rule
    /// takes precedence over the others. Each wall counts at most once and
    /// the result is symmetric in `(p, q)`.
    pub fn obstruction_count(&self, p: Point, q: Point) -> usize {
        self.walls
            .iter()
            .filter(|w| wall_obstructs(w, p, q))
            .count()
    }

    /// Draws `n` points i.i.d. uniform over the bounding rectangle.
    /// Consumes exactly `2n` draws from `rng` (x before y for each point).
    pub fn sample_locations(&self, n: usize, rng: &mut impl Rng) -> Vec<Point> {
        (0..n)
            .map(|_| {
                let x = rng.gen_range(0.0..self.width);
                let y = rng.gen_range(0.0..self.height);
                Point::new(x, y)
            })
            .collect()
    }

    /// Half the smallest candidate pair distance; used as the default
    /// minimum effective range of the propagation model. Falls back to 0.02
    /// when fewer than two candidates exist.
    pub fn default_r_min(&self) -> f64 {
        let c = &self.candidates;
        if c.len() < 2 {
            return 0.02;
        }
        let mut best = f64::INFINITY;
        for i in 0..c.len() {
            for j in (i + 1)..c.len() {
                best = best.min(c[i].dist(&c[j]));
            }
        }
        0.5 * best
    }
}

/// Evenly spaced `rows` x `cols` lattice inset by half a cell, row-major
/// with x varying fastest.
pub fn grid_candidates(width: f64, height: f64, rows: usize, cols: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(Point::new(
                (c as f64 + 0.5) * width / cols as f64,
                (r as f64 + 0.5) * height / rows as f64,
            ));
        }
    }
    out
}

/// Sign of the orientation of `(a, b, c)` using an exact predicate:
/// +1 counter-clockwise, -1 clockwise, 0 collinear.
fn orient(a: Point, b: Point, c: Point) -> i8 {
    let v = robust::orient2d(
        robust::Coord { x: a.x, y: a.y },
        robust::Coord { x: b.x, y: b.y },
        robust::Coord { x: c.x, y: c.y },
    );
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Distance from `p` to the closed segment `(a, b)`.
fn point_segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let apx = p.x - a.x;
    let apy = p.y - a.y;
    let len2 = abx * abx + aby * aby;
    if len2 == 0.0 {
        return p.dist(&a);
    }
    let t = ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0);
    let cx = a.x + t * abx;
    let cy = a.y + t * aby;
    p.dist(&Point::new(cx, cy))
}

fn wall_obstructs(wall: &Segment, p: Point, q: Point) -> bool {
    // Quick reject: bounding boxes (padded by the contact tolerance).
    let (wx0, wx1) = minmax(wall.a.x, wall.b.x);
    let (wy0, wy1) = minmax(wall.a.y, wall.b.y);
    let (sx0, sx1) = minmax(p.x, q.x);
    let (sy0, sy1) = minmax(p.y, q.y);
    if wx0 > sx1 + CONTACT_TOL
        || sx0 > wx1 + CONTACT_TOL
        || wy0 > sy1 + CONTACT_TOL
        || sy0 > wy1 + CONTACT_TOL
    {
        return false;
    }

    // Sight endpoints touching the wall: the open segment excludes them.
    if point_segment_dist(p, wall.a, wall.b) <= CONTACT_TOL
        || point_segment_dist(q, wall.a, wall.b) <= CONTACT_TOL
    {
        return false;
    }

    // Proper crossing, decided exactly.
    let o1 = orient(p, q, wall.a);
    let o2 = orient(p, q, wall.b);
    let o3 = orient(wall.a, wall.b, p);
    let o4 = orient(wall.a, wall.b, q);
    if o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 && o1 != o2 && o3 != o4 {
        return true;
    }

    // Wall endpoint resting on the sight line (T-junctions, collinear
    // overlap); contact at p/q was already excluded above.
    point_segment_dist(wall.a, p, q) <= CONTACT_TOL
        || point_segment_dist(wall.b, p, q) <= CONTACT_TOL
}

fn minmax(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Built-in synthetic floor plans for the map generator.
pub mod presets {
    use super::{EnvironmentMap, MapError, Point, Segment};

    pub struct MapPreset {
        pub name: &'static str,
        pub summary: &'static str,
        walls: fn() -> Vec<Segment>,
    }

    impl MapPreset {
        /// Instantiates the preset with a `rows` x `cols` candidate grid on
        /// the standard 1.0 x 0.7 bounds.
        pub fn build(&self, rows: usize, cols: usize) -> Result<EnvironmentMap, MapError> {
            EnvironmentMap::with_grid(1.0, 0.7, (self.walls)(), rows, cols)
        }
    }

    fn open_walls() -> Vec<Segment> {
        Vec::new()
    }

    // One interior wall with a central door gap, splitting the area in two.
    fn tworoom_walls() -> Vec<Segment> {
        vec![
            Segment::new(Point::new(0.5, 0.0), Point::new(0.5, 0.28)),
            Segment::new(Point::new(0.5, 0.42), Point::new(0.5, 0.7)),
        ]
    }

    // Two staggered interior walls forming an S-shaped corridor.
    fn corridor_walls() -> Vec<Segment> {
        vec![
            Segment::new(Point::new(0.0, 0.233), Point::new(0.8, 0.233)),
            Segment::new(Point::new(0.2, 0.467), Point::new(1.0, 0.467)),
        ]
    }

    pub const PRESETS: &[MapPreset] = &[
        MapPreset {
            name: "open",
            summary: "no interior walls",
            walls: open_walls,
        },
        MapPreset {
            name: "tworoom",
            summary: "one interior wall with a door gap",
            walls: tworoom_walls,
        },
        MapPreset {
            name: "corridor",
            summary: "two staggered walls forming a corridor",
            walls: corridor_walls,
        },
    ];

    pub fn find(name: &str) -> Option<&'static MapPreset> {
        PRESETS.iter().find(|p| p.name == name)
    }

    pub fn names() -> Vec<&'static str> {
        PRESETS.iter().map(|p| p.name).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vertical_wall_map() -> EnvironmentMap {
        EnvironmentMap::new(
            1.0,
            0.7,
            vec![Segment::new(Point::new(0.5, 0.0), Point::new(0.5, 0.7))],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn grid_two_by_two_matches_hand_computed_lattice() {
        let map = EnvironmentMap::parse("bounds 1.0 0.7\ngrid 2 2\n").unwrap();
        let want = [
            Point::new(0.25, 0.175),
            Point::new(0.75, 0.175),
            Point::new(0.25, 0.525),
            Point::new(0.75, 0.525),
        ];
        assert_eq!(map.candidates(), &want);
    }

    #[test]
    fn grid_25x25_has_625_candidates() {
        let map = EnvironmentMap::parse("bounds 1.0 0.7\ngrid 25 25\n").unwrap();
        assert_eq!(map.candidates().len(), 625);
        assert_eq!(map.grid_dims(), Some((25, 25)));
    }

    #[test]
    fn nonpositive_width_is_rejected() {
        let err = EnvironmentMap::parse("bounds 0 0.7\n").unwrap_err();
        assert!(err.to_string().contains("nonpositive width"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = EnvironmentMap::parse("bounds 1.0 0.7\nwalls 0 0 1 1\n").unwrap_err();
        match err {
            MapError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
        let err = EnvironmentMap::parse("bounds 1.0 x\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let map = EnvironmentMap::parse(
            "# floor plan\nbounds 1.0 0.7  # size\n\ngrid 3 3\nwall 0.5 0 0.5 0.7 # divider\n",
        )
        .unwrap();
        assert_eq!(map.candidates().len(), 9);
        assert_eq!(map.walls().len(), 1);
    }

    #[test]
    fn single_wall_crossing_counts_once() {
        let map = vertical_wall_map();
        assert_eq!(
            map.obstruction_count(Point::new(0.25, 0.35), Point::new(0.75, 0.35)),
            1
        );
    }

    #[test]
    fn sight_line_away_from_wall_counts_zero() {
        let map = vertical_wall_map();
        assert_eq!(
            map.obstruction_count(Point::new(0.1, 0.1), Point::new(0.2, 0.2)),
            0
        );
    }

    #[test]
    fn two_walls_count_two() {
        let map = EnvironmentMap::new(
            1.0,
            0.7,
            vec![
                Segment::new(Point::new(0.4, 0.0), Point::new(0.4, 0.7)),
                Segment::new(Point::new(0.6, 0.0), Point::new(0.6, 0.7)),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(
            map.obstruction_count(Point::new(0.3, 0.35), Point::new(0.7, 0.35)),
            2
        );
    }

    #[test]
    fn wall_through_sight_endpoint_does_not_count() {
        let map = vertical_wall_map();
        // p sits exactly on the wall: beacon mounted on the wall.
        assert_eq!(
            map.obstruction_count(Point::new(0.5, 0.35), Point::new(0.75, 0.35)),
            0
        );
        assert_eq!(
            map.obstruction_count(Point::new(0.75, 0.35), Point::new(0.5, 0.35)),
            0
        );
    }

    #[test]
    fn wall_endpoint_touching_sight_interior_counts() {
        // T-junction: wall ends exactly on the sight line's interior.
        let map = EnvironmentMap::new(
            1.0,
            0.7,
            vec![Segment::new(Point::new(0.5, 0.35), Point::new(0.5, 0.7))],
            vec![],
        )
        .unwrap();
        assert_eq!(
            map.obstruction_count(Point::new(0.25, 0.35), Point::new(0.75, 0.35)),
            1
        );
    }

    #[test]
    fn collinear_overlap_counts_once() {
        let map = EnvironmentMap::new(
            1.0,
            0.7,
            vec![Segment::new(Point::new(0.3, 0.35), Point::new(0.6, 0.35))],
            vec![],
        )
        .unwrap();
        assert_eq!(
            map.obstruction_count(Point::new(0.1, 0.35), Point::new(0.9, 0.35)),
            1
        );
    }

    #[test]
    fn obstruction_count_is_symmetric_under_fuzz() {
        let map = EnvironmentMap::new(
            1.0,
            0.7,
            vec![
                Segment::new(Point::new(0.5, 0.0), Point::new(0.5, 0.28)),
                Segment::new(Point::new(0.5, 0.42), Point::new(0.5, 0.7)),
                Segment::new(Point::new(0.1, 0.2), Point::new(0.9, 0.6)),
            ],
            vec![],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = map.sample_locations(20_000, &mut rng);
        for pair in pts.chunks_exact(2) {
            assert_eq!(
                map.obstruction_count(pair[0], pair[1]),
                map.obstruction_count(pair[1], pair[0])
            );
        }
    }

    #[test]
    fn generated_grids_are_distinct_and_inside_for_all_small_dims() {
        for rows in 1..=64usize {
            for cols in 1..=64usize {
                let pts = grid_candidates(1.0, 0.7, rows, cols);
                assert_eq!(pts.len(), rows * cols);
                for p in &pts {
                    assert!(p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 0.7);
                }
                // Distinctness via exact bit keys.
                let mut keys: Vec<(u64, u64)> = pts
                    .iter()
                    .map(|p| (p.x.to_bits(), p.y.to_bits()))
                    .collect();
                keys.sort_unstable();
                keys.dedup();
                assert_eq!(keys.len(), rows * cols, "{rows}x{cols} grid has duplicates");
            }
        }
    }

    #[test]
    fn serialize_parse_round_trip_is_identity() {
        let map = EnvironmentMap::parse(
            "bounds 1.0 0.7\ngrid 7 9\nwall 0.5 0 0.5 0.28\nwall 0.1 0.2 0.9 0.6\n",
        )
        .unwrap();
        let again = EnvironmentMap::parse(&map.serialize()).unwrap();
        assert_eq!(map, again);

        let explicit = EnvironmentMap::parse(
            "bounds 1.0 0.7\ncandidate 0.125 0.33333333\ncandidate 0.9 0.1\nwall 0 0 1 0.7\n",
        )
        .unwrap();
        let again = EnvironmentMap::parse(&explicit.serialize()).unwrap();
        assert_eq!(explicit, again);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let map = vertical_wall_map();
        let a = map.sample_locations(3, &mut ChaCha8Rng::seed_from_u64(5));
        let b = map.sample_locations(3, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(map.sample_locations(0, &mut ChaCha8Rng::seed_from_u64(5)).is_empty());
    }

    #[test]
    fn sample_mean_approaches_rectangle_center() {
        let map = vertical_wall_map();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = map.sample_locations(10_000, &mut rng);
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
        assert!((mx - 0.5).abs() < 0.02, "mean x {mx}");
        assert!((my - 0.35).abs() < 0.02, "mean y {my}");
    }

    #[test]
    fn duplicate_candidates_are_rejected() {
        let err = EnvironmentMap::parse(
            "bounds 1 1\ncandidate 0.5 0.5\ncandidate 0.5 0.5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("coincide"), "{err}");
    }

    #[test]
    fn presets_build_valid_maps() {
        for p in presets::PRESETS {
            let map = p.build(10, 10).unwrap();
            assert_eq!(map.candidates().len(), 100);
            let text = map.serialize();
            assert_eq!(EnvironmentMap::parse(&text).unwrap(), map);
        }
        assert!(presets::find("open").unwrap().build(5, 5).unwrap().walls().is_empty());
        assert_eq!(presets::find("tworoom").unwrap().build(5, 5).unwrap().walls().len(), 2);
        assert!(presets::find("nope").is_none());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_random_grid_maps(
            rows in 1usize..20,
            cols in 1usize..20,
            w in 0.5f64..4.0,
            h in 0.5f64..4.0,
        ) {
            let map = EnvironmentMap::with_grid(w, h, vec![], rows, cols).unwrap();
            let again = EnvironmentMap::parse(&map.serialize()).unwrap();
            proptest::prop_assert_eq!(map, again);
        }
    }
}
