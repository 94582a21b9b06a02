//! Mobile-robot navigation on a grid: locations times four orientations,
//! five orientation-dependent actions, absorbing sinks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, AutomatonBuilder, RewardSpec, StateId, StochasticAutomaton};

pub const STAY: ActionId = 0;
pub const FORWARD: ActionId = 1;
pub const TURN_RIGHT: ActionId = 2;
pub const TURN_LEFT: ActionId = 3;
pub const TURN_ABOUT: ActionId = 4;
pub const NUM_ACTIONS: usize = 5;

pub const ACTION_NAMES: [&str; NUM_ACTIONS] = ["STAY", "FORWARD", "TURN_RIGHT", "TURN_LEFT", "TURN_ABOUT"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Wall,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    N = 0,
    E = 1,
    S = 2,
    W = 3,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::N, Orientation::E, Orientation::S, Orientation::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    pub fn right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn left(self) -> Self {
        Self::from_index(self.index() + 3)
    }

    pub fn about(self) -> Self {
        Self::from_index(self.index() + 2)
    }

    /// Row and column step when moving forward.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Orientation::N => (-1, 0),
            Orientation::E => (0, 1),
            Orientation::S => (1, 0),
            Orientation::W => (0, -1),
        }
    }

    pub fn letter(self) -> char {
        ['N', 'E', 'S', 'W'][self.index()]
    }
}

/// Cell coordinates `(row, col)`.
pub type Location = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    /// Location index of each cell, `None` for walls.
    loc_of_cell: Vec<Option<usize>>,
    locations: Vec<Location>,
}

impl GridMap {
    pub fn from_cells(width: usize, height: usize, cells: Vec<Cell>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Map("width and height must be positive".into()));
        }
        if cells.len() != width * height {
            return Err(Error::Map(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if !cells.contains(&Cell::Free) {
            return Err(Error::Map("map has no free cell".into()));
        }
        let mut loc_of_cell = vec![None; cells.len()];
        let mut locations = Vec::new();
        for (i, c) in cells.iter().enumerate() {
            if *c != Cell::Wall {
                loc_of_cell[i] = Some(locations.len());
                locations.push((i / width, i % width));
            }
        }
        Ok(Self {
            width,
            height,
            cells,
            loc_of_cell,
            locations,
        })
    }

    /// Parse the text map format: a `"<width> <height>"` header, then one
    /// line per row over `.` (free), `#` (wall) and `O` (sink).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let dims: Vec<&str> = header.split(' ').collect();
        if dims.len() != 2 {
            return Err(Error::parse(1, "header must be \"<width> <height>\""));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse(1, format!("bad dimension {s:?}: {e}")))
        };
        let (width, height) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
        if width == 0 || height == 0 {
            return Err(Error::parse(1, "width and height must be positive"));
        }
        let mut cells = Vec::with_capacity(width * height);
        for r in 0..height {
            let line_no = r + 2;
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(line_no, format!("expected {height} rows, found {r}")))?;
            if line.chars().count() != width {
                return Err(Error::parse(
                    line_no,
                    format!("row has {} characters, expected {width}", line.chars().count()),
                ));
            }
            for ch in line.chars() {
                cells.push(match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Wall,
                    'O' => Cell::Sink,
                    other => return Err(Error::parse(line_no, format!("unknown cell character {other:?}"))),
                });
            }
        }
        if let Some((i, extra)) = lines.enumerate().find(|(_, l)| !l.is_empty()) {
            return Err(Error::parse(height + 2 + i, format!("unexpected trailing row {extra:?}")));
        }
        Self::from_cells(width, height, cells)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.width, self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                s.push(match self.cell((r, c)) {
                    Cell::Free => '.',
                    Cell::Wall => '#',
                    Cell::Sink => 'O',
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, (r, c): Location) -> Cell {
        self.cells[r * self.width + c]
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn num_states(&self) -> usize {
        self.locations.len() * 4
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location_index(&self, (r, c): Location) -> Option<usize> {
        if r >= self.height || c >= self.width {
            return None;
        }
        self.loc_of_cell[r * self.width + c]
    }

    pub fn location(&self, index: usize) -> Location {
        self.locations[index]
    }

    pub fn free_locations(&self) -> impl Iterator<Item = Location> + '_ {
        self.locations.iter().copied().filter(|&l| self.cell(l) == Cell::Free)
    }

    pub fn encode(&self, state: RobotState) -> Result<StateId> {
        let loc = self
            .location_index(state.location)
            .ok_or_else(|| Error::Map(format!("{state} is not on a non-wall cell")))?;
        Ok(loc * 4 + state.orientation.index())
    }

    pub fn decode(&self, state: StateId) -> Result<RobotState> {
        if state >= self.num_states() {
            return Err(Error::StateOutOfRange {
                state,
                len: self.num_states(),
            });
        }
        Ok(RobotState {
            location: self.locations[state / 4],
            orientation: Orientation::from_index(state % 4),
        })
    }

    /// The cell ahead of `loc`, if it is on the map and not a wall.
    fn ahead(&self, (r, c): Location, o: Orientation) -> Option<Location> {
        let (dr, dc) = o.delta();
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        self.location_index((nr, nc)).map(|_| (nr, nc))
    }
}

impl FromStr for GridMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RobotState {
    pub location: Location,
    pub orientation: Orientation,
}

impl fmt::Display for RobotState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.location.0, self.location.1, self.orientation.letter())
    }
}

impl FromStr for RobotState {
    type Err = Error;

    /// `"<row>,<col>,<N|E|S|W>"`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        let bad = || Error::InvalidArgument(format!("bad robot state {s:?}; expected <row>,<col>,<N|E|S|W>"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let row = parts[0].parse().map_err(|_| bad())?;
        let col = parts[1].parse().map_err(|_| bad())?;
        let orientation = match parts[2] {
            "N" => Orientation::N,
            "E" => Orientation::E,
            "S" => Orientation::S,
            "W" => Orientation::W,
            _ => return Err(bad()),
        };
        Ok(RobotState {
            location: (row, col),
            orientation,
        })
    }
}

/// Where the probability mass of a failed action goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailureModel {
    /// The state is unchanged.
    #[default]
    Stay,
    /// Spread evenly over the outcomes of the four other actions.
    Scatter,
}

impl FromStr for FailureModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stay" => Ok(FailureModel::Stay),
            "scatter" => Ok(FailureModel::Scatter),
            _ => Err(Error::InvalidArgument(format!("unknown failure model {s:?}"))),
        }
    }
}

impl fmt::Display for FailureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureModel::Stay => "stay",
            FailureModel::Scatter => "scatter",
        })
    }
}

/// Deterministic outcome of `action` from `state` when it succeeds.
fn outcome(map: &GridMap, state: RobotState, action: ActionId) -> RobotState {
    let RobotState { location, orientation } = state;
    match action {
        FORWARD => match map.ahead(location, orientation) {
            Some(next) => RobotState {
                location: next,
                orientation,
            },
            None => state,
        },
        TURN_RIGHT => RobotState {
            location,
            orientation: orientation.right(),
        },
        TURN_LEFT => RobotState {
            location,
            orientation: orientation.left(),
        },
        TURN_ABOUT => RobotState {
            location,
            orientation: orientation.about(),
        },
        _ => state,
    }
}

/// Navigation automaton with failed actions leaving the state unchanged.
pub fn build_automaton(map: &GridMap, p_success: f64) -> Result<StochasticAutomaton> {
    build_automaton_with(map, p_success, FailureModel::Stay)
}

/// Navigation automaton under an explicit failure model. `STAY` always
/// succeeds, blocked `FORWARD` is a certain no-op, and sink locations
/// absorb under every action.
pub fn build_automaton_with(map: &GridMap, p_success: f64, failure: FailureModel) -> Result<StochasticAutomaton> {
    if !(p_success > 0.0 && p_success <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_success must lie in (0, 1], got {p_success}"
        )));
    }
    let n = map.num_states();
    let mut b = AutomatonBuilder::new(n, NUM_ACTIONS);
    for s in 0..n {
        let st = map.decode(s)?;
        let sink = map.cell(st.location) == Cell::Sink;
        for a in 0..NUM_ACTIONS {
            if sink || a == STAY {
                b.set_row(s, a, vec![(s, 1.0)]);
                continue;
            }
            let target = map.encode(outcome(map, st, a))?;
            if target == s {
                b.set_row(s, a, vec![(s, 1.0)]);
                continue;
            }
            let mut row: Vec<(StateId, f64)> = vec![(target, p_success)];
            let fail = 1.0 - p_success;
            if fail > 0.0 {
                match failure {
                    FailureModel::Stay => row.push((s, fail)),
                    FailureModel::Scatter => {
                        for other in (0..NUM_ACTIONS).filter(|&o| o != a) {
                            let to = map.encode(outcome(map, st, other))?;
                            match row.iter_mut().find(|(t, _)| *t == to) {
                                Some(e) => e.1 += fail / 4.0,
                                None => row.push((to, fail / 4.0)),
                            }
                        }
                    }
                }
            }
            row.sort_by_key(|&(t, _)| t);
            b.set_row(s, a, row);
        }
    }
    b.build_checked()
}

/// The four orientation states at `goal`.
pub fn goal_states(map: &GridMap, goal: Location) -> Result<BTreeSet<StateId>> {
    match map.location_index(goal).map(|_| map.cell(goal)) {
        Some(Cell::Free) => {}
        Some(Cell::Sink) => return Err(Error::Map(format!("goal {goal:?} is a sink"))),
        _ => return Err(Error::Map(format!("goal {goal:?} is a wall or off the map"))),
    }
    let base = map.location_index(goal).expect("checked") * 4;
    Ok((base..base + 4).collect())
}

/// Goal states at `goal` (reward 0) and reward −1 elsewhere.
pub fn goal_reward(map: &GridMap, goal: Location) -> Result<(BTreeSet<StateId>, RewardSpec)> {
    let goals = goal_states(map, goal)?;
    let reward = RewardSpec::from_goals(map.num_states(), goals.iter().copied());
    Ok((goals, reward))
}

/// A navigation task: the automaton with absorbing goal states, the reward
/// and the start state.
#[derive(Debug, Clone)]
pub struct Task {
    pub automaton: StochasticAutomaton,
    pub reward: RewardSpec,
    pub goals: BTreeSet<StateId>,
    pub start: StateId,
    pub goal_location: Location,
}

impl Task {
    pub fn new(base: &StochasticAutomaton, map: &GridMap, start: RobotState, goal: Location) -> Result<Self> {
        let (goals, reward) = goal_reward(map, goal)?;
        let automaton = base.with_goals(goals.iter().copied()).with_absorbing_goals();
        Ok(Self {
            automaton,
            reward,
            goals,
            start: map.encode(start)?,
            goal_location: goal,
        })
    }
}

pub fn manhattan_distance(a: Location, b: Location) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Ordered pairs of distinct free locations with Manhattan distance below
/// `max_distance_fraction * (width + height)`, in row-major order.
pub fn admissible_pairs(map: &GridMap, max_distance_fraction: f64) -> Vec<(Location, Location)> {
    let bound = max_distance_fraction * (map.width() + map.height()) as f64;
    let free: Vec<Location> = map.free_locations().collect();
    let mut pairs = Vec::new();
    for &a in &free {
        for &b in &free {
            if a != b && (manhattan_distance(a, b) as f64) < bound {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Draws start/goal pairs uniformly from the admissible pairs; the start
/// orientation is uniform.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    pairs: Vec<(Location, Location)>,
}

impl TaskSampler {
    pub fn new(map: &GridMap, max_distance_fraction: f64) -> Result<Self> {
        if map.free_locations().nth(1).is_none() {
            return Err(Error::Map("need at least two free cells".into()));
        }
        let pairs = admissible_pairs(map, max_distance_fraction);
        if pairs.is_empty() {
            return Err(Error::Map(format!(
                "no start/goal pair within distance fraction {max_distance_fraction}"
            )));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Location, Location)] {
        &self.pairs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (RobotState, Location) {
        let (start, goal) = self.pairs[rng.gen_range(0..self.pairs.len())];
        let orientation = Orientation::from_index(rng.gen_range(0..4));
        (
            RobotState {
                location: start,
                orientation,
            },
            goal,
        )
    }
}

/// One task drawn with a fresh generator seeded by `seed`.
pub fn random_task(map: &GridMap, seed: u64, max_distance_fraction: f64) -> Result<(RobotState, Location)> {
    use rand::SeedableRng;
    let sampler = TaskSampler::new(map, max_distance_fraction)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(&mut rng))
}
