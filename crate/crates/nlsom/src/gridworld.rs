//! Self-contained grid world for embodied exploration.
//!
//! A desk-scale stand-in for a full 3D simulator that preserves the action
//! space exactly: move forward a fixed step, turn left/right by 45°, stop.
//! One forward step is one cell; eight compass headings. The exploration
//! protocol wires three agents over it — an Observer describing the local
//! view, a First Mate running rounds of Q&A and summarizing, and a Captain
//! choosing the next action.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendRegistry, Conversation};
use crate::logfmt;
use crate::message::{message, AgentId, Stage, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    /// Lenient text form as a captain would phrase it.
    pub fn parse(text: &str) -> Option<Action> {
        let lower = text.to_lowercase();
        if lower.contains("turn left") {
            Some(Action::TurnLeft)
        } else if lower.contains("turn right") {
            Some(Action::TurnRight)
        } else if lower.contains("forward") {
            Some(Action::Forward)
        } else if lower.contains("stop") {
            Some(Action::Stop)
        } else {
            None
        }
    }

    pub fn phrase(&self) -> &'static str {
        match self {
            Action::Forward => "move forward",
            Action::TurnLeft => "turn left",
            Action::TurnRight => "turn right",
            Action::Stop => "stop",
        }
    }
}

/// Eight compass headings at 45° increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Heading {
    pub const ALL: [Heading; 8] = [
        Heading::N,
        Heading::NE,
        Heading::E,
        Heading::SE,
        Heading::S,
        Heading::SW,
        Heading::W,
        Heading::NW,
    ];

    /// Unit step in (x, y); y grows downward (map rows).
    pub fn delta(&self) -> (i64, i64) {
        match self {
            Heading::N => (0, -1),
            Heading::NE => (1, -1),
            Heading::E => (1, 0),
            Heading::SE => (1, 1),
            Heading::S => (0, 1),
            Heading::SW => (-1, 1),
            Heading::W => (-1, 0),
            Heading::NW => (-1, -1),
        }
    }

    /// 45° counterclockwise.
    pub fn left(&self) -> Heading {
        let i = Self::ALL.iter().position(|h| h == self).expect("member");
        Self::ALL[(i + 7) % 8]
    }

    /// 45° clockwise.
    pub fn right(&self) -> Heading {
        let i = Self::ALL.iter().position(|h| h == self).expect("member");
        Self::ALL[(i + 1) % 8]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Heading::N => "north",
            Heading::NE => "northeast",
            Heading::E => "east",
            Heading::SE => "southeast",
            Heading::S => "south",
            Heading::SW => "southwest",
            Heading::W => "west",
            Heading::NW => "northwest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pose {
    pub x: i64,
    pub y: i64,
    pub heading: Heading,
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map parse error: {0}")]
    Parse(String),
}

/// Occupancy grid plus robot state. The pose is always on a free cell and
/// that cell is always visited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    width: usize,
    height: usize,
    /// Row-major; true = free.
    occupancy: Vec<bool>,
    pub pose: Pose,
    visited: BTreeSet<(i64, i64)>,
    pub step_length: usize,
    landmarks: BTreeMap<(i64, i64), char>,
}

impl GridWorld {
    /// Parses a text map: `#` wall, `.` free, `S` start, letters landmarks.
    pub fn from_map(map: &str) -> Result<Self, MapError> {
        let rows: Vec<&str> = map.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(MapError::Parse("empty map".to_string()));
        }
        let width = rows[0].chars().count();
        if rows.iter().any(|r| r.chars().count() != width) {
            return Err(MapError::Parse("ragged rows".to_string()));
        }
        let height = rows.len();
        let mut occupancy = vec![false; width * height];
        let mut start = None;
        let mut landmarks = BTreeMap::new();
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                let idx = y * width + x;
                match c {
                    '#' => {}
                    '.' => occupancy[idx] = true,
                    'S' => {
                        occupancy[idx] = true;
                        if start.replace((x as i64, y as i64)).is_some() {
                            return Err(MapError::Parse("multiple start cells".to_string()));
                        }
                    }
                    c if c.is_ascii_alphabetic() => {
                        occupancy[idx] = true;
                        landmarks.insert((x as i64, y as i64), c);
                    }
                    other => {
                        return Err(MapError::Parse(format!("unknown cell character {other:?}")))
                    }
                }
            }
        }
        let (x, y) = start.ok_or_else(|| MapError::Parse("missing start cell S".to_string()))?;
        let mut visited = BTreeSet::new();
        visited.insert((x, y));
        Ok(Self {
            width,
            height,
            occupancy,
            pose: Pose {
                x,
                y,
                heading: Heading::E,
            },
            visited,
            step_length: 1,
            landmarks,
        })
    }

    pub fn is_free(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return false;
        }
        self.occupancy[y as usize * self.width + x as usize]
    }

    pub fn free_cell_count(&self) -> usize {
        self.occupancy.iter().filter(|c| **c).count()
    }

    pub fn visited_count(&self) -> usize {
        self.visited.len()
    }

    pub fn visited(&self) -> &BTreeSet<(i64, i64)> {
        &self.visited
    }

    pub fn landmark_at(&self, x: i64, y: i64) -> Option<char> {
        self.landmarks.get(&(x, y)).copied()
    }

    /// Free cells along the current heading up to the first wall.
    pub fn ray_ahead(&self) -> Vec<(i64, i64)> {
        let (dx, dy) = self.pose.heading.delta();
        let mut cells = Vec::new();
        let (mut x, mut y) = (self.pose.x + dx, self.pose.y + dy);
        while self.is_free(x, y) {
            cells.push((x, y));
            x += dx;
            y += dy;
        }
        cells
    }

    /// Deterministic textual raster of the local view: the cells visible
    /// along the heading with visited/unvisited and landmark tags.
    pub fn render_local_view(&self) -> String {
        let ray = self.ray_ahead();
        let mut out = format!(
            "at ({}, {}) facing {}; {} free cell(s) ahead",
            self.pose.x,
            self.pose.y,
            self.pose.heading.label(),
            ray.len()
        );
        if ray.is_empty() {
            out.push_str("; wall directly ahead");
        }
        for (i, (x, y)) in ray.iter().enumerate() {
            let status = if self.visited.contains(&(*x, *y)) {
                "visited"
            } else {
                "unvisited"
            };
            out.push_str(&format!("; ahead+{}: free {status}", i + 1));
            if let Some(tag) = self.landmark_at(*x, *y) {
                out.push_str(&format!(" landmark {tag}"));
            }
        }
        out
    }
}

/// Applies one action. Forward advances `step_length` cells along the
/// heading only if every traversed cell is free (blocked moves are no-ops);
/// traversed cells join the visited set. Turns rotate 45°.
pub fn step_gridworld(world: &GridWorld, action: Action) -> GridWorld {
    let mut next = world.clone();
    match action {
        Action::Stop => {}
        Action::TurnLeft => next.pose.heading = world.pose.heading.left(),
        Action::TurnRight => next.pose.heading = world.pose.heading.right(),
        Action::Forward => {
            let (dx, dy) = world.pose.heading.delta();
            let path: Vec<(i64, i64)> = (1..=world.step_length as i64)
                .map(|i| (world.pose.x + dx * i, world.pose.y + dy * i))
                .collect();
            if path.iter().all(|(x, y)| world.is_free(*x, *y)) {
                for (x, y) in &path {
                    next.visited.insert((*x, *y));
                }
                let (x, y) = *path.last().expect("step_length >= 1");
                next.pose.x = x;
                next.pose.y = y;
            }
        }
    }
    next
}

#[derive(Debug, Error)]
pub enum ExplorationError {
    #[error("backend {0} missing from registry")]
    MissingBackend(String),
    #[error("{role} backend failed: {source}")]
    Backend {
        role: &'static str,
        source: BackendError,
    },
    #[error("transcript error: {0}")]
    Transcript(String),
}

/// Agent wiring for the exploration loop.
#[derive(Debug, Clone)]
pub struct ExplorationSociety {
    pub observer_backend: String,
    pub first_mate_backend: String,
    pub captain_backend: String,
    /// Observer/First-Mate Q&A rounds per step.
    pub qa_rounds: u32,
}

impl Default for ExplorationSociety {
    fn default() -> Self {
        Self {
            observer_backend: "observer".to_string(),
            first_mate_backend: "first-mate".to_string(),
            captain_backend: "captain".to_string(),
            qa_rounds: 10,
        }
    }
}

pub const CAPTAIN_MISSION_PROMPT: &str = "Please control the robot to fully explore this house. At each step, your first mate will update you with the new observations caused by the most recent action. Please tell the robot the next action based on previous actions and observations.";

#[derive(Debug, Clone)]
pub struct ExplorationOutcome {
    pub world: GridWorld,
    pub trajectory: Vec<(Action, Pose)>,
    pub coverage: f64,
    pub transcript: Transcript,
    /// One observation summary per step, for downstream question answering.
    pub summaries: Vec<String>,
}

/// Drives the Observer / First Mate / Captain loop until the captain stops
/// or `max_steps` elapse. An unparseable captain order is treated as stop
/// with a warning recorded.
pub fn run_exploration(
    society: &ExplorationSociety,
    world: &GridWorld,
    max_steps: usize,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<ExplorationOutcome, ExplorationError> {
    assert!(max_steps >= 1);
    let get = |name: &str| {
        registry
            .get(name)
            .ok_or_else(|| ExplorationError::MissingBackend(name.to_string()))
    };
    let observer_backend = get(&society.observer_backend)?;
    let first_mate_backend = get(&society.first_mate_backend)?;
    let captain_backend = get(&society.captain_backend)?;

    let observer = AgentId::new("observer", "Observer");
    let first_mate = AgentId::new("first-mate", "First Mate");
    let captain = AgentId::new("captain", "Captain");

    let digest = logfmt::digest_of(&(
        &society.observer_backend,
        &society.first_mate_backend,
        &society.captain_backend,
        society.qa_rounds,
        max_steps,
    ));
    let mut transcript = Transcript::new(run_id, digest);
    let commit = |t: &mut Transcript, m| {
        t.append(m)
            .map_err(|e: crate::message::TranscriptError| {
                ExplorationError::Transcript(e.to_string())
            })
    };

    let mut current = world.clone();
    let mut trajectory = Vec::new();
    let mut summaries: Vec<String> = Vec::new();
    let mut captain_conversation = Conversation::new(
        "You are the Captain. You command a robot exploring an indoor scene.",
    )
    .with_user(CAPTAIN_MISSION_PROMPT);
    let msg = message(
        transcript.next_seq(),
        &first_mate,
        [captain.clone()],
        Stage::Init,
        0,
        CAPTAIN_MISSION_PROMPT,
    );
    commit(&mut transcript, msg)?;

    let mut last_action: Option<Action> = None;
    for _step in 0..max_steps {
        // Observer sees the deterministic local raster.
        let view = current.render_local_view();

        // First Mate interviews the Observer about the view.
        let mut observer_conversation = Conversation::new(
            "Please respond to the provided questions truthfully. If you are unsure of an answer, simply state that you do not know.",
        );
        observer_conversation.push(
            crate::backend::Speaker::User,
            format!("I've snapped a photo of a room in the house. The view: {view}"),
        );
        let mut qa_digest = String::new();
        for round in 1..=society.qa_rounds {
            let question = first_mate_backend
                .respond(
                    &Conversation::new("You interview the observer about the scene.").with_user(
                        format!("Ask one question about the view (round {round}): {view}"),
                    ),
                )
                .map_err(|source| ExplorationError::Backend {
                    role: "first mate",
                    source,
                })?;
            let msg = message(
                transcript.next_seq(),
                &first_mate,
                [observer.clone()],
                Stage::Mindstorm,
                round,
                &question,
            );
            commit(&mut transcript, msg)?;
            observer_conversation.push(crate::backend::Speaker::User, question.clone());
            let answer = observer_backend
                .respond(&observer_conversation)
                .map_err(|source| ExplorationError::Backend {
                    role: "observer",
                    source,
                })?;
            let msg = message(
                transcript.next_seq(),
                &observer,
                [first_mate.clone()],
                Stage::Mindstorm,
                round,
                &answer,
            );
            commit(&mut transcript, msg)?;
            observer_conversation.push(crate::backend::Speaker::Assistant, answer.clone());
            qa_digest.push_str(&format!(" Q: {question} A: {answer}"));
        }

        // First Mate summarizes for the Captain.
        let summary = first_mate_backend
            .respond(
                &Conversation::new("You summarize scene information for the Captain.").with_user(
                    format!(
                        "Use several sentences to summarize the information you get about this indoor scene.{qa_digest}"
                    ),
                ),
            )
            .map_err(|source| ExplorationError::Backend {
                role: "first mate",
                source,
            })?;
        let update = format!(
            "You {}, in this place, you have seen {}.",
            last_action.map(|a| a.phrase()).unwrap_or("started"),
            summary
        );
        let msg = message(
            transcript.next_seq(),
            &first_mate,
            [captain.clone()],
            Stage::Gathering,
            0,
            &update,
        );
        commit(&mut transcript, msg)?;
        summaries.push(summary);

        // Captain orders the next action.
        captain_conversation.push(crate::backend::Speaker::User, update);
        let order = captain_backend
            .respond(&captain_conversation)
            .map_err(|source| ExplorationError::Backend {
                role: "captain",
                source,
            })?;
        captain_conversation.push(crate::backend::Speaker::Assistant, order.clone());
        let parsed = Action::parse(&order);
        let mut msg = message(
            transcript.next_seq(),
            &captain,
            [first_mate.clone()],
            Stage::Execution,
            0,
            &order,
        );
        if parsed.is_none() {
            msg.meta
                .insert("warning".to_string(), "unparseable-action".to_string());
        }
        let action = parsed.unwrap_or(Action::Stop);
        msg.meta
            .insert("action".to_string(), format!("{action:?}"));
        let blocked = action == Action::Forward && current.ray_ahead().is_empty();
        if blocked {
            msg.meta.insert("blocked".to_string(), "true".to_string());
        }
        commit(&mut transcript, msg)?;

        current = step_gridworld(&current, action);
        trajectory.push((action, current.pose));
        last_action = Some(action);
        if action == Action::Stop {
            break;
        }
    }

    let coverage = crate::metrics::coverage_report(&current);
    Ok(ExplorationOutcome {
        world: current,
        trajectory,
        coverage,
        transcript,
        summaries,
    })
}

/// Embodied question answering over the exploration record: the captain
/// receives the accumulated observation summaries plus the question and
/// answers verbatim.
pub fn answer_environment_question(
    summaries: &[String],
    question: &str,
    captain_backend: &dyn Backend,
) -> Result<String, BackendError> {
    let mut prompt = String::from("Here is what has been observed during exploration:");
    if summaries.is_empty() {
        prompt.push_str(" (nothing explored yet)");
    }
    for (i, s) in summaries.iter().enumerate() {
        prompt.push_str(&format!(" [step {}] {}", i + 1, s));
    }
    prompt.push_str(&format!(" Question: {question}"));
    let conversation = Conversation::new(
        "You are the Captain. Answer questions about the explored environment.",
    )
    .with_user(prompt);
    captain_backend.respond(&conversation)
}

/// Scripted frontier-seeking captain: move forward when unexplored free
/// space lies ahead, otherwise turn right. Pure function of the relayed
/// observation text.
pub struct FrontierCaptain;

impl Backend for FrontierCaptain {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        let incoming = conversation.last_incoming().unwrap_or("");
        if incoming.contains("free unvisited") {
            Ok("move forward".to_string())
        } else {
            Ok("turn right".to_string())
        }
    }

    fn deterministic(&self) -> bool {
        true
    }
}

/// Seeded uniformly-random captain over forward/left/right.
pub struct RandomCaptain {
    rng: Mutex<ChaCha8Rng>,
}

impl RandomCaptain {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

impl Backend for RandomCaptain {
    fn respond(&self, _conversation: &Conversation) -> Result<String, BackendError> {
        let mut rng = self.rng.lock().expect("rng lock");
        let action = match rng.gen_range(0..3) {
            0 => "move forward",
            1 => "turn left",
            _ => "turn right",
        };
        Ok(action.to_string())
    }

    fn serial(&self) -> bool {
        true
    }
}

/// Observer that repeats the deterministic raster verbatim.
pub struct EchoObserver;

impl Backend for EchoObserver {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        Ok(conversation
            .turns
            .first()
            .map(|(_, t)| t.clone())
            .unwrap_or_default())
    }

    fn deterministic(&self) -> bool {
        true
    }
}

/// First mate that relays the latest question or summary content verbatim.
pub struct RelayFirstMate;

impl Backend for RelayFirstMate {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        Ok(conversation.last_incoming().unwrap_or("").to_string())
    }

    fn deterministic(&self) -> bool {
        true
    }
}

/// 10×10 two-room map: two open rooms joined by a single doorway.
pub const TWO_ROOM_MAP: &str = "\
##########
#S...#...#
#....#...#
#......#.#
#....#...#
#....#...#
#....#...#
#....#...#
#....#...#
##########";

/// Registers the scripted exploration pipeline under conventional names.
pub fn scripted_exploration_registry(captain: std::sync::Arc<dyn Backend>) -> BackendRegistry {
    let mut registry = BackendRegistry::new();
    registry.insert("observer", std::sync::Arc::new(EchoObserver));
    registry.insert("first-mate", std::sync::Arc::new(RelayFirstMate));
    registry.insert("captain", captain);
    registry
}
