use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::UpLeft,
        Direction::UpRight,
        Direction::DownLeft,
        Direction::DownRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::UpLeft => "up_left",
            Direction::UpRight => "up_right",
            Direction::DownLeft => "down_left",
            Direction::DownRight => "down_right",
        }
    }

    /// Nearest of the eight directions for a screen-space vector (y grows down).
    pub fn from_vector(dx: f64, dy: f64) -> Option<Direction> {
        if dx == 0.0 && dy == 0.0 {
            return None;
        }
        let angle = (-dy).atan2(dx).to_degrees();
        let sector = (((angle + 360.0 + 22.5) % 360.0) / 45.0).floor() as usize;
        Some(
            [
                Direction::Right,
                Direction::UpRight,
                Direction::Up,
                Direction::UpLeft,
                Direction::Left,
                Direction::DownLeft,
                Direction::Down,
                Direction::DownRight,
            ][sector % 8],
        )
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .collect();
        let key = key.replace("upper", "up").replace("lower", "down");
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == key)
            .ok_or_else(|| format!("unknown direction `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Short,
    Medium,
    Long,
}

impl Distance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Distance::Short => "short",
            Distance::Medium => "medium",
            Distance::Long => "long",
        }
    }
}

impl FromStr for Distance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "short" => Ok(Distance::Short),
            "medium" => Ok(Distance::Medium),
            "long" => Ok(Distance::Long),
            _ => Err(format!("unknown distance `{s}`")),
        }
    }
}

/// One device action. Numbers refer to the most recent observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum ActionCommand {
    Tap {
        number: u32,
    },
    LongPress {
        number: u32,
    },
    Swipe {
        number: u32,
        direction: Direction,
        distance: Distance,
    },
    SwipeGrid {
        from: u32,
        to: u32,
    },
    Text {
        text: String,
    },
    Back,
    Finish,
}

impl ActionCommand {
    /// The observation number this command points at, if any.
    pub fn target_number(&self) -> Option<u32> {
        match self {
            ActionCommand::Tap { number }
            | ActionCommand::LongPress { number }
            | ActionCommand::Swipe { number, .. } => Some(*number),
            ActionCommand::SwipeGrid { from, .. } => Some(*from),
            _ => None,
        }
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionCommand::Tap { number } => write!(f, "tap({number})"),
            ActionCommand::LongPress { number } => write!(f, "long_press({number})"),
            ActionCommand::Swipe {
                number,
                direction,
                distance,
            } => write!(
                f,
                "swipe({number}, \"{}\", \"{}\")",
                direction.as_str(),
                distance.as_str()
            ),
            ActionCommand::SwipeGrid { from, to } => write!(f, "swipe_grid({from}, {to})"),
            ActionCommand::Text { text } => write!(
                f,
                "text({})",
                serde_json::to_string(text).unwrap_or_default()
            ),
            ActionCommand::Back => write!(f, "back()"),
            ActionCommand::Finish => write!(f, "finish()"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse action command `{input}`: {reason}")]
pub struct CommandParseError {
    pub input: String,
    pub reason: String,
}

fn call_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)^\s*([A-Za-z_]+)\s*\((.*)\)\s*$").expect("valid regex"))
}

impl FromStr for ActionCommand {
    type Err = CommandParseError;

    /// Parses `tap(3)`, `long_press(3)`, `swipe(3, "down", "medium")`,
    /// `swipe_grid(1, 7)`, `text("hello")`, `back()` or `finish()`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| CommandParseError {
            input: s.trim().to_string(),
            reason: reason.to_string(),
        };
        let caps = call_re()
            .captures(s)
            .ok_or_else(|| fail("expected name(args)"))?;
        let name = caps[1].to_lowercase();
        let raw_args = caps[2].trim();
        if name == "text" {
            let text = serde_json::from_str::<String>(raw_args)
                .or_else(|_| {
                    let t = raw_args.trim_matches('\'');
                    if raw_args.len() >= 2 && raw_args.starts_with('\'') && raw_args.ends_with('\'')
                    {
                        Ok(t.to_string())
                    } else {
                        Err(())
                    }
                })
                .map_err(|_| fail("text needs one quoted string"))?;
            return Ok(ActionCommand::Text { text });
        }
        let args: Vec<String> = if raw_args.is_empty() {
            Vec::new()
        } else {
            raw_args
                .split(',')
                .map(|a| a.trim().trim_matches(|c| c == '"' || c == '\'').to_string())
                .collect()
        };
        let num = |i: usize| -> Result<u32, CommandParseError> {
            args.get(i)
                .ok_or_else(|| fail("missing argument"))?
                .parse::<u32>()
                .map_err(|_| fail("expected an element number"))
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(fail(&format!(
                    "expected {n} argument(s), got {}",
                    args.len()
                )))
            }
        };
        match name.as_str() {
            "tap" => arity(1).and(Ok(ActionCommand::Tap { number: num(0)? })),
            "long_press" => arity(1).and(Ok(ActionCommand::LongPress { number: num(0)? })),
            "swipe" => {
                if args.len() != 2 && args.len() != 3 {
                    return Err(fail("swipe takes (number, direction[, distance])"));
                }
                let direction = args[1].parse().map_err(|e: String| fail(&e))?;
                let distance = match args.get(2) {
                    Some(d) => d.parse().map_err(|e: String| fail(&e))?,
                    None => Distance::Medium,
                };
                Ok(ActionCommand::Swipe {
                    number: num(0)?,
                    direction,
                    distance,
                })
            }
            "swipe_grid" => arity(2).and(Ok(ActionCommand::SwipeGrid {
                from: num(0)?,
                to: num(1)?,
            })),
            "back" => arity(0).and(Ok(ActionCommand::Back)),
            "finish" => arity(0).and(Ok(ActionCommand::Finish)),
            _ => Err(fail("unknown command")),
        }
    }
}
