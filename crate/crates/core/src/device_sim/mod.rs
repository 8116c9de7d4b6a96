//! Deterministic phone simulator driven by declarative JSON app definitions.
//!
//! Apps are screens of marked elements plus transition rules. The agent sees
//! an [`Observation`]: numbered elements (or a numbered grid) with their text,
//! never screen ids or variable names. Variables are qualified `app.var`, so a
//! condition in one app may depend on another app's state.

mod app;
mod command;
mod sim;
mod task;

pub use app::{
    app_key, AppDefinition, Condition, ElementKind, LoadError, NavOp, Rect, ScheduledChange,
    ScreenDef, TransitionRule, Trigger, UiElement, MAX_ELEMENT_AREA, SPACING_THRESHOLD,
};
pub use command::{ActionCommand, CommandParseError, Direction, Distance};
pub use sim::{
    grid_cells, DeviceState, EffectFlag, ElementDetail, ExecOutcome, ObsEntry, ObsMode,
    Observation, PendingChange, SimError, Simulator, VisibleElement, DEFAULT_GRID, SCREEN_DIMS,
};
pub use task::TaskSpec;
