//! Scripted opponents, hold-out evaluation, round-robin tournaments, the
//! meta-game Nash equilibrium, effective diversity and option probes.

mod bot;
mod holdout;
mod nash;
mod play;
mod probe;
mod tournament;

pub use bot::{BotConfig, BotPhase, ScriptedBot};
pub use holdout::{evaluate_vs_holdout, HoldoutReport, OpponentBreakdown};
pub use nash::{effective_diversity, exploitability, solve_nash, NashReport, NashSolution, NASH_MAX_ITERS};
pub use play::{play_episodes, Contestant, EvalSettings, PlayedEpisode};
pub use probe::{option_probe, OptionProbeReport, PickupTest, ProbeCell, PROBE_STATISTICS};
pub use tournament::{round_robin, MetaGame};

#[cfg(test)]
mod tests;
