//! Prompt pools: curated edge cases (P1), a bulk sample (P2), and the
//! reinforcement-learned selection (P3).

mod curate;
mod prompts;
mod rl;

pub use curate::{curate_p1, sample_p2, snippet, Curated};
pub use prompts::{Prompt, PromptSet, SourceTag};
pub use rl::{
    head_accuracy, rl_select, rl_train, BanditEnv, Observation, SelectionEnv, SelectorConfig, SelectorPolicy, TableEnv,
    EPISODE_LEN, REWARD_CORRECT, REWARD_INCORRECT, SELECTOR_FORMAT_VERSION,
};
