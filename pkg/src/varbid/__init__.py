"""varbid: reactive power market simulation and batch Q-learning bidding.

A numpy library with five parts: a small neural-network engine (``nn``),
a prioritized replay buffer (``replay``), the hourly market environment
(``market``), an LSTM requirement forecaster (``forecast``), the fitted-Q
bidding agent (``agent``), and an experiment harness with a CLI
(``harness``, ``cli``).
"""

from .agent import (BiddingTask, EpisodeStats, N_ACTIONS, STATE_DIM, TrainConfig,
                    TrainResult, action_decode, compute_targets, encode_state,
                    greedy_episode, q_values, select_action, td_error, train,
                    train_market_agent, warmup)
from .forecast import (ForecastDataset, Forecaster, baseline_predict, holdout_mse,
                       load_forecaster, make_dataset, save_forecaster, train_forecaster,
                       train_lstm)
from .harness import (ConfigError, ExperimentConfig, build_config, emit_trace,
                      parse_config_file, run_experiment, run_matrix, sweep)
from .market import (Bid, DEFAULT_GENCOS, DemandConfig, DemandSeries, GencoParams,
                     InfeasibleDemand, MarketOutcome, ReactiveMarketEnv, clear_market,
                     clear_market_batch, demand_profile, load_gencos, profit,
                     rival_bids, simulate_total_quantity)
from .nn import (Adam, Lstm, Mlp, NumericError, Rprop, ShapeError, grad_check,
                 load_network, save_network, soft_update)
from .replay import Experience, ReplayBuffer, SumTree

__version__ = "0.1.0"
