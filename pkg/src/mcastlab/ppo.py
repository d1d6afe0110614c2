"""Clipped-surrogate policy optimization over shared-parameter rollouts.

Every agent in every environment instance runs the same parameter vector;
experience is grouped into per-agent episode trajectories, advantages come
from generalized advantage estimation within episode boundaries, and the
update maximizes the clipped probability-ratio surrogate with a value loss
and an entropy bonus. All arithmetic is float64 numpy with gradients from
the analytic backward pass in `nn`.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .config import ScenarioConfig
from .engine import Simulator
from .rlenv import ObservationSpec


class OpenEpisode(ValueError):
    """A trajectory in the rollout buffer lacks its terminal flag."""


class NonFiniteGradient(FloatingPointError):
    """Update aborted: a gradient or loss went non-finite; old params kept."""


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    learning_rate: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma and lam must be in [0, 1]")
        if self.learning_rate <= 0 or self.epochs < 1 or self.minibatch_size < 1:
            raise ValueError("bad optimizer settings")


class RolloutBuffer:
    """Per agent-step records, grouped by (agent, episode) trajectory."""

    def __init__(self):
        self.observations: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.masks: list[np.ndarray] = []
        self.log_probs: list[float] = []
        self.rewards: list[float] = []
        self.values: list[float] = []
        self.dones: list[bool] = []
        self._arrays = None

    def __len__(self) -> int:
        return len(self.observations)

    def add_step(self, obs, action, mask, log_prob, reward, value, done) -> None:
        self.observations.append(obs)
        self.actions.append(action)
        self.masks.append(mask)
        self.log_probs.append(log_prob)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(done)
        self._arrays = None

    def add_trajectory(self, traj) -> None:
        """Append one agent's complete episode; the last step is terminal."""
        n = len(traj)
        for t in range(n):
            self.add_step(
                traj.observations[t],
                traj.actions[t],
                traj.masks[t],
                traj.log_probs[t],
                traj.rewards[t],
                traj.values[t],
                t == n - 1,
            )

    def arrays(self) -> dict[str, np.ndarray]:
        if self._arrays is None:
            self._arrays = {
                "obs": np.asarray(self.observations, dtype=np.float64),
                "actions": np.asarray(self.actions, dtype=np.float64),
                "masks": np.asarray(self.masks, dtype=np.float64),
                "log_probs": np.asarray(self.log_probs, dtype=np.float64),
                "rewards": np.asarray(self.rewards, dtype=np.float64),
                "values": np.asarray(self.values, dtype=np.float64),
                "dones": np.asarray(self.dones, dtype=np.float64),
            }
        return self._arrays


def gae_advantages(buffer: RolloutBuffer, gamma: float, lam: float, normalize: bool = True):
    """Generalized advantage estimates and returns, episode-bounded.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t, accumulated with
    decay gamma*lam inside each trajectory. Returns are advantages + values.
    With normalize=True the advantages are shifted/scaled to zero mean and
    unit variance over the whole batch.
    """
    data = buffer.arrays()
    rewards = data["rewards"]
    values = data["values"]
    dones = data["dones"]
    n = rewards.shape[0]
    if n == 0:
        empty = np.zeros(0)
        return empty, empty
    if dones[-1] != 1.0:
        raise OpenEpisode("rollout ends mid-episode (missing terminal flag)")
    advantages = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        advantages[t] = running
    returns = advantages + values
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages, returns


def clipped_surrogate(eta: np.ndarray, advantages: np.ndarray, clip_eps: float) -> np.ndarray:
    """Per-sample min(eta*A, clip(eta, 1-eps, 1+eps)*A)."""
    return np.minimum(eta * advantages, np.clip(eta, 1.0 - clip_eps, 1.0 + clip_eps) * advantages)


def ppo_loss_and_grad(params: nn.PolicyParams, batch: dict, cfg: PpoConfig):
    """Total loss, its exact flat gradient, and per-minibatch statistics."""
    obs = batch["obs"]
    actions = batch["actions"]
    masks = batch["masks"]
    old_log_probs = batch["log_probs"]
    advantages = batch["advantages"]
    returns = batch["returns"]
    b = obs.shape[0]

    logits, values, cache = nn.forward_batch(params, obs)
    log_probs = nn.masked_bernoulli_log_prob(logits, actions, masks)
    eta = np.exp(log_probs - old_log_probs)
    clipped = np.clip(eta, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    s_plain = eta * advantages
    s_clip = clipped * advantages
    surrogate = np.minimum(s_plain, s_clip)
    policy_loss = -surrogate.mean()

    probs = nn.sigmoid(logits)
    entropy_per = nn.masked_bernoulli_entropy(logits, masks)
    entropy = entropy_per.mean()
    value_err = values - returns
    value_loss = 0.5 * float(np.mean(value_err**2))
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d loss / d eta: active branch of the min, with the clip zeroing its slope
    plain_active = s_plain <= s_clip
    in_band = (eta > 1.0 - cfg.clip_eps) & (eta < 1.0 + cfg.clip_eps)
    d_surr_d_eta = np.where(plain_active, advantages, advantages * in_band)
    d_log_prob = -(d_surr_d_eta * eta) / b
    d_logits = d_log_prob[:, None] * masks * (actions - probs)
    # entropy bonus: dH/dz = -z * p * (1 - p)
    d_logits += (cfg.entropy_coef / b) * logits * probs * (1.0 - probs) * masks
    d_values = cfg.value_coef * value_err / b
    grad = nn.backward_batch(params, cache, d_logits, d_values)

    stats = {
        "ratio_mean": float(eta.mean()),
        "clip_fraction": float(np.mean(np.abs(eta - 1.0) > cfg.clip_eps)),
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": float(entropy),
        "surrogate": float(surrogate.mean()),
    }
    return float(loss), grad, stats


class Adam:
    """Standard Adam; step() returns the increment to add to the parameters."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class UpdateStats:
    ratio_mean: float = 1.0
    clip_fraction: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    surrogate: float = 0.0
    minibatches: int = 0
    samples: int = 0


def ppo_update(
    params: nn.PolicyParams,
    buffer: RolloutBuffer,
    cfg: PpoConfig,
    optimizer: Adam | None = None,
    rng: np.random.Generator | None = None,
):
    """One PPO update over the buffer; returns (new params, statistics).

    The input params object is never mutated: on NonFiniteGradient the
    caller's parameters are still valid and unchanged.
    """
    if len(buffer) == 0:
        raise ValueError("rollout buffer is empty")
    data = buffer.arrays()
    advantages, returns = gae_advantages(buffer, cfg.gamma, cfg.lam, normalize=True)
    work = params.copy_with(params.theta.copy())
    optimizer = optimizer or Adam(work.theta.shape[0], cfg.learning_rate)
    rng = rng or np.random.default_rng(0)
    n = len(buffer)
    totals = UpdateStats(ratio_mean=0.0, samples=n)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            sel = perm[start : start + cfg.minibatch_size]
            batch = {
                "obs": data["obs"][sel],
                "actions": data["actions"][sel],
                "masks": data["masks"][sel],
                "log_probs": data["log_probs"][sel],
                "advantages": advantages[sel],
                "returns": returns[sel],
            }
            loss, grad, stats = ppo_loss_and_grad(work, batch, cfg)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NonFiniteGradient("non-finite loss or gradient; update aborted")
            work.theta += optimizer.step(grad)
            totals.ratio_mean += stats["ratio_mean"]
            totals.clip_fraction += stats["clip_fraction"]
            totals.policy_loss += stats["policy_loss"]
            totals.value_loss += stats["value_loss"]
            totals.entropy += stats["entropy"]
            totals.surrogate += stats["surrogate"]
            totals.minibatches += 1
    k = max(1, totals.minibatches)
    totals.ratio_mean /= k
    totals.clip_fraction /= k
    totals.policy_loss /= k
    totals.value_loss /= k
    totals.entropy /= k
    totals.surrogate /= k
    return work, totals


class StochasticMlpPolicy:
    """Bridges PolicyParams to the simulator's per-decision act() contract."""

    def __init__(self, params: nn.PolicyParams, deterministic: bool = False):
        self.params = params
        self.deterministic = deterministic

    def act(self, obs: np.ndarray, mask: np.ndarray, rng) -> tuple[np.ndarray, float, float]:
        logits, values, _ = nn.forward_batch(self.params, obs[None, :])
        logits = logits[0]
        probs = nn.sigmoid(logits)
        draws = rng.random(logits.shape[0])
        if self.deterministic:
            action = (probs > 0.5).astype(np.float64)
        else:
            action = (draws < probs).astype(np.float64)
        log_prob = float(nn.masked_bernoulli_log_prob(logits, action, mask.astype(np.float64)))
        return action, log_prob, float(values[0])

    def probs(self, obs: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        return nn.policy_forward(self.params, obs, mask)[0]


# -- rollout collection and the training loop -------------------------------


def _episode_seed(train_seed: int, episode_index: int) -> int:
    return train_seed * 1_000_000 + episode_index


def _run_rollout_episode(args):
    scenario, seed, params = args
    sim = Simulator(scenario, seed, policy=StochasticMlpPolicy(params), record_rollout=True)
    trace = sim.run()
    trajectories = [traj for _, traj in sim.trajectories()]
    return trajectories, trace


def collect_rollout(
    scenarios: list[ScenarioConfig],
    params: nn.PolicyParams,
    train_seed: int,
    first_episode: int,
    min_steps: int,
    workers: int = 1,
):
    """Run whole episodes round-robin over the scenario set until min_steps.

    Episodes are independent simulator instances; with workers > 1 they fan
    out across processes, and results are combined in episode order either
    way, so the assembled buffer is identical.
    """
    buffer = RolloutBuffer()
    traces = []
    episode = first_episode
    while len(buffer) < min_steps:
        batch_n = max(1, workers)
        jobs = []
        for k in range(batch_n):
            scenario = scenarios[(episode + k) % len(scenarios)]
            jobs.append((scenario, _episode_seed(train_seed, episode + k), params))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_rollout_episode, jobs))
        else:
            results = [_run_rollout_episode(job) for job in jobs]
        for trajectories, trace in results:
            for traj in trajectories:
                buffer.add_trajectory(traj)
            traces.append(trace)
        episode += batch_n
    return buffer, traces, episode


def evaluate(
    scenario: ScenarioConfig,
    mode: str,
    seeds,
    params: nn.PolicyParams | None = None,
) -> dict[str, float]:
    """Mean and spread of delivery/overhead ratios over evaluation episodes."""
    deliveries = []
    overheads = []
    goodputs = []
    checkpoint = scenario.checkpoint
    if mode == "deep-mpr" and not checkpoint:
        checkpoint = "(in-memory)"  # placeholder: the params are passed directly
    run_cfg = replace(scenario, mode=mode, checkpoint=checkpoint)
    policy = StochasticMlpPolicy(params) if mode == "deep-mpr" else None
    for seed in seeds:
        trace = Simulator(run_cfg, seed, policy=policy).run()
        deliveries.append(trace.delivery_ratio())
        overheads.append(trace.overhead_ratio())
        goodputs.append(trace.goodput_bps())
    deliveries = np.asarray(deliveries)
    overheads = np.asarray(overheads)
    return {
        "mode": mode,
        "delivery_ratio_mean": float(deliveries.mean()),
        "delivery_ratio_std": float(deliveries.std()),
        "overhead_ratio_mean": float(overheads.mean()),
        "overhead_ratio_std": float(overheads.std()),
        "goodput_bps_mean": float(np.mean(goodputs)),
        "episodes": len(list(seeds)),
    }


CURVE_COLUMNS = [
    "update",
    "steps",
    "mean_reward",
    "delivery_ratio",
    "overhead_ratio",
    "clip_fraction",
    "policy_loss",
    "value_loss",
    "entropy",
    "smpr_delivery_ratio",
    "smpr_overhead_ratio",
]


@dataclass
class TrainConfig:
    total_steps: int
    rollout_steps: int = 8192
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    separate_networks: bool = False
    out_dir: str | None = None
    eval_every: int = 0
    eval_episodes: int = 3
    eval_seeds: tuple[int, ...] = ()
    checkpoint_every: int = 20
    workers: int = 1
    log: object = None  # callable taking one string

    def __post_init__(self) -> None:
        if self.total_steps < 0 or self.rollout_steps < 1:
            raise ValueError("bad step budget")


@dataclass
class TrainResult:
    params: nn.PolicyParams
    steps: int
    updates: int
    curve_rows: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    final_checkpoint: str | None = None


def _write_curve(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for col in CURVE_COLUMNS:
                val = row.get(col, "")
                cells.append(repr(val) if isinstance(val, float) else str(val))
            fh.write(",".join(cells) + "\n")


def train(
    scenarios: list[ScenarioConfig],
    ppo_cfg: PpoConfig,
    train_cfg: TrainConfig,
) -> TrainResult:
    """Centralized training of the shared forwarding policy.

    Rollouts alternate over the scenario set; one PPO update runs per
    collected batch of complete episodes. Periodic evaluation rows compare
    the current policy against the s-mpr baseline on held-out seeds.
    """
    if not scenarios:
        raise ValueError("need at least one training scenario")
    spec = ObservationSpec(scenarios[0].obs_n_max, scenarios[0].obs_k_max)
    for sc in scenarios:
        if (sc.obs_n_max, sc.obs_k_max) != (spec.n_max, spec.k_max):
            raise ValueError("all training scenarios must share obs.n_max / obs.k_max")
    shapes = nn.LayerShapes(
        input_width=spec.width,
        hidden=train_cfg.hidden,
        action_width=spec.k_max,
        separate=train_cfg.separate_networks,
    )
    init_rng = np.random.default_rng(train_cfg.seed)
    params = nn.init_params(shapes, init_rng)
    optimizer = Adam(params.theta.shape[0], ppo_cfg.learning_rate)
    update_rng = np.random.default_rng(train_cfg.seed + 1)
    log = train_cfg.log or (lambda msg: None)

    out_dir = train_cfg.out_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    result = TrainResult(params=params, steps=0, updates=0)

    def save_checkpoint(tag: str) -> str | None:
        if not out_dir:
            return None
        path = os.path.join(out_dir, f"policy_{tag}.ckpt")
        nn.save_checkpoint(path, result.params)
        result.checkpoints.append(path)
        return path

    save_checkpoint("initial")
    if train_cfg.total_steps == 0:
        result.final_checkpoint = save_checkpoint("final")
        return result

    eval_scenario = scenarios[0]
    eval_seeds = train_cfg.eval_seeds or tuple(
        900_000 + train_cfg.seed * 1000 + k for k in range(train_cfg.eval_episodes)
    )

    episode_index = 0
    while result.steps < train_cfg.total_steps:
        remaining = train_cfg.total_steps - result.steps
        target = min(train_cfg.rollout_steps, max(remaining, 1))
        buffer, traces, episode_index = collect_rollout(
            scenarios, result.params, train_cfg.seed, episode_index, target, train_cfg.workers
        )
        new_params, stats = ppo_update(result.params, buffer, ppo_cfg, optimizer, update_rng)
        result.params = new_params
        result.steps += len(buffer)
        result.updates += 1
        row = {
            "update": result.updates,
            "steps": result.steps,
            "mean_reward": float(np.mean(buffer.arrays()["rewards"])),
            "clip_fraction": stats.clip_fraction,
            "policy_loss": stats.policy_loss,
            "value_loss": stats.value_loss,
            "entropy": stats.entropy,
        }
        if train_cfg.eval_every and result.updates % train_cfg.eval_every == 0:
            deep = evaluate(eval_scenario, "deep-mpr", eval_seeds, result.params)
            base = evaluate(eval_scenario, "s-mpr", eval_seeds)
            row["delivery_ratio"] = deep["delivery_ratio_mean"]
            row["overhead_ratio"] = deep["overhead_ratio_mean"]
            row["smpr_delivery_ratio"] = base["delivery_ratio_mean"]
            row["smpr_overhead_ratio"] = base["overhead_ratio_mean"]
            log(
                f"update {result.updates} steps {result.steps} "
                f"reward {row['mean_reward']:.4f} delivery {row['delivery_ratio']:.3f} "
                f"(s-mpr {row['smpr_delivery_ratio']:.3f})"
            )
        else:
            log(
                f"update {result.updates} steps {result.steps} "
                f"reward {row['mean_reward']:.4f} clip {stats.clip_fraction:.3f}"
            )
        result.curve_rows.append(row)
        if out_dir and train_cfg.checkpoint_every and result.updates % train_cfg.checkpoint_every == 0:
            save_checkpoint(f"update{result.updates:05d}")
        if out_dir:
            _write_curve(os.path.join(out_dir, "learning_curve.csv"), result.curve_rows)
    result.final_checkpoint = save_checkpoint("final")
    return result
