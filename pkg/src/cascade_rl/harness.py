"""Training/evaluation orchestration: config, seeded RNG streams, the
episode loop, metrics, and report files.

Reproducibility contract: (case, config, seed) fully determines every
episode, so two identical train runs emit byte-identical episodes.csv and
evaluation output is independent of the worker count. Three independent
RNG streams (attack, exploration, weight init) are derived from the seed so
changing the exploration schedule never perturbs the attack sequence.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import agent as ag
from . import cascade
from .dcopf import run_dcopf
from .net_model import CaseError, Network, parse_case, write_case
from .pf import ac_power_flow
from .simplex import SimplexError

__all__ = [
    "RunConfig",
    "EpisodeRow",
    "RunMetrics",
    "ConfigError",
    "NumericalAbort",
    "train",
    "train_network",
    "evaluate",
    "evaluate_network",
    "summary_extra",
    "moving_average",
    "render_csv",
    "render_summary",
    "render_svg",
    "emit_reports",
    "episode_rng",
    "AGENT_KINDS",
]

AGENT_KINDS = ("shallow", "deep", "random", "fixed")
_STREAM_ATTACK = 0
_STREAM_EXPLORE = 1
_STREAM_INIT = 2

CSV_HEADER = "episode,won,stages_completed,total_reward,epsilon,wall_ms"


class ConfigError(ValueError):
    pass


class NumericalAbort(RuntimeError):
    def __init__(self, episode: int, cause: Exception):
        self.episode = episode
        super().__init__(f"numerical failure in episode {episode}: {cause}")


@dataclass
class RunConfig:
    case_path: str
    agent_kind: str = "deep"
    episodes: int = 10000
    lr: float = 1e-4
    gamma: float = 0.7
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_episodes: int | None = None  # default: half of episodes
    stages: int = 3
    generation_cap: int = cascade.GENERATION_CAP
    seed: int = 0
    attack_mode: str = "uniform"
    output_dir: str | None = None
    ma_window: int = 1000
    workers: int = 1
    record_wall_ms: bool = False

    def __post_init__(self):
        if self.agent_kind not in AGENT_KINDS:
            raise ConfigError(f"agent_kind must be one of {AGENT_KINDS}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        for name in ("eps_start", "eps_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be within [0, 1]")
        if self.stages < 1:
            raise ConfigError("stages must be >= 1")
        if self.generation_cap < 1:
            raise ConfigError("generation_cap must be >= 1")
        if self.attack_mode not in ("uniform", "important"):
            raise ConfigError("attack_mode must be uniform or important")
        if self.lr <= 0 or not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("bad lr/gamma")
        if self.ma_window < 1 or self.workers < 1:
            raise ConfigError("ma_window and workers must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "case_path" not in doc:
            raise ConfigError("config requires case_path")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def epsilon(self, episode: int) -> float:
        horizon = self.eps_decay_episodes
        if horizon is None:
            horizon = max(1, self.episodes // 2)
        frac = min(1.0, episode / horizon) if horizon > 0 else 1.0
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass
class EpisodeRow:
    episode: int
    won: bool
    stages_completed: int
    total_reward: float
    epsilon: float
    wall_ms: int


@dataclass
class RunMetrics:
    rows: list[EpisodeRow]
    tail_window: int = 1000
    wall_seconds: float = 0.0

    @property
    def episodes(self) -> int:
        return len(self.rows)

    @property
    def wins(self) -> int:
        return sum(1 for r in self.rows if r.won)

    @property
    def winning_rate(self) -> float:
        return self.wins / self.episodes

    @property
    def avg_reward(self) -> float:
        return float(np.mean([r.total_reward for r in self.rows]))

    def tail(self) -> "RunMetrics":
        return RunMetrics(self.rows[-self.tail_window :], self.tail_window)


def episode_rng(seed: int, stream: int, episode: int | None = None) -> np.random.Generator:
    key = (stream,) if episode is None else (stream, episode)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


class _Agent:
    """Per-run policy wrapper: selection, and learning where applicable."""

    def __init__(self, kind: str, net: ag.ValueNet | None, lr: float, gamma: float, learn: bool):
        self.kind = kind
        self.net = net
        self.lr = lr
        self.gamma = gamma
        self.learn = learn
        self.eps = 0.0
        self.rng: np.random.Generator | None = None
        self._pending: ag.Transition | None = None

    def start_episode(self, eps: float, rng: np.random.Generator):
        self.eps = eps
        self.rng = rng
        self._pending = None

    def select(self, state: np.ndarray) -> int:
        if self.kind == "fixed":
            return ag.ALPHAS.index(1.0)
        if self.kind == "random":
            return int(self.rng.integers(len(ag.ALPHAS)))
        q = ag.forward(self.net, state)
        a = ag.epsilon_greedy(q, self.eps, self.rng)
        if self.learn and self.kind == "shallow" and self._pending is not None:
            t = replace(self._pending, next_action_index=a)
            ag.sarsa_update(self.net, t, self.lr, self.gamma)
            self._pending = None
        return a

    def observe(self, rec: cascade.TransitionRecord):
        if not self.learn or self.kind in ("random", "fixed"):
            return
        t = ag.Transition(
            state=rec.state,
            action_index=rec.action_index,
            reward=rec.reward / ag.REWARD_SCALE,
            next_state=rec.next_state,
            done=rec.done,
        )
        if self.kind == "deep":
            ag.q_update(self.net, t, self.lr, self.gamma)
        elif rec.done:
            ag.sarsa_update(self.net, t, self.lr, self.gamma)
        else:
            self._pending = t  # completed when the next action is chosen


def _load_case(path: str) -> Network:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CaseError(f"cannot read case file {path}: {exc}") from None
    return parse_case(text)


def _base_point(net: Network):
    dispatch, _ = run_dcopf(net, 1.0)
    if not dispatch.feasible:
        raise ConfigError("base case redispatch infeasible")
    sol = ac_power_flow(net, dispatch)
    if not sol.converged:
        raise ConfigError("base case AC power flow diverges")
    return dispatch, sol


def _run_one(
    net: Network,
    base_point,
    policy: _Agent,
    cfg: RunConfig,
    episode: int,
    eps: float,
) -> tuple[EpisodeRow, cascade.EpisodeResult]:
    rng = episode_rng(cfg.seed, _STREAM_ATTACK, episode)
    policy.start_episode(eps, episode_rng(cfg.seed, _STREAM_EXPLORE, episode))
    t0 = time.perf_counter()
    result = cascade.run_episode(
        net,
        policy.select,
        cfg.stages,
        rng,
        generation_cap=cfg.generation_cap,
        attack_mode=cfg.attack_mode,
        on_transition=policy.observe,
        base_point=base_point,
    )
    wall = int(round((time.perf_counter() - t0) * 1000)) if cfg.record_wall_ms else 0
    row = EpisodeRow(
        episode=episode,
        won=result.won,
        stages_completed=len(result.stages),
        total_reward=result.total_reward,
        epsilon=eps,
        wall_ms=wall,
    )
    return row, result


def _make_agent(cfg: RunConfig, net: Network, learn: bool, checkpoint: str | None) -> _Agent:
    if cfg.agent_kind in ("random", "fixed"):
        return _Agent(cfg.agent_kind, None, cfg.lr, cfg.gamma, learn)
    if checkpoint is not None:
        vnet = ag.load_checkpoint(checkpoint)
        if vnet.kind != cfg.agent_kind:
            raise ConfigError(
                f"checkpoint kind {vnet.kind!r} does not match agent_kind "
                f"{cfg.agent_kind!r}"
            )
        if vnet.input_dim != cascade.state_dim(net):
            raise ConfigError(
                f"checkpoint input dim {vnet.input_dim} does not match case "
                f"state dim {cascade.state_dim(net)}"
            )
        return _Agent(cfg.agent_kind, vnet, cfg.lr, cfg.gamma, learn)
    vnet = ag.init_value_net(
        cfg.agent_kind,
        cascade.state_dim(net),
        episode_rng(cfg.seed, _STREAM_INIT),
    )
    return _Agent(cfg.agent_kind, vnet, cfg.lr, cfg.gamma, learn)


def summary_extra(config: RunConfig, metrics: RunMetrics, mode: str) -> dict:
    extra = {
        "mode": mode,
        "agent_kind": config.agent_kind,
        "seed": config.seed,
        "wall_seconds": round(metrics.wall_seconds, 3),
    }
    if metrics.wall_seconds > 0:
        extra["episodes_per_second"] = round(
            metrics.episodes / metrics.wall_seconds, 3
        )
    return extra


def train_network(net: Network, config: RunConfig) -> tuple[RunMetrics, str | None]:
    """Training loop on an in-memory network; returns metrics and the final
    checkpoint (None for the unparameterized baseline agents)."""
    base_point = _base_point(net)
    policy = _make_agent(config, net, learn=True, checkpoint=None)

    rows: list[EpisodeRow] = []
    t_start = time.perf_counter()
    for ep in range(config.episodes):
        eps = 0.0 if config.agent_kind in ("random", "fixed") else config.epsilon(ep)
        try:
            row, _ = _run_one(net, base_point, policy, config, ep, eps)
        except (SimplexError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise NumericalAbort(ep, exc) from exc
        rows.append(row)

    metrics = RunMetrics(
        rows,
        tail_window=min(1000, config.episodes),
        wall_seconds=time.perf_counter() - t_start,
    )
    checkpoint = ag.save_checkpoint(policy.net) if policy.net is not None else None
    return metrics, checkpoint


def train(config: RunConfig) -> tuple[RunMetrics, str | None]:
    """Load the configured case, train, and write reports to output_dir."""
    net = _load_case(config.case_path)
    metrics, checkpoint = train_network(net, config)
    if config.output_dir:
        emit_reports(
            metrics,
            config.output_dir,
            window=config.ma_window,
            extra=summary_extra(config, metrics, "train"),
            checkpoint=checkpoint,
        )
    return metrics, checkpoint


def _eval_span(cfg_doc: dict, case_text: str, checkpoint: str | None, episodes: list[int]):
    cfg = RunConfig.from_dict(cfg_doc)
    net = parse_case(case_text)
    base_point = _base_point(net)
    policy = _make_agent(cfg, net, learn=False, checkpoint=checkpoint)
    out = []
    for ep in episodes:
        row, _ = _run_one(net, base_point, policy, cfg, ep, eps=0.0)
        out.append(row)
    return out


def evaluate_network(
    net: Network, config: RunConfig, checkpoint: str | None = None
) -> RunMetrics:
    """Greedy evaluation (eps=0, no learning); fan-out safe.

    Episode rows are merged by index, so the output is identical for any
    worker count.
    """
    _base_point(net)  # fail fast on a bad case
    if config.agent_kind in ("shallow", "deep") and checkpoint is None:
        raise ConfigError(f"agent_kind {config.agent_kind} requires a checkpoint")

    t_start = time.perf_counter()
    episodes = list(range(config.episodes))
    if config.workers == 1:
        rows = _eval_span(config.to_dict(), write_case(net), checkpoint, episodes)
    else:
        case_text = write_case(net)
        chunks = [episodes[i :: config.workers] for i in range(config.workers)]
        rows = []
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futs = [
                pool.submit(_eval_span, config.to_dict(), case_text, checkpoint, chunk)
                for chunk in chunks
                if chunk
            ]
            for f in futs:
                rows.extend(f.result())
        rows.sort(key=lambda r: r.episode)

    return RunMetrics(
        rows,
        tail_window=min(1000, config.episodes),
        wall_seconds=time.perf_counter() - t_start,
    )


def evaluate(config: RunConfig, checkpoint: str | None = None) -> RunMetrics:
    """Load the configured case, evaluate, and write reports to output_dir."""
    net = _load_case(config.case_path)
    metrics = evaluate_network(net, config, checkpoint)
    if config.output_dir:
        emit_reports(
            metrics,
            config.output_dir,
            window=config.ma_window,
            extra=summary_extra(config, metrics, "eval"),
        )
    return metrics


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def moving_average(series, window: int):
    """Trailing mean; entries before a full window average the prefix."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")
    if window < 1:
        raise ValueError("window must be >= 1")
    csum = np.concatenate([[0.0], np.cumsum(series)])
    out = np.empty(series.size)
    for i in range(series.size):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def render_csv(metrics: RunMetrics) -> str:
    lines = [CSV_HEADER]
    for r in metrics.rows:
        lines.append(
            f"{r.episode},{int(r.won)},{r.stages_completed},"
            f"{r.total_reward!r},{r.epsilon!r},{r.wall_ms}"
        )
    return "\n".join(lines) + "\n"


def render_summary(metrics: RunMetrics, extra: dict | None = None) -> str:
    tail = metrics.tail()
    doc = {
        "episodes": metrics.episodes,
        "wins": metrics.wins,
        "winning_rate": metrics.winning_rate,
        "avg_reward": metrics.avg_reward,
        "tail_window": metrics.tail_window,
        "winning_rate_tail": tail.winning_rate,
        "avg_reward_tail": tail.avg_reward,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_svg(ma: np.ndarray, window: int) -> str:
    """Moving-average reward as a single-polyline SVG."""
    w, h, margin = 880, 440, 50.0
    lo = float(np.min(ma))
    hi = float(np.max(ma))
    span = (hi - lo) or 1.0
    n = ma.size
    xs = margin + (w - 2 * margin) * (
        np.arange(n) / (n - 1) if n > 1 else np.zeros(1) + 0.5
    )
    ys = h - margin - (h - 2 * margin) * (ma - lo) / span
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}">\n'
        f'<rect width="{w}" height="{h}" fill="white"/>\n'
        f'<line x1="{margin}" y1="{h - margin}" x2="{w - margin}" '
        f'y2="{h - margin}" stroke="black"/>\n'
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{h - margin}" stroke="black"/>\n'
        f'<text x="{margin}" y="{margin - 10}" font-size="14">'
        f"moving average reward (window={window}), "
        f"min={lo:.2f}, max={hi:.2f}</text>\n"
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" '
        f'points="{pts}"/>\n'
        "</svg>\n"
    )


def emit_reports(
    metrics: RunMetrics,
    output_dir: str,
    window: int = 1000,
    extra: dict | None = None,
    checkpoint: str | None = None,
) -> dict[str, Path]:
    """Write episodes.csv, summary.json, reward_ma.svg (and checkpoint.json)."""
    if metrics.episodes == 0:
        raise ValueError("no metrics to report")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "episodes_csv": out / "episodes.csv",
        "summary_json": out / "summary.json",
        "reward_ma_svg": out / "reward_ma.svg",
    }
    paths["episodes_csv"].write_text(render_csv(metrics), encoding="utf-8")
    paths["summary_json"].write_text(render_summary(metrics, extra), encoding="utf-8")
    ma = moving_average([r.total_reward for r in metrics.rows], window)
    paths["reward_ma_svg"].write_text(render_svg(ma, window), encoding="utf-8")
    if checkpoint is not None:
        paths["checkpoint"] = out / "checkpoint.json"
        paths["checkpoint"].write_text(checkpoint, encoding="utf-8")
    return paths
