"""HTTP facade over the simulator and training harness.

Cases travel inline as text so the service needs no shared filesystem;
train/eval responses carry the exact report file contents (CSV, JSON, SVG,
checkpoint) for the client to persist. Error bodies carry a machine-readable
code: "case", "config", or "numerical".
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import cascade
from .agent import ALPHAS
from .dcopf import ALPHA_MAX, ALPHA_MIN, run_dcopf
from .harness import (
    ConfigError,
    NumericalAbort,
    RunConfig,
    evaluate_network,
    moving_average,
    render_csv,
    render_summary,
    render_svg,
    summary_extra,
    train_network,
)
from .net_model import CaseError, parse_case
from .pf import ac_power_flow
from .simplex import SimplexError

__all__ = ["app", "create_app"]


class PfRequest(BaseModel):
    case_text: str


class PfResponse(BaseModel):
    converged: bool
    iterations: int
    max_mismatch: float
    v: list[float]
    theta: list[float]
    p_inj: list[float]
    q_inj: list[float]
    flow_from: list[float]
    loading: list[float]
    q_clamped: list[int]


class DcopfRequest(BaseModel):
    case_text: str
    alpha: float = Field(default=1.0, ge=ALPHA_MIN, le=ALPHA_MAX)


class DcopfResponse(BaseModel):
    feasible: bool
    p_gen: list[float]
    p_load_served: list[float]
    shed_total: float
    objective: float | None
    alpha_used: float


class EpisodeRequest(BaseModel):
    case_text: str
    alpha: float = Field(default=1.0, ge=ALPHA_MIN, le=ALPHA_MAX)
    seed: int = 0
    stages: int = Field(default=3, ge=1)
    generation_cap: int = Field(default=cascade.GENERATION_CAP, ge=1)
    attack_mode: str = "uniform"
    trace: bool = False


class GenerationModel(BaseModel):
    dcopf_feasible: bool
    acpf_converged: bool | None
    overlimit_lines: int | None
    tripped: list[int]


class StageModel(BaseModel):
    terminal: str
    stage_cost: float | None
    reward: float
    generations: list[GenerationModel]


class EpisodeResponse(BaseModel):
    won: bool
    total_reward: float
    attacked: list[int]
    shed_deenergized: float
    stages: list[StageModel]
    trace: list[str] | None = None


class TrainRequest(BaseModel):
    case_text: str
    config: dict


class TrainResponse(BaseModel):
    winning_rate: float
    avg_reward: float
    episodes_csv: str
    summary_json: str
    reward_ma_svg: str
    checkpoint: str | None


class EvalRequest(BaseModel):
    case_text: str
    config: dict
    checkpoint: str | None = None


def _config_from(doc: dict) -> RunConfig:
    doc = dict(doc)
    doc.pop("case_path", None)  # the case always travels inline
    doc.pop("output_dir", None)  # clients persist artifacts themselves
    return RunConfig.from_dict({**doc, "case_path": "<inline>"})


def create_app() -> FastAPI:
    app = FastAPI(
        title="cascade-rl",
        description="Cascading-failure simulator with DCOPF corrective "
        "control and RL training endpoints.",
    )

    @app.exception_handler(CaseError)
    async def _case_error(request: Request, exc: CaseError):
        return JSONResponse(
            status_code=422, content={"error": "case", "detail": str(exc)}
        )

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(
            status_code=422, content={"error": "config", "detail": str(exc)}
        )

    @app.exception_handler(SimplexError)
    async def _numerical_error(request: Request, exc: SimplexError):
        return JSONResponse(
            status_code=500, content={"error": "numerical", "detail": str(exc)}
        )

    @app.exception_handler(NumericalAbort)
    async def _numerical_abort(request: Request, exc: NumericalAbort):
        return JSONResponse(
            status_code=500, content={"error": "numerical", "detail": str(exc)}
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/pf", response_model=PfResponse)
    def pf(req: PfRequest):
        net = parse_case(req.case_text)
        dispatch, _ = run_dcopf(net, 1.0)
        if not dispatch.feasible:
            raise ConfigError("base case redispatch infeasible")
        sol = ac_power_flow(net, dispatch)
        return PfResponse(
            converged=sol.converged,
            iterations=sol.iterations,
            max_mismatch=sol.max_mismatch,
            v=sol.v.tolist(),
            theta=sol.theta.tolist(),
            p_inj=sol.p_inj.tolist(),
            q_inj=sol.q_inj.tolist(),
            flow_from=sol.flow_from.tolist(),
            loading=sol.loading.tolist(),
            q_clamped=list(sol.q_clamped),
        )

    @app.post("/dcopf", response_model=DcopfResponse)
    def dcopf(req: DcopfRequest):
        net = parse_case(req.case_text)
        dispatch, _ = run_dcopf(net, req.alpha)
        return DcopfResponse(
            feasible=dispatch.feasible,
            p_gen=dispatch.p_gen.tolist(),
            p_load_served=dispatch.p_load_served.tolist(),
            shed_total=dispatch.shed_total,
            objective=dispatch.objective if dispatch.feasible else None,
            alpha_used=dispatch.alpha_used,
        )

    @app.post("/episode", response_model=EpisodeResponse)
    def episode(req: EpisodeRequest):
        net = parse_case(req.case_text)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=req.seed, spawn_key=(0, 0))
        )
        nearest = min(range(len(ALPHAS)), key=lambda i: abs(ALPHAS[i] - req.alpha))
        try:
            result = cascade.run_episode(
                net,
                policy=lambda s: nearest,
                k_stages=req.stages,
                rng=rng,
                generation_cap=req.generation_cap,
                attack_mode=req.attack_mode,
                action_to_alpha=lambda i: req.alpha,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return EpisodeResponse(
            won=result.won,
            total_reward=result.total_reward,
            attacked=list(result.attacked),
            shed_deenergized=result.shed_deenergized,
            stages=[
                StageModel(
                    terminal=s.terminal,
                    stage_cost=s.stage_cost,
                    reward=s.reward,
                    generations=[
                        GenerationModel(
                            dcopf_feasible=g.dcopf_feasible,
                            acpf_converged=g.acpf_converged,
                            overlimit_lines=g.overlimit_lines,
                            tripped=list(g.tripped),
                        )
                        for g in s.generations
                    ],
                )
                for s in result.stages
            ],
            trace=cascade.trace_lines(result) if req.trace else None,
        )

    @app.post("/train", response_model=TrainResponse)
    def train_endpoint(req: TrainRequest):
        cfg = _config_from(req.config)
        net = parse_case(req.case_text)
        metrics, checkpoint = train_network(net, cfg)
        ma = moving_average([r.total_reward for r in metrics.rows], cfg.ma_window)
        return TrainResponse(
            winning_rate=metrics.winning_rate,
            avg_reward=metrics.avg_reward,
            episodes_csv=render_csv(metrics),
            summary_json=render_summary(metrics, summary_extra(cfg, metrics, "train")),
            reward_ma_svg=render_svg(ma, cfg.ma_window),
            checkpoint=checkpoint,
        )

    @app.post("/eval", response_model=TrainResponse)
    def eval_endpoint(req: EvalRequest):
        cfg = _config_from(req.config)
        net = parse_case(req.case_text)
        metrics = evaluate_network(net, cfg, req.checkpoint)
        ma = moving_average([r.total_reward for r in metrics.rows], cfg.ma_window)
        return TrainResponse(
            winning_rate=metrics.winning_rate,
            avg_reward=metrics.avg_reward,
            episodes_csv=render_csv(metrics),
            summary_json=render_summary(metrics, summary_extra(cfg, metrics, "eval")),
            reward_ma_svg=render_svg(ma, cfg.ma_window),
            checkpoint=req.checkpoint,
        )

    return app


app = create_app()
