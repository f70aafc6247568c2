"""Three-stage training pipeline, evaluation, snapshots and checkpoints."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as configmod
from .config import ExperimentConfig
from .curriculum import StageTag, alpha_for_step, omega_for_step, stage_of
from .diffcore import Adam, Mlp, Tape, Tensor, add, mse, scale
from .errors import DivergenceError, NumericError, SchemaError
from .quantizer import (
    Codebook,
    UsageHistogram,
    blend,
    commit_loss,
    kmeans_init,
    mean_pairwise_distance,
    nearest_code,
    perplexity,
    quantize_ste,
    utilization,
    vq_loss,
)
from .topodisc import TopoDisc, gen_topodisc, load_csv

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
SNAPSHOT_VERSION = 1

METRIC_COLUMNS = (
    "step", "stage", "alpha", "omega", "recon", "vq", "commit", "mse", "mse_disk",
    "mse_tri", "mse_hard", "perplexity", "norm_perplexity", "utilization", "pairdist",
)


@dataclass
class TrainState:
    step: int
    encoder: Mlp
    decoder: Mlp
    codebook: Codebook
    model_opt: Adam
    code_opt: Adam
    rng: np.random.Generator
    codebook_initialized: bool = False
    usage: UsageHistogram | None = None


@dataclass
class RunResult:
    final: dict
    series: list
    config: dict
    seconds: float
    losses: list = field(default_factory=list)  # one dict per optimizer step
    snapshots: dict = field(default_factory=dict)
    state: TrainState | None = None


def load_dataset(cfg: ExperimentConfig) -> TopoDisc:
    if cfg.dataset_csv:
        return load_csv(cfg.dataset_csv)
    return gen_topodisc(cfg.dataset)


def init_state(cfg: ExperimentConfig, in_dim: int = 2) -> TrainState:
    rng = np.random.default_rng(cfg.seed)
    hidden = list(cfg.model.hidden)
    d_lat = cfg.model.d_lat
    encoder = Mlp([in_dim, *hidden, d_lat], rng, name="encoder")
    decoder = Mlp([d_lat, *reversed(hidden), in_dim], rng, name="decoder")
    K = cfg.quantizer.K
    std = cfg.quantizer.init_std if cfg.quantizer.init_std is not None else 1.0 / K
    codebook = Codebook.random_normal(K, d_lat, rng, std=std)
    return TrainState(
        step=0,
        encoder=encoder,
        decoder=decoder,
        codebook=codebook,
        model_opt=_make_opt(encoder.params + decoder.params, cfg),
        code_opt=_make_opt([codebook.codes], cfg),
        rng=rng,
    )


def _make_opt(params, cfg):
    o = cfg.optimizer
    return Adam(params, lr=o.lr, betas=o.betas, eps=o.eps)


def _check_finite(loss: Tensor, step: int):
    if not np.isfinite(loss.values):
        raise DivergenceError(
            f"non-finite loss at step {step}", step=step, last_finite_step=step - 1
        )


# -- training steps ---------------------------------------------------------


def train_step_warmup(state: TrainState, cfg: ExperimentConfig, batch: np.ndarray) -> dict:
    """One step on the pure reconstruction objective; the codebook is not touched."""
    x = Tensor(batch)
    with Tape() as tape:
        recon = mse(state.decoder(state.encoder(x)), x)
    _check_finite(recon, state.step)
    state.model_opt.zero_grad()
    tape.backward(recon)
    state.model_opt.step()
    tape.clear()
    state.step += 1
    r = recon.item()
    return {"recon": r, "vq": None, "commit": None, "total": r, "alpha": 1.0, "omega": 0.0}


def transition_losses(state: TrainState, cfg: ExperimentConfig, x: Tensor, alpha: float,
                      omega: float):
    """Forward pass of the blended objective; returns (total, parts, indices).

    ``total = recon + omega * (vq + beta * commit)``.
    """
    beta = cfg.schedule.beta
    z = state.encoder(x)
    z_q, idx = quantize_ste(z, state.codebook)
    z_tilde = blend(z, z_q, alpha)
    recon = mse(state.decoder(z_tilde), x)
    vq = vq_loss(z, state.codebook, idx)
    commit = commit_loss(z, state.codebook, idx)
    total = add(recon, scale(add(vq, scale(commit, beta)), omega))
    return total, {"recon": recon, "vq": vq, "commit": commit}, idx


def train_step_transition(state: TrainState, cfg: ExperimentConfig, batch: np.ndarray) -> dict:
    sched = cfg.effective_schedule()
    alpha = alpha_for_step(state.step, sched)
    omega = omega_for_step(state.step, sched)
    x = Tensor(batch)
    with Tape() as tape:
        try:
            total, parts, idx = transition_losses(state, cfg, x, alpha, omega)
        except NumericError as exc:
            raise DivergenceError(
                f"non-finite value at step {state.step}: {exc}",
                step=state.step, last_finite_step=state.step - 1,
            ) from exc
    _check_finite(total, state.step)
    state.model_opt.zero_grad()
    state.code_opt.zero_grad()
    tape.backward(total)
    state.model_opt.step()
    state.code_opt.step()
    tape.clear()
    state.usage = UsageHistogram.from_indices(idx, state.codebook.K)
    state.step += 1
    out = {k: v.item() for k, v in parts.items()}
    out.update(total=total.item(), alpha=alpha, omega=omega)
    return out


def train_step(state, cfg, batch) -> dict:
    if stage_of(state.step, cfg.effective_schedule()).tag is StageTag.WARMUP:
        return train_step_warmup(state, cfg, batch)
    return train_step_transition(state, cfg, batch)


def next_batch(state: TrainState, cfg: ExperimentConfig, points: np.ndarray) -> np.ndarray:
    n = len(points)
    if cfg.batch_size is None or cfg.batch_size >= n:
        return points
    return points[np.sort(state.rng.permutation(n)[: cfg.batch_size])]


def run_warmup(state: TrainState, cfg: ExperimentConfig, data: TopoDisc) -> TrainState:
    """Run every remaining warmup step."""
    sched = cfg.effective_schedule()
    while state.step < sched.t_warm:
        train_step_warmup(state, cfg, next_batch(state, cfg, data.points))
    return state


def embed(state: TrainState, points) -> np.ndarray:
    return state.encoder(Tensor(points)).values


def init_codebook_from_manifold(state: TrainState, cfg: ExperimentConfig, data: TopoDisc):
    """Replace the codebook with k-means centroids of the current embeddings."""
    z = embed(state, data.points)
    state.codebook = kmeans_init(z, cfg.quantizer.K, state.rng, cfg.quantizer.kmeans_iters)
    state.code_opt = _make_opt([state.codebook.codes], cfg)
    state.codebook_initialized = True
    return state


def _maybe_init_codebook(state, cfg, data):
    sched = cfg.effective_schedule()
    if sched.t_warm > 0 and state.step == sched.t_warm and not state.codebook_initialized:
        init_codebook_from_manifold(state, cfg, data)


# -- evaluation -------------------------------------------------------------


def _masked_mean(per_point, mask):
    return float(np.mean(per_point[mask])) if np.any(mask) else float("nan")


def evaluate(state: TrainState, cfg: ExperimentConfig, data: TopoDisc) -> dict:
    """Full-dataset metrics in the current stage's forward mode (no updates).

    ``mse``/``mse_disk``/``mse_tri`` use the current alpha (continuous during
    warmup); the ``mse_hard*`` entries always decode the selected codes.
    """
    sched = cfg.effective_schedule()
    step = state.step
    tag = stage_of(step, sched).tag
    alpha = alpha_for_step(step, sched)
    omega = omega_for_step(step, sched)
    beta = sched.beta

    x = data.points
    z = embed(state, x)
    idx = nearest_code(z, state.codebook)
    e_k = state.codebook.values[idx]
    if tag is StageTag.WARMUP:
        z_tilde = z
    else:
        z_tilde = blend(Tensor(z), Tensor(e_k), alpha).values
    x_hat = state.decoder(Tensor(z_tilde)).values
    x_hard = state.decoder(Tensor(e_k)).values

    err = np.mean((x_hat - x) ** 2, axis=1)
    err_hard = np.mean((x_hard - x) ** 2, axis=1)
    disk, tri = data.disk_mask, data.triangle_mask
    recon = float(np.mean((x_hat - x) ** 2))
    vq = float(np.mean((z - e_k) ** 2))
    commit = vq
    hist = UsageHistogram.from_indices(idx, state.codebook.K)
    ppl = perplexity(hist)
    return {
        "step": step,
        "stage": tag.value,
        "alpha": alpha,
        "omega": omega,
        "recon": recon,
        "vq": vq,
        "commit": commit,
        "total": recon + omega * (vq + beta * commit),
        "mse": float(np.mean(err)),
        "mse_disk": _masked_mean(err, disk),
        "mse_tri": _masked_mean(err, tri),
        "mse_hard": float(np.mean(err_hard)),
        "mse_hard_disk": _masked_mean(err_hard, disk),
        "mse_hard_tri": _masked_mean(err_hard, tri),
        "perplexity": ppl,
        "norm_perplexity": ppl / state.codebook.K,
        "utilization": utilization(hist),
        "pairdist": mean_pairwise_distance(state.codebook),
        "_embeddings": z,
        "_assignments": idx,
    }


def make_snapshot(state: TrainState, cfg: ExperimentConfig, data: TopoDisc,
                  metrics: dict | None = None) -> dict:
    m = metrics if metrics is not None else evaluate(state, cfg, data)
    public = {k: v for k, v in m.items() if not k.startswith("_")}
    return {
        "schema_version": SNAPSHOT_VERSION,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "step": state.step,
        "stage": public["stage"],
        "alpha": public["alpha"],
        "omega": public["omega"],
        "losses": {k: public[k] for k in ("recon", "vq", "commit", "total")},
        "metrics": {k: public[k] for k in (
            "mse", "mse_disk", "mse_tri", "mse_hard", "mse_hard_disk", "mse_hard_tri",
            "perplexity", "norm_perplexity", "utilization", "pairdist")},
        "embeddings": np.asarray(m["_embeddings"]).tolist(),
        "codebook": state.codebook.values.tolist(),
        "assignments": np.asarray(m["_assignments"]).tolist(),
        "points": data.points.tolist(),
        "mode": data.mode.tolist(),
    }


# -- pipeline ---------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, state: TrainState | None = None,
                   stop_step: int | None = None, data: TopoDisc | None = None) -> RunResult:
    """Warmup -> k-means init -> transition -> hard, with periodic evaluation.

    ``state`` resumes a checkpointed run; ``stop_step`` halts early (the state
    in the result can then be checkpointed and resumed).
    """
    t0 = time.perf_counter()
    data = data if data is not None else load_dataset(cfg)
    state = state if state is not None else init_state(cfg, data.points.shape[1])
    end = cfg.total_steps if stop_step is None else min(stop_step, cfg.total_steps)
    snap_steps = set(cfg.snapshot_steps)

    series, losses, snapshots = [], [], {}
    metrics = None
    while True:
        _maybe_init_codebook(state, cfg, data)
        s = state.step
        if s % cfg.eval_every == 0 or s == cfg.total_steps or s == end:
            metrics = evaluate(state, cfg, data)
            series.append({k: v for k, v in metrics.items() if not k.startswith("_")})
            if s in snap_steps:
                snapshots[s] = make_snapshot(state, cfg, data, metrics)
        elif s in snap_steps:
            snapshots[s] = make_snapshot(state, cfg, data)
        if s >= end:
            break
        losses.append(train_step(state, cfg, next_batch(state, cfg, data.points)))

    final = snapshots.get(state.step) or make_snapshot(state, cfg, data, metrics)
    return RunResult(
        final=final,
        series=series,
        config=configmod.to_dict(cfg),
        seconds=time.perf_counter() - t0,
        losses=losses,
        snapshots=snapshots,
        state=state,
    )


# -- persistence ------------------------------------------------------------


def write_metrics_csv(series, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_COLUMNS)
        for row in series:
            w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def read_metrics_csv(path) -> list:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise SchemaError(f"{path}: unexpected metrics header {reader.fieldnames}")
        rows = []
        for r in reader:
            rows.append({k: (v if k == "stage" else int(v) if k == "step" else float(v))
                         for k, v in r.items()})
        return rows


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def save_snapshot(snapshot: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(snapshot))


def load_snapshot(path) -> dict:
    path = Path(path)
    snap = json.loads(path.read_text())
    found = snap.get("schema_version")
    if found != SNAPSHOT_VERSION:
        raise SchemaError(
            f"{path}: snapshot schema version mismatch (expected {SNAPSHOT_VERSION}, found {found})"
        )
    return snap


def state_to_dict(state: TrainState, cfg: ExperimentConfig) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "kind": "provq-train-state",
        "config": configmod.to_dict(cfg),
        "step": state.step,
        "codebook_initialized": state.codebook_initialized,
        "encoder": state.encoder.state_dict(),
        "decoder": state.decoder.state_dict(),
        "codebook": state.codebook.values.tolist(),
        "model_opt": state.model_opt.state_dict(),
        "code_opt": state.code_opt.state_dict(),
        "rng": state.rng.bit_generator.state,
    }


def state_from_dict(data: dict, cfg: ExperimentConfig | None = None):
    """Rebuild ``(state, config)`` from :func:`state_to_dict` output."""
    found = data.get("format_version")
    if found != CHECKPOINT_VERSION:
        raise SchemaError(
            f"checkpoint format version mismatch (expected {CHECKPOINT_VERSION}, found {found})"
        )
    cfg = cfg or configmod.from_dict(data["config"])
    state = init_state(cfg, in_dim=data["encoder"]["widths"][0])
    state.encoder.load_state_dict(data["encoder"])
    state.decoder.load_state_dict(data["decoder"])
    state.codebook = Codebook(data["codebook"])
    state.model_opt = _make_opt(state.encoder.params + state.decoder.params, cfg)
    state.model_opt.load_state_dict(data["model_opt"])
    state.code_opt = _make_opt([state.codebook.codes], cfg)
    state.code_opt.load_state_dict(data["code_opt"])
    state.rng.bit_generator.state = data["rng"]
    state.step = int(data["step"])
    state.codebook_initialized = bool(data["codebook_initialized"])
    return state, cfg


def save_checkpoint(state: TrainState, cfg: ExperimentConfig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(state_to_dict(state, cfg)))


def load_checkpoint(path, cfg: ExperimentConfig | None = None):
    return state_from_dict(json.loads(Path(path).read_text()), cfg)
