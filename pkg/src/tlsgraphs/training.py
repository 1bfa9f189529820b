"""Denoiser training: Adam-style optimization of the diffusion cross-entropy,
periodic checkpoints, divergence handling, and exact resume.

Each step draws a clean graph and a uniform timestep, corrupts the graph in
one forward jump, and backpropagates the clean-graph prediction loss.  The
checkpoint captures parameters, optimizer moments, and the training RNG state,
so a resumed run replays the uninterrupted one bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autograd as ag
from .denoiser import (
    DEFAULT_LAMBDA_E,
    DenoiserConfig,
    DenoiserParams,
    auxiliary_features,
    forward_tensors,
    init_params,
    loss_tensors,
)
from .diffusion import NoiseModel, NoiseSchedule, NoisyGraph, forward_jump
from .graphs import CellTypes, GraphDataset
from .rng import child_seed_sequence

CHECKPOINT_MAGIC = b"TLSDNZ01"


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite and no checkpoint was available to fall back to."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    learning_rate: float = 2e-4
    batch_size: int = 1
    lambda_e: float = DEFAULT_LAMBDA_E
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    checkpoint_path: Optional[str] = None
    seed: int = 0


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: DenoiserParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t) for k, t in params.tensors.items()},
            v={k: np.zeros_like(t) for k, t in params.tensors.items()},
            step=0,
        )


def adam_update(
    params: DenoiserParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """In-place Adam step with global-norm gradient clipping."""
    norm = ag.global_norm(grads.values())
    scale = 1.0
    if config.clip_norm > 0 and norm > config.clip_norm:
        scale = config.clip_norm / norm
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, grad in grads.items():
        g = grad * scale
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        params.tensors[name] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


def gradient(
    params: DenoiserParams,
    batch: Sequence[tuple[NoisyGraph, NoisyGraph]],
    T: int,
    lambda_e: float = DEFAULT_LAMBDA_E,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over (noisy, clean) pairs and its reverse-mode gradients."""
    wrapped = {k: ag.Tensor(v) for k, v in params.tensors.items()}
    total: Optional[ag.Tensor] = None
    for noisy, clean in batch:
        aux = auxiliary_features(noisy, T)
        node_probs, edge_probs = forward_tensors(wrapped, params.config, noisy, aux)
        term = loss_tensors(node_probs, edge_probs, clean, lambda_e)
        total = term if total is None else total + term
    assert total is not None, "empty batch"
    mean_loss = ag.mul(total, 1.0 / len(batch))
    value = float(mean_loss.value)
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value}")
    mean_loss.backward()
    grads = {
        k: (t.grad if t.grad is not None else np.zeros_like(t.value))
        for k, t in wrapped.items()
    }
    return value, grads


@dataclass
class TrainResult:
    params: DenoiserParams
    losses: list[float]
    diverged: bool = False
    completed_steps: int = 0


def train(
    dataset: GraphDataset,
    noise_model: NoiseModel,
    config: TrainConfig,
    arch: Optional[DenoiserConfig] = None,
    resume_from: Optional[str] = None,
) -> TrainResult:
    """Optimize a denoiser on the dataset under the given noise model.

    Divergence (non-finite loss) aborts the loop; the result carries the last
    good checkpoint when one exists, otherwise the error propagates.
    """
    if len(dataset) == 0:
        raise ValueError("empty training dataset")
    clean_graphs = [
        NoisyGraph.from_cell_graph(g, dataset.types, t=0) for g in dataset.graphs
    ]
    if resume_from is not None:
        params, noise_model_ck, state, rng_state, losses = load_checkpoint(resume_from)
        rng = np.random.default_rng()
        rng.bit_generator.state = rng_state
        start_step = state.step
    else:
        arch = arch or DenoiserConfig(b=dataset.types.b)
        rng = np.random.default_rng(child_seed_sequence(config.seed, "denoiser-train"))
        params = init_params(arch, rng)
        state = AdamState.zeros_like(params)
        losses = []
        start_step = 0
    T = noise_model.T
    last_checkpoint_step = start_step if start_step > 0 else None
    for step in range(start_step, config.steps):
        batch = []
        for _ in range(config.batch_size):
            g0 = clean_graphs[int(rng.integers(len(clean_graphs)))]
            t = int(rng.integers(1, T + 1))
            batch.append((forward_jump(g0, t, noise_model, rng), g0))
        try:
            value, grads = gradient(params, batch, T, config.lambda_e)
        except FloatingPointError:
            if config.checkpoint_path and last_checkpoint_step is not None:
                params, _, state, _, losses = load_checkpoint(config.checkpoint_path)
                return TrainResult(params, losses, diverged=True, completed_steps=state.step)
            raise TrainingDivergedError(f"loss diverged at step {step} with no checkpoint")
        losses.append(value)
        adam_update(params, grads, state, config)
        if (
            config.checkpoint_every > 0
            and config.checkpoint_path
            and (step + 1) % config.checkpoint_every == 0
        ):
            save_checkpoint(
                config.checkpoint_path, params, noise_model, state, rng.bit_generator.state, losses
            )
            last_checkpoint_step = step + 1
    if config.checkpoint_path:
        save_checkpoint(
            config.checkpoint_path, params, noise_model, state, rng.bit_generator.state, losses
        )
    return TrainResult(params, losses, diverged=False, completed_steps=config.steps)


# -- checkpoint format --------------------------------------------------------
#
# magic (8 bytes) | header length (u64 LE) | header JSON (UTF-8) | payload of
# float64 little-endian arrays laid out in the order recorded by the header.
# The header carries the architecture, b, edge-state count, T, marginals,
# optimizer scalars, the training RNG state, and the loss history, so sampling
# and exact resume need nothing but the file.


def _payload_order(params: DenoiserParams) -> list[str]:
    return params.names()


def save_checkpoint(
    path: str | Path,
    params: DenoiserParams,
    noise_model: NoiseModel,
    state: Optional[AdamState] = None,
    rng_state: Optional[dict] = None,
    losses: Optional[list[float]] = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order = _payload_order(params)
    header = {
        "version": 1,
        "architecture": asdict(params.config),
        "b": params.config.b,
        "edge_states": 2,
        "T": noise_model.T,
        "m_x": [float(x) for x in noise_model.m_x],
        "m_e": [float(x) for x in noise_model.m_e],
        "alpha": [float(a) for a in noise_model.schedule.alpha],
        "alpha_bar": [float(a) for a in noise_model.schedule.alpha_bar],
        "tensors": [[name, list(params.tensors[name].shape)] for name in order],
        "adam_step": state.step if state is not None else 0,
        "has_moments": state is not None,
        "rng_state": _encode_rng_state(rng_state) if rng_state is not None else None,
        "losses": losses or [],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in order:
            fh.write(params.tensors[name].astype("<f8").tobytes())
        if state is not None:
            for name in order:
                fh.write(state.m[name].astype("<f8").tobytes())
            for name in order:
                fh.write(state.v[name].astype("<f8").tobytes())


def _encode_rng_state(state: dict) -> str:
    return json.dumps(state, default=int)


def _decode_rng_state(blob: str) -> dict:
    return json.loads(blob)


def load_checkpoint(
    path: str | Path,
) -> tuple[DenoiserParams, NoiseModel, AdamState, Optional[dict], list[float]]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a denoiser checkpoint")
    (header_len,) = struct.unpack_from("<Q", raw, len(CHECKPOINT_MAGIC))
    offset = len(CHECKPOINT_MAGIC) + 8
    header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    cfg = DenoiserConfig(**header["architecture"])
    tensors: dict[str, np.ndarray] = {}
    for name, shape in header["tensors"]:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).reshape(shape)
        tensors[name] = arr.copy()
        offset += size * 8
    params = DenoiserParams(cfg, tensors)
    schedule = NoiseSchedule(
        T=header["T"],
        alpha=np.asarray(header["alpha"]),
        alpha_bar=np.asarray(header["alpha_bar"]),
    )
    noise_model = NoiseModel(
        m_x=np.asarray(header["m_x"]), m_e=np.asarray(header["m_e"]), schedule=schedule
    )
    state = AdamState.zeros_like(params)
    state.step = header["adam_step"]
    if header["has_moments"]:
        for name, shape in header["tensors"]:
            size = int(np.prod(shape)) if shape else 1
            state.m[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).reshape(
                shape
            ).copy()
            offset += size * 8
        for name, shape in header["tensors"]:
            size = int(np.prod(shape)) if shape else 1
            state.v[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).reshape(
                shape
            ).copy()
            offset += size * 8
    rng_state = (
        _decode_rng_state(header["rng_state"]) if header.get("rng_state") is not None else None
    )
    return params, noise_model, state, rng_state, list(header.get("losses", []))
