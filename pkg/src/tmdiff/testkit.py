"""Shared verification utilities: finite-difference gradient oracle,
causality probe, parameter census, and canonical weight checksums."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
import torch
from torch import nn

from .errors import TmdiffError

EPS_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    max_rel_error: float
    block_errors: dict[str, float]
    tolerance: float
    precision: str = "fp64"

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def finite_diff_grad(f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    Implementation-independent oracle: only calls f, never inspects it.
    """
    if h <= 0:
        raise TmdiffError(f"step size must be positive, got {h}")
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += h
        f_plus = float(f(bumped.reshape(theta.shape)))
        bumped[i] -= 2 * h
        f_minus = float(f(bumped.reshape(theta.shape)))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise TmdiffError(f"non-finite loss while probing coordinate {i}")
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(g_ad: np.ndarray, g_fd: np.ndarray) -> float:
    """Max elementwise |g_ad - g_fd| / max(|g_ad|, |g_fd|, eps_floor)."""
    g_ad = np.asarray(g_ad, dtype=np.float64).ravel()
    g_fd = np.asarray(g_fd, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), EPS_FLOOR)
    return float(np.max(np.abs(g_ad - g_fd) / denom))


def gradcheck_module(
    module: nn.Module,
    loss_fn: Callable[[nn.Module], torch.Tensor],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    coords_per_block: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autograd parameter gradients against the central-difference oracle.

    Runs in float64 (callers must pass a .double() module). With
    ``coords_per_block`` set, only a random subset of coordinates per named
    parameter is probed, which keeps large models tractable.
    """
    params = [(name, p) for name, p in module.named_parameters() if p.requires_grad]
    module.zero_grad()
    loss = loss_fn(module)
    loss.backward()
    autograd = {name: p.grad.detach().clone() for name, p in params}

    rng = np.random.default_rng(seed)
    block_errors: dict[str, float] = {}
    for name, p in params:
        n = p.numel()
        coords = (
            np.arange(n)
            if coords_per_block is None or coords_per_block >= n
            else np.sort(rng.choice(n, size=coords_per_block, replace=False))
        )
        fd = np.zeros(len(coords))
        base = p.detach().clone()
        flat = p.data.view(-1)
        with torch.no_grad():
            for j, i in enumerate(coords):
                flat[i] = base.view(-1)[i] + h
                f_plus = float(loss_fn(module))
                flat[i] = base.view(-1)[i] - h
                f_minus = float(loss_fn(module))
                flat[i] = base.view(-1)[i]
                fd[j] = (f_plus - f_minus) / (2.0 * h)
        ad = autograd[name].view(-1)[torch.as_tensor(coords)].numpy()
        block_errors[name] = relative_error(ad, fd)
    max_err = max(block_errors.values()) if block_errors else 0.0
    return GradCheckReport(max_rel_error=max_err, block_errors=block_errors, tolerance=tolerance)


def causality_probe(
    module_forward: Callable[[torch.Tensor], torch.Tensor],
    sequence_input: torch.Tensor,
    t: int,
    batched: bool = False,
    seed: int = 0,
) -> bool:
    """True iff randomizing positions > t leaves outputs at positions <= t
    bitwise unchanged.

    Inputs and outputs carry time on the first axis, or the second when
    ``batched`` (shape (B, T, ...)).
    """
    axis = 1 if batched else 0
    with torch.no_grad():
        reference = module_forward(sequence_input)
        if t + 1 >= sequence_input.shape[axis]:
            return True
        perturbed = sequence_input.clone()
        gen = torch.Generator().manual_seed(seed)
        index = (slice(None), slice(t + 1, None)) if batched else (slice(t + 1, None),)
        perturbed[index] = torch.randn(
            perturbed[index].shape, generator=gen, dtype=perturbed.dtype
        )
        out = module_forward(perturbed)
        keep = (slice(None), slice(None, t + 1)) if batched else (slice(None, t + 1),)
        return bool(torch.equal(out[keep], reference[keep]))


def param_census(sections: Mapping[str, nn.Module | None]) -> dict[str, dict[str, int]]:
    """Per-section {trainable, frozen} parameter counts; absent sections count 0."""
    census: dict[str, dict[str, int]] = {}
    for name, module in sections.items():
        trainable = frozen = 0
        if module is not None:
            for p in module.parameters():
                if p.requires_grad:
                    trainable += p.numel()
                else:
                    frozen += p.numel()
        census[name] = {"trainable": trainable, "frozen": frozen}
    return census


def total_counts(census: Mapping[str, Mapping[str, int]]) -> dict[str, int]:
    return {
        "trainable": sum(c["trainable"] for c in census.values()),
        "frozen": sum(c["frozen"] for c in census.values()),
    }


def state_checksum(module: nn.Module) -> str:
    """SHA-256 over a canonical serialization of the module's state dict.

    Tensors are written as (name, shape, float64 little-endian bytes) in
    sorted name order, so the digest is stable across runs and platforms.
    """
    digest = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        tensor = state[name]
        digest.update(name.encode("utf-8"))
        digest.update(str(tuple(tensor.shape)).encode("utf-8"))
        array = tensor.detach().cpu().to(torch.float64).numpy()
        digest.update(array.astype("<f8", copy=False).tobytes())
    return digest.hexdigest()
