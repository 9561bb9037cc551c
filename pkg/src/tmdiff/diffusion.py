"""Forward noising, noise schedule, training objective, and the DDPM/DDIM
samplers.

Step indices are 1-based (k in 1..K) to match the closed form
x_k = sqrt(abar_k) x_0 + sqrt(1 - abar_k) eps; internally arrays are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
import torch

from .conditioning import ConditioningBundle
from .errors import ConfigurationError, TrainingDivergedError

SCHEDULE_KINDS = ("linear",)


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray  # (K,) float64 in (0, 1)

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        object.__setattr__(self, "betas", b)
        if b.ndim != 1 or b.size < 2:
            raise ConfigurationError("schedule needs at least 2 steps")
        if (b <= 0).any() or (b >= 1).any():
            raise ConfigurationError("betas must lie strictly inside (0, 1)")

    @property
    def steps(self) -> int:
        return int(self.betas.size)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def alpha_bar(self, k: int | np.ndarray | torch.Tensor) -> np.ndarray:
        """Cumulative product at 1-based step(s) k."""
        idx = np.asarray(k, dtype=np.int64) - 1
        if (idx < 0).any() or (idx >= self.steps).any():
            raise IndexError(f"step index out of range 1..{self.steps}")
        return self.alpha_bars[idx]


def make_schedule(
    kind: str = "linear",
    steps: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end inclusive."""
    if kind not in SCHEDULE_KINDS:
        raise ConfigurationError(f"unknown schedule kind {kind!r}; choose from {SCHEDULE_KINDS}")
    if steps < 2:
        raise ConfigurationError(f"schedule needs at least 2 steps, got {steps}")
    return NoiseSchedule(betas=np.linspace(beta_start, beta_end, steps))


def scaled_toy_betas(steps: int, reference_steps: int = 1000) -> tuple[float, float]:
    """Beta endpoints for a shortened schedule that keeps the cumulative
    noising of the reference-length schedule (so abar_K stays near zero)."""
    scale = reference_steps / steps
    return 1e-4 * scale, 0.02 * scale


@dataclass
class DiffusionState:
    x_k: torch.Tensor
    k: torch.Tensor        # (B,) 1-based step indices
    epsilon: torch.Tensor  # the injected standard normal draw


def forward_noise(
    x_0: torch.Tensor,
    k: int | torch.Tensor,
    epsilon: torch.Tensor,
    schedule: NoiseSchedule,
) -> DiffusionState:
    """Closed-form forward process: x_k = sqrt(abar_k) x_0 + sqrt(1-abar_k) eps."""
    if epsilon.shape != x_0.shape:
        raise ConfigurationError("epsilon must be shaped like x_0")
    k_tensor = torch.as_tensor(k, dtype=torch.long, device=x_0.device).reshape(-1)
    if k_tensor.numel() == 1 and x_0.dim() > 0:
        k_tensor = k_tensor.expand(x_0.shape[0] if x_0.dim() > 1 else 1)
    abar = torch.as_tensor(schedule.alpha_bar(k_tensor.cpu().numpy()), dtype=x_0.dtype, device=x_0.device)
    shape = (-1,) + (1,) * (x_0.dim() - 1)
    abar = abar.reshape(shape)
    x_k = torch.sqrt(abar) * x_0 + torch.sqrt(1.0 - abar) * epsilon
    return DiffusionState(x_k=x_k, k=k_tensor, epsilon=epsilon)


class NoisePredictor(Protocol):
    def predict_noise(
        self,
        x_k: torch.Tensor,
        k: torch.Tensor,
        c_global: torch.Tensor | None,
        c_seq: torch.Tensor | None,
    ) -> torch.Tensor: ...


def diffusion_loss(
    model: NoisePredictor,
    x_0: torch.Tensor,
    conditions: ConditioningBundle,
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Noise-prediction MSE on uniformly sampled steps."""
    b = x_0.shape[0]
    k = torch.randint(1, schedule.steps + 1, (b,), generator=generator)
    epsilon = torch.randn(x_0.shape, generator=generator, dtype=x_0.dtype)
    state = forward_noise(x_0, k, epsilon, schedule)
    eps_hat = model.predict_noise(state.x_k, state.k, conditions.c_global, conditions.c_seq)
    return ((epsilon - eps_hat) ** 2).mean()


def training_step(
    model,
    batch: tuple[torch.Tensor, torch.Tensor],
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
    optimizer: torch.optim.Optimizer | None = None,
) -> float:
    """One optimization step over a (input images, target stack) batch.

    Conditions are computed once per batch from the input window; gradients
    flow through adapters, projections, conditioning, U-Net and the vision
    encoder but never into frozen backbone weights. Raises
    TrainingDivergedError on a non-finite loss.
    """
    images_in, x_0 = batch
    conditions = model.conditions(images_in)
    loss = diffusion_loss(model, x_0, conditions, schedule, generator)
    if not torch.isfinite(loss):
        per_sample = ((x_0 - x_0) if x_0.numel() == 0 else x_0).reshape(x_0.shape[0], -1)
        finite = torch.isfinite(per_sample).all(dim=1)
        bad = (~finite).nonzero().flatten().tolist()
        raise TrainingDivergedError(
            "non-finite diffusion loss",
            diagnostics={"batch_size": int(x_0.shape[0]), "non_finite_inputs": bad},
        )
    if optimizer is not None:
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
    return float(loss.detach())


def _predict(model, x, k_value, conditions):
    k = torch.full((x.shape[0],), int(k_value), dtype=torch.long)
    c_global = conditions.c_global if conditions is not None else None
    c_seq = conditions.c_seq if conditions is not None else None
    return model.predict_noise(x, k, c_global, c_seq)


@torch.no_grad()
def sample_ddpm(
    model: NoisePredictor,
    schedule: NoiseSchedule,
    conditions: ConditioningBundle | None,
    shape: tuple[int, ...],
    generator: torch.Generator | None = None,
    x_start: torch.Tensor | None = None,
    dtype: torch.dtype = torch.float32,
    stochastic: bool = True,
) -> torch.Tensor:
    """Ancestral sampling from x_K ~ N(0, I) down to x_0.

    Uses the standard posterior mean with variance
    beta_tilde_k = (1 - abar_{k-1}) / (1 - abar_k) * beta_k. With
    ``stochastic=False`` the per-step noise draws are zero (test oracle hook).
    """
    x = x_start if x_start is not None else torch.randn(shape, generator=generator, dtype=dtype)
    abars = schedule.alpha_bars
    alphas = schedule.alphas
    betas = schedule.betas
    for k in range(schedule.steps, 0, -1):
        i = k - 1
        eps_hat = _predict(model, x, k, conditions)
        mean = (x - float(betas[i] / np.sqrt(1.0 - abars[i])) * eps_hat) / float(np.sqrt(alphas[i]))
        if k > 1 and stochastic:
            var = (1.0 - abars[i - 1]) / (1.0 - abars[i]) * betas[i]
            noise = torch.randn(x.shape, generator=generator, dtype=dtype)
            x = mean + float(np.sqrt(var)) * noise
        else:
            x = mean
    return x


@torch.no_grad()
def sample_ddim(
    model: NoisePredictor,
    schedule: NoiseSchedule,
    conditions: ConditioningBundle | None,
    shape: tuple[int, ...],
    steps: int = 50,
    eta: float = 0.0,
    generator: torch.Generator | None = None,
    x_start: torch.Tensor | None = None,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Accelerated sampling over an evenly spaced subsequence of steps.

    With eta=0 the update is deterministic: the output is a pure function of
    (x_K, conditions, model weights).
    """
    if steps > schedule.steps:
        raise ConfigurationError(f"ddim steps {steps} exceeds schedule length {schedule.steps}")
    if steps < 1:
        raise ConfigurationError("ddim needs at least one step")
    x = x_start if x_start is not None else torch.randn(shape, generator=generator, dtype=dtype)
    ks = np.unique(np.linspace(1, schedule.steps, steps).round().astype(int))[::-1]
    abars = schedule.alpha_bars
    for j, k in enumerate(ks):
        abar_k = abars[k - 1]
        abar_prev = abars[ks[j + 1] - 1] if j + 1 < len(ks) else 1.0
        eps_hat = _predict(model, x, int(k), conditions, dtype)
        x0_hat = (x - np.sqrt(1.0 - abar_k) * eps_hat) / np.sqrt(abar_k)
        sigma = eta * np.sqrt((1.0 - abar_prev) / (1.0 - abar_k)) * np.sqrt(
            max(1.0 - abar_k / abar_prev, 0.0)
        )
        direction = np.sqrt(max(1.0 - abar_prev - sigma**2, 0.0)) * eps_hat
        x = np.sqrt(abar_prev) * x0_hat + direction
        if sigma > 0:
            x = x + sigma * torch.randn(x.shape, generator=generator, dtype=dtype)
    return x
