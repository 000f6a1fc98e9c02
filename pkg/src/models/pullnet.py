"""
Pull network P_theta and its denoising training loop.

Walk: perturb a whitened state with isotropic Gaussian noise of per-component
standard deviation L. Pull: a feedforward network trained to map the noisy
state back to the clean one, i.e. to approximate orthogonal projection onto
the trajectory manifold. One network is trained per noise scale L.
"""
import logging
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field
from torch import nn

from src.utils.errors import DimensionMismatchError, InsufficientDataError, TrainingDivergenceError
from src.utils.seeding import derive_seed, make_torch_generator

logger = logging.getLogger(__name__)

_ACTIVATIONS = {"tanh": nn.Tanh, "softplus": nn.Softplus}
_DTYPES = {"float32": torch.float32, "float64": torch.float64}

# Evaluation forward passes are chunked to bound memory.
_EVAL_CHUNK = 8192


class TrainConfig(BaseModel):
    """Hyperparameters for one pull network (one noise scale)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(default=1e-3, gt=0)
    steps: int = Field(default=5000, ge=1)
    batch: int = Field(default=1024, ge=1)
    L: float = Field(default=0.1, ge=0)
    seed: int = Field(default=0, ge=0)
    hidden: Tuple[int, ...] = (256, 256)
    activation: Literal["tanh", "softplus"] = "tanh"
    dtype: Literal["float32", "float64"] = "float32"
    eval_points: int = Field(default=16384, ge=1)

    def for_scale(self, L: float, seed: int) -> "TrainConfig":
        return self.model_copy(update={"L": float(L), "seed": int(seed)})


def build_mlp(widths: Sequence[int], activation: str = "tanh") -> nn.Sequential:
    """Linear layers of the given widths with `activation` between them (not after the last)."""
    layers = []
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(nn.Linear(n_in, n_out))
        if i < len(widths) - 2:
            layers.append(_ACTIVATIONS[activation]())
    return nn.Sequential(*layers)


def init_weights(module: nn.Module, seed: int) -> None:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, from a private generator."""
    generator = make_torch_generator(seed)
    with torch.no_grad():
        for layer in module.modules():
            if isinstance(layer, nn.Linear):
                bound = 1.0 / np.sqrt(layer.in_features)
                noise = torch.rand(layer.weight.shape, generator=generator, dtype=layer.weight.dtype)
                layer.weight.copy_((2.0 * noise - 1.0) * bound)
                layer.bias.zero_()


class PullNetwork(nn.Module):
    """Feedforward map R^N -> R^N with widths [N, *hidden, N]."""

    def __init__(
        self,
        dim: int,
        hidden: Sequence[int] = (256, 256),
        activation: str = "tanh",
        L: float = 0.0,
        seed: int = 0,
        dtype: str = "float32",
    ):
        super().__init__()
        self.dim = dim
        self.widths = [dim, *hidden, dim]
        self.activation = activation
        self.L = L
        self.seed = seed
        self.dtype_name = dtype
        self.train_loss: Optional[float] = None
        self.test_loss: Optional[float] = None

        self.net = build_mlp(self.widths, activation).to(_DTYPES[dtype])
        init_weights(self.net, derive_seed(seed, "init"))

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        return self.net(y)

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype_name]

    def metadata(self) -> dict:
        return {
            "widths": self.widths,
            "activation": self.activation,
            "L": self.L,
            "seed": self.seed,
            "dtype": self.dtype_name,
            "train_loss": self.train_loss,
            "test_loss": self.test_loss,
        }


def walk(x: np.ndarray, L: float, rng: np.random.Generator) -> np.ndarray:
    """y = x + n with n ~ N(0, L^2 I)."""
    if L < 0:
        raise ValueError(f"Noise scale must be non-negative, got {L}")
    x = np.asarray(x, dtype=float)
    if L == 0:
        return x.copy()
    return x + rng.normal(0.0, L, size=x.shape)


def pull_loss(model: nn.Module, clean: torch.Tensor, noisy: torch.Tensor) -> torch.Tensor:
    """(1/N_s) sum |P(y_i) - x_i|^2, reported per state component."""
    return torch.mean((model(noisy) - clean) ** 2)


def _evaluate(
    model: nn.Module,
    data: torch.Tensor,
    noise_scale: float,
    generator: torch.Generator,
    max_points: int,
) -> float:
    if len(data) > max_points:
        stride = int(np.ceil(len(data) / max_points))
        data = data[::stride]
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(data), _EVAL_CHUNK):
            clean = data[start:start + _EVAL_CHUNK]
            noisy = clean + noise_scale * torch.randn(clean.shape, generator=generator, dtype=clean.dtype)
            total += float(torch.sum((model(noisy) - clean) ** 2))
            count += clean.numel()
    return total / max(count, 1)


def fit_denoiser(
    model: nn.Module,
    train: np.ndarray,
    test: np.ndarray,
    cfg: TrainConfig,
    noise_scale: float,
) -> Tuple[float, float]:
    """
    Adam on fresh minibatches with fresh noise each step.

    Shared by the pull network (noise_scale = L) and the autoencoder baseline
    (noise_scale = 0). Returns final (train_loss, test_loss) with fresh noise.
    """
    dtype = next(model.parameters()).dtype
    x_train = torch.as_tensor(np.asarray(train), dtype=dtype)
    x_test = torch.as_tensor(np.asarray(test), dtype=dtype)
    generator = make_torch_generator(derive_seed(cfg.seed, "batches"))
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    batch = min(cfg.batch, len(x_train))
    log_every = max(cfg.steps // 5, 1)

    model.train()
    for step in range(cfg.steps):
        index = torch.randint(len(x_train), (batch,), generator=generator)
        clean = x_train[index]
        noisy = clean + noise_scale * torch.randn(clean.shape, generator=generator, dtype=dtype)
        loss = pull_loss(model, clean, noisy)
        if not torch.isfinite(loss):
            raise TrainingDivergenceError(f"Loss became {float(loss)}", step=step)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if (step + 1) % log_every == 0:
            logger.debug("training progress", extra={"L": noise_scale, "step": step + 1, "loss": float(loss)})

    model.eval()
    eval_generator = make_torch_generator(derive_seed(cfg.seed, "evaluation"))
    train_loss = _evaluate(model, x_train, noise_scale, eval_generator, cfg.eval_points)
    test_loss = _evaluate(model, x_test, noise_scale, eval_generator, cfg.eval_points)
    if not (np.isfinite(train_loss) and np.isfinite(test_loss)):
        raise TrainingDivergenceError("Final evaluation loss is not finite", step=cfg.steps)
    return train_loss, test_loss


def train_pull(points: np.ndarray, cfg: TrainConfig) -> Tuple[PullNetwork, float, float]:
    """
    Train a pull network at scale cfg.L on whitened points.

    Odd-indexed points train, even-indexed points test.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) < 2:
        raise InsufficientDataError(f"Need at least 2 whitened points, got shape {points.shape}")

    train, test = points[1::2], points[0::2]
    net = PullNetwork(points.shape[1], cfg.hidden, cfg.activation, L=cfg.L, seed=cfg.seed, dtype=cfg.dtype)
    train_loss, test_loss = fit_denoiser(net, train, test, cfg, cfg.L)
    net.train_loss, net.test_loss = train_loss, test_loss

    logger.info(
        "trained pull network",
        extra={"L": cfg.L, "train_loss": train_loss, "test_loss": test_loss, "steps": cfg.steps},
    )
    return net, train_loss, test_loss


def pull(net: PullNetwork, y: np.ndarray) -> np.ndarray:
    """Deterministic forward pass P_theta(y) for one state or an (M, N) array."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != net.dim:
        raise DimensionMismatchError(f"Pull network expects dimension {net.dim}, got {y.shape[-1]}")
    with torch.no_grad():
        out = net(torch.as_tensor(y, dtype=net.torch_dtype))
    return out.numpy().astype(float)


def overfit_ratio(train_loss: float, test_loss: float) -> float:
    return test_loss / train_loss if train_loss > 0 else float("inf")
