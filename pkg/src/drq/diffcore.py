"""Differentiable substrate: named parameter stores, dense MLPs, AdamW, gradient checks.

Reverse-mode gradients are recorded on torch's dynamic tape. Everything the
rest of the package touches goes through the small API here so that the
optimizer, initialization, and checkpoint layout stay under our control.
"""

from __future__ import annotations

import enum
import io
import json
import math
import os
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigError, ShapeError, StateError

CHECKPOINT_FORMAT = "drq-arrays"
CHECKPOINT_VERSION = 1


class Activation(str, enum.Enum):
    ELU = "elu"
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if self is Activation.ELU:
            return torch.nn.functional.elu(x)
        if self is Activation.RELU:
            return torch.relu(x)
        if self is Activation.TANH:
            return torch.tanh(x)
        return x


@dataclass(frozen=True)
class MlpSpec:
    """Shape of a dense network.

    ``activations`` has one entry per affine layer, i.e. ``len(hidden_dims) + 1``.
    """

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activations: tuple[Activation, ...]

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"all MLP dims must be >= 1, got {dims}")
        if len(self.activations) != len(self.hidden_dims) + 1:
            raise ConfigError(
                f"need {len(self.hidden_dims) + 1} activations, got {len(self.activations)}"
            )

    @classmethod
    def build(
        cls,
        input_dim: int,
        hidden_dims,
        output_dim: int,
        hidden: Activation | str = Activation.ELU,
        output: Activation | str = Activation.IDENTITY,
    ) -> MlpSpec:
        hidden_dims = tuple(int(h) for h in hidden_dims)
        acts = (Activation(hidden),) * len(hidden_dims) + (Activation(output),)
        return cls(int(input_dim), hidden_dims, int(output_dim), acts)

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class ParamStore:
    """Named parameter tensors plus their AdamW state."""

    params: dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg: dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg_sq: dict[str, torch.Tensor] = field(default_factory=dict)
    step: int = 0

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def add(self, name: str, value) -> None:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = torch.as_tensor(np.asarray(value)).clone()
        self.params[name] = t.requires_grad_(True)
        self.exp_avg[name] = torch.zeros_like(t)
        self.exp_avg_sq[name] = torch.zeros_like(t)

    def merge(self, other: ParamStore, prefix: str = "") -> ParamStore:
        for name, value in other.params.items():
            self.add(prefix + name, value.detach())
        return self

    def clone(self) -> ParamStore:
        out = ParamStore(step=self.step)
        for name, value in self.params.items():
            out.params[name] = value.detach().clone().requires_grad_(True)
            out.exp_avg[name] = self.exp_avg[name].clone()
            out.exp_avg_sq[name] = self.exp_avg_sq[name].clone()
        return out

    def frozen(self) -> ParamStore:
        """Detached view sharing storage: usable in a forward pass that must not
        propagate gradient into these parameters."""
        return ParamStore(params={n: p.detach() for n, p in self.params.items()})

    def copy_from(self, other: ParamStore) -> None:
        """Hard copy of parameter values (optimizer state untouched)."""
        with torch.no_grad():
            for name, value in self.params.items():
                src = other.params[name]
                if src.shape != value.shape:
                    raise ShapeError(f"{name}: {tuple(src.shape)} vs {tuple(value.shape)}")
                value.copy_(src)

    def to(self, dtype: torch.dtype) -> ParamStore:
        out = ParamStore(step=self.step)
        for name, value in self.params.items():
            out.params[name] = value.detach().to(dtype).requires_grad_(True)
            out.exp_avg[name] = self.exp_avg[name].to(dtype)
            out.exp_avg_sq[name] = self.exp_avg_sq[name].to(dtype)
        return out

    def numel(self) -> int:
        return sum(p.numel() for p in self.params.values())

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name, value in self.params.items():
            out[f"{prefix}param/{name}"] = value.detach().numpy().copy()
            out[f"{prefix}m/{name}"] = self.exp_avg[name].numpy().copy()
            out[f"{prefix}v/{name}"] = self.exp_avg_sq[name].numpy().copy()
        out[f"{prefix}step"] = np.asarray(self.step, dtype=np.int64)
        return out

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray], prefix: str) -> None:
        with torch.no_grad():
            for name, value in self.params.items():
                src = arrays[f"{prefix}param/{name}"]
                if tuple(src.shape) != tuple(value.shape):
                    raise ShapeError(f"{name}: checkpoint {src.shape} vs {tuple(value.shape)}")
                value.copy_(torch.from_numpy(np.array(src)))
                self.exp_avg[name].copy_(torch.from_numpy(np.array(arrays[f"{prefix}m/{name}"])))
                self.exp_avg_sq[name].copy_(
                    torch.from_numpy(np.array(arrays[f"{prefix}v/{name}"]))
                )
        self.step = int(arrays[f"{prefix}step"])


def _layer_names(prefix: str, i: int) -> tuple[str, str]:
    return f"{prefix}{i}.weight", f"{prefix}{i}.bias"


def mlp_init(spec: MlpSpec, seed, prefix: str = "", dtype=np.float32) -> ParamStore:
    """Xavier-uniform weights, zero biases. ``seed`` may be an int or a numpy Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    store = ParamStore()
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w_name, b_name = _layer_names(prefix, i)
        store.add(w_name, rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        store.add(b_name, np.zeros(fan_out, dtype=dtype))
    return store


def mlp_forward(params: ParamStore, spec: MlpSpec, x: torch.Tensor, prefix: str = "") -> torch.Tensor:
    if x.shape[-1] != spec.input_dim:
        raise ShapeError(f"expected input dim {spec.input_dim}, got {x.shape[-1]}")
    h = x
    for i, act in enumerate(spec.activations):
        w_name, b_name = _layer_names(prefix, i)
        h = act(h @ params[w_name] + params[b_name])
    return h


def stop_gradient(x: torch.Tensor) -> torch.Tensor:
    return x.detach()


def backward(loss: torch.Tensor, params: ParamStore, retain_graph: bool = False) -> dict[str, torch.Tensor]:
    """Gradient of a scalar loss w.r.t. every parameter in ``params``.

    Parameters that did not take part in the computation get zeros.
    """
    if loss.dim() != 0 and loss.numel() != 1:
        raise StateError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    names = list(params.params)
    tensors = [params.params[n] for n in names]
    if not loss.requires_grad:
        return {n: torch.zeros_like(t) for n, t in zip(names, tensors)}
    grads = torch.autograd.grad(loss.reshape(()), tensors, allow_unused=True, retain_graph=retain_graph)
    return {
        n: (torch.zeros_like(t) if g is None else g) for n, t, g in zip(names, tensors, grads)
    }


def adamw_step(
    params: ParamStore,
    grads: Mapping[str, torch.Tensor],
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParamStore:
    """One decoupled-weight-decay Adam step, in place."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if set(grads) != set(params.params):
        raise ConfigError("gradient keys do not match parameter names")
    b1, b2 = betas
    params.step += 1
    bc1 = 1.0 - b1**params.step
    bc2 = 1.0 - b2**params.step
    with torch.no_grad():
        for name, p in params.params.items():
            g = grads[name]
            if weight_decay:
                p.mul_(1.0 - lr * weight_decay)
            m = params.exp_avg[name].mul_(b1).add_(g, alpha=1.0 - b1)
            v = params.exp_avg_sq[name].mul_(b2).addcmul_(g, g, value=1.0 - b2)
            denom = (v / bc2).sqrt_().add_(eps)
            p.addcdiv_(m, denom, value=-lr / bc1)
    return params


# --- gradient checking -------------------------------------------------------


def relative_error(a: float, b: float, floor: float = 1e-10) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(
    loss_fn: Callable[[], torch.Tensor],
    params: ParamStore,
    rng: np.random.Generator,
    h: float = 1e-5,
    n_directions: int = 1,
    n_coords: int = 2,
) -> float:
    """Compare analytic gradients with central finite differences.

    ``loss_fn`` must rebuild the loss from the current values in ``params``
    (float64). Checks random unit directions in the full parameter space and a
    few random single coordinates. Returns the worst relative error.
    """
    analytic = backward(loss_fn(), params)
    names = list(params.params)
    worst = 0.0

    def at_offset(direction: dict[str, torch.Tensor], scale: float) -> float:
        with torch.no_grad():
            for n in names:
                params.params[n].add_(direction[n], alpha=scale)
        try:
            with torch.no_grad():
                return float(loss_fn())
        finally:
            with torch.no_grad():
                for n in names:
                    params.params[n].sub_(direction[n], alpha=scale)

    probes = []
    for _ in range(n_directions):
        d = {n: torch.from_numpy(rng.standard_normal(tuple(params[n].shape))).to(params[n].dtype) for n in names}
        norm = math.sqrt(sum(float((v * v).sum()) for v in d.values()))
        probes.append({n: v / norm for n, v in d.items()})
    sizes = np.array([params[n].numel() for n in names])
    for _ in range(n_coords):
        k = rng.choice(len(names), p=sizes / sizes.sum())
        flat = int(rng.integers(sizes[k]))
        d = {n: torch.zeros_like(params[n]) for n in names}
        d[names[k]].view(-1)[flat] = 1.0
        probes.append(d)
    for d in probes:
        numeric = (at_offset(d, h) - at_offset(d, -h)) / (2 * h)
        exact = sum(float((analytic[n] * d[n]).sum()) for n in names)
        worst = max(worst, relative_error(exact, numeric))
    return worst


# --- checkpoint container ----------------------------------------------------


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays plus JSON metadata to a versioned ``.npz`` container.

    Each array keeps its dtype and shape; loading returns bit-identical data.
    """
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "meta": meta or {}}
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    if "__header__" in payload:
        raise ConfigError("'__header__' is a reserved array name")
    payload["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    raw = arrays.pop("__header__", None)
    if raw is None:
        raise StateError(f"{path}: not a {CHECKPOINT_FORMAT} container")
    header = json.loads(raw.tobytes().decode())
    if header.get("format") != CHECKPOINT_FORMAT:
        raise StateError(f"{path}: unknown container format {header.get('format')!r}")
    if header.get("version") != CHECKPOINT_VERSION:
        raise StateError(f"{path}: unsupported container version {header.get('version')}")
    return arrays, header["meta"]
