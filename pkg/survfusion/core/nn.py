"""
One-hidden-layer risk network with hand-written backpropagation.

    eta = W2 . dropout(relu(layernorm(W1 . x + b1))) + b2

Layer normalization (eps = 1e-5) normalizes each hidden vector to zero mean
and unit variance before the gain/bias. Dropout is inverted, so eval mode
needs no rescaling. For intermediate fusion a ``CtProjection`` sits in front
of the head and its gradients flow through the concatenated input.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import DimensionMismatchError, InvalidDimError
from ..utils.seeding import derive_seed, make_rng
from .cohort_io import SurvivalData
from .fusion import CtProjection, concat_embeddings, ct_project
from .survival_core import cox_loss_and_grad


LN_EPS = 1e-5


class MlpConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    input_dim: int = Field(..., ge=1)
    hidden_dim: int = Field(128, ge=32, le=512)
    dropout: float = Field(0.0, ge=0.0, le=0.5)
    seed: int = Field(0, ge=0, lt=2 ** 64)


@dataclass
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    W2: np.ndarray
    b2: np.ndarray  # shape (1,) so optimizers can update it in place

    NAMES = ("W1", "b1", "ln_gain", "ln_bias", "W2", "b2")

    @property
    def input_dim(self) -> int:
        return int(self.W1.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.W1.shape[0])

    def named(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.NAMES}

    def copy(self) -> "MlpParams":
        return MlpParams(**{k: v.copy() for k, v in self.named().items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.named().values())


def init_params(config: MlpConfig) -> MlpParams:
    """Uniform fan-in init (bound 1/sqrt(fan_in)); LN gain 1, biases 0."""
    if config.input_dim < 1 or config.hidden_dim < 1:
        raise InvalidDimError(
            f"input_dim and hidden_dim must be >= 1, got {config.input_dim} and {config.hidden_dim}"
        )
    rng = make_rng(config.seed)
    bound1 = 1.0 / np.sqrt(config.input_dim)
    bound2 = 1.0 / np.sqrt(config.hidden_dim)
    return MlpParams(
        W1=rng.uniform(-bound1, bound1, size=(config.hidden_dim, config.input_dim)),
        b1=np.zeros(config.hidden_dim),
        ln_gain=np.ones(config.hidden_dim),
        ln_bias=np.zeros(config.hidden_dim),
        W2=rng.uniform(-bound2, bound2, size=(1, config.hidden_dim)),
        b2=np.zeros(1),
    )


@dataclass
class ForwardCache:
    x: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    pre_relu: np.ndarray
    mask: Optional[np.ndarray]
    hidden: np.ndarray


def _forward(params: MlpParams, x, mode: str = "eval",
             dropout_rng: Optional[np.random.Generator] = None,
             dropout: float = 0.0) -> Tuple[np.ndarray, ForwardCache]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise DimensionMismatchError(f"input has {x.shape[1]} columns, network expects {params.input_dim}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")

    z = x @ params.W1.T + params.b1
    mu = z.mean(axis=1, keepdims=True)
    centered = z - mu
    var = (centered ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = centered * inv_std
    pre_relu = xhat * params.ln_gain + params.ln_bias
    a = np.maximum(pre_relu, 0.0)

    mask = None
    if mode == "train" and dropout > 0.0:
        if dropout_rng is None:
            raise ValueError("train mode with dropout needs a dropout_rng")
        keep = 1.0 - dropout
        mask = (dropout_rng.random(a.shape) < keep) / keep
        a = a * mask

    eta = (a @ params.W2.T).ravel() + params.b2[0]
    return eta, ForwardCache(x=x, xhat=xhat, inv_std=inv_std, pre_relu=pre_relu, mask=mask, hidden=a)


def forward(params: MlpParams, x, mode: str = "eval",
            dropout_rng: Optional[np.random.Generator] = None,
            dropout: float = 0.0) -> np.ndarray:
    """Risk scores for each row of ``x``."""
    return _forward(params, x, mode, dropout_rng, dropout)[0]


def backward(params: MlpParams, cache: ForwardCache,
             grad_eta: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Gradients of a scalar loss w.r.t. the parameters and the input rows."""
    g = np.asarray(grad_eta, dtype=np.float64).ravel()
    grads: Dict[str, np.ndarray] = {
        "W2": g[None, :] @ cache.hidden,
        "b2": np.array([g.sum()]),
    }
    d_hidden = g[:, None] * params.W2
    if cache.mask is not None:
        d_hidden = d_hidden * cache.mask
    d_pre = d_hidden * (cache.pre_relu > 0)
    grads["ln_gain"] = (d_pre * cache.xhat).sum(axis=0)
    grads["ln_bias"] = d_pre.sum(axis=0)

    d_xhat = d_pre * params.ln_gain
    d_z = cache.inv_std * (
        d_xhat
        - d_xhat.mean(axis=1, keepdims=True)
        - cache.xhat * (d_xhat * cache.xhat).mean(axis=1, keepdims=True)
    )
    grads["W1"] = d_z.T @ cache.x
    grads["b1"] = d_z.sum(axis=0)
    d_x = d_z @ params.W1
    return grads, d_x


@dataclass
class RiskModel:
    """A risk head over one modality, or over ``[wsi, projected ct]``."""

    config: MlpConfig
    params: MlpParams
    modalities: Tuple[str, ...]
    projection: Optional[CtProjection] = None

    # parameters penalized by L1 and weight decay
    WEIGHT_NAMES = ("mlp.W1", "mlp.W2", "projection.W")

    @property
    def is_fused(self) -> bool:
        return self.projection is not None

    def named_parameters(self) -> Dict[str, np.ndarray]:
        named = {f"mlp.{k}": v for k, v in self.params.named().items()}
        if self.projection is not None:
            named["projection.W"] = self.projection.W
            named["projection.b"] = self.projection.b
        return named

    def weight_names(self) -> Sequence[str]:
        return [n for n in self.WEIGHT_NAMES if n in self.named_parameters()]

    def copy(self) -> "RiskModel":
        projection = None
        if self.projection is not None:
            projection = CtProjection(W=self.projection.W.copy(), b=self.projection.b.copy())
        return RiskModel(config=self.config, params=self.params.copy(),
                         modalities=tuple(self.modalities), projection=projection)

    def _input(self, features: Dict[str, np.ndarray]) -> np.ndarray:
        missing = [m for m in self.modalities if m not in features]
        if missing:
            raise KeyError(f"features lack modalities {missing}")
        if self.projection is None:
            return np.asarray(features[self.modalities[0]], dtype=np.float64)
        wsi, ct = self.modalities
        return concat_embeddings(features[wsi], ct_project(self.projection, features[ct]))

    def predict(self, features: Dict[str, np.ndarray]) -> np.ndarray:
        """Eval-mode risk scores; a deterministic function of params and inputs."""
        return forward(self.params, self._input(features), mode="eval")

    def l1_norm(self) -> float:
        named = self.named_parameters()
        return float(sum(np.abs(named[n]).sum() for n in self.weight_names()))

    def loss_and_grads(self, features: Dict[str, np.ndarray], data: SurvivalData,
                       l1_penalty: float = 0.0, train: bool = False,
                       dropout_rng: Optional[np.random.Generator] = None
                       ) -> Tuple[float, Dict[str, np.ndarray]]:
        """Cox loss over ``data``'s risk sets plus the L1 term, with gradients."""
        x = self._input(features)
        eta, cache = _forward(self.params, x, mode="train" if train else "eval",
                              dropout_rng=dropout_rng, dropout=self.config.dropout)
        loss, grad_eta = cox_loss_and_grad(eta, data)
        mlp_grads, d_x = backward(self.params, cache, grad_eta)
        grads = {f"mlp.{k}": v for k, v in mlp_grads.items()}

        if self.projection is not None:
            wsi, ct = self.modalities
            wsi_dim = np.asarray(features[wsi]).shape[1]
            d_proj = d_x[:, wsi_dim:]
            ct_x = np.asarray(features[ct], dtype=np.float64)
            grads["projection.W"] = d_proj.T @ ct_x
            grads["projection.b"] = d_proj.sum(axis=0)

        if l1_penalty:
            named = self.named_parameters()
            for name in self.weight_names():
                loss += l1_penalty * float(np.abs(named[name]).sum())
                grads[name] = grads[name] + l1_penalty * np.sign(named[name])
        return loss, grads


def build_model(modalities: Sequence[str], dims: Dict[str, int], hidden_dim: int = 128,
                dropout: float = 0.0, seed: int = 0) -> RiskModel:
    """Risk model for one modality, or intermediate fusion of two.

    For two modalities the second is projected to the first's dimension and
    the head sees ``2 * dims[first]`` inputs.
    """
    modalities = tuple(modalities)
    if len(modalities) == 1:
        input_dim = dims[modalities[0]]
        projection = None
    elif len(modalities) == 2:
        wsi, ct = modalities
        input_dim = 2 * dims[wsi]
        projection = CtProjection.initialize(dims[wsi], dims[ct], derive_seed(seed, "projection"))
    else:
        raise ValueError(f"expected one or two modalities, got {modalities}")
    config = MlpConfig.model_construct(input_dim=input_dim, hidden_dim=hidden_dim,
                                       dropout=dropout, seed=seed)
    return RiskModel(config=config, params=init_params(config),
                     modalities=modalities, projection=projection)


@dataclass
class AdamW:
    """Adam with decoupled weight decay on a named set of parameters."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
             lr: float, weight_decay: float = 0.0, decay_names: Sequence[str] = ()) -> None:
        """Update ``params`` in place."""
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1 ** t)
            v_hat = self.v[name] / (1.0 - self.beta2 ** t)
            if weight_decay and name in decay_names:
                p *= 1.0 - lr * weight_decay
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
