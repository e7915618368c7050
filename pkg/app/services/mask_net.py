"""Two-hidden-layer masking network with exact gradients and mini-batch training.

The network maps a mixture magnitude frame x (bins) through two relu hidden
layers to two relu heads y_hat_s, y_hat_n (bins each). A weight-free mask
layer turns the heads into complementary masks and masked predictions:

    m_s = (y_hat_s + eps) / (y_hat_s + y_hat_n + 2 eps),  m_n = 1 - m_s
    y~_s = m_s * x,  y~_n = m_n * x

Matrices are bins x frames throughout; frames are the batch axis.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import List, Literal, Optional, Tuple
import numpy as np
from app.errors import ModelError, NonFiniteError, TrainingDivergedError
from app.models import TrainConfig

logger = logging.getLogger(__name__)

MASK_EPS = 1e-12


@dataclass
class MaskNetModel:
    """Weights, biases and seeds of one masking network."""

    layer_dims: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    seed: int
    train_seed: int = 0
    input_mean: Optional[np.ndarray] = None
    input_scale: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        bins = self.layer_dims[0]
        if self.input_mean is None:
            self.input_mean = np.zeros(bins)
        if self.input_scale is None:
            self.input_scale = np.ones(bins)

    @property
    def bins(self) -> int:
        return self.layer_dims[0]

    def parameters(self) -> List[np.ndarray]:
        """[W1, b1, W2, b2, W3, b3]."""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend([W, b])
        return params

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def copy(self) -> "MaskNetModel":
        return MaskNetModel(
            layer_dims=list(self.layer_dims),
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            seed=self.seed,
            train_seed=self.train_seed,
            input_mean=self.input_mean.copy(),
            input_scale=self.input_scale.copy(),
        )


@dataclass(frozen=True)
class NetOutputs:
    """Raw heads, masks and masked predictions of one forward pass."""

    y_hat_s: np.ndarray
    y_hat_n: np.ndarray
    m_s: np.ndarray
    m_n: np.ndarray
    y_tilde_s: np.ndarray
    y_tilde_n: np.ndarray


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which objective to minimise and its fixed weights.

    ``joint``: 1/2 (|y1 - y~1|^2 + |y2 - y~2|^2 - g |y1 - y~2|^2 - g |y2 - y~1|^2)
    ``df``:    1/2 (|ys - y~s|^2 + mu |yn - y~n|^2 - g |y~s - yn_o|^2)

    ``scale`` multiplies the whole objective.
    """

    kind: Literal["joint", "df"]
    gamma: float = 0.0
    mu: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True)
class Targets:
    """Frame-aligned training targets (ys/yn double as y1/y2 for ``joint``)."""

    ys: np.ndarray
    yn: np.ndarray
    yn_o: Optional[np.ndarray] = None

    def columns(self, index: np.ndarray) -> "Targets":
        return Targets(
            ys=self.ys[:, index],
            yn=self.yn[:, index],
            yn_o=None if self.yn_o is None else self.yn_o[:, index],
        )


@dataclass
class ParameterGradients:
    """Gradients aligned with ``MaskNetModel.weights`` / ``biases``."""

    weights: List[np.ndarray] = field(default_factory=list)
    biases: List[np.ndarray] = field(default_factory=list)

    def flat(self) -> List[np.ndarray]:
        grads = []
        for dW, db in zip(self.weights, self.biases):
            grads.extend([dW, db])
        return grads


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def init_model(bins: int, h1: int, h2: int, seed: int) -> MaskNetModel:
    """Glorot-uniform weights, zero biases, reproducible from `seed`."""
    if min(bins, h1, h2) < 1:
        raise ModelError(f"all layer sizes must be >= 1, got {(bins, h1, h2)}")
    layer_dims = [bins, h1, h2, 2 * bins]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MaskNetModel(layer_dims=layer_dims, weights=weights, biases=biases, seed=seed)


def _check_input(model: MaskNetModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.bins:
        raise ModelError(f"expected a ({model.bins}, frames) input, got {X.shape}")
    if np.any(X < 0):
        raise ModelError("input magnitudes must be non-negative")
    return X


def _propagate(
    model: MaskNetModel, X: np.ndarray
) -> Tuple[NetOutputs, List[np.ndarray], List[np.ndarray]]:
    """Forward pass keeping every layer input and pre-activation for backprop."""
    X = _check_input(model, X)
    a = (X - model.input_mean[:, np.newaxis]) / model.input_scale[:, np.newaxis]
    layer_inputs, pre_activations = [], []
    for layer, (W, b) in enumerate(zip(model.weights, model.biases), start=1):
        layer_inputs.append(a)
        z = W @ a + b[:, np.newaxis]
        if not np.all(np.isfinite(z)):
            raise NonFiniteError("non-finite pre-activation", layer)
        pre_activations.append(z)
        a = relu(z)

    y_hat_s, y_hat_n = a[: model.bins], a[model.bins :]
    m_s = (y_hat_s + MASK_EPS) / (y_hat_s + y_hat_n + 2.0 * MASK_EPS)
    m_n = 1.0 - m_s
    outputs = NetOutputs(
        y_hat_s=y_hat_s,
        y_hat_n=y_hat_n,
        m_s=m_s,
        m_n=m_n,
        y_tilde_s=m_s * X,
        y_tilde_n=m_n * X,
    )
    return outputs, layer_inputs, pre_activations


def forward(model: MaskNetModel, X: np.ndarray) -> NetOutputs:
    """Masked predictions for the magnitude frames in X."""
    return _propagate(model, X)[0]


def _check_shapes(*matrices: np.ndarray) -> None:
    shapes = {np.shape(m) for m in matrices}
    if len(shapes) != 1:
        raise ModelError(f"shape mismatch: {sorted(shapes)}")


def _sq(matrix: np.ndarray) -> float:
    return float(np.sum(matrix * matrix))


def objective_joint(
    y1: np.ndarray, y2: np.ndarray, out: NetOutputs, gamma: float
) -> float:
    """Two-source discriminative objective."""
    y_1, y_2 = out.y_tilde_s, out.y_tilde_n
    _check_shapes(y1, y2, y_1, y_2)
    return 0.5 * (
        _sq(y1 - y_1) + _sq(y2 - y_2) - gamma * _sq(y1 - y_2) - gamma * _sq(y2 - y_1)
    )


def objective_df(
    ys: np.ndarray,
    yn: np.ndarray,
    yn_o: np.ndarray,
    out: NetOutputs,
    mu: float,
    gamma: float,
) -> float:
    """One-source objective pushing the source estimate off the orthogonal interferer."""
    if mu < 0 or gamma < 0:
        raise ModelError(f"mu and gamma must be non-negative, got mu={mu}, gamma={gamma}")
    _check_shapes(ys, yn, yn_o, out.y_tilde_s, out.y_tilde_n)
    return 0.5 * (
        _sq(ys - out.y_tilde_s)
        + mu * _sq(yn - out.y_tilde_n)
        - gamma * _sq(out.y_tilde_s - yn_o)
    )


def evaluate_objective(spec: ObjectiveSpec, targets: Targets, out: NetOutputs) -> float:
    if spec.kind == "joint":
        value = objective_joint(targets.ys, targets.yn, out, spec.gamma)
    else:
        if targets.yn_o is None:
            raise ModelError("the df objective needs the orthogonal interferer yn_o")
        value = objective_df(
            targets.ys, targets.yn, targets.yn_o, out, spec.mu, spec.gamma
        )
    return spec.scale * value


def _prediction_gradients(
    spec: ObjectiveSpec, targets: Targets, out: NetOutputs
) -> Tuple[np.ndarray, np.ndarray]:
    """dJ/dy~_s and dJ/dy~_n."""
    y_s, y_n = out.y_tilde_s, out.y_tilde_n
    if spec.kind == "joint":
        g_s = (y_s - targets.ys) - spec.gamma * (y_s - targets.yn)
        g_n = (y_n - targets.yn) - spec.gamma * (y_n - targets.ys)
    else:
        g_s = (y_s - targets.ys) - spec.gamma * (y_s - targets.yn_o)
        g_n = spec.mu * (y_n - targets.yn)
    return spec.scale * g_s, spec.scale * g_n


def loss_and_gradient(
    model: MaskNetModel, X: np.ndarray, targets: Targets, spec: ObjectiveSpec
) -> Tuple[float, ParameterGradients]:
    """Objective value and its exact gradient with respect to every parameter."""
    outputs, layer_inputs, pre_activations = _propagate(model, X)
    loss = evaluate_objective(spec, targets, outputs)
    g_s, g_n = _prediction_gradients(spec, targets, outputs)

    # mask layer: y~_s = m_s x, y~_n = (1 - m_s) x
    X = np.asarray(X, dtype=np.float64)
    g_mask = X * (g_s - g_n)
    a, b = outputs.y_hat_s, outputs.y_hat_n
    denom_sq = (a + b + 2.0 * MASK_EPS) ** 2
    g_heads = np.vstack(
        [g_mask * (b + MASK_EPS) / denom_sq, -g_mask * (a + MASK_EPS) / denom_sq]
    )

    delta = g_heads * (pre_activations[-1] > 0)
    grads = ParameterGradients(
        weights=[np.empty(0)] * len(model.weights),
        biases=[np.empty(0)] * len(model.biases),
    )
    for index in reversed(range(len(model.weights))):
        dW = delta @ layer_inputs[index].T
        db = delta.sum(axis=1)
        if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
            raise NonFiniteError("non-finite gradient", index + 1)
        grads.weights[index] = dW
        grads.biases[index] = db
        if index > 0:
            delta = (model.weights[index].T @ delta) * (pre_activations[index - 1] > 0)
    return loss, grads


def gradient(
    model: MaskNetModel, X: np.ndarray, targets: Targets, spec: ObjectiveSpec
) -> ParameterGradients:
    """Exact analytic gradient of the objective (relu'(0) = 0)."""
    return loss_and_gradient(model, X, targets, spec)[1]


class Optimizer(ABC):
    """In-place first-order update of a parameter list."""

    @abstractmethod
    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        raise NotImplementedError


class PlainSGD(Optimizer):
    def __init__(self, learning_rate: float) -> None:
        self.learning_rate = learning_rate

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class MomentumSGD(Optimizer):
    def __init__(self, learning_rate: float, momentum: float) -> None:
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: Optional[List[np.ndarray]] = None

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v


class AdaptiveMoments(Optimizer):
    """Bias-corrected first/second moment estimates per parameter."""

    def __init__(
        self, learning_rate: float, beta1: float, beta2: float, eps: float
    ) -> None:
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if self.m is None or self.v is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + self.eps
            )


def make_optimizer(cfg: TrainConfig) -> Optimizer:
    if cfg.optimizer == "plain-sgd":
        return PlainSGD(cfg.learning_rate)
    if cfg.optimizer == "momentum-sgd":
        return MomentumSGD(cfg.learning_rate, cfg.momentum)
    return AdaptiveMoments(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


def _check_targets(X: np.ndarray, targets: Targets, spec: ObjectiveSpec) -> None:
    matrices = [X, targets.ys, targets.yn]
    if spec.kind == "df":
        if targets.yn_o is None:
            raise ModelError("the df objective needs the orthogonal interferer yn_o")
        matrices.append(targets.yn_o)
    _check_shapes(*matrices)


def standardized(model: MaskNetModel, X: np.ndarray) -> MaskNetModel:
    """Copy of `model` whose inputs are standardized per bin with X's statistics."""
    scale = X.std(axis=1)
    scale[scale == 0.0] = 1.0
    return replace(model.copy(), input_mean=X.mean(axis=1), input_scale=scale)


def train(
    model: MaskNetModel,
    X: np.ndarray,
    targets: Targets,
    spec: ObjectiveSpec,
    cfg: TrainConfig,
) -> Tuple[MaskNetModel, List[float]]:
    """Mini-batch training of a copy of `model`; returns it with the per-epoch loss."""
    if cfg.epochs == 0:
        return model, []
    X = _check_input(model, X)
    _check_targets(X, targets, spec)

    trained = standardized(model, X) if cfg.standardize_inputs else model.copy()
    trained.train_seed = cfg.seed
    rng = np.random.default_rng(cfg.seed)
    optimizer = make_optimizer(cfg)
    num_frames = X.shape[1]

    loss_trace: List[float] = []
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(num_frames) if cfg.shuffle else np.arange(num_frames)
        try:
            for start in range(0, num_frames, cfg.batch_frames):
                index = order[start : start + cfg.batch_frames]
                loss, grads = loss_and_gradient(
                    trained, X[:, index], targets.columns(index), spec
                )
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                optimizer.step(trained.parameters(), grads.flat())
            epoch_loss = evaluate_objective(spec, targets, forward(trained, X))
        except NonFiniteError as e:
            raise TrainingDivergedError(epoch) from e
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch)

        logger.debug(f"epoch {epoch}: loss {epoch_loss:.6e}")
        if loss_trace:
            previous = loss_trace[-1]
            improvement = (previous - epoch_loss) / max(abs(previous), 1e-300)
            stale = stale + 1 if improvement < cfg.min_improvement else 0
        loss_trace.append(epoch_loss)
        if stale >= cfg.patience:
            logger.info(f"Loss plateaued for {stale} epochs, stopping at epoch {epoch}")
            break
    return trained, loss_trace


RESTART_STRIDE = 1_000_003


def train_restarts(
    X: np.ndarray,
    targets: Targets,
    spec: ObjectiveSpec,
    h1: int,
    h2: int,
    cfg: TrainConfig,
) -> Tuple[MaskNetModel, List[float]]:
    """Trains `cfg.restarts` fresh networks and keeps the one with the lowest final loss.

    Restart r uses seed `cfg.seed + r * RESTART_STRIDE` for both the initial
    weights and the shuffle order, so restart 0 equals a single `train` call.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ModelError(f"expected a (bins, frames) input, got {X.shape}")
    best: Optional[Tuple[MaskNetModel, List[float]]] = None
    best_final = np.inf
    for r in range(cfg.restarts):
        seed = cfg.seed + r * RESTART_STRIDE
        model = init_model(X.shape[0], h1, h2, seed)
        trained, losses = train(model, X, targets, spec, cfg.model_copy(update={"seed": seed}))
        final = losses[-1] if losses else np.inf
        if best is None or final < best_final:
            best, best_final = (trained, losses), final
        if cfg.restarts > 1:
            logger.debug(f"restart {r} (seed {seed}): final loss {final:.6e}")
    return best
