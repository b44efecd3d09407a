"""Dense feed-forward network with bipolar SELU hidden units.

Forward pass, manual backpropagation, Adam and output-gradient clipping. The
network is the trainable map f from origin samples to target samples.
"""

import os
import sys
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.logger_config import get_logger
from utils.config_loader import getfloat
from utils.validation import (
    DimensionMismatchError,
    ValidationError,
    as_matrix,
    require_finite,
)

logger = get_logger(__name__)

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

HIDDEN_ACTIVATION = "bipolar-selu"
OUTPUT_ACTIVATION = "linear"


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------
def selu(x):
    """λ·x for x > 0, λ·α·(exp(x) − 1) otherwise. Works elementwise on arrays."""
    x = np.asarray(x, dtype=np.float64)
    negative = SELU_SCALE * SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, SELU_SCALE * x, negative)
    return out if out.ndim else float(out)


def selu_derivative(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, SELU_SCALE, SELU_SCALE * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def _odd_units(width: int) -> np.ndarray:
    return (np.arange(width) % 2).astype(bool)


def bipolar_selu(x) -> np.ndarray:
    """
    Bipolar SELU over the last axis.

    Unit i uses selu(x_i) when i is even and −selu(−x_i) when i is odd.
    """
    x = np.asarray(x, dtype=np.float64)
    odd = _odd_units(x.shape[-1])
    return np.where(odd, -selu(-x), selu(x))


def bipolar_selu_derivative(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    odd = _odd_units(x.shape[-1])
    return np.where(odd, selu_derivative(-x), selu_derivative(x))


def clip_output_gradient(g, bound: float = 0.1) -> np.ndarray:
    """Clamp every component of dL/dŷ into [−bound, bound]."""
    if not bound > 0:
        raise ValidationError("clip bound must be positive", field="clip_bound",
                              details={"bound": bound})
    return np.clip(np.asarray(g, dtype=np.float64), -bound, bound)


# ---------------------------------------------------------------------------
# Network and gradients
# ---------------------------------------------------------------------------
@dataclass
class ActivationCache:
    """Per-layer inputs and pre-activations kept by `forward` for `backward`."""

    layer_inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.layer_inputs[0].shape[0]


@dataclass
class GradientSet:
    weight_grads: List[np.ndarray]
    bias_grads: List[np.ndarray]

    def as_list(self) -> List[np.ndarray]:
        """Gradients interleaved in the same order as `DenseNetwork.parameters()`."""
        out = []
        for w, b in zip(self.weight_grads, self.bias_grads):
            out.extend((w, b))
        return out

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(g))) for g in self.as_list() if g.size), default=0.0)


@dataclass
class DenseNetwork:
    """Fully connected network: bipolar SELU hidden layers, linear output layer.

    weights[l] has shape (layer_dims[l], layer_dims[l + 1]); biases[l] has
    shape (layer_dims[l + 1],).
    """

    layer_dims: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    hidden_activation: str = HIDDEN_ACTIVATION
    output_activation: str = OUTPUT_ACTIVATION

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise DimensionMismatchError(
                "number of weight/bias arrays must equal the number of layer gaps",
                field="layer_dims",
                details={"layer_dims": self.layer_dims, "weights": len(self.weights),
                         "biases": len(self.biases)},
            )
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[l], self.layer_dims[l + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise DimensionMismatchError(
                    f"layer {l}: weight {w.shape} / bias {b.shape} do not match {expected}",
                    field=f"weights[{l}]",
                )
        if self.hidden_activation != HIDDEN_ACTIVATION or self.output_activation != OUTPUT_ACTIVATION:
            raise ValidationError(
                f"unsupported activations {self.hidden_activation}/{self.output_activation}",
                field="activation",
            )

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> List[np.ndarray]:
        """[W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_parameters(self, params: Sequence[np.ndarray]) -> "DenseNetwork":
        params = list(params)
        return DenseNetwork(
            layer_dims=list(self.layer_dims),
            weights=[np.asarray(p, dtype=np.float64) for p in params[0::2]],
            biases=[np.asarray(p, dtype=np.float64) for p in params[1::2]],
        )

    def copy(self) -> "DenseNetwork":
        return self.with_parameters([p.copy() for p in self.parameters()])

    def forward(self, inputs) -> Tuple[np.ndarray, ActivationCache]:
        return forward(self, inputs)

    def predict(self, inputs) -> np.ndarray:
        outputs, _ = forward(self, inputs)
        return outputs

    def backward(self, cache: ActivationCache, output_gradient) -> GradientSet:
        return backward(self, cache, output_gradient)


def forward(net: DenseNetwork, inputs) -> Tuple[np.ndarray, ActivationCache]:
    """Map a batch through the network. Returns (outputs, cache)."""
    a = as_matrix(inputs, name="inputs", dim=net.input_dim)
    layer_inputs, pre_activations = [], []
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        layer_inputs.append(a)
        z = a @ w + b
        pre_activations.append(z)
        a = z if l == last else bipolar_selu(z)
    return a, ActivationCache(layer_inputs=layer_inputs, pre_activations=pre_activations)


def backward(net: DenseNetwork, cache: ActivationCache, output_gradient) -> GradientSet:
    """
    Backpropagate dL/dŷ through the network.

    `output_gradient` holds the per-example gradient of the loss with respect
    to the network output; parameter gradients are summed over the batch and
    divided by the batch size.
    """
    delta = np.asarray(output_gradient, dtype=np.float64)
    expected = cache.pre_activations[-1].shape
    if delta.shape != expected:
        raise DimensionMismatchError(
            f"output gradient shape {delta.shape} does not match forward output {expected}",
            field="output_gradient",
        )
    batch = max(cache.batch_size, 1)
    weight_grads = [None] * net.n_layers
    bias_grads = [None] * net.n_layers
    for l in range(net.n_layers - 1, -1, -1):
        weight_grads[l] = cache.layer_inputs[l].T @ delta / batch
        bias_grads[l] = delta.sum(axis=0) / batch
        if l > 0:
            delta = (delta @ net.weights[l].T) * bipolar_selu_derivative(cache.pre_activations[l - 1])
    return GradientSet(weight_grads=weight_grads, bias_grads=bias_grads)


def init_network(layer_dims: Sequence[int], seed: int) -> DenseNetwork:
    """
    Weights ~ Normal(0, 1/fan_in), biases zero; deterministic for a given seed.
    """
    dims = list(layer_dims or [])
    if len(dims) < 2:
        raise ValidationError("need at least an input and an output dimension", field="layer_dims",
                              details={"layer_dims": dims})
    if any(int(d) != d or d < 1 for d in dims):
        raise ValidationError("layer dimensions must be positive integers", field="layer_dims",
                              details={"layer_dims": dims})
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(int(fan_in), int(fan_out))))
        biases.append(np.zeros(int(fan_out)))
    logger.debug(f"Initialized network {dims} with seed {seed}")
    return DenseNetwork(layer_dims=[int(d) for d in dims], weights=weights, biases=biases)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------
@dataclass
class AdamState:
    first_moment: List[np.ndarray]
    second_moment: List[np.ndarray]
    step_count: int = 0
    beta1: float = field(default_factory=lambda: getfloat("optimizer", "beta1", fallback=0.9))
    beta2: float = field(default_factory=lambda: getfloat("optimizer", "beta2", fallback=0.999))
    epsilon: float = field(default_factory=lambda: getfloat("optimizer", "epsilon", fallback=1e-8))
    learning_rate: float = field(default_factory=lambda: getfloat("optimizer", "learning_rate", fallback=1e-3))

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValidationError("Adam betas must lie in (0, 1)", field="optimizer",
                                  details={"beta1": self.beta1, "beta2": self.beta2})
        if not (self.epsilon > 0 and self.learning_rate > 0):
            raise ValidationError("Adam epsilon and learning rate must be positive", field="optimizer",
                                  details={"epsilon": self.epsilon, "learning_rate": self.learning_rate})

    @classmethod
    def for_parameters(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        hyper = {k: v for k, v in hyper.items() if v is not None}
        return cls(
            first_moment=[np.zeros_like(p, dtype=np.float64) for p in params],
            second_moment=[np.zeros_like(p, dtype=np.float64) for p in params],
            **hyper,
        )


def adam_step(state: AdamState, params: Sequence[np.ndarray],
              grads: GradientSet) -> Tuple[List[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns (new params, new state)."""
    grad_list = grads.as_list() if isinstance(grads, GradientSet) else list(grads)
    params = list(params)
    if len(grad_list) != len(params) or len(params) != len(state.first_moment):
        raise DimensionMismatchError("parameter, gradient and moment counts differ", field="grads")

    step = state.step_count + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grad_list, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionMismatchError(
                f"parameter {p.shape} and gradient {g.shape} shapes differ", field="grads"
            )
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * np.square(g)
        m_hat = m / correction1
        v_hat = v / correction2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)

    new_state = AdamState(
        first_moment=new_m,
        second_moment=new_v,
        step_count=step,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        learning_rate=state.learning_rate,
    )
    return new_params, new_state


def check_finite_outputs(outputs: np.ndarray) -> None:
    """Raise when a forward pass produced NaN or Inf (diverged parameters)."""
    require_finite(outputs, name="network outputs")
