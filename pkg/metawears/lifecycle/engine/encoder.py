"""
Fully-connected feature encoder with exact backpropagation.

Layers are stored as `(out, in)` weight matrices, so a batch `X` of shape `(n, in)` maps to `X @ W.T + b`. Every
hidden layer is followed by ReLU, the last layer is affine so features can take any value in R^D.
"""
import hashlib
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np

from ..exceptions import ConfigurationError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

FeatureVector = np.ndarray  # Length `feature_dim`, or `(n, feature_dim)` for a batch

MAX_GRAD_CHECK_PARAMETERS = 10_000
FINITE_DIFFERENCE_STEP = 1e-4
ABSOLUTE_TOLERANCE = 1e-7

T = TypeVar('T', bound='LayerTensors')


class Activation(Enum):
    RELU = 'relu'


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_layers: Tuple[int, ...] = (64, 32)
    feature_dim: int = 16
    activation: Activation = Activation.RELU
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'hidden_layers', tuple(self.hidden_layers))
        if isinstance(self.activation, str):
            try:
                object.__setattr__(self, 'activation', Activation(self.activation))
            except ValueError as e:
                raise ConfigurationError(f'Activation={self.activation} is not supported') from e
        if self.input_dim < 1:
            raise ConfigurationError(f'input-dim={self.input_dim} must be positive')
        if self.feature_dim < 1:
            raise ConfigurationError(f'feature-dim={self.feature_dim} must be positive')
        if not self.hidden_layers or any(width < 1 for width in self.hidden_layers):
            raise ConfigurationError(f'hidden-layers={list(self.hidden_layers)} must be a non empty list '
                                     f'of positive widths')
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f'seed={self.seed} is not an unsigned 64-bit integer')

    @property
    def layer_dims(self) -> List[int]:
        return [self.input_dim, *self.hidden_layers, self.feature_dim]

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        dims = self.layer_dims
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_parameters(self) -> int:
        return sum(rows * cols + rows for rows, cols in self.layer_shapes)


@dataclass
class LayerTensors:
    weights: List[np.ndarray]
    biases: List[np.ndarray] = field(default_factory=list)

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [weight.shape for weight in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_parameters(self) -> int:
        return sum(weight.size + bias.size for weight, bias in zip(self.weights, self.biases))

    @classmethod
    def zeros_like(cls: Type[T], other: 'LayerTensors') -> T:
        return cls([np.zeros_like(weight) for weight in other.weights],
                   [np.zeros_like(bias) for bias in other.biases])

    @classmethod
    def from_vector(cls: Type[T], vector: np.ndarray, shapes: Sequence[Tuple[int, int]]) -> T:
        weights, biases = [], []
        offset = 0
        for rows, cols in shapes:
            weights.append(vector[offset:offset + rows * cols].reshape(rows, cols).copy())
            offset += rows * cols
            biases.append(vector[offset:offset + rows].copy())
            offset += rows
        if offset != vector.size:
            raise ShapeError(f'Vector of length {vector.size} does not match shapes={list(shapes)}')
        return cls(weights, biases)

    def to_vector(self) -> np.ndarray:
        """
        :return: Flat view of every parameter, per layer weights (row-major) then biases
        """
        parts = []
        for weight, bias in zip(self.weights, self.biases):
            parts.append(weight.ravel())
            parts.append(bias.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def copy(self: T) -> T:
        return type(self)([weight.copy() for weight in self.weights], [bias.copy() for bias in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))
                   for weight, bias in zip(self.weights, self.biases))

    def check_congruent(self, other: 'LayerTensors'):
        if self.n_layers != other.n_layers:
            raise ShapeError(f'Layer count {self.n_layers} != {other.n_layers}')
        for i, (weight, other_weight, bias, other_bias) in enumerate(zip(self.weights, other.weights,
                                                                         self.biases, other.biases)):
            if weight.shape != other_weight.shape or bias.shape != other_bias.shape:
                raise ShapeError(f'Layer {i} shapes differ: {weight.shape}/{bias.shape} != '
                                 f'{other_weight.shape}/{other_bias.shape}')


class EncoderParams(LayerTensors):
    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[0]

    def checksum(self) -> str:
        """
        :return: sha256 over the layer shapes and the little-endian float64 values
        """
        digest = hashlib.sha256()
        for weight, bias in zip(self.weights, self.biases):
            digest.update(struct.pack('<II', *weight.shape))
            digest.update(weight.astype('<f8').tobytes())
            digest.update(bias.astype('<f8').tobytes())
        return digest.hexdigest()


class ParamGrads(LayerTensors):
    pass


@dataclass
class ForwardCache:
    activations: List[np.ndarray]  # Input of every layer, `activations[0]` is the network input
    pre_activations: List[np.ndarray]  # Affine output of every layer


@dataclass
class GradCheckReport:
    max_relative_error: float
    max_absolute_error: float
    n_parameters: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def init_params(config: EncoderConfig) -> EncoderParams:
    """
    Zero-mean normal weights with std `sqrt(2 / fan_in)`, zero biases. Deterministic in `config.seed`
    """
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for rows, cols in config.layer_shapes:
        weights.append(rng.normal(0., np.sqrt(2. / cols), size=(rows, cols)))
        biases.append(np.zeros(rows))
    return EncoderParams(weights, biases)


def _as_batch(params: LayerTensors, inputs: np.ndarray) -> Tuple[np.ndarray, bool]:
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 1
    batch = inputs[np.newaxis, :] if single else inputs
    if batch.ndim != 2 or batch.shape[1] != params.weights[0].shape[1]:
        raise ShapeError(f'Input shape {inputs.shape} does not match encoder input-dim={params.weights[0].shape[1]}')
    return batch, single


def forward(params: EncoderParams, inputs: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    batch, _ = _as_batch(params, inputs)
    activations = [batch]
    pre_activations = []
    current = batch
    last = params.n_layers - 1
    for i, (weight, bias) in enumerate(zip(params.weights, params.biases)):
        affine = current @ weight.T + bias
        pre_activations.append(affine)
        current = affine if i == last else np.maximum(affine, 0.)
        if i != last:
            activations.append(current)
    return current, ForwardCache(activations, pre_activations)


def encode(params: EncoderParams, inputs: np.ndarray) -> FeatureVector:
    """
    :param params:
    :param inputs: One input vector of length `input_dim` or a batch `(n, input_dim)`
    :return: Feature vector of length D (or `(n, D)` for a batch)
    """
    _, single = _as_batch(params, inputs)
    features, _ = forward(params, inputs)
    return features[0] if single else features


def backward(params: EncoderParams, inputs: np.ndarray, upstream: np.ndarray) -> ParamGrads:
    """
    Exact gradient of `sum_rows(upstream · encode(params, inputs))` with respect to every parameter
    :param params:
    :param inputs: One input or a batch `(n, input_dim)`
    :param upstream: dL/dfeatures, same leading shape as `inputs` and length D
    :return: ParamGrads, summed over the batch
    """
    batch, single = _as_batch(params, inputs)
    delta = np.asarray(upstream, dtype=np.float64)
    delta = delta[np.newaxis, :] if single else delta
    if delta.shape != (batch.shape[0], params.feature_dim):
        raise ShapeError(f'Upstream shape {np.shape(upstream)} does not match features '
                         f'({batch.shape[0]}, {params.feature_dim})')

    _, cache = forward(params, batch)
    weight_grads: List[Optional[np.ndarray]] = [None] * params.n_layers
    bias_grads: List[Optional[np.ndarray]] = [None] * params.n_layers
    for i in reversed(range(params.n_layers)):
        weight_grads[i] = delta.T @ cache.activations[i]
        bias_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (cache.pre_activations[i - 1] > 0.)
    return ParamGrads(weight_grads, bias_grads)


def sgd_step(params: EncoderParams, grads: ParamGrads, lr: float, momentum: float,
             velocity: ParamGrads) -> Tuple[EncoderParams, ParamGrads]:
    """
    `v <- momentum * v + grads`, `params <- params - lr * v`
    :return: New parameters and velocity, inputs are not modified
    """
    if lr < 0:
        raise ConfigurationError(f'Learning rate={lr} cannot be negative')
    if not 0 <= momentum < 1:
        raise ConfigurationError(f'Momentum={momentum} must be in [0, 1)')
    params.check_congruent(grads)
    params.check_congruent(velocity)
    if not grads.is_finite():
        raise NumericalError('Non finite gradient found, cannot update parameters')

    new_velocity = ParamGrads([momentum * v + g for v, g in zip(velocity.weights, grads.weights)],
                              [momentum * v + g for v, g in zip(velocity.biases, grads.biases)])
    new_params = EncoderParams([p - lr * v for p, v in zip(params.weights, new_velocity.weights)],
                               [p - lr * v for p, v in zip(params.biases, new_velocity.biases)])
    if not new_params.is_finite():
        raise NumericalError(f'Parameters diverged with lr={lr} momentum={momentum}')
    return new_params, new_velocity


def numerical_gradient(objective: Callable[[np.ndarray], float], vector: np.ndarray,
                       step: float = FINITE_DIFFERENCE_STEP) -> np.ndarray:
    """
    Central differences of `objective` around `vector`
    """
    gradient = np.zeros_like(vector)
    for i in range(vector.size):
        original = vector[i]
        vector[i] = original + step
        plus = objective(vector)
        vector[i] = original - step
        minus = objective(vector)
        vector[i] = original
        gradient[i] = (plus - minus) / (2. * step)
    return gradient


def compare_gradients(analytic: np.ndarray, numeric: np.ndarray,
                      absolute_tolerance: float = ABSOLUTE_TOLERANCE) -> Tuple[float, float]:
    """
    Entries closer than `absolute_tolerance` count as exact, the others are compared relatively
    :return: max relative error, max absolute error
    """
    absolute = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    relative = np.where(absolute <= absolute_tolerance, 0., absolute / np.where(scale > 0., scale, 1.))
    return float(relative.max(initial=0.)), float(absolute.max(initial=0.))


def grad_check(config: EncoderConfig, tolerance: float = 1e-5,
               backward_fn: Callable[[EncoderParams, np.ndarray, np.ndarray], ParamGrads] = backward,
               check_seed: int = 0, batch_size: int = 3) -> GradCheckReport:
    """
    Compare `backward_fn` against central differences on a fixed random sample (random biases, inputs and
    upstream gradient)
    :param backward_fn: Implementation under test, `backward` by default
    """
    if config.n_parameters > MAX_GRAD_CHECK_PARAMETERS:
        raise ConfigurationError(f'Gradient check needs at most {MAX_GRAD_CHECK_PARAMETERS} parameters, '
                                 f'config has {config.n_parameters}')

    rng = np.random.default_rng(check_seed)
    params = init_params(config)
    params = EncoderParams(params.weights, [rng.normal(0., 0.1, size=bias.shape) for bias in params.biases])
    inputs = rng.normal(size=(batch_size, config.input_dim))
    upstream = rng.normal(size=(batch_size, config.feature_dim))
    shapes = params.shapes

    def objective(vector: np.ndarray) -> float:
        features = encode(EncoderParams.from_vector(vector, shapes), inputs)
        return float(np.sum(upstream * features))

    analytic = backward_fn(params, inputs, upstream).to_vector()
    numeric = numerical_gradient(objective, params.to_vector())
    max_relative, max_absolute = compare_gradients(analytic, numeric)
    report = GradCheckReport(max_relative, max_absolute, config.n_parameters, tolerance)
    if not report.passed:
        logger.warning('Gradient check failed max-relative-error=%.3e tolerance=%.1e', max_relative, tolerance)
    return report
