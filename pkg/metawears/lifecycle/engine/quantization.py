"""
16-bit fixed point (Q-format) image of the encoder. Linear layers run on integers with 64-bit accumulators,
ReLU runs in floating point on the dequantized values, which are re-quantized before the next layer.
"""
import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError, NumericalError, ShapeError
from .encoder import EncoderParams, FeatureVector

logger = logging.getLogger(__name__)

INT16_MIN = -(2 ** 15)
INT16_MAX = 2 ** 15 - 1
INT64_MAX = 2 ** 63 - 1
SATURATION_WARNING_FRACTION = 0.01


class ElementType(IntEnum):
    FLOAT64 = 0
    FLOAT32 = 1
    FIXED16 = 2

    @property
    def size(self) -> int:
        return {ElementType.FLOAT64: 8, ElementType.FLOAT32: 4, ElementType.FIXED16: 2}[self]

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: Union[str, 'ElementType']) -> 'ElementType':
        if isinstance(label, ElementType):
            return label
        try:
            return cls[label.upper()]
        except KeyError as e:
            raise ConfigurationError(f'Element-type={label} not supported, use one of '
                                     f'{[element.label for element in cls]}') from e


class PayloadKind(Enum):
    MODEL = 'model'
    PROTOTYPES = 'prototypes'


@dataclass(frozen=True)
class FixedSpec:
    frac_bits: int = 12
    total_bits: int = 16

    def __post_init__(self):
        if self.total_bits != 16:
            raise ConfigurationError(f'Only 16-bit fixed point is supported, total-bits={self.total_bits}')
        if not 1 <= self.frac_bits <= 15:
            raise ConfigurationError(f'frac-bits={self.frac_bits} must be in [1, 15]')

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def lsb(self) -> float:
        return 2. ** -self.frac_bits

    @property
    def min_value(self) -> float:
        return INT16_MIN / self.scale

    @property
    def max_value(self) -> float:
        return INT16_MAX / self.scale


def quantize_array(values: np.ndarray, spec: FixedSpec) -> np.ndarray:
    """
    Round half to even, saturate to int16
    """
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.isnan(values)):
        raise NumericalError('Cannot quantize NaN values')
    return np.clip(np.rint(values * spec.scale), INT16_MIN, INT16_MAX).astype(np.int16)


def quantize_value(x: float, spec: FixedSpec) -> int:
    return int(quantize_array(np.array([x]), spec)[0])


def dequantize_array(values: np.ndarray, spec: FixedSpec) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / spec.scale


def saturated_count(values: np.ndarray, spec: FixedSpec) -> int:
    scaled = np.rint(np.asarray(values, dtype=np.float64) * spec.scale)
    return int(np.count_nonzero((scaled < INT16_MIN) | (scaled > INT16_MAX)))


@dataclass
class QuantizedEncoder:
    weights: List[np.ndarray]  # int16, (out, in)
    biases: List[np.ndarray]  # int16
    spec: FixedSpec
    source_checksum: str = ''
    saturation_fraction: float = 0.

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [weight.shape for weight in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_parameters(self) -> int:
        return sum(weight.size + bias.size for weight, bias in zip(self.weights, self.biases))

    @property
    def saturation_warning(self) -> bool:
        return self.saturation_fraction > SATURATION_WARNING_FRACTION

    def dequantize(self) -> EncoderParams:
        return EncoderParams([dequantize_array(weight, self.spec) for weight in self.weights],
                             [dequantize_array(bias, self.spec) for bias in self.biases])


def quantize_encoder(params: EncoderParams, spec: FixedSpec) -> QuantizedEncoder:
    saturated = 0
    weights, biases = [], []
    for weight, bias in zip(params.weights, params.biases):
        saturated += saturated_count(weight, spec) + saturated_count(bias, spec)
        weights.append(quantize_array(weight, spec))
        biases.append(quantize_array(bias, spec))
    fraction = saturated / params.n_parameters if params.n_parameters else 0.
    quantized = QuantizedEncoder(weights, biases, spec, params.checksum(), fraction)
    if quantized.saturation_warning:
        logger.warning('Quantization saturated %.2f%% of the parameters with frac-bits=%d', fraction * 100,
                       spec.frac_bits)
    return quantized


def accumulator_bound(qenc: QuantizedEncoder) -> int:
    """
    Worst case absolute accumulator value over every layer: fan-in products of two int16 values plus the
    shifted bias
    """
    product = (-INT16_MIN) * (-INT16_MIN)
    return max(cols * product + (-INT16_MIN) * qenc.spec.scale for _, cols in qenc.shapes)


def quantized_encode(qenc: QuantizedEncoder, inputs: np.ndarray) -> FeatureVector:
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 1
    batch = inputs[np.newaxis, :] if single else inputs
    if batch.ndim != 2 or batch.shape[1] != qenc.input_dim:
        raise ShapeError(f'Input shape {inputs.shape} does not match encoder input-dim={qenc.input_dim}')
    if accumulator_bound(qenc) > INT64_MAX:
        raise NumericalError('Layer fan-in too large for 64-bit accumulators')

    spec = qenc.spec
    activations = quantize_array(batch, spec).astype(np.int64)
    last = len(qenc.weights) - 1
    for i, (weight, bias) in enumerate(zip(qenc.weights, qenc.biases)):
        accumulator = activations @ weight.astype(np.int64).T + bias.astype(np.int64) * spec.scale
        # Accumulator holds 2 * frac_bits fractional bits
        real = accumulator.astype(np.float64) / (spec.scale * spec.scale)
        if i == last:
            return real[0] if single else real
        activations = quantize_array(np.maximum(real, 0.), spec).astype(np.int64)


def payload_bytes(kind: Union[PayloadKind, str], shapes: Union[Sequence[Tuple[int, int]], Tuple[int, int]],
                  element_type: Union[ElementType, str]) -> int:
    """
    Serialized payload size excluding file headers
    :param kind: `model` or `prototypes`
    :param shapes: Layer `(rows, cols)` list for a model, `(n_classes, D)` for prototypes
    :param element_type:
    :return: Number of bytes
    """
    kind = PayloadKind(kind)
    element_type = ElementType.from_label(element_type)
    if kind == PayloadKind.PROTOTYPES:
        n_classes, feature_dim = shapes
        if n_classes < 0 or feature_dim < 0:
            raise ShapeError(f'Invalid prototype shape {shapes}')
        return n_classes * feature_dim * element_type.size
    n_values = 0
    for rows, cols in shapes:
        if rows < 0 or cols < 0:
            raise ShapeError(f'Invalid layer shape {(rows, cols)}')
        n_values += rows * cols + rows
    return n_values * element_type.size
