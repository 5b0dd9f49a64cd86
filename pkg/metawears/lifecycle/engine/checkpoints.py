"""
Little-endian binary artifacts

 - MWSP: encoder parameters. magic, version u32, layer count u32, per layer rows u32, cols u32, float64 weights
   (row-major) then float64 biases.
 - MWSC: prototypes. magic, version u32, class count u32, D u32, element type u8 (plus a u8 frac-bits count for
   fixed16), then the class vectors in class order.
 - MWSQ: quantized encoder. magic, version u32, total-bits u8, frac-bits u8, layer count u32, per layer rows u32,
   cols u32, then int16 weights and int16 biases.

Every artifact written to disk gets a `<file>.meta.json` sidecar with format, version, producing config hash and
command. Class names of a prototype file live in its sidecar.
"""
import io
import json
import logging
import os
import struct
from dataclasses import dataclass
from typing import Any, BinaryIO, Dict, Optional, Sequence

import numpy as np

from ..exceptions import DataFormatError, UnsupportedVersionError
from ..utils import write_json
from .encoder import EncoderParams
from .prototypes import Prototypes
from .quantization import (ElementType, FixedSpec, PayloadKind,
                           QuantizedEncoder, dequantize_array, payload_bytes,
                           quantize_array)

logger = logging.getLogger(__name__)

PARAMS_MAGIC = b'MWSP'
PROTOTYPES_MAGIC = b'MWSC'
QUANTIZED_MAGIC = b'MWSQ'
FORMAT_VERSION = 1
SIDECAR_SUFFIX = '.meta.json'

FORMAT_NAMES = {
    PARAMS_MAGIC: 'MWSP',
    PROTOTYPES_MAGIC: 'MWSC',
    QUANTIZED_MAGIC: 'MWSQ',
}


@dataclass
class ArtifactMetadata:
    format: str
    format_version: int
    config_hash: Optional[str] = None
    command: Optional[str] = None
    extra: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'format': self.format,
            'format_version': self.format_version,
            'config_hash': self.config_hash,
            'command': self.command,
        }
        data.update(self.extra or {})
        return data


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.stream = io.BytesIO(data)
        self.name = name
        self.size = len(data)

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        chunk = self.stream.read(size)
        try:
            return struct.unpack(fmt, chunk)
        except struct.error as e:
            raise DataFormatError(f'{self.name} truncated at byte {self.stream.tell()}') from e

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        chunk = self.stream.read(size)
        if len(chunk) != size:
            raise DataFormatError(f'{self.name} truncated, expected {size} bytes of values, got {len(chunk)}')
        return np.frombuffer(chunk, dtype=dtype).astype(np.dtype(dtype).newbyteorder('='))

    def header(self, magic: bytes):
        found = self.stream.read(4)
        if found != magic:
            raise DataFormatError(f'{self.name}: magic={found!r} is not {magic!r}')
        version, = self.unpack('<I')
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f'{self.name}: format version {version} is not supported, '
                                          f'expected {FORMAT_VERSION}')

    def finish(self):
        if self.stream.tell() != self.size:
            raise DataFormatError(f'{self.name}: {self.size - self.stream.tell()} unexpected trailing bytes')


def _write_shapes(buffer: BinaryIO, shapes: Sequence):
    buffer.write(struct.pack('<I', len(shapes)))
    for rows, cols in shapes:
        buffer.write(struct.pack('<II', rows, cols))


def _read_shapes(reader: _Reader):
    n_layers, = reader.unpack('<I')
    return [reader.unpack('<II') for _ in range(n_layers)]


def encode_params(params: EncoderParams) -> bytes:
    buffer = io.BytesIO()
    buffer.write(PARAMS_MAGIC)
    buffer.write(struct.pack('<I', FORMAT_VERSION))
    buffer.write(struct.pack('<I', params.n_layers))
    for weight, bias in zip(params.weights, params.biases):
        buffer.write(struct.pack('<II', *weight.shape))
        buffer.write(np.ascontiguousarray(weight, dtype='<f8').tobytes())
        buffer.write(np.ascontiguousarray(bias, dtype='<f8').tobytes())
    return buffer.getvalue()


def decode_params(data: bytes, name: str = 'MWSP') -> EncoderParams:
    reader = _Reader(data, name)
    reader.header(PARAMS_MAGIC)
    n_layers, = reader.unpack('<I')
    weights, biases = [], []
    for _ in range(n_layers):
        rows, cols = reader.unpack('<II')
        weights.append(reader.array('<f8', rows * cols).reshape(rows, cols))
        biases.append(reader.array('<f8', rows))
    reader.finish()
    return EncoderParams(weights, biases)


def encode_prototypes(prototypes: Prototypes, element_type: ElementType = ElementType.FLOAT32,
                      fixed_spec: Optional[FixedSpec] = None) -> bytes:
    element_type = ElementType.from_label(element_type)
    buffer = io.BytesIO()
    buffer.write(PROTOTYPES_MAGIC)
    buffer.write(struct.pack('<III', FORMAT_VERSION, prototypes.n_classes, prototypes.feature_dim))
    buffer.write(struct.pack('<B', element_type.value))
    if element_type == ElementType.FIXED16:
        fixed_spec = fixed_spec or FixedSpec()
        buffer.write(struct.pack('<B', fixed_spec.frac_bits))
        buffer.write(quantize_array(prototypes.vectors, fixed_spec).astype('<i2').tobytes())
    elif element_type == ElementType.FLOAT32:
        buffer.write(prototypes.vectors.astype('<f4').tobytes())
    else:
        buffer.write(prototypes.vectors.astype('<f8').tobytes())
    return buffer.getvalue()


def decode_prototypes(data: bytes, classes: Optional[Sequence[str]] = None, name: str = 'MWSC') -> Prototypes:
    """
    :param classes: Class names in file order. Class indexes as strings if not provided
    """
    reader = _Reader(data, name)
    reader.header(PROTOTYPES_MAGIC)
    n_classes, feature_dim = reader.unpack('<II')
    element_code, = reader.unpack('<B')
    try:
        element_type = ElementType(element_code)
    except ValueError as e:
        raise DataFormatError(f'{name}: unknown element type {element_code}') from e
    count = n_classes * feature_dim
    if element_type == ElementType.FIXED16:
        frac_bits, = reader.unpack('<B')
        vectors = dequantize_array(reader.array('<i2', count), FixedSpec(frac_bits=frac_bits))
    elif element_type == ElementType.FLOAT32:
        vectors = reader.array('<f4', count).astype(np.float64)
    else:
        vectors = reader.array('<f8', count)
    reader.finish()
    classes = tuple(classes) if classes is not None else tuple(str(i) for i in range(n_classes))
    if len(classes) != n_classes:
        raise DataFormatError(f'{name}: {n_classes} prototypes stored but {len(classes)} class names given')
    return Prototypes(classes, vectors.reshape(n_classes, feature_dim))


def encode_quantized(qenc: QuantizedEncoder) -> bytes:
    buffer = io.BytesIO()
    buffer.write(QUANTIZED_MAGIC)
    buffer.write(struct.pack('<I', FORMAT_VERSION))
    buffer.write(struct.pack('<BB', qenc.spec.total_bits, qenc.spec.frac_bits))
    _write_shapes(buffer, qenc.shapes)
    for weight in qenc.weights:
        buffer.write(weight.astype('<i2').tobytes())
    for bias in qenc.biases:
        buffer.write(bias.astype('<i2').tobytes())
    return buffer.getvalue()


def decode_quantized(data: bytes, name: str = 'MWSQ') -> QuantizedEncoder:
    reader = _Reader(data, name)
    reader.header(QUANTIZED_MAGIC)
    total_bits, frac_bits = reader.unpack('<BB')
    shapes = _read_shapes(reader)
    weights = [reader.array('<i2', rows * cols).reshape(rows, cols) for rows, cols in shapes]
    biases = [reader.array('<i2', rows) for rows, _ in shapes]
    reader.finish()
    return QuantizedEncoder(weights, biases, FixedSpec(frac_bits=frac_bits, total_bits=total_bits))


# Files
# ------------------------------------------------------------------------------
def sidecar_path(path: str) -> str:
    return path + SIDECAR_SUFFIX


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, 'rb') as f:
            return f.read()
    except OSError as e:
        raise DataFormatError(f'Cannot read artifact {path}: {e}') from e


def _write_artifact(path: str, data: bytes, metadata: ArtifactMetadata):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as f:
        f.write(data)
    write_json(sidecar_path(path), metadata.to_dict())
    logger.info('Stored %s artifact=%s size=%d', metadata.format, path, len(data))


def read_sidecar(path: str, magic: bytes) -> Optional[Dict[str, Any]]:
    """
    :return: Sidecar contents if present, checked against the expected format and version
    """
    meta_path = sidecar_path(path)
    if not os.path.exists(meta_path):
        return None
    try:
        with open(meta_path, encoding='utf-8') as f:
            metadata = json.load(f)
    except json.JSONDecodeError as e:
        raise DataFormatError(f'{meta_path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}') from e
    if metadata.get('format') != FORMAT_NAMES[magic]:
        raise UnsupportedVersionError(f'{meta_path}: format={metadata.get("format")} does not match '
                                      f'{FORMAT_NAMES[magic]}')
    if metadata.get('format_version') != FORMAT_VERSION:
        raise UnsupportedVersionError(f'{meta_path}: format-version={metadata.get("format_version")} is not '
                                      f'supported, expected {FORMAT_VERSION}')
    return metadata


def save_params(path: str, params: EncoderParams, config_hash: Optional[str] = None,
                command: Optional[str] = None):
    _write_artifact(path, encode_params(params),
                    ArtifactMetadata('MWSP', FORMAT_VERSION, config_hash, command,
                                     {'checksum': params.checksum()}))


def load_params(path: str) -> EncoderParams:
    data = _read_bytes(path)
    read_sidecar(path, PARAMS_MAGIC)
    return decode_params(data, name=path)


def save_prototypes(path: str, prototypes: Prototypes, element_type: ElementType = ElementType.FLOAT32,
                    fixed_spec: Optional[FixedSpec] = None, config_hash: Optional[str] = None,
                    command: Optional[str] = None) -> int:
    """
    :return: Payload size in bytes (header excluded)
    """
    element_type = ElementType.from_label(element_type)
    data = encode_prototypes(prototypes, element_type, fixed_spec)
    payload = payload_bytes(PayloadKind.PROTOTYPES, prototypes.vectors.shape, element_type)
    _write_artifact(path, data,
                    ArtifactMetadata('MWSC', FORMAT_VERSION, config_hash, command,
                                     {'classes': list(prototypes.classes),
                                      'element_type': element_type.label,
                                      'payload_bytes': payload}))
    return payload


def load_prototypes(path: str, classes: Optional[Sequence[str]] = None) -> Prototypes:
    """
    :param classes: Class names used when there is no sidecar, the binary layout only stores the vectors
    """
    data = _read_bytes(path)
    metadata = read_sidecar(path, PROTOTYPES_MAGIC) or {}
    return decode_prototypes(data, metadata.get('classes', classes), name=path)


def save_quantized(path: str, qenc: QuantizedEncoder, config_hash: Optional[str] = None,
                   command: Optional[str] = None):
    _write_artifact(path, encode_quantized(qenc),
                    ArtifactMetadata('MWSQ', FORMAT_VERSION, config_hash, command,
                                     {'source_checksum': qenc.source_checksum,
                                      'saturation_fraction': qenc.saturation_fraction}))


def load_quantized(path: str) -> QuantizedEncoder:
    data = _read_bytes(path)
    metadata = read_sidecar(path, QUANTIZED_MAGIC) or {}
    qenc = decode_quantized(data, name=path)
    qenc.source_checksum = metadata.get('source_checksum', '')
    qenc.saturation_fraction = metadata.get('saturation_fraction', 0.)
    return qenc
