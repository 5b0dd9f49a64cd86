import json
import os
import struct
import tempfile

from django.test import SimpleTestCase

import numpy as np

from ..engine.checkpoints import (FORMAT_VERSION, decode_params,
                                  decode_prototypes, encode_params,
                                  encode_prototypes, load_params,
                                  load_prototypes, load_quantized,
                                  save_params, save_prototypes,
                                  save_quantized, sidecar_path)
from ..engine.encoder import init_params
from ..engine.prototypes import Prototypes
from ..engine.quantization import (ElementType, FixedSpec, PayloadKind,
                                   payload_bytes, quantize_encoder)
from ..exceptions import DataFormatError, UnsupportedVersionError
from .factories import EncoderConfigFactory


class TestCheckpoints(SimpleTestCase):
    def setUp(self):
        self.tmp_dir = tempfile.TemporaryDirectory()
        self.params = init_params(EncoderConfigFactory())
        self.prototypes = Prototypes(('normal', 'abnormal'), np.array([[.5, -.25, 1., 0.], [2., .125, -1.5, 3.]]))

    def tearDown(self):
        self.tmp_dir.cleanup()

    def path(self, name: str) -> str:
        return os.path.join(self.tmp_dir.name, name)

    def test_params(self):
        data = encode_params(self.params)
        self.assertEqual(data[:4], b'MWSP')
        self.assertEqual(struct.unpack('<II', data[4:12]), (FORMAT_VERSION, self.params.n_layers))
        self.assertEqual(len(data), 12 + 8 * self.params.n_layers + 8 * self.params.n_parameters)
        self.assertEqual(decode_params(data).checksum(), self.params.checksum())

        path = self.path('params.mwsp')
        save_params(path, self.params, config_hash='abc', command='pretrain')
        self.assertEqual(load_params(path).checksum(), self.params.checksum())
        with open(sidecar_path(path)) as f:
            metadata = json.load(f)
        self.assertEqual(metadata['format'], 'MWSP')
        self.assertEqual(metadata['format_version'], FORMAT_VERSION)
        self.assertEqual(metadata['config_hash'], 'abc')
        self.assertEqual(metadata['command'], 'pretrain')
        self.assertEqual(metadata['checksum'], self.params.checksum())

    def test_params_errors(self):
        data = encode_params(self.params)
        with self.assertRaisesMessage(DataFormatError, 'magic'):
            decode_params(b'XXXX' + data[4:])
        with self.assertRaises(UnsupportedVersionError):
            decode_params(data[:4] + struct.pack('<I', FORMAT_VERSION + 1) + data[8:])
        with self.assertRaisesMessage(DataFormatError, 'truncated'):
            decode_params(data[:-3])
        with self.assertRaisesMessage(DataFormatError, 'trailing'):
            decode_params(data + b'\x00')
        with self.assertRaises(DataFormatError):
            load_params(self.path('missing.mwsp'))

        path = self.path('params.mwsp')
        save_params(path, self.params)
        with open(sidecar_path(path), 'w') as f:
            json.dump({'format': 'MWSP', 'format_version': 99}, f)
        with self.assertRaises(UnsupportedVersionError):
            load_params(path)
        with open(sidecar_path(path), 'w') as f:
            json.dump({'format': 'MWSC', 'format_version': FORMAT_VERSION}, f)
        with self.assertRaises(UnsupportedVersionError):
            load_params(path)
        with open(sidecar_path(path), 'w') as f:
            f.write('{"format": ')
        with self.assertRaisesMessage(DataFormatError, 'line 1'):
            load_params(path)

        # Sidecar is optional
        os.remove(sidecar_path(path))
        self.assertEqual(load_params(path).checksum(), self.params.checksum())

    def test_prototypes(self):
        for element_type in ElementType:
            data = encode_prototypes(self.prototypes, element_type)
            decoded = decode_prototypes(data, self.prototypes.classes)
            # Every value is exactly representable in all element types
            self.assertEqual(decoded, self.prototypes)

        self.assertEqual(decode_prototypes(encode_prototypes(self.prototypes)).classes, ('0', '1'))
        with self.assertRaises(DataFormatError):
            decode_prototypes(encode_prototypes(self.prototypes), ('normal',))

        data = bytearray(encode_prototypes(self.prototypes, ElementType.FLOAT32))
        data[16] = 7
        with self.assertRaisesMessage(DataFormatError, 'element type'):
            decode_prototypes(bytes(data))

        path = self.path('prototypes.mwsc')
        payload = save_prototypes(path, self.prototypes, ElementType.FIXED16, FixedSpec(frac_bits=10),
                                  command='deploy')
        self.assertEqual(payload, 2 * 4 * 2)
        self.assertEqual(os.path.getsize(path), 4 + 12 + 1 + 1 + payload)
        self.assertEqual(load_prototypes(path), self.prototypes)
        with open(sidecar_path(path)) as f:
            metadata = json.load(f)
        self.assertEqual(metadata['classes'], ['normal', 'abnormal'])
        self.assertEqual(metadata['element_type'], 'fixed16')
        self.assertEqual(metadata['payload_bytes'], 16)

    def test_prototypes_without_sidecar(self):
        path = self.path('prototypes.mwsc')
        payload = save_prototypes(path, self.prototypes, ElementType.FLOAT32)
        self.assertEqual(payload, payload_bytes(PayloadKind.PROTOTYPES, (2, 4), ElementType.FLOAT32))
        # Sidecar names take precedence over the caller's
        self.assertEqual(load_prototypes(path, ('a', 'b')).classes, ('normal', 'abnormal'))

        os.remove(sidecar_path(path))
        self.assertEqual(load_prototypes(path, ('normal', 'abnormal')), self.prototypes)
        self.assertEqual(load_prototypes(path).classes, ('0', '1'))
        with self.assertRaises(DataFormatError):
            load_prototypes(path, ('normal', 'abnormal', 'unknown'))

    def test_quantized(self):
        quantized = quantize_encoder(self.params, FixedSpec(frac_bits=11))
        path = self.path('params.mwsq')
        save_quantized(path, quantized, config_hash='abc', command='quantize')
        loaded = load_quantized(path)
        self.assertEqual(loaded.spec, quantized.spec)
        self.assertEqual(loaded.source_checksum, self.params.checksum())
        self.assertEqual(loaded.shapes, quantized.shapes)
        for weight, loaded_weight in zip(quantized.weights, loaded.weights):
            np.testing.assert_array_equal(weight, loaded_weight)
        for bias, loaded_bias in zip(quantized.biases, loaded.biases):
            np.testing.assert_array_equal(bias, loaded_bias)

        with open(path, 'rb') as f:
            data = f.read()
        with open(path, 'wb') as f:
            f.write(b'MWSP' + data[4:])
        with self.assertRaises(DataFormatError):
            load_quantized(path)
