import tempfile
import zlib
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from dataset.rng import Rng
from tensorcore.gradcheck import gradcheck
from tensorcore.graph import Graph

from .arch import ArchConfig, ModelParams
from .exceptions import (
    ChannelMismatchError, CheckpointChecksumError, CheckpointFormatError, CheckpointIOError,
    CheckpointVersionError, InvalidArchitectureError,
)
from .services.checkpoint import MAGIC, CheckpointService, checkpoint_roundtrip
from .services.network import denoise, init_model


class ArchConfigTests(SimpleTestCase):

    def test_defaults(self):
        arch = ArchConfig()
        self.assertEqual((arch.depth, arch.width, arch.kernel, arch.residual), (5, 16, 3, True))

    def test_invalid(self):
        for kwargs in ({"depth": 1}, {"width": 0}, {"kernel": 4}, {"channels_in": 2, "channels_out": 2},
                       {"channels_in": 3, "channels_out": 1}):
            with self.subTest(**kwargs), self.assertRaises(InvalidArchitectureError):
                ArchConfig(**kwargs)

    def test_dict_round_trip(self):
        arch = ArchConfig(depth=3, width=4, residual=False)
        self.assertEqual(ArchConfig.from_dict(arch.to_dict()), arch)


class InitModelTests(SimpleTestCase):

    def test_deterministic(self):
        arch = ArchConfig(depth=3, width=4)
        self.assertTrue(init_model(arch, 42).same_bytes(init_model(arch, 42)))
        self.assertFalse(init_model(arch, 42).same_bytes(init_model(arch, 43)))

    def test_smallest_shapes(self):
        params = init_model(ArchConfig(depth=2, width=1), 0)
        self.assertEqual([k.shape for k, _ in params.layers], [(1, 1, 3, 3), (1, 1, 3, 3)])
        for _, bias in params.layers:
            self.assertTrue(np.all(bias == 0.0))

    def test_first_layer_std(self):
        params = init_model(ArchConfig(depth=3, width=64), 1)
        kernel = params.layers[0][0]
        self.assertAlmostEqual(kernel.std() / np.sqrt(2.0 / 9), 1.0, delta=0.1)

    def test_params_are_read_only(self):
        params = init_model(ArchConfig(depth=2, width=2), 0)
        with self.assertRaises(ValueError):
            params.layers[0][0][0, 0, 0, 0] = 1.0

    def test_params_reject_wrong_shapes(self):
        arch = ArchConfig(depth=2, width=2)
        with self.assertRaises(InvalidArchitectureError):
            ModelParams(arch, ((np.zeros((2, 1, 3, 3)), np.zeros(2)),))


class DenoiseTests(SimpleTestCase):

    def setUp(self):
        self.y = Rng(5).uniform((1, 8, 8))

    def test_zero_params_residual_is_identity(self):
        x_hat = denoise(ModelParams.zeros(ArchConfig(depth=3, width=4)), self.y)
        self.assertEqual(np.abs(x_hat - self.y).max(), 0.0)

    def test_zero_params_plain_is_zero(self):
        x_hat = denoise(ModelParams.zeros(ArchConfig(depth=3, width=4, residual=False)), self.y)
        self.assertTrue(np.all(x_hat == 0.0))

    def test_shape_preserved_for_rgb(self):
        params = init_model(ArchConfig(depth=3, width=4, channels_in=3, channels_out=3), 2)
        self.assertEqual(denoise(params, Rng(1).uniform((3, 5, 7))).shape, (3, 5, 7))

    def test_channel_mismatch(self):
        params = init_model(ArchConfig(depth=2, width=2), 0)
        with self.assertRaises(ChannelMismatchError):
            denoise(params, np.zeros((3, 4, 4)))

    def test_graph_forward_matches_direct(self):
        params = init_model(ArchConfig(depth=4, width=6), 3)
        graph = Graph()
        out = denoise(params, self.y, graph=graph)
        np.testing.assert_array_equal(out.value, denoise(params, self.y))

    def test_reconstruction_error_gradcheck(self):
        params = init_model(ArchConfig(depth=3, width=4), 4)
        x = Rng(6).uniform((1, 8, 8))
        for residual in (True, False):
            with self.subTest(residual=residual):
                arch = ArchConfig(depth=3, width=4, residual=residual)
                graph = Graph()
                out = denoise(ModelParams(arch, params.layers), self.y, graph=graph)
                y_leaf = graph.nodes[2 * arch.depth]
                graph.sq_norm(graph.sub(out, graph.leaf(x)))
                self.assertLess(gradcheck(graph, y_leaf), 1e-5)
                kernel_leaf = graph.nodes[2]
                self.assertLess(gradcheck(graph, kernel_leaf, coords=range(0, 144, 7)), 1e-5)


class CheckpointTests(SimpleTestCase):

    def setUp(self):
        self.params = init_model(ArchConfig(depth=3, width=4, residual=False), 9)
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "model.obsd"

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_bytes(self):
        loaded = checkpoint_roundtrip(self.params, self.path)
        self.assertTrue(loaded.same_bytes(self.params))
        self.assertEqual(loaded.arch, self.params.arch)
        self.assertEqual(CheckpointService.serialize(loaded), self.path.read_bytes())

    def test_layout(self):
        data = CheckpointService.serialize(self.params)
        self.assertEqual(data[:4], MAGIC)
        self.assertEqual(int.from_bytes(data[4:8], "little"), 1)
        dims = 3 * 4 + 3 * 1
        self.assertEqual(len(data), 4 + 4 + 21 + 6 * 4 + dims * 4 + 8 * self.params.num_parameters + 4)

    def test_truncated_file(self):
        CheckpointService.save(self.params, self.path)
        self.path.write_bytes(self.path.read_bytes()[:-10])
        with self.assertRaises(CheckpointChecksumError):
            CheckpointService.load(self.path)

    def test_flipped_byte(self):
        data = bytearray(CheckpointService.serialize(self.params))
        data[40] ^= 0xFF
        with self.assertRaises(CheckpointChecksumError):
            CheckpointService.deserialize(bytes(data))

    def test_wrong_magic(self):
        data = b"NOPE" + CheckpointService.serialize(self.params)[4:]
        with self.assertRaises(CheckpointFormatError) as ctx:
            CheckpointService.deserialize(data)
        self.assertIn("NOPE", str(ctx.exception))

    def test_version_mismatch(self):
        body = CheckpointService.serialize(self.params)[:-4]
        body = body[:4] + (2).to_bytes(4, "little") + body[8:]
        with self.assertRaises(CheckpointVersionError):
            CheckpointService.deserialize(body + zlib.crc32(body).to_bytes(4, "little"))

    def test_missing_file(self):
        with self.assertRaises(CheckpointIOError):
            CheckpointService.load(Path(self.tmp.name) / "absent.obsd")
