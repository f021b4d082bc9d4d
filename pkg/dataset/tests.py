import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .exceptions import (
    EmptyCorpusError, EmptyTensorError, InvalidNoiseSpecError, InvalidPatchError, MalformedHeaderError,
    PatchSizeError, TruncatedImageError, UnsupportedMaxvalError,
)
from .noise import NoiseKind, NoiseSpec, energy_density, parse_noise_level, sample_noise, sample_noise_with_sigma
from .rng import Rng, SeedDomain, derive_seed, splitmix64
from .services.corpus import CorpusSource, ImagePatch, extract_patches, load_corpus_dir, synth_corpus
from .utils.netpbm import NetpbmCodec, read_image, write_image

MILLION = 10 ** 6


class RngTests(SimpleTestCase):

    def test_splitmix64_reference_value(self):
        _, output = splitmix64(0)
        self.assertEqual(output, 0xE220A8397B1DCDAF)

    def test_same_seed_same_stream(self):
        np.testing.assert_array_equal(Rng(7).next_u64(1000), Rng(7).next_u64(1000))

    def test_different_seeds_differ(self):
        self.assertFalse(np.array_equal(Rng(7).next_u64(16), Rng(8).next_u64(16)))

    def test_stream_independent_of_draw_sizes(self):
        rng = Rng(11)
        pieces = np.concatenate([rng.next_u64(3), rng.next_u64(300), rng.next_u64(1)])
        np.testing.assert_array_equal(pieces, Rng(11).next_u64(304))

    def test_uniform_range(self):
        values = Rng(3).uniform(10000, low=-2.0, high=5.0)
        self.assertGreaterEqual(values.min(), -2.0)
        self.assertLess(values.max(), 5.0)

    def test_permutation(self):
        perm = Rng(5).permutation(100)
        np.testing.assert_array_equal(np.sort(perm), np.arange(100))

    def test_integers_bounds(self):
        values = Rng(6).integers(7, size=5000)
        self.assertEqual(values.min(), 0)
        self.assertEqual(values.max(), 6)

    def test_derive_seed_separates_domains_and_indices(self):
        seeds = {
            derive_seed(1, SeedDomain.INIT),
            derive_seed(1, SeedDomain.CORPUS),
            derive_seed(1, SeedDomain.TRAIN_NOISE, 0),
            derive_seed(1, SeedDomain.TRAIN_NOISE, 1),
            derive_seed(2, SeedDomain.TRAIN_NOISE, 0),
        }
        self.assertEqual(len(seeds), 5)
        self.assertEqual(derive_seed(1, SeedDomain.SHUFFLE, 3), derive_seed(1, SeedDomain.SHUFFLE, 3))

    def test_derive_seed_has_no_cross_domain_collisions(self):
        seed = 7
        partner = seed ^ SeedDomain.INIT ^ SeedDomain.CORPUS
        self.assertNotEqual(derive_seed(seed, SeedDomain.INIT), derive_seed(partner, SeedDomain.CORPUS))
        derived = {derive_seed(s, domain) for s in range(256) for domain in SeedDomain}
        self.assertEqual(len(derived), 256 * len(SeedDomain))

    def test_rejects_out_of_range_seed(self):
        with self.assertRaises(ValueError):
            Rng(-1)


class NoiseLevelTests(SimpleTestCase):

    def test_fraction(self):
        level = parse_noise_level("25/255")
        self.assertEqual(level.value, 25 / 255)
        self.assertEqual(level.label, "25/255")
        self.assertAlmostEqual(level.over_255, 25.0)

    def test_decimal(self):
        self.assertEqual(parse_noise_level("0.1").value, 0.1)
        self.assertEqual(parse_noise_level(0.25).value, 0.25)

    def test_decimal_numerator(self):
        self.assertEqual(parse_noise_level("2.5/255").value, 2.5 / 255)

    def test_invalid(self):
        for text in ("abc", "1/0", "-5/255", "nan"):
            with self.subTest(text=text), self.assertRaises(InvalidNoiseSpecError):
                parse_noise_level(text)

    def test_spec_rejects_negative_level(self):
        with self.assertRaises(InvalidNoiseSpecError):
            NoiseSpec(NoiseKind.UNIFORM, -0.1)


class NoiseSamplerTests(SimpleTestCase):

    def test_uniform_variance(self):
        eps_hat = 15 / 255
        v = sample_noise(NoiseSpec.uniform(eps_hat), (MILLION,), Rng(1))
        self.assertAlmostEqual(v.var() / eps_hat ** 2, 1.0, delta=0.02)
        self.assertLessEqual(np.abs(v).max(), np.sqrt(3) * eps_hat)

    def test_gaussian_zero_sigma(self):
        v = sample_noise(NoiseSpec.gaussian_fixed(0.0), (1, 8, 8), Rng(1))
        self.assertEqual(v.shape, (1, 8, 8))
        self.assertTrue(np.all(v == 0.0))

    def test_gaussian_mean_and_energy(self):
        sigma = 25 / 255
        v = sample_noise(NoiseSpec.gaussian_fixed(sigma), (MILLION,), Rng(2))
        self.assertLess(abs(v.mean()), 3 * sigma / np.sqrt(MILLION))
        self.assertAlmostEqual(energy_density(v) / sigma ** 2, 1.0, delta=0.02)

    def test_uniform_mean(self):
        eps_hat = 10 / 255
        v = sample_noise(NoiseSpec.uniform(eps_hat), (MILLION,), Rng(4))
        self.assertLess(abs(v.mean()), 3 * eps_hat / np.sqrt(MILLION))

    def test_family_draws_sigma_per_call(self):
        eps = 25 / 255
        spec = NoiseSpec.gaussian_family(eps)
        rng = Rng(9)
        sigmas = []
        energies = []
        for _ in range(200):
            v, sigma = sample_noise_with_sigma(spec, (1, 50, 100), rng)
            self.assertLessEqual(sigma, eps)
            sigmas.append(sigma)
            energies.append(energy_density(v))
        self.assertGreater(len(set(sigmas)), 100)
        standard_error = np.std(energies) / np.sqrt(len(energies))
        self.assertLess(abs(np.mean(energies) - eps ** 2 / 3), 4 * standard_error)
        self.assertLess(np.mean(energies), eps ** 2)

    def test_sampling_is_deterministic(self):
        spec = NoiseSpec.gaussian_family(0.1)
        np.testing.assert_array_equal(
            sample_noise(spec, (3, 4, 4), Rng(12)), sample_noise(spec, (3, 4, 4), Rng(12))
        )

    def test_energy_density(self):
        self.assertEqual(energy_density(np.zeros(5)), 0.0)
        self.assertAlmostEqual(energy_density(np.full((2, 3), 0.3)), 0.09, places=12)
        with self.assertRaises(EmptyTensorError):
            energy_density(np.zeros(0))

    def test_expected_energy_density(self):
        self.assertAlmostEqual(NoiseSpec.gaussian_family(0.3).expected_energy_density(), 0.03)
        self.assertAlmostEqual(NoiseSpec.uniform(0.3).expected_energy_density(), 0.09)


class NetpbmTests(SimpleTestCase):

    def _pgm(self, width, height, pixels, maxval=255):
        return b"P5\n%d %d\n%d\n" % (width, height, maxval) + bytes(pixels)

    def test_round_trip_reproduces_bytes(self):
        pixels = Rng(1).integers(256, size=6 * 5).astype(np.uint8)
        data = self._pgm(6, 5, pixels)
        image = NetpbmCodec.decode(data)
        self.assertEqual(image.shape, (1, 5, 6))
        self.assertEqual(NetpbmCodec.encode(image), data)

    def test_ppm_round_trip_through_files(self):
        pixels = Rng(2).integers(256, size=4 * 3 * 3).astype(np.uint8)
        data = b"P6\n4 3\n255\n" + pixels.tobytes()
        with tempfile.TemporaryDirectory() as tmp:
            source = Path(tmp) / "in.ppm"
            source.write_bytes(data)
            image = read_image(source)
            self.assertEqual(image.shape, (3, 3, 4))
            target = write_image(Path(tmp) / "out.ppm", image)
            self.assertEqual(target.read_bytes(), data)

    def test_all_black(self):
        image = NetpbmCodec.decode(self._pgm(4, 4, [0] * 16))
        self.assertTrue(np.all(image == 0.0))

    def test_values_are_bytes_over_255(self):
        image = NetpbmCodec.decode(self._pgm(2, 1, [255, 51]))
        np.testing.assert_array_equal(image[0, 0], [1.0, 51 / 255])

    def test_header_comments(self):
        data = b"P5\n# made by hand\n2 1\n# maxval next\n255\n" + bytes([1, 2])
        self.assertEqual(NetpbmCodec.decode(data).shape, (1, 1, 2))

    def test_maxval_65535_rejected(self):
        with self.assertRaises(UnsupportedMaxvalError):
            NetpbmCodec.decode(self._pgm(2, 2, [0] * 8, maxval=65535))

    def test_maxval_below_255_rejected(self):
        with self.assertRaises(UnsupportedMaxvalError):
            NetpbmCodec.decode(self._pgm(2, 2, [0] * 4, maxval=100))

    def test_zero_width(self):
        with self.assertRaises(MalformedHeaderError):
            NetpbmCodec.decode(self._pgm(0, 2, []))

    def test_short_data(self):
        with self.assertRaises(TruncatedImageError):
            NetpbmCodec.decode(self._pgm(4, 4, [0] * 10))

    def test_bad_magic(self):
        with self.assertRaises(MalformedHeaderError) as ctx:
            NetpbmCodec.decode(b"P2\n2 2\n255\n0 0 0 0\n")
        self.assertIn("P2", str(ctx.exception))

    def test_missing_fields(self):
        with self.assertRaises(MalformedHeaderError):
            NetpbmCodec.decode(b"P5\n2")

    def test_encode_clamps_and_rounds(self):
        data = NetpbmCodec.encode(np.array([[[-0.5, 0.5, 1.7]]]))
        self.assertEqual(data[-3:], bytes([0, 128, 255]))


class CorpusTests(SimpleTestCase):

    def test_deterministic(self):
        first = synth_corpus(4, 16, seed=3)
        second = synth_corpus(4, 16, seed=3)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.clean, b.clean)

    def test_prefix_stable(self):
        small = synth_corpus(2, 16, seed=3)
        large = synth_corpus(5, 16, seed=3)
        np.testing.assert_array_equal(small[1].clean, large[1].clean)

    def test_range_and_shape(self):
        for patch in synth_corpus(16, (24, 32), seed=1):
            self.assertEqual(patch.shape, (1, 24, 32))
            self.assertGreaterEqual(patch.clean.min(), 0.0)
            self.assertLessEqual(patch.clean.max(), 1.0)

    def test_pixel_std(self):
        pixels = np.concatenate([p.clean.ravel() for p in synth_corpus(32, 32, seed=0)])
        self.assertGreaterEqual(pixels.std(), 0.1)
        self.assertLessEqual(pixels.std(), 0.4)

    def test_rejects_empty_corpus(self):
        with self.assertRaises(EmptyCorpusError):
            synth_corpus(0, 16, seed=0)

    def test_patch_invariants(self):
        with self.assertRaises(InvalidPatchError):
            ImagePatch(np.full((1, 2, 2), 1.5))
        with self.assertRaises(InvalidPatchError):
            ImagePatch(np.zeros((1, 2, 2)), noisy=np.zeros((1, 2, 3)))
        patch = ImagePatch(np.zeros((1, 2, 2))).with_noise(np.full((1, 2, 2), 0.1), 0.1)
        np.testing.assert_array_equal(patch.noisy, np.full((1, 2, 2), 0.1))
        self.assertEqual(patch.noise_sigma, 0.1)

    def test_directory_corpus(self):
        images = [p.clean for p in synth_corpus(3, 20, seed=4)]
        with tempfile.TemporaryDirectory() as tmp:
            for index, image in enumerate(images):
                write_image(Path(tmp) / f"img{index}.pgm", image)
            (Path(tmp) / "notes.txt").write_text("ignored")
            loaded = load_corpus_dir(tmp)
            self.assertEqual(len(loaded), 3)
            source = CorpusSource(kind="dir", path=tmp, size=8, count=10, seed=5)
            patches = source.load()
            again = CorpusSource.from_dict(source.to_dict()).load()
        self.assertEqual(source.name, Path(tmp).name)
        self.assertEqual(len(patches), 10)
        for a, b in zip(patches, again):
            self.assertEqual(a.shape, (1, 8, 8))
            np.testing.assert_array_equal(a.clean, b.clean)

    def test_empty_directory(self):
        with tempfile.TemporaryDirectory() as tmp, self.assertRaises(EmptyCorpusError):
            load_corpus_dir(tmp)

    def test_extract_patches_within_bounds(self):
        image = np.arange(100, dtype=np.float64).reshape(1, 10, 10) / 99
        for patch in extract_patches([image], 4, 50, Rng(3)):
            top, left = divmod(int(round(patch.clean[0, 0, 0] * 99)), 10)
            np.testing.assert_array_equal(patch.clean, image[:, top:top + 4, left:left + 4])

    def test_extract_patches_too_large(self):
        with self.assertRaises(PatchSizeError):
            extract_patches([np.zeros((1, 3, 3))], 4, 1, Rng(0))

    def test_synth_source_round_trip(self):
        source = CorpusSource(count=3, size=12, seed=8)
        self.assertEqual(source.name, "synth")
        for a, b in zip(source.load(), synth_corpus(3, 12, seed=8)):
            np.testing.assert_array_equal(a.clean, b.clean)
