import unittest

import numpy as np
from numpy.testing import assert_array_equal

from S2CLinkTools.core.channel import gaussian_blur
from S2CLinkTools.core.errors import CapacityError, ConfigurationError, EncodingError, ShapeError
from S2CLinkTools.core.frame_codec import (DARK, LIGHT, ROLE_BORDER, ROLE_FINDER, ROLE_PAYLOAD, CodecConfig,
                                           FrameKind, FramePayload, base_frame, bits_to_text, cell_means,
                                           cell_roles, decode_frame, encode_frame, frames_for_text,
                                           join_payloads, make_overhead_frame, payload_capacity,
                                           segment_stream, sync_codeword, text_from_frames, text_to_bits)

QR_KINDS = (FrameKind.DATA_QR1, FrameKind.DATA_QR2, FrameKind.OVERHEAD)


def _cells(img, cfg):
    """Cell intensities of a clean frame."""
    c = cfg.cell_px
    return img[c // 2::c, c // 2::c]


class TestFrameKind(unittest.TestCase):
    def test_parse(self):
        self.assertIs(FrameKind.parse('d_f1'), FrameKind.DATA_QR1)
        self.assertIs(FrameKind.parse('overhead'), FrameKind.OVERHEAD)
        self.assertIs(FrameKind.parse(FrameKind.ASCII), FrameKind.ASCII)
        self.assertEqual([k.index for k in FrameKind], [0, 1, 2, 3])
        with self.assertRaises(ConfigurationError):
            FrameKind.parse('x_f')


class TestLayout(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.cfg = CodecConfig()

    def test_capacity(self):
        # 625 cells - 3 finders of 49 - 96 quiet-zone cells
        self.assertEqual(self.cfg.capacity, 382)
        self.assertEqual(payload_capacity(self.cfg, FrameKind.OVERHEAD), 382)
        self.assertEqual(payload_capacity(self.cfg, FrameKind.ASCII), 529)

    def test_roles_partition_the_grid(self):
        for kind in FrameKind:
            roles = cell_roles(self.cfg, kind)
            self.assertEqual(roles.shape, (25, 25))
            self.assertTrue(np.all(np.isin(roles, [ROLE_BORDER, ROLE_FINDER, ROLE_PAYLOAD])))
            self.assertEqual(np.sum(roles == ROLE_PAYLOAD), payload_capacity(self.cfg, kind))
        self.assertEqual(np.sum(cell_roles(self.cfg, FrameKind.DATA_QR1) == ROLE_FINDER), 3 * 49)
        self.assertEqual(np.sum(cell_roles(self.cfg, FrameKind.ASCII) == ROLE_FINDER), 0)

    def test_zero_payload_qr(self):
        payload = FramePayload(np.zeros(382), FrameKind.DATA_QR1)
        cells = _cells(encode_frame(payload, self.cfg), self.cfg)
        roles = cell_roles(self.cfg, FrameKind.DATA_QR1)
        dark = cells == DARK
        self.assertTrue(dark.any())
        self.assertTrue(np.all(roles[dark] == ROLE_FINDER))
        self.assertTrue(np.all(cells[roles == ROLE_BORDER] == LIGHT))

    def test_zero_payload_ascii(self):
        payload = FramePayload(np.zeros(529), FrameKind.ASCII)
        cells = _cells(encode_frame(payload, self.cfg), self.cfg)
        roles = cell_roles(self.cfg, FrameKind.ASCII)
        assert_array_equal(cells == DARK, roles == ROLE_BORDER)

    def test_image_values(self):
        img = base_frame(FrameKind.DATA_QR2, self.cfg)
        self.assertEqual(img.shape, (100, 100))
        self.assertTrue(np.all((img == DARK) | (img == LIGHT)))


class TestSegmentation(unittest.TestCase):
    def test_segment_exact(self):
        bits = np.random.default_rng(0).integers(0, 2, 32000)
        payloads = segment_stream(bits, 500)
        self.assertEqual(len(payloads), 64)
        self.assertTrue(all(len(p) == 500 and p.n_data == 500 for p in payloads))
        assert_array_equal(join_payloads(payloads), bits)

    def test_segment_padding(self):
        bits = np.ones(501, dtype=np.uint8)
        payloads = segment_stream(bits, 500)
        self.assertEqual(len(payloads), 2)
        self.assertEqual(payloads[1].n_data, 1)
        self.assertEqual(len(payloads[1]), 500)
        self.assertEqual(payloads[1].bits.sum(), 1)
        assert_array_equal(join_payloads(payloads), bits)

    def test_segment_edge_cases(self):
        self.assertEqual(segment_stream([], 500), [])
        assert_array_equal(join_payloads([]), [])
        with self.assertRaises(ConfigurationError):
            segment_stream([1, 0], 0)
        with self.assertRaises(ValueError):
            segment_stream([1, 2], 10)

    def test_payload_is_read_only(self):
        payload = FramePayload([1, 0, 1], FrameKind.DATA_QR1)
        with self.assertRaises(ValueError):
            payload.bits[0] = 0


class TestEncodeDecode(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.cfg = CodecConfig()

    def test_round_trip(self):
        rng = np.random.default_rng(42)
        for kind in FrameKind:
            capacity = payload_capacity(self.cfg, kind)
            bits = rng.integers(0, 2, capacity)
            decoded = decode_frame(encode_frame(FramePayload(bits, kind), self.cfg), kind, self.cfg)
            assert_array_equal(decoded.bits, bits)

    def test_many_payloads_clean_and_blurred(self):
        rng = np.random.default_rng(1000)
        blurred_exact = 0
        for _ in range(1000):
            bits = rng.integers(0, 2, self.cfg.capacity)
            img = encode_frame(FramePayload(bits, FrameKind.DATA_QR1), self.cfg)
            assert_array_equal(decode_frame(img, FrameKind.DATA_QR1, self.cfg).bits, bits)
            decoded = decode_frame(gaussian_blur(img, 0.8), FrameKind.DATA_QR1, self.cfg)
            blurred_exact += np.array_equal(decoded.bits, bits)
        self.assertGreaterEqual(blurred_exact, 990)

    def test_short_payload_is_zero_padded(self):
        bits = np.random.default_rng(1).integers(0, 2, 300)
        decoded = decode_frame(encode_frame(FramePayload(bits, FrameKind.DATA_QR1), self.cfg),
                               FrameKind.DATA_QR1, self.cfg)
        assert_array_equal(decoded.bits[:300], bits)
        self.assertEqual(decoded.bits[300:].sum(), 0)

    def test_decode_thresholds_cell_centers(self):
        bits = np.random.default_rng(2).integers(0, 2, 382)
        img = encode_frame(FramePayload(bits, FrameKind.DATA_QR1), self.cfg)
        # mild uniform noise and a one-pixel smear along cell edges do not change the bits
        noisy = np.clip(img + np.random.default_rng(3).uniform(-0.3, 0.3, img.shape), 0, 1)
        noisy[::4] = 0.5
        assert_array_equal(decode_frame(noisy, FrameKind.DATA_QR1, self.cfg).bits, bits)

    def test_all_white_ascii(self):
        img = np.ones((100, 100))
        decoded = decode_frame(img, FrameKind.ASCII, self.cfg)
        self.assertEqual(len(decoded), 529)
        self.assertEqual(decoded.bits.sum(), 0)

    def test_errors(self):
        with self.assertRaises(CapacityError):
            encode_frame(FramePayload(np.zeros(383), FrameKind.DATA_QR1), self.cfg)
        with self.assertRaises(ShapeError):
            decode_frame(np.ones((99, 100)), FrameKind.DATA_QR1, self.cfg)
        with self.assertRaises(ShapeError):
            cell_means(np.ones((100, 100, 3)), self.cfg)

    def test_other_geometry(self):
        cfg = CodecConfig(frame_px=105, grid_cells=21)
        self.assertEqual(cfg.cell_px, 5)
        bits = np.random.default_rng(4).integers(0, 2, cfg.capacity)
        img = encode_frame(FramePayload(bits, FrameKind.DATA_QR2), cfg)
        self.assertEqual(img.shape, (105, 105))
        assert_array_equal(decode_frame(img, FrameKind.DATA_QR2, cfg).bits, bits)


class TestOverhead(unittest.TestCase):
    def test_deterministic(self):
        cfg = CodecConfig()
        assert_array_equal(make_overhead_frame(cfg), make_overhead_frame(cfg))

    def test_codeword(self):
        cfg = CodecConfig()
        codeword = sync_codeword(cfg)
        self.assertEqual(len(codeword), 382)
        # 0xFE: seven dark cells in eight
        assert_array_equal(codeword[:8], [1, 1, 1, 1, 1, 1, 1, 0])
        decoded = decode_frame(make_overhead_frame(cfg), FrameKind.OVERHEAD, cfg)
        assert_array_equal(decoded.bits, codeword)

    def test_base_frames_differ(self):
        cfg = CodecConfig()
        frames = [base_frame(kind, cfg) for kind in FrameKind]
        for i in range(len(frames)):
            for j in range(i + 1, len(frames)):
                self.assertFalse(np.array_equal(frames[i], frames[j]))

    def test_qr_and_ascii_frames_separate(self):
        cfg = CodecConfig()
        qr = base_frame(FrameKind.DATA_QR1, cfg)
        finder = cell_roles(cfg, FrameKind.DATA_QR1) == ROLE_FINDER
        finder_mass = np.sum(LIGHT - _cells(qr, cfg)[finder]) * cfg.cell_px ** 2
        self.assertEqual(finder_mass, 3 * 33 * 16)

        rng = np.random.default_rng(21)
        ascii_capacity = payload_capacity(cfg, FrameKind.ASCII)
        for _ in range(200):
            kind = QR_KINDS[rng.integers(len(QR_KINDS))]
            if kind is FrameKind.OVERHEAD:
                a = make_overhead_frame(cfg)
            else:
                a = encode_frame(FramePayload(rng.integers(0, 2, cfg.capacity), kind), cfg)
            b = encode_frame(FramePayload(rng.integers(0, 2, ascii_capacity), FrameKind.ASCII), cfg)
            self.assertGreaterEqual(np.abs(a - b).sum(), finder_mass)


class TestText(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.cfg = CodecConfig()

    def test_text_bits(self):
        bits = text_to_bits(u'A')
        assert_array_equal(bits, [0, 1, 0, 0, 0, 0, 0, 1])
        self.assertEqual(bits_to_text(text_to_bits(u'caf\xe9')), u'caf\xe9')
        with self.assertRaises(EncodingError):
            text_to_bits(u'€')
        with self.assertRaises(ValueError):
            bits_to_text([1, 0, 1])

    def test_frame_counts(self):
        # 32000 bits at 382 bits per frame
        self.assertEqual(len(frames_for_text(u'x' * 4000, FrameKind.DATA_QR1, self.cfg)), 84)
        self.assertEqual(len(frames_for_text(u'a', FrameKind.DATA_QR1, self.cfg)), 1)

    def test_frame_count_at_capacity_500(self):
        # a 500-bit payload needs a larger grid than the default one
        cfg = CodecConfig(frame_px=116, grid_cells=29)
        self.assertGreaterEqual(cfg.capacity, 500)
        frames = frames_for_text(u'y' * 4000, FrameKind.DATA_QR1, cfg, capacity=500)
        self.assertEqual(len(frames), 64)
        self.assertEqual(text_from_frames(frames, FrameKind.DATA_QR1, cfg, 4000, capacity=500), u'y' * 4000)

    def test_text_round_trip(self):
        text = u'Hello, camera! \xe9\xe8 0123456789' * 20
        for kind in (FrameKind.DATA_QR1, FrameKind.ASCII):
            frames = frames_for_text(text, kind, self.cfg)
            self.assertEqual(text_from_frames(frames, kind, self.cfg, len(text)), text)

    def test_errors(self):
        with self.assertRaises(EncodingError):
            frames_for_text(u'π', FrameKind.DATA_QR1, self.cfg)
        with self.assertRaises(ValueError):
            frames_for_text(u'', FrameKind.DATA_QR1, self.cfg)
        with self.assertRaises(CapacityError):
            frames_for_text(u'abc', FrameKind.DATA_QR1, self.cfg, capacity=383)
