"""PNG codec: round trips, interoperability checks, and malformed input."""

import struct
import zlib

import numpy as np
import pytest

import reflfield.pngio as pngio


def random_image(shape, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=shape, dtype=np.uint8)


class TestRoundTrip:
    @pytest.mark.parametrize("shape", [(5, 7), (1, 1), (8, 3, 3), (4, 4, 4)])
    def test_encode_decode_identity(self, shape):
        img = random_image(shape)
        decoded = pngio.decode(pngio.encode(img))
        expected = img if img.ndim == 3 else img[:, :, None]
        np.testing.assert_array_equal(decoded, expected.reshape(decoded.shape))

    def test_write_read_file(self, tmp_path):
        img = random_image((6, 6, 3), seed=1)
        path = tmp_path / "img.png"
        pngio.write(path, img)
        np.testing.assert_array_equal(pngio.read(path), img)

    def test_grayscale_keeps_single_channel(self):
        img = random_image((3, 4))
        decoded = pngio.decode(pngio.encode(img))
        assert decoded.shape[-1] == 1 or decoded.ndim == 2

    def test_deterministic_bytes(self):
        img = random_image((5, 5, 3), seed=2)
        assert pngio.encode(img) == pngio.encode(img)


class TestFormatCompliance:
    def test_signature_and_chunks(self):
        data = pngio.encode(random_image((2, 2, 3)))
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert b"IHDR" in data and b"IDAT" in data
        # IEND is the final chunk: tag then its CRC
        assert data[-8:-4] == b"IEND"
        assert data[-4:] == struct.pack(">I", zlib.crc32(b"IEND"))

    def test_header_dimensions(self):
        data = pngio.encode(random_image((3, 7, 3)))
        width, height = struct.unpack(">II", data[16:24])
        assert (width, height) == (7, 3)

    def test_stdlib_can_inflate_payload(self):
        # IDAT payload decompresses to H scanlines of 1 + W*C bytes
        img = random_image((4, 5, 3), seed=3)
        data = pngio.encode(img)
        idat_start = data.index(b"IDAT") + 4
        length = struct.unpack(">I", data[idat_start - 8 : idat_start - 4])[0]
        raw = zlib.decompress(data[idat_start : idat_start + length])
        assert len(raw) == 4 * (1 + 5 * 3)


class TestValidation:
    def test_non_uint8_rejected(self):
        with pytest.raises(pngio.PngError, match="uint8"):
            pngio.encode(np.zeros((2, 2), dtype=np.float32))

    def test_bad_channel_count_rejected(self):
        with pytest.raises(pngio.PngError, match="shape"):
            pngio.encode(np.zeros((2, 2, 2), dtype=np.uint8))

    def test_empty_image_rejected(self):
        with pytest.raises(pngio.PngError, match="empty"):
            pngio.encode(np.zeros((0, 4, 3), dtype=np.uint8))

    def test_bad_signature_rejected(self):
        with pytest.raises(pngio.PngError):
            pngio.decode(b"not a png at all")

    def test_truncated_data_rejected(self):
        data = pngio.encode(random_image((4, 4, 3)))
        with pytest.raises(pngio.PngError):
            pngio.decode(data[: len(data) // 2])

    def test_corrupt_crc_rejected(self):
        data = bytearray(pngio.encode(random_image((4, 4, 3))))
        data[-5] ^= 0xFF  # flip a CRC byte of IEND
        with pytest.raises(pngio.PngError):
            pngio.decode(bytes(data))

    def test_missing_file_reports_path(self, tmp_path):
        missing = tmp_path / "nope.png"
        with pytest.raises((OSError, pngio.PngError)):
            pngio.read(missing)
