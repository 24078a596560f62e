import numpy as np
import pytest

from conftest import build_fits, card_bytes, fixed_card, minimal_f32
from kira.errors import (MalformedHeader, TruncatedData, UnsupportedBitpix,
                         UnsupportedImage)
from kira.fits import (Bitpix, HeaderCard, ImageHDU, format_card, parse_card,
                       parse_fits, synth_image, write_fits)


class TestParse:
    def test_minimal_two_block_zero_image(self):
        data = minimal_f32(2, 2)
        assert len(data) == 2 * 2880
        hdu = parse_fits(data)
        assert (hdu.width, hdu.height) == (2, 2)
        assert hdu.bitpix == Bitpix.F32
        assert np.all(hdu.pixels == 0.0)

    def test_bzero_scaling_by_hand(self):
        # stored -32768 with BZERO 32768, BSCALE 1 -> physical 0.0
        cards = [
            fixed_card("SIMPLE", "T"),
            fixed_card("BITPIX", "16"),
            fixed_card("NAXIS", "2"),
            fixed_card("NAXIS1", "2"),
            fixed_card("NAXIS2", "1"),
            fixed_card("BSCALE", "1"),
            fixed_card("BZERO", "32768"),
        ]
        stored = np.array([-32768, 1000], dtype=">i2")
        hdu = parse_fits(build_fits(cards, stored.tobytes()))
        assert hdu.pixels[0, 0] == 0.0
        assert hdu.pixels[0, 1] == 32768.0 + 1000.0

    def test_big_endian_on_the_wire(self):
        cards = [
            fixed_card("SIMPLE", "T"),
            fixed_card("BITPIX", "16"),
            fixed_card("NAXIS", "2"),
            fixed_card("NAXIS1", "1"),
            fixed_card("NAXIS2", "1"),
        ]
        hdu = parse_fits(build_fits(cards, b"\x01\x02"))
        assert hdu.pixels[0, 0] == 0x0102

    def test_blank_maps_to_nan(self):
        cards = [
            fixed_card("SIMPLE", "T"),
            fixed_card("BITPIX", "16"),
            fixed_card("NAXIS", "2"),
            fixed_card("NAXIS1", "2"),
            fixed_card("NAXIS2", "1"),
            fixed_card("BLANK", "-99"),
        ]
        stored = np.array([-99, 5], dtype=">i2")
        hdu = parse_fits(build_fits(cards, stored.tobytes()))
        assert np.isnan(hdu.pixels[0, 0])
        assert hdu.pixels[0, 1] == 5.0

    def test_missing_end(self):
        block = fixed_card("SIMPLE", "T") * 36
        with pytest.raises(MalformedHeader):
            parse_fits(block)

    def test_first_card_not_simple(self):
        data = build_fits([fixed_card("NOTSIMPL", "T"),
                           fixed_card("BITPIX", "-32"),
                           fixed_card("NAXIS", "2"),
                           fixed_card("NAXIS1", "1"),
                           fixed_card("NAXIS2", "1")], b"\x00" * 4)
        with pytest.raises(MalformedHeader):
            parse_fits(data)

    def test_bad_length(self):
        with pytest.raises(MalformedHeader):
            parse_fits(minimal_f32(2, 2)[:-1])
        with pytest.raises(MalformedHeader):
            parse_fits(b"")

    def test_unsupported_bitpix(self):
        cards = [fixed_card("SIMPLE", "T"), fixed_card("BITPIX", "12"),
                 fixed_card("NAXIS", "2"), fixed_card("NAXIS1", "1"),
                 fixed_card("NAXIS2", "1")]
        with pytest.raises(UnsupportedBitpix):
            parse_fits(build_fits(cards, b"\x00" * 4))

    def test_not_two_dimensional(self):
        cards = [fixed_card("SIMPLE", "T"), fixed_card("BITPIX", "-32"),
                 fixed_card("NAXIS", "3"), fixed_card("NAXIS1", "1"),
                 fixed_card("NAXIS2", "1"), fixed_card("NAXIS3", "1")]
        with pytest.raises(UnsupportedImage):
            parse_fits(build_fits(cards, b"\x00" * 4))

    def test_truncated_payload(self):
        cards = [fixed_card("SIMPLE", "T"), fixed_card("BITPIX", "-64"),
                 fixed_card("NAXIS", "2"), fixed_card("NAXIS1", "100"),
                 fixed_card("NAXIS2", "100")]
        head = b"".join(cards) + card_bytes("END")
        head += b" " * (-len(head) % 2880)
        data = head + b"\x00" * 2880  # needs 80000 payload bytes
        with pytest.raises(TruncatedData):
            parse_fits(data)

    def test_trailing_bytes_ignored(self):
        data = minimal_f32(2, 2) + b"\x00" * 2880
        hdu = parse_fits(data)
        assert (hdu.width, hdu.height) == (2, 2)


class TestWrite:
    def test_two_by_two_zero_image_is_two_blocks(self):
        hdu = ImageHDU(cards=[HeaderCard("SIMPLE", True)], width=2, height=2,
                       pixels=np.zeros((2, 2)), bitpix=Bitpix.F32)
        out = write_fits(hdu)
        # 1 header block + 16 payload bytes padded to one block
        assert len(out) == 5760

    def test_length_always_block_multiple(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            w = int(rng.integers(1, 40))
            h = int(rng.integers(1, 40))
            hdu = synth_image(w, h, background=float(rng.normal()))
            assert len(write_fits(hdu)) % 2880 == 0

    def test_write_parse_write_byte_identity(self):
        f = write_fits(synth_image(8, 6, background=3.5,
                                   sources=[(4.0, 3.0, 10.0, 1.5)]))
        assert write_fits(parse_fits(f)) == f

    def test_parse_write_roundtrip_f32(self):
        hdu = synth_image(17, 9, background=100.0,
                          sources=[(8.0, 4.0, 55.0, 2.0)], noise_sigma=1.0)
        back = parse_fits(write_fits(hdu))
        assert (back.width, back.height) == (17, 9)
        assert back.bitpix == Bitpix.F32
        np.testing.assert_array_equal(
            back.pixels, hdu.pixels.astype(np.float32).astype(np.float64))
        for kw in ("SIMPLE", "BITPIX", "NAXIS", "NAXIS1", "NAXIS2"):
            assert back.card_value(kw) is not None

    def test_bzero_physical_roundtrip(self):
        cards = [
            fixed_card("SIMPLE", "T"), fixed_card("BITPIX", "16"),
            fixed_card("NAXIS", "2"), fixed_card("NAXIS1", "3"),
            fixed_card("NAXIS2", "1"), fixed_card("BZERO", "32768"),
        ]
        stored = np.array([-32768, 0, 1234], dtype=">i2")
        hdu = parse_fits(build_fits(cards, stored.tobytes()))
        back = parse_fits(write_fits(hdu))
        np.testing.assert_array_equal(back.pixels, hdu.pixels)

    def test_nan_needs_blank_for_integer_bitpix(self):
        hdu = ImageHDU(cards=[], width=2, height=1,
                       pixels=np.array([[1.0, np.nan]]), bitpix=Bitpix.I16)
        with pytest.raises(OverflowError):
            write_fits(hdu)

    def test_nan_roundtrip_with_blank(self):
        hdu = ImageHDU(cards=[HeaderCard("BLANK", -7)], width=2, height=1,
                       pixels=np.array([[1.0, np.nan]]), bitpix=Bitpix.I16)
        back = parse_fits(write_fits(hdu))
        assert back.pixels[0, 0] == 1.0
        assert np.isnan(back.pixels[0, 1])


class TestCards:
    @pytest.mark.parametrize("value", [True, False, 0, -17, 32768, 1.0, -2.5e-3,
                                       "OBSERVER", None])
    def test_value_roundtrip(self, value):
        raw = format_card(HeaderCard("TESTKEY", value, "a comment"))
        assert len(raw) == 80
        card = parse_card(raw)
        assert card.keyword == "TESTKEY"
        assert card.value == value
        assert card.comment == "a comment"

    def test_string_quote_escaping(self):
        card = parse_card(format_card(HeaderCard("NAME", "O'BRIEN")))
        assert card.value == "O'BRIEN"

    def test_comment_card(self):
        card = parse_card(format_card(HeaderCard("COMMENT", None, "free text")))
        assert card.keyword == "COMMENT"
        assert card.value is None
        assert card.comment == "free text"

    def test_bad_keyword_rejected(self):
        with pytest.raises(MalformedHeader):
            format_card(HeaderCard("bad key", 1))
        with pytest.raises(MalformedHeader):
            parse_card(b"bad key =                    1".ljust(80))

    def test_bad_value_rejected(self):
        with pytest.raises(MalformedHeader):
            parse_card(card_bytes("KEY     = $$$"))


class TestSynth:
    def test_constant_background(self):
        hdu = synth_image(5, 4, background=100.0)
        assert np.all(hdu.pixels == 100.0)

    def test_peak_at_source(self):
        hdu = synth_image(64, 64, sources=[(32.0, 32.0, 1000.0, 2.0)])
        assert np.unravel_index(np.argmax(hdu.pixels), hdu.pixels.shape) == (32, 32)
        assert hdu.pixels[32, 32] == pytest.approx(1000.0)

    def test_seed_determinism(self):
        a = synth_image(32, 32, background=5.0, noise_sigma=2.0, noise_seed=42)
        b = synth_image(32, 32, background=5.0, noise_sigma=2.0, noise_seed=42)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        c = synth_image(32, 32, background=5.0, noise_sigma=2.0, noise_seed=43)
        assert not np.array_equal(a.pixels, c.pixels)
