"""FITS image I/O: 2880-byte records, 80-byte ASCII cards, big-endian payload.

Supports the single-image primary HDU subset used by survey pipelines:
BITPIX in {8, 16, 32, -32, -64}, BSCALE/BZERO scaling, BLANK for missing
integer pixels. Pixels are held in memory as float64 in physical units
(physical = BZERO + BSCALE * stored); BLANK pixels become NaN.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .errors import (DimensionMismatch, DimensionOverflow, MalformedHeader,
                     TruncatedData, UnsupportedBitpix, UnsupportedImage)

BLOCK = 2880
CARD = 80
CARDS_PER_BLOCK = BLOCK // CARD

_KEYWORD_RE = re.compile(r"^[A-Z0-9_-]{0,8}$")
_STRUCTURAL = ("SIMPLE", "BITPIX", "NAXIS", "NAXIS1", "NAXIS2", "END")
_MAX_AXIS = 2 ** 63 - 1

CardValue = Union[int, float, bool, str, None]


class Bitpix(IntEnum):
    I8 = 8
    I16 = 16
    I32 = 32
    F32 = -32
    F64 = -64

    @property
    def itemsize(self) -> int:
        return abs(int(self)) // 8


@dataclass
class HeaderCard:
    """One 80-byte header record: keyword, optional value, optional comment."""

    keyword: str
    value: CardValue = None
    comment: Optional[str] = None


@dataclass
class ImageHDU:
    """Primary image HDU: ordered header cards plus a float64 pixel matrix."""

    cards: List[HeaderCard]
    width: int
    height: int
    pixels: np.ndarray  # shape (height, width), physical units
    bitpix: Bitpix

    def card_value(self, keyword: str, default: CardValue = None) -> CardValue:
        for c in self.cards:
            if c.keyword == keyword:
                return c.value
        return default


def _format_value(value: CardValue) -> str:
    if isinstance(value, bool):
        return "T".rjust(20) if value else "F".rjust(20)
    if isinstance(value, int):
        return "%20d" % value
    if isinstance(value, float):
        return repr(value).upper().rjust(20)
    if isinstance(value, str):
        body = value.replace("'", "''")
        return "'%-8s'" % body
    return ""


def format_card(card: HeaderCard) -> bytes:
    """Serialize one card to exactly 80 ASCII bytes."""
    kw = card.keyword
    if not _KEYWORD_RE.match(kw):
        raise MalformedHeader(f"bad keyword {kw!r}")
    if kw in ("COMMENT", "HISTORY", "END", ""):
        text = card.comment or ""
        out = (kw.ljust(8) + text)[:CARD].ljust(CARD)
    else:
        out = kw.ljust(8) + "= " + _format_value(card.value)
        if card.comment is not None:
            out += " / " + card.comment
        if len(out) > CARD:
            out = out[:CARD]
        out = out.ljust(CARD)
    return out.encode("ascii")


def _parse_value(text: str) -> Tuple[CardValue, Optional[str]]:
    text = text.rstrip()
    if text.startswith("'"):
        i = 1
        chars = []
        while True:
            if i >= len(text):
                raise MalformedHeader(f"unterminated string in {text!r}")
            ch = text[i]
            if ch == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    chars.append("'")
                    i += 2
                    continue
                break
            chars.append(ch)
            i += 1
        rest = text[i + 1:]
        comment = _split_comment(rest)
        return "".join(chars).rstrip(), comment
    slash = text.find("/")
    if slash >= 0:
        raw, comment = text[:slash], text[slash + 1:].strip() or None
    else:
        raw, comment = text, None
    raw = raw.strip()
    if raw == "":
        return None, comment
    if raw == "T":
        return True, comment
    if raw == "F":
        return False, comment
    try:
        return int(raw), comment
    except ValueError:
        pass
    try:
        return float(raw.replace("D", "E").replace("d", "e")), comment
    except ValueError:
        raise MalformedHeader(f"cannot parse card value {raw!r}") from None


def _split_comment(rest: str) -> Optional[str]:
    slash = rest.find("/")
    if slash < 0:
        return None
    return rest[slash + 1:].strip() or None


def parse_card(raw: bytes) -> HeaderCard:
    """Decode one 80-byte record."""
    text = raw.decode("ascii", errors="replace")
    kw = text[:8].rstrip()
    if not _KEYWORD_RE.match(kw):
        raise MalformedHeader(f"bad keyword field {text[:8]!r}")
    if text[8:10] == "= " and kw not in ("COMMENT", "HISTORY", ""):
        value, comment = _parse_value(text[10:])
        return HeaderCard(kw, value, comment)
    return HeaderCard(kw, None, text[8:].rstrip() or None)


def parse_fits(data: bytes) -> ImageHDU:
    """Parse the primary image HDU of a FITS byte stream.

    Only the primary HDU is read; bytes past its payload are ignored.
    """
    if len(data) == 0 or len(data) % BLOCK != 0:
        raise MalformedHeader("file length is not a positive multiple of 2880")
    cards: List[HeaderCard] = []
    pos = 0
    ended = False
    while not ended:
        if pos + BLOCK > len(data):
            raise MalformedHeader("header has no END card")
        block = data[pos:pos + BLOCK]
        pos += BLOCK
        for i in range(CARDS_PER_BLOCK):
            card = parse_card(block[i * CARD:(i + 1) * CARD])
            cards.append(card)
            if card.keyword == "END":
                ended = True
                break
    if not cards or cards[0].keyword != "SIMPLE":
        raise MalformedHeader("first card is not SIMPLE")

    lookup = {}
    for c in cards:
        if c.keyword not in lookup:
            lookup[c.keyword] = c.value

    bitpix_raw = lookup.get("BITPIX")
    if not isinstance(bitpix_raw, int):
        raise MalformedHeader("missing or non-integer BITPIX")
    try:
        bitpix = Bitpix(bitpix_raw)
    except ValueError:
        raise UnsupportedBitpix(f"BITPIX={bitpix_raw}") from None

    naxis = lookup.get("NAXIS")
    if not isinstance(naxis, int):
        raise MalformedHeader("missing or non-integer NAXIS")
    if naxis != 2:
        raise UnsupportedImage(f"NAXIS={naxis}; only 2-D primary images supported")
    width = lookup.get("NAXIS1")
    height = lookup.get("NAXIS2")
    if not isinstance(width, int) or not isinstance(height, int) or width < 1 or height < 1:
        raise MalformedHeader("bad NAXIS1/NAXIS2")

    bscale = float(lookup.get("BSCALE", 1.0) or 1.0)
    bzero = float(lookup.get("BZERO", 0.0) or 0.0)
    blank = lookup.get("BLANK")
    has_blank = isinstance(blank, int) and bitpix > 0

    nbytes = width * height * bitpix.itemsize
    payload = memoryview(data)[pos:pos + nbytes]
    if len(payload) < nbytes:
        raise TruncatedData(f"payload has {len(payload)} of {nbytes} bytes")
    pixels = _kernels.decode_pixels(payload, int(bitpix), bscale, bzero,
                                    has_blank, blank if has_blank else 0,
                                    width, height)
    return ImageHDU(cards=cards, width=width, height=height,
                    pixels=pixels, bitpix=bitpix)


_ENCODE_DTYPES = {
    Bitpix.I8: ">u1",
    Bitpix.I16: ">i2",
    Bitpix.I32: ">i4",
    Bitpix.F32: ">f4",
    Bitpix.F64: ">f8",
}

_INT_RANGES = {
    Bitpix.I8: (0, 255),
    Bitpix.I16: (-32768, 32767),
    Bitpix.I32: (-2 ** 31, 2 ** 31 - 1),
}


def write_fits(hdu: ImageHDU) -> bytes:
    """Serialize an ImageHDU; output length is always a multiple of 2880.

    The payload is encoded per hdu.bitpix: stored = (physical - BZERO) / BSCALE,
    rounded for integer encodings. NaN pixels require a BLANK card for integer
    encodings and pass through for float ones.
    """
    if hdu.width > _MAX_AXIS or hdu.height > _MAX_AXIS:
        raise DimensionOverflow(f"axis {max(hdu.width, hdu.height)} too large")
    if hdu.width < 1 or hdu.height < 1:
        raise DimensionMismatch("axes must be >= 1")
    pixels = np.asarray(hdu.pixels, dtype=np.float64)
    if pixels.shape != (hdu.height, hdu.width):
        raise DimensionMismatch(
            f"pixels shape {pixels.shape} != (height={hdu.height}, width={hdu.width})")

    header_cards = [
        HeaderCard("SIMPLE", True, "conforms to FITS standard"),
        HeaderCard("BITPIX", int(hdu.bitpix)),
        HeaderCard("NAXIS", 2),
        HeaderCard("NAXIS1", hdu.width),
        HeaderCard("NAXIS2", hdu.height),
    ]
    for c in hdu.cards:
        if c.keyword not in _STRUCTURAL:
            header_cards.append(c)
    header_cards.append(HeaderCard("END"))

    head = b"".join(format_card(c) for c in header_cards)
    head += b" " * (-len(head) % BLOCK)

    bscale = float(hdu.card_value("BSCALE", 1.0) or 1.0)
    bzero = float(hdu.card_value("BZERO", 0.0) or 0.0)
    bitpix = Bitpix(hdu.bitpix)
    stored = (pixels - bzero) / bscale if (bzero != 0.0 or bscale != 1.0) else pixels
    if bitpix in _INT_RANGES:
        nan = ~np.isfinite(stored)
        blank = hdu.card_value("BLANK")
        if nan.any() and not isinstance(blank, int):
            raise OverflowError("NaN pixels need a BLANK card for integer BITPIX")
        stored = np.rint(stored)
        if nan.any():
            stored = stored.copy()
            stored[nan] = blank
        lo, hi = _INT_RANGES[bitpix]
        if stored.min() < lo or stored.max() > hi:
            raise OverflowError(f"stored values exceed BITPIX={int(bitpix)} range")
    body = np.ascontiguousarray(stored).astype(_ENCODE_DTYPES[bitpix]).tobytes()
    body += b"\x00" * (-len(body) % BLOCK)
    return head + body


def synth_image(width: int, height: int, background: float = 0.0,
                sources: Sequence[Tuple[float, float, float, float]] = (),
                noise_sigma: float = 0.0, noise_seed: int = 0,
                extra_cards: Sequence[HeaderCard] = ()) -> ImageHDU:
    """Deterministic synthetic sky: background + Gaussian blobs + seeded noise.

    sources: iterable of (x, y, amplitude, sigma) with sigma > 0.
    """
    if width < 1 or height < 1:
        raise DimensionMismatch("axes must be >= 1")
    img = np.full((height, width), float(background))
    for x0, y0, amp, sigma in sources:
        if sigma <= 0:
            raise ValueError("source sigma must be > 0")
        r = int(np.ceil(8.0 * sigma))
        x_lo, x_hi = max(int(x0) - r, 0), min(int(x0) + r + 1, width)
        y_lo, y_hi = max(int(y0) - r, 0), min(int(y0) + r + 1, height)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        xs = np.arange(x_lo, x_hi, dtype=np.float64) - x0
        ys = np.arange(y_lo, y_hi, dtype=np.float64) - y0
        img[y_lo:y_hi, x_lo:x_hi] += amp * np.exp(
            -(xs[None, :] ** 2 + ys[:, None] ** 2) / (2.0 * sigma * sigma))
    if noise_sigma > 0.0:
        rng = np.random.default_rng(noise_seed)
        img += rng.normal(0.0, noise_sigma, size=img.shape)
    cards = [
        HeaderCard("SIMPLE", True, "conforms to FITS standard"),
        HeaderCard("BITPIX", int(Bitpix.F32)),
        HeaderCard("NAXIS", 2),
        HeaderCard("NAXIS1", width),
        HeaderCard("NAXIS2", height),
        *extra_cards,
        HeaderCard("END"),
    ]
    return ImageHDU(cards=cards, width=width, height=height,
                    pixels=img, bitpix=Bitpix.F32)
