import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kira.fits import synth_image, write_fits

BLOCK = 2880
CARD = 80


def card_bytes(text: str) -> bytes:
    """Pad one card string to 80 ASCII bytes."""
    assert len(text) <= CARD
    return text.ljust(CARD).encode("ascii")


def fixed_card(keyword: str, value: str) -> bytes:
    """Canonical fixed-format value card (value right-justified to col 30)."""
    return card_bytes(f"{keyword:<8}= {value:>20}")


def build_fits(cards, payload: bytes) -> bytes:
    """Assemble header cards + END + payload into 2880-byte records."""
    head = b"".join(cards) + card_bytes("END")
    head += b" " * (-len(head) % BLOCK)
    payload = payload + b"\x00" * (-len(payload) % BLOCK)
    return head + payload


def minimal_f32(width, height, payload=None):
    cards = [
        fixed_card("SIMPLE", "T"),
        fixed_card("BITPIX", "-32"),
        fixed_card("NAXIS", "2"),
        fixed_card("NAXIS1", str(width)),
        fixed_card("NAXIS2", str(height)),
    ]
    if payload is None:
        payload = b"\x00" * (4 * width * height)
    return build_fits(cards, payload)


@pytest.fixture
def sky_dir(tmp_path):
    """Directory of small synthetic images with 3 well-separated sources each."""
    def make(n_files=4, size=96, n_sources=3, seed=0, noise=2.0):
        d = tmp_path / "sky"
        d.mkdir(exist_ok=True)
        rng = np.random.default_rng(seed)
        truth = {}
        for i in range(n_files):
            positions = []
            while len(positions) < n_sources:
                x = float(rng.uniform(18, size - 18))
                y = float(rng.uniform(18, size - 18))
                if all((x - px) ** 2 + (y - py) ** 2 >= 24 ** 2 for px, py in positions):
                    positions.append((x, y))
            sources = [(x, y, 800.0, 1.8) for x, y in positions]
            hdu = synth_image(size, size, background=100.0, sources=sources,
                              noise_sigma=noise, noise_seed=1000 + i)
            path = d / f"img{i:03d}.fits"
            path.write_bytes(write_fits(hdu))
            truth[str(path)] = positions
        return d, truth
    return make
