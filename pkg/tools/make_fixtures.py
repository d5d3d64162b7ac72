"""Regenerate the photographic test fixtures in tests/fixtures/.

Needs scikit-image (dev only). Each fixture is 960x512: two bundled
scikit-image photographs resized to 512 rows and laid side by side.
"""
from pathlib import Path

import numpy as np
from skimage import data
from skimage.transform import resize

from evasov.imagery import Frame, save_ppm

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
H = 512


def strip(img, width):
    scale = H / img.shape[0]
    w = max(width, int(round(img.shape[1] * scale)))
    r = resize(img, (H, w), anti_aliasing=True, preserve_range=True)
    x0 = (w - width) // 2
    return np.clip(np.round(r[:, x0:x0 + width]), 0, 255).astype(np.uint8)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    pairs = {
        "natural_a.ppm": (data.astronaut(), 512, data.rocket(), 448),
        "natural_b.ppm": (data.coffee(), 560, data.chelsea(), 400),
    }
    for name, (a, wa, b, wb) in pairs.items():
        pano = np.concatenate([strip(a, wa), strip(b, wb)], axis=1)
        assert pano.shape == (H, 960, 3)
        save_ppm(Frame(pano), OUT / name)
        print("wrote", OUT / name)


if __name__ == "__main__":
    main()
