"""Encode one corpus image at several qualities and profiles.

Reports size, bits per pixel and PSNR, then checks that decoding and
re-encoding reproduces the same bytes.
"""

import numpy as np

from epq import PROFILES, CodecConfig, decode_image, encode_image
from epq.corpus import load_corpus

img = load_corpus()[2]
print(f"image {img.shape}")
for prof in PROFILES[:4]:
    for q in (30, 50, 90):
        cfg = CodecConfig(q, prof)
        data = encode_image(img, cfg)
        out = decode_image(data).image
        mse = np.mean((out.astype(float) - img) ** 2)
        psnr = 10 * np.log10(255 ** 2 / mse) if mse else float("inf")
        again = encode_image(out, cfg)
        print(f"{prof:22s} q{q:<3d} {len(data):7d} B  {8 * len(data) / img.size:.3f} bpp  "
              f"{psnr:5.2f} dB  re-encode {'same' if again == data else 'DIFFERENT'}")
