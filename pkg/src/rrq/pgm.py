"""Binary PGM (P5) reading and writing.

Pixels are exchanged with the rest of the package as float64 arrays in
[0, 1]: an 8-bit sample v maps to v/255, a 16-bit big-endian sample to
v/maxval. Writing clamps to [0, 1] and quantizes with numpy's rint
(round half to even).
"""

import numpy as np


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    # header tokens separated by whitespace; '#' starts a comment to end of line
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PGM header")
        ch = data[i:i + 1]
        if ch == b"#":
            j = data.find(b"\n", i)
            i = len(data) if j < 0 else j + 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    """Load a P5 file as an (H, W) float array in [0, 1]."""
    data = open(path, "rb").read()
    tokens, pos = _read_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if not (0 < maxval < 65536):
        raise ValueError(f"{path}: invalid maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    count = width * height
    if maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
    else:
        raw = np.frombuffer(data, dtype=">u2", count=count, offset=pos)
    if raw.size < count:
        raise ValueError(f"{path}: pixel payload truncated")
    return raw.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    """Write an (H, W) float array in [0, 1] as P5; maxval 255 or 65535."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    levels = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    h, w = img.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    payload = levels.astype(np.uint8 if maxval == 255 else ">u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + payload)
