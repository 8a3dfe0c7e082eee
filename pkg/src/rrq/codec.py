"""Bit-exact file formats and the end-to-end compression pipeline.

Model container (.rrqm), all scalars little-endian:

    offset  size  field
    0       4     magic "RRQM"
    4       4     format version (u32, currently 1)
    8       16    geometry: H, W, M, n (4 x u32)
    24      2+g   generator id: u16 length + utf-8 bytes
    ..      8     model seed (u64)
    ..      4     layer count L (u32)
    per layer:
            4     K (u32)
            8     gamma (f64)
            8     training residual variance total (f64)
            4     nnz (u32)
            12*nnz  sparse codeword variances: (index u32, value f64) pairs
    preprocess payload:
            4     subband length n/M (u32)
            8*M*(n/M)        means (f64)
            8*M*(n/M)^2      rotations, row-major (f64)
    32            SHA-256 over every preceding byte

Bitstream (.rrq):

    0       4     magic "RRQ1"
    4       8     first 8 bytes of the container hash
    12      4     image count (u32)
    per image:
            2     layers used L_use (u16)
            ceil(sum(ceil(log2 K_l)) / 8) bytes of indices, MSB-first,
            fixed width ceil(log2 K_l) bits per layer, byte-padded per image

Rates are accounted with that fixed-width formula; no entropy coding is
applied to the indices (an entropy-coded mode is out of scope).
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import preprocess, quantizer, rng

MODEL_MAGIC = b"RRQM"
STREAM_MAGIC = b"RRQ1"
FORMAT_VERSION = 1


class CodecError(Exception):
    """Malformed container or bitstream."""


class IntegrityError(CodecError):
    """Hash, magic, version, or generator mismatch."""


class TruncatedStreamError(CodecError):
    """Payload ended mid-record; no partial output is produced."""


def index_width(codewords: int) -> int:
    """Fixed index width in bits: ceil(log2 K)."""
    return int(codewords - 1).bit_length()


def payload_bits(model: quantizer.RrqModel, layers_used: int) -> int:
    return sum(index_width(spec.codewords) for spec in model.layers[:layers_used])


def bits_per_pixel(model: quantizer.RrqModel, layers_used: int, height: int, width: int) -> float:
    return payload_bits(model, layers_used) / float(height * width)


# ---------------------------------------------------------------------------
# model container


def _preprocess_payload(pre: preprocess.PreprocessModel) -> bytes:
    parts = [struct.pack("<I", pre.subband_length)]
    for mu in pre.means:
        parts.append(np.asarray(mu, dtype="<f8").tobytes())
    for rot in pre.rotations:
        parts.append(np.ascontiguousarray(rot, dtype="<f8").tobytes())
    return b"".join(parts)


def preprocess_identity(pre: preprocess.PreprocessModel) -> bytes:
    """SHA-256 identity of a fitted preprocess model (geometry + payload)."""
    head = struct.pack("<III", pre.height, pre.width, pre.subbands)
    return hashlib.sha256(head + _preprocess_payload(pre)).digest()


def model_container_bytes(pre: preprocess.PreprocessModel, model: quantizer.RrqModel) -> bytes:
    if model.dim != pre.dim:
        raise ValueError(f"model dimension {model.dim} != preprocess dimension {pre.dim}")
    gen = model.generator_id.encode("utf-8")
    parts = [
        MODEL_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<IIII", pre.height, pre.width, pre.subbands, pre.dim),
        struct.pack("<H", len(gen)), gen,
        struct.pack("<Q", model.model_seed & 0xFFFFFFFFFFFFFFFF),
        struct.pack("<I", model.depth),
    ]
    for spec in model.layers:
        parts.append(struct.pack("<IddI", spec.codewords, spec.gamma,
                                 spec.train_variance_total, spec.active_idx.size))
        pairs = np.empty(spec.active_idx.size, dtype=[("idx", "<u4"), ("val", "<f8")])
        pairs["idx"] = spec.active_idx
        pairs["val"] = spec.codeword_variances
        parts.append(pairs.tobytes())
    parts.append(_preprocess_payload(pre))
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def model_hash(pre: preprocess.PreprocessModel, model: quantizer.RrqModel) -> bytes:
    """SHA-256 of the serialized container (the stream linkage identity)."""
    return model_container_bytes(pre, model)[-32:]


def save_model(path, pre: preprocess.PreprocessModel, model: quantizer.RrqModel) -> bytes:
    blob = model_container_bytes(pre, model)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob[-32:]


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise TruncatedStreamError(
                f"need {count} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path_or_bytes) -> tuple[preprocess.PreprocessModel, quantizer.RrqModel, bytes]:
    """Read and verify a container; returns (preprocess, model, content hash)."""
    data = path_or_bytes if isinstance(path_or_bytes, bytes) else open(path_or_bytes, "rb").read()
    if len(data) < 36 or data[:4] != MODEL_MAGIC:
        raise IntegrityError("not an RRQM model container")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("model container hash mismatch")

    cur = _Cursor(body)
    cur.take(4)
    (version,) = cur.unpack("<I")
    if version != FORMAT_VERSION:
        raise IntegrityError(f"unsupported container version {version}")
    height, width, subbands, dim = cur.unpack("<IIII")
    if dim != height * width or subbands < 1 or dim % subbands != 0:
        raise CodecError("inconsistent container geometry")
    (gen_len,) = cur.unpack("<H")
    generator_id = cur.take(gen_len).decode("utf-8")
    if generator_id != rng.GENERATOR_ID:
        raise IntegrityError(f"unknown codeword generator {generator_id!r}")
    (model_seed,) = cur.unpack("<Q")
    (depth,) = cur.unpack("<I")

    layers = []
    for l in range(1, depth + 1):
        codewords, gamma, var_total, nnz = cur.unpack("<IddI")
        pairs = np.frombuffer(cur.take(12 * nnz), dtype=[("idx", "<u4"), ("val", "<f8")])
        layers.append(quantizer.LayerSpec(
            index=l, codewords=codewords, gamma=gamma,
            active_idx=pairs["idx"].astype(np.uint32),
            codeword_variances=pairs["val"].astype(np.float64),
            seed=rng.mix(model_seed, l),
            train_variance_total=var_total,
        ))

    (blk,) = cur.unpack("<I")
    if blk != dim // subbands:
        raise CodecError("sub-band length does not match geometry")
    means, rotations = [], []
    for _ in range(subbands):
        means.append(np.frombuffer(cur.take(8 * blk), dtype="<f8").astype(np.float64))
    for _ in range(subbands):
        rot = np.frombuffer(cur.take(8 * blk * blk), dtype="<f8").astype(np.float64)
        rotations.append(rot.reshape(blk, blk))
    if cur.pos != len(body):
        raise CodecError(f"{len(body) - cur.pos} trailing bytes in container")

    pre = preprocess.PreprocessModel(height=height, width=width, subbands=subbands,
                                     means=means, rotations=rotations)
    model = quantizer.RrqModel(dim=dim, model_seed=model_seed, layers=layers,
                               preprocess_hash=preprocess_identity(pre))
    return pre, model, digest


# ---------------------------------------------------------------------------
# bit packing


def pack_indices(indices, widths) -> bytes:
    """MSB-first fixed-width packing, padded to a whole number of bytes."""
    acc = 0
    nbits = 0
    for value, width in zip(indices, widths):
        acc = (acc << width) | int(value)
        nbits += width
    pad = (-nbits) % 8
    acc <<= pad
    return int(acc).to_bytes((nbits + pad) // 8, "big")


def unpack_indices(blob: bytes, widths) -> np.ndarray:
    total = sum(widths)
    if len(blob) * 8 < total:
        raise TruncatedStreamError("index payload shorter than declared layer count")
    acc = int.from_bytes(blob, "big")
    acc >>= len(blob) * 8 - total
    out = np.empty(len(widths), dtype=np.int64)
    for slot in range(len(widths) - 1, -1, -1):
        width = widths[slot]
        out[slot] = acc & ((1 << width) - 1)
        acc >>= width
    return out


# ---------------------------------------------------------------------------
# compress / decompress


@dataclass(frozen=True)
class Bitstream:
    model_hash8: bytes
    image_codes: list  # one int64 index array per image

    def payload_bits(self, model: quantizer.RrqModel) -> list[int]:
        return [payload_bits(model, len(code)) for code in self.image_codes]


def compress(images, pre: preprocess.PreprocessModel, model: quantizer.RrqModel,
             layers_used: int) -> Bitstream:
    """Encode images through the full pipeline into a truncatable bitstream."""
    if not (0 <= layers_used <= model.depth):
        raise ValueError(f"layers_used={layers_used} outside [0, {model.depth}]")
    codes = []
    for img in images:
        vec = preprocess.forward(img, pre)
        codes.append(quantizer.encode(vec, model, layers_used))
    return Bitstream(model_hash8=model_hash(pre, model)[:8], image_codes=codes)


def write_stream(path_or_none, stream: Bitstream, model: quantizer.RrqModel) -> bytes:
    parts = [STREAM_MAGIC, stream.model_hash8, struct.pack("<I", len(stream.image_codes))]
    for code in stream.image_codes:
        layers_used = len(code)
        if layers_used > 0xFFFF:
            raise ValueError("layer prefix too deep for a 16-bit record")
        widths = [index_width(spec.codewords) for spec in model.layers[:layers_used]]
        parts.append(struct.pack("<H", layers_used))
        parts.append(pack_indices(code, widths))
    blob = b"".join(parts)
    if path_or_none is not None:
        with open(path_or_none, "wb") as fh:
            fh.write(blob)
    return blob


def read_stream(path_or_bytes, model: quantizer.RrqModel,
                expected_hash: bytes | None = None) -> Bitstream:
    data = path_or_bytes if isinstance(path_or_bytes, bytes) else open(path_or_bytes, "rb").read()
    cur = _Cursor(data)
    if cur.take(4) != STREAM_MAGIC:
        raise IntegrityError("not an RRQ bitstream")
    hash8 = cur.take(8)
    if expected_hash is not None and hash8 != expected_hash[:8]:
        raise IntegrityError("bitstream was produced by a different model")
    (count,) = cur.unpack("<I")
    codes = []
    for _ in range(count):
        (layers_used,) = cur.unpack("<H")
        if layers_used > model.depth:
            raise CodecError(f"stream uses {layers_used} layers, model has {model.depth}")
        widths = [index_width(spec.codewords) for spec in model.layers[:layers_used]]
        nbytes = (sum(widths) + 7) // 8
        code = unpack_indices(cur.take(nbytes), widths)
        for l, spec in enumerate(model.layers[:layers_used]):
            if code[l] >= spec.codewords:
                raise CodecError(f"layer {l + 1} index {code[l]} out of range")
        codes.append(code)
    if cur.pos != len(data):
        raise CodecError(f"{len(data) - cur.pos} trailing bytes in stream")
    return Bitstream(model_hash8=hash8, image_codes=codes)


def decompress(stream: Bitstream, pre: preprocess.PreprocessModel,
               model: quantizer.RrqModel) -> list[np.ndarray]:
    """Reconstruct images; bit-exact match with the in-memory decode path."""
    if stream.model_hash8 != model_hash(pre, model)[:8]:
        raise IntegrityError("bitstream was produced by a different model")
    out = []
    for code in stream.image_codes:
        vec = quantizer.decode(code, model)
        out.append(preprocess.inverse(vec, pre))
    return out
