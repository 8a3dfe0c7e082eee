"""Multi-layer residual vector quantization with water-filling regularized,
procedurally generated Gaussian codebooks, for compressing and denoising
sets of related grayscale images.

The pipeline: orthonormal 2D DCT -> zig-zag scan -> per-sub-band PCA
rotation, then layered residual quantization against codebooks whose
per-dimension variances come from a reverse water-filling allocation. Models
and bitstreams serialize to compact binary containers; the bit-compatible
codebook generator is pinned by an identifier stored in the model file.
"""

__version__ = "0.1.0"

from .baseline import KmeansRqModel
from .baseline import train as kmeans_rq_train
from .codec import (
    Bitstream,
    CodecError,
    IntegrityError,
    TruncatedStreamError,
    bits_per_pixel,
    compress,
    decompress,
    index_width,
    load_model,
    model_hash,
    payload_bits,
    read_stream,
    save_model,
    write_stream,
)
from .evaluation import (
    DenoiseResult,
    RateDistortionPoint,
    add_noise,
    denoise,
    dr_sweep,
    mse,
    psnr,
    synth_corpus,
)
from .pgm import read_pgm, write_pgm
from .preprocess import PreprocessModel, dct2_forward, dct2_inverse, fit
from .preprocess import forward as preprocess_forward
from .preprocess import inverse as preprocess_inverse
from .preprocess import inverse_zigzag, zigzag
from .quantizer import RrqModel, TrainingReport, decode, encode, train
from .waterfill import (
    BudgetExceedsEnergy,
    DegenerateSource,
    WaterfillSolution,
    rate_at_gamma,
    solve_for_distortion,
    solve_for_rate,
)

__all__ = [
    "__version__",
    "KmeansRqModel",
    "kmeans_rq_train",
    "Bitstream",
    "CodecError",
    "IntegrityError",
    "TruncatedStreamError",
    "bits_per_pixel",
    "compress",
    "decompress",
    "index_width",
    "load_model",
    "model_hash",
    "payload_bits",
    "read_stream",
    "save_model",
    "write_stream",
    "DenoiseResult",
    "RateDistortionPoint",
    "add_noise",
    "denoise",
    "dr_sweep",
    "mse",
    "psnr",
    "synth_corpus",
    "read_pgm",
    "write_pgm",
    "PreprocessModel",
    "dct2_forward",
    "dct2_inverse",
    "fit",
    "preprocess_forward",
    "preprocess_inverse",
    "inverse_zigzag",
    "zigzag",
    "RrqModel",
    "TrainingReport",
    "decode",
    "encode",
    "train",
    "BudgetExceedsEnergy",
    "DegenerateSource",
    "WaterfillSolution",
    "rate_at_gamma",
    "solve_for_distortion",
    "solve_for_rate",
]
