"""Exponential-power models, density quantizers and a predictive DCT codec."""

from .codec import (CodecConfig, ContainerError, DecodeResult, EncodeResult, ModelSet,
                    PROFILES, builtin_models, decode_image, encode_image,
                    encode_image_detailed, evaluate_pipeline, fit_models)
from .coder import CodingTable, StreamDecoder, StreamEncoder, decode_stream, encode_stream
from .epd import (EpdParams, RateDistortionPoint, epd_cdf, epd_icdf, epd_mle, epd_pdf,
                  epd_sample, kappa_profile)
from .ladder import DEFAULT_E, SigmaLadder, build_ladder, ladder_lookup
from .pnm import PnmError, read_pnm, write_pnm
from .predict import cca, fit_boundary_models, fit_least_squares
from .quantizer import (QuantizerN, density_distortion_optimal, density_rd, eval_rd,
                        nodes_from_density, quantize, dequantize, uniform_density)
from .transform import dct2_forward, dct2_inverse, partition_and_pad, unpartition, zigzag

__version__ = "0.1.0"
