"""Point cloud codec built on per-cloud coordinate networks."""

from ._nirpcc import (
    DataError,
    InternalError,
    NetworkConfig,
    __version__,
    d1_psnr,
    decode,
    decode_file,
    encode,
    encode_file,
    evaluate,
    read_ply,
    voxelize,
    write_ply,
    y_psnr,
)

__all__ = [
    "DataError",
    "InternalError",
    "NetworkConfig",
    "__version__",
    "d1_psnr",
    "decode",
    "decode_file",
    "encode",
    "encode_file",
    "evaluate",
    "read_ply",
    "voxelize",
    "write_ply",
    "y_psnr",
]
