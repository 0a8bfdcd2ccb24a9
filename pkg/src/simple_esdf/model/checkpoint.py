"""
参数检查点：文本头 + 小端 float64 原始字节，逐位可往返.
"""

import json
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from simple_esdf.constants.system import SystemConstants
from simple_esdf.model.network import ModelParams, ModelSpec
from simple_esdf.utils.artifact import dump_config
from simple_esdf.utils.errors import DataError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

_DTYPE = "<f8"


def write_checkpoint(path: Path, params: ModelParams, meta: Dict[str, Any] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(meta or {})
    config = meta.pop("config", {})
    header = {
        "spec": params.spec.to_dict(),
        "seed": params.seed,
        "dtype": _DTYPE,
        "arrays": [[name, list(arr.shape)] for name, arr in params.arrays.items()],
        "meta": meta,
    }
    with path.open("wb") as fh:
        fh.write(f"#{SystemConstants.CHECKPOINT_MAGIC} v{SystemConstants.FORMAT_VERSION}\n".encode())
        fh.write(f"#tool={SystemConstants.APP_NAME} {SystemConstants.APP_VERSION}\n".encode())
        fh.write(f"#config={dump_config(config)}\n".encode())
        fh.write(f"#header={dump_config(header)}\n".encode())
        for arr in params.arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())
    logger.info("[Checkpoint] 写出 %d 个参数数组: %s", len(params.arrays), path)


def read_checkpoint(path: Path) -> Tuple[ModelParams, Dict[str, Any]]:
    """
    返回 (params, meta)，meta 中含 config 与写入时附带的字段.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"检查点不存在: {path}")
    with path.open("rb") as fh:
        magic = fh.readline().decode().rstrip("\n")
        expected = f"#{SystemConstants.CHECKPOINT_MAGIC} v{SystemConstants.FORMAT_VERSION}"
        if magic != expected:
            raise DataError(f"检查点魔数/版本不符: {magic[:40]!r}")
        fh.readline()  # tool
        config_line = fh.readline().decode().rstrip("\n")
        header_line = fh.readline().decode().rstrip("\n")
        payload = fh.read()

    try:
        config = json.loads(config_line.partition("=")[2])
        header = json.loads(header_line.partition("=")[2])
        spec = ModelSpec.from_dict(header["spec"])
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataError(f"检查点头无法解析: {e}") from e

    arrays: Dict[str, np.ndarray] = {}
    offset = 0
    itemsize = np.dtype(header["dtype"]).itemsize
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * itemsize
        if offset + nbytes > len(payload):
            raise DataError(f"检查点被截断: {name}")
        chunk = np.frombuffer(payload, dtype=header["dtype"], count=count, offset=offset)
        arrays[name] = chunk.astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise DataError("检查点尾部存在多余字节")

    meta = dict(header.get("meta", {}))
    meta["config"] = config
    return ModelParams(spec, arrays, int(header["seed"])), meta
