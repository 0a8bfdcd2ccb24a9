"""
所有产出文件共用的版本化文件头.

    #<MAGIC> v<version>
    #tool=<name> <version>
    #config=<json>
    #<key>=<value>      (格式相关，可多行)
    <列名行>
"""

import json
from dataclasses import dataclass, field
from typing import IO, Any, Dict, Iterator, List, Tuple

from simple_esdf.constants.system import SystemConstants
from simple_esdf.utils.errors import DataError


@dataclass
class ArtifactHeader:
    magic: str
    config: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, str] = field(default_factory=dict)
    columns: List[str] = field(default_factory=list)
    version: int = SystemConstants.FORMAT_VERSION
    tool: str = f"{SystemConstants.APP_NAME} {SystemConstants.APP_VERSION}"


def dump_config(config: Dict[str, Any]) -> str:
    return json.dumps(config, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_header(fh: IO[str], header: ArtifactHeader) -> None:
    fh.write(f"#{header.magic} v{header.version}\n")
    fh.write(f"#tool={header.tool}\n")
    fh.write(f"#config={dump_config(header.config)}\n")
    for key, value in header.extras.items():
        fh.write(f"#{key}={value}\n")
    if header.columns:
        fh.write("\t".join(header.columns) + "\n")


def read_header(lines: Iterator[str], magic: str, has_columns: bool = True) -> Tuple[ArtifactHeader, str | None]:
    """
    读取文件头，返回 (header, 首个数据行)；魔数或版本不符时抛 DataError.
    """
    try:
        first = next(lines).rstrip("\n")
    except StopIteration:
        raise DataError(f"空文件，期望 {magic}") from None
    expected = f"#{magic} v"
    if not first.startswith(expected):
        raise DataError(f"魔数不符: 期望 {magic}，实际 {first[:40]!r}")
    try:
        version = int(first[len(expected):])
    except ValueError:
        raise DataError(f"无法解析格式版本: {first!r}") from None
    if version != SystemConstants.FORMAT_VERSION:
        raise DataError(f"不支持的 {magic} 版本: v{version}")

    header = ArtifactHeader(magic=magic, version=version)
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.startswith("#"):
            if has_columns:
                header.columns = line.split("\t")
                return header, None
            return header, line
        key, _, value = line[1:].partition("=")
        if key == "tool":
            header.tool = value
        elif key == "config":
            try:
                header.config = json.loads(value)
            except json.JSONDecodeError as e:
                raise DataError(f"config 头无法解析: {e}") from e
        else:
            header.extras[key] = value
    if has_columns:
        raise DataError(f"{magic} 文件缺少列名行")
    return header, None
