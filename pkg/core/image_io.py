"""
PGM 读写（P2 文本 / P5 二进制，maxval ≤ 65535）
"""
import logging
import re
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .exceptions import ImageFormatError, UnsupportedFormatError
from .grid_ops import Image

logger = logging.getLogger(__name__)

GRAYSCALE_MAGICS = (b'P2', b'P5')
OTHER_PNM_MAGICS = (b'P1', b'P3', b'P4', b'P6', b'P7')
_COMMENT = re.compile(rb'#[^\n\r]*')


def _read_header(raw: bytes) -> Tuple[bytes, List[int], int]:
    """解析文件头，返回 (magic, [width, height, maxval], 数据起始偏移)"""
    magic = raw[:2]
    if magic in OTHER_PNM_MAGICS:
        raise UnsupportedFormatError(f"不支持的 PNM 类型 {magic.decode()}（只支持灰度 P2/P5）")
    if magic not in GRAYSCALE_MAGICS:
        raise ImageFormatError("不是 PGM 文件（缺少 P2/P5 标识）")

    values: List[int] = []
    pos = 2
    while len(values) < 3:
        # 跳过空白与注释
        while pos < len(raw) and (raw[pos:pos + 1].isspace() or raw[pos:pos + 1] == b'#'):
            if raw[pos:pos + 1] == b'#':
                match = _COMMENT.match(raw, pos)
                pos = match.end()
            else:
                pos += 1
        start = pos
        while pos < len(raw) and raw[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("PGM 文件头损坏")
        values.append(int(raw[start:pos]))

    # 文件头之后恰好一个空白字符
    if pos >= len(raw) and magic == b'P5':
        raise ImageFormatError("PGM 数据被截断")
    return magic, values, pos + 1


def load_pgm(path: Union[str, Path]) -> Image:
    """读取 PGM，灰度按 maxval 归一化到 [0,1]"""
    path = Path(path)
    raw = path.read_bytes()
    magic, (width, height, maxval), offset = _read_header(raw)
    if width < 1 or height < 1:
        raise ImageFormatError(f"非法尺寸 {width}x{height}")
    if not 0 < maxval <= 65535:
        raise ImageFormatError(f"非法 maxval {maxval}")

    count = width * height
    if magic == b'P5':
        dtype = np.dtype('>u2') if maxval > 255 else np.dtype(np.uint8)
        payload = raw[offset:offset + count * dtype.itemsize]
        if len(payload) < count * dtype.itemsize:
            raise ImageFormatError(
                f"PGM 数据被截断: 需要 {count * dtype.itemsize} 字节，实际 {len(payload)}"
            )
        pixels = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        text = _COMMENT.sub(b' ', raw[offset:])
        tokens = text.split()
        if len(tokens) < count:
            raise ImageFormatError(f"PGM 数据被截断: 需要 {count} 个像素，实际 {len(tokens)}")
        try:
            pixels = np.array([int(t) for t in tokens[:count]], dtype=np.float64)
        except ValueError as e:
            raise ImageFormatError(f"P2 像素值非法: {e}") from e

    if pixels.max(initial=0) > maxval:
        raise ImageFormatError("像素值超过 maxval")
    logger.debug(f"读取 {path.name}: {width}x{height}, maxval={maxval}")
    return Image(width=width, height=height, data=pixels / maxval)


def save_pgm(image: Image, path: Union[str, Path], maxval: int = 255, binary: bool = True) -> Path:
    """保存为 PGM，灰度截断到 [0,1] 后按 maxval 四舍五入"""
    if not 0 < maxval <= 65535:
        raise ValueError(f"非法 maxval {maxval}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.rint(np.clip(image.data, 0.0, 1.0) * maxval).astype(np.int64)

    if binary:
        dtype = np.dtype('>u2') if maxval > 255 else np.dtype(np.uint8)
        header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode('ascii')
        path.write_bytes(header + pixels.astype(dtype).tobytes())
    else:
        rows = pixels.reshape(image.height, image.width)
        body = '\n'.join(' '.join(str(v) for v in row) for row in rows)
        path.write_text(f"P2\n{image.width} {image.height}\n{maxval}\n{body}\n", encoding='ascii')
    return path


def mask_to_image(indicator: np.ndarray) -> Image:
    """掩码渲染：选中像素为黑、其余为白"""
    indicator = np.asarray(indicator, dtype=bool)
    return Image.from_array(np.where(indicator, 0.0, 1.0))


def image_to_mask(image: Image) -> np.ndarray:
    """读回黑白掩码图：灰度 < 0.5 视为选中"""
    return image.as_array() < 0.5
