"""
测试用合成图像与掩码
"""
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from core.grid_ops import Image
from core.image_io import save_pgm


def synthetic_image(height: int = 16, width: Optional[int] = None, seed: int = 0) -> np.ndarray:
    """平滑渐变 + 一条斜边缘 + 轻微纹理，灰度在 [0.02, 0.98]"""
    width = width or height
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width]
    x = x / max(width - 1, 1)
    y = y / max(height - 1, 1)
    smooth = 0.5 + 0.25 * np.sin(2.5 * x + 1.0) * np.cos(3.0 * y)
    edge = 0.2 * (x + 0.3 * y > 0.6)
    texture = 0.03 * rng.standard_normal((height, width))
    return np.clip(smooth + edge + texture, 0.02, 0.98)


def natural_image(size: int = 64, seed: int = 0, sigma: float = 4.0) -> np.ndarray:
    """低通滤波噪声纹理叠加缓慢渐变，灰度在 [0.1, 0.9]，没有锐利边缘"""
    rng = np.random.default_rng(seed)
    texture = gaussian_filter(rng.standard_normal((size, size)), sigma, mode='reflect')
    texture = (texture - texture.mean()) / max(texture.std(), 1e-12)
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    field = 0.15 * texture + 0.3 * x + 0.2 * np.cos(2.0 * y)
    field = (field - field.min()) / (field.max() - field.min())
    return 0.1 + 0.8 * field


def write_pgm(path: Path, array: np.ndarray) -> Path:
    """保存为 8 位 P5，返回路径"""
    return save_pgm(Image.from_array(array), path)


def quantized(array: np.ndarray) -> np.ndarray:
    """8 位量化后的灰度（与 PGM 往返一致）"""
    return np.rint(array * 255.0) / 255.0
