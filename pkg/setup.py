#!/usr/bin/env python3
"""
maskforge - 扩散修复的最优稀疏掩码

注意：此 setup.py 作为 pyproject.toml 的备用方案
推荐使用 pyproject.toml 进行构建
"""
from pathlib import Path

from setuptools import setup

# 读取 README
readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text(encoding="utf-8") if readme_file.exists() else ""

# 基础依赖
install_requires = [
    "numpy",
    "scipy>=1.12",
    "python-dotenv",
    "tqdm",
    "tabulate>=0.9.0",
    "pydantic>=2.0.0",
]

# 可选依赖
extras_require = {
    "dev": ["pytest>=7.0"],
}

setup(
    name="maskforge",
    version="0.1.0",
    description="扩散修复的最优稀疏掩码",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=["cli", "core", "reports", "scripts"],
    python_requires=">=3.9",
    install_requires=install_requires,
    extras_require=extras_require,
    entry_points={
        "console_scripts": [
            "maskforge=cli.main_cli:main",
        ],
    },
)
