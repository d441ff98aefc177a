"""
maskforge 单元测试
可用 python -m unittest 或 pytest 运行
"""
