"""
运维脚本（环境与数值自检）
"""
