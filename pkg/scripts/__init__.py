# 演示脚本
