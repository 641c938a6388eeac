# 鬼成像光场优化工厂
__version__ = "0.1.0"
__author__ = "Field Factory Team"
