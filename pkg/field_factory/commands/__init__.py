"""
子命令包：每个模块提供 Register/Handler 实现，由 CommandManager 自动发现
"""
