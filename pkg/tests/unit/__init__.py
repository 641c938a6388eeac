# 单元测试：数据、字典、光场、成像、指标、命令
