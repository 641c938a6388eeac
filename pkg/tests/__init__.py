# 测试：光场工厂
