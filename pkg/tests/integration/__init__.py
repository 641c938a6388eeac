# 集成测试：命令行全流程与 MNIST 验收
