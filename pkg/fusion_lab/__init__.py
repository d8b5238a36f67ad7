"""
用户嵌入融合实验室
在MovieLens数据上训练四种用户/物品融合策略的评分预测模型，并用PDC评估用户嵌入质量
"""

__version__ = "0.1.0"
