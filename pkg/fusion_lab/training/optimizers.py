"""
优化器：原地更新模型参数
"""

from typing import Dict

import numpy as np

from fusion_lab.training.hyperparams import HyperParams, OptimizerName


class Optimizer:
    """优化器基类"""

    name: OptimizerName

    def __init__(self, learning_rate: float):
        self.learning_rate = float(learning_rate)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        raise NotImplementedError("子类必须实现step方法")


class SGD(Optimizer):
    """朴素随机梯度下降"""

    name = OptimizerName.SGD

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        for key, grad in grads.items():
            params[key] -= self.learning_rate * grad


class Adam(Optimizer):
    """带偏差修正的一阶/二阶矩估计"""

    name = OptimizerName.ADAM

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for key, grad in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(grad)
                self.v[key] = np.zeros_like(grad)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * grad ** 2
            m_hat = self.m[key] / correction1
            v_hat = self.v[key] / correction2
            params[key] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(hp: HyperParams) -> Optimizer:
    if hp.optimizer is OptimizerName.ADAM:
        return Adam(hp.learning_rate)
    return SGD(hp.learning_rate)
