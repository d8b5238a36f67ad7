#!/usr/bin/env python3
"""
测试稠密线性代数与可复现随机数
"""

import numpy as np
import pytest

from fusion_lab.errors import NonFiniteError, ShapeMismatchError, UsageError
from fusion_lab.numerics import SeededRng, as_matrix, as_vector, dot, matvec, sample_uniform


def test_matvec_examples():
    """matvec 的手算示例"""
    assert matvec(np.eye(3), [1.0, 2.0, 3.0]).tolist() == [1.0, 2.0, 3.0]
    assert matvec(np.zeros((2, 3)), [1.0, 2.0, 3.0]).tolist() == [0.0, 0.0]
    assert matvec([[1.0, 2.0], [3.0, 4.0]], [1.0, 1.0]).tolist() == [3.0, 7.0]


def test_matvec_shape_mismatch_names_both_shapes():
    """维度不匹配时错误信息包含两侧形状"""
    with pytest.raises(ShapeMismatchError) as excinfo:
        matvec(np.zeros((2, 3)), np.zeros(4))
    assert excinfo.value.left_shape == (2, 3)
    assert excinfo.value.right_shape == (4,)
    assert "(2, 3)" in str(excinfo.value)


def test_dot_examples():
    """dot 的示例"""
    assert dot([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert dot([3.0, 4.0], [3.0, 4.0]) == 25.0
    assert dot([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]) == 32.0
    with pytest.raises(ShapeMismatchError):
        dot([1.0, 2.0], [1.0, 2.0, 3.0])


def test_matvec_distributes_over_addition():
    """matvec(M, a+b) = matvec(M, a) + matvec(M, b)"""
    gen = np.random.default_rng(0)
    for _ in range(20):
        m = gen.normal(size=(5, 7))
        a, b = gen.normal(size=7), gen.normal(size=7)
        np.testing.assert_allclose(matvec(m, a + b), matvec(m, a) + matvec(m, b), rtol=1e-12, atol=1e-12)


def test_dot_symmetric_and_bilinear():
    """dot 对称且双线性"""
    gen = np.random.default_rng(1)
    for _ in range(20):
        a, b, c = gen.normal(size=(3, 6))
        alpha, beta = gen.normal(size=2)
        assert dot(a, b) == pytest.approx(dot(b, a), rel=1e-12)
        assert dot(alpha * a + beta * c, b) == pytest.approx(alpha * dot(a, b) + beta * dot(c, b), rel=1e-9, abs=1e-12)


def test_sample_uniform_deterministic():
    """相同种子得到相同序列"""
    first = sample_uniform(SeededRng(7), 0.0, 1.0, 5)
    second = sample_uniform(SeededRng(7), 0.0, 1.0, 5)
    assert first.tolist() == second.tolist()
    assert np.all((first >= 0.0) & (first < 1.0))


def test_sample_uniform_mean_and_edges():
    """大数定律与边界情况"""
    values = sample_uniform(SeededRng(7), 0.0, 1.0, 10000)
    assert abs(values.mean() - 0.5) < 0.02
    assert sample_uniform(SeededRng(7), 0.0, 1.0, 0).shape == (0,)
    with pytest.raises(UsageError):
        sample_uniform(SeededRng(7), 1.0, 1.0, 3)
    with pytest.raises(UsageError):
        sample_uniform(SeededRng(7), 0.0, 1.0, -1)


def test_rng_stream_bit_identical_over_million_draws():
    """固定种子在 10^6 次抽样上逐位相同"""
    a = SeededRng(12345).uniform(-1.0, 1.0, 1_000_000)
    b = SeededRng(12345).uniform(-1.0, 1.0, 1_000_000)
    assert a.tobytes() == b.tobytes()


def test_spawn_is_deterministic_and_key_dependent():
    """派生发生器只取决于 (seed, keys)"""
    rng = SeededRng(3)
    assert rng.spawn(1, 2).seed == SeededRng(3).spawn(1, 2).seed
    assert rng.spawn(1, 2).seed != rng.spawn(2, 1).seed
    assert SeededRng(3).spawn(0).permutation(10).tolist() == SeededRng(3).spawn(0).permutation(10).tolist()


def test_choice_and_weighted_index():
    """无放回抽样与按权重抽样"""
    picks = SeededRng(5).choice(10, 10)
    assert sorted(picks.tolist()) == list(range(10))
    with pytest.raises(UsageError):
        SeededRng(5).choice(3, 4)
    assert SeededRng(5).weighted_index(np.array([0.0, 0.0, 1.0])) == 2


def test_conversions_reject_non_finite():
    """转换函数拒绝 NaN/Inf"""
    with pytest.raises(NonFiniteError):
        as_vector([1.0, float("nan")])
    with pytest.raises(NonFiniteError):
        as_matrix([[1.0, float("inf")]])
    with pytest.raises(ShapeMismatchError):
        as_matrix([1.0, 2.0])
