import numpy as np
import pytest

from bnsharp import ParamVector, StructureError, scale_transform, zeros_like


def make(n1=2):
    return ParamVector([np.array([3.0, 4.0]), np.array([1.0, 0.0, 0.0]),
                        np.array([2.0]), np.array([0.5, 0.5])], n1)


def test_basic_structure():
    p = make()
    assert p.n_blocks == 4
    assert p.dim == 8
    assert p.n1 == 2
    assert p.block_norm(0) == 5.0


def test_n1_out_of_range():
    with pytest.raises(StructureError):
        ParamVector([np.ones(2)], 2)


def test_rejects_empty_or_2d_blocks():
    with pytest.raises(StructureError):
        ParamVector([np.empty(0)], 0)
    with pytest.raises(StructureError):
        ParamVector([np.ones((2, 2))], 0)


def test_flat_roundtrip():
    p = make()
    q = p.with_flat(p.flat())
    assert all(np.array_equal(a, b) for a, b in zip(p.blocks, q.blocks))
    with pytest.raises(StructureError):
        p.with_flat(np.ones(7))


def test_tail_concatenation():
    p = make()
    assert np.array_equal(p.tail(), np.array([2.0, 0.5, 0.5]))


def test_norm_identities():
    p = make()
    assert p.norm() == pytest.approx(np.linalg.norm(p.flat()))
    expected_phi = np.sqrt(5.0 ** 2 + 1.0 ** 2 + 1.0)
    assert p.phi_norm() == pytest.approx(expected_phi)


def test_arithmetic():
    p = make()
    q = p + p
    assert np.array_equal(q.flat(), 2.0 * p.flat())
    assert np.array_equal((q - p).flat(), p.flat())
    assert np.array_equal((p * 3.0).flat(), 3.0 * p.flat())
    assert np.array_equal((-p).flat(), -p.flat())
    assert p.dot(p) == pytest.approx(p.norm() ** 2)
    assert np.allclose(p.axpy(0.5, p).flat(), 1.5 * p.flat())


def test_structure_mismatch_raises():
    p = make()
    other = ParamVector([np.ones(3)], 0)
    with pytest.raises(StructureError):
        _ = p + other


def test_zeros_like():
    z = zeros_like(make())
    assert z.norm() == 0.0
    assert z.same_structure(make())


def test_scale_transform_scales_only_leading_blocks():
    p = make()
    s = scale_transform(p, np.array([2.0, 0.5]))
    assert np.array_equal(s.blocks[0], 2.0 * p.blocks[0])
    assert np.array_equal(s.blocks[1], 0.5 * p.blocks[1])
    assert np.array_equal(s.blocks[2], p.blocks[2])
    assert np.array_equal(s.blocks[3], p.blocks[3])


def test_scale_transform_validates():
    p = make()
    with pytest.raises(StructureError):
        scale_transform(p, np.array([2.0]))
    with pytest.raises(ValueError):
        scale_transform(p, np.array([1.0, -1.0]))
