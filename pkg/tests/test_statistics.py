import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from eitkit import (
    DimensionError,
    DomainError,
    FormatError,
    MeasurementEnsemble,
    MomentAccumulator,
    SampleSizeError,
    correlation,
    load_ensemble,
    save_ensemble,
    third_cumulants,
)


def brute_third_cumulants(samples: np.ndarray) -> np.ndarray:
    """Independent oracle: plain triple loop over centered samples."""
    z = samples - samples.mean(axis=0)
    t, m = z.shape
    out = np.zeros((m, m, m))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                acc = 0.0
                for s in range(t):
                    acc += z[s, j] * z[s, k] * z[s, i]
                out[i, j, k] = acc / t
    return out


def test_ensemble_validation():
    with pytest.raises(SampleSizeError):
        MeasurementEnsemble(np.zeros((1, 3)))
    with pytest.raises(DomainError):
        MeasurementEnsemble(np.array([[0.0, np.nan], [1.0, 2.0]]))
    with pytest.raises(DimensionError):
        MeasurementEnsemble(np.zeros(5))


def test_correlation_identical_vectors():
    e1 = np.zeros((10, 3))
    e1[:, 0] = 1.0
    ens = MeasurementEnsemble(e1)
    uncentered = correlation(ens, center=False)
    expect = np.zeros((3, 3))
    expect[0, 0] = 1.0
    assert_array_equal(uncentered.matrix, expect)
    centered = correlation(ens, center=True)
    assert_array_equal(centered.matrix, np.zeros((3, 3)))


def test_correlation_rank_bounded_by_source_count():
    rng = np.random.default_rng(3)
    d, m, t = 2, 5, 40
    A = rng.standard_normal((m, d))
    x = rng.standard_normal((t, d))
    Y = correlation(MeasurementEnsemble(x @ A.T), center=False).matrix
    w = np.linalg.eigvalsh(Y)[::-1]
    assert w[d] <= 1e-10 * np.trace(Y)
    assert w.min() >= -1e-10 * np.trace(Y)  # positive semidefinite


def test_correlation_symmetric_exactly():
    rng = np.random.default_rng(4)
    Y = correlation(MeasurementEnsemble(rng.standard_normal((100, 6)))).matrix
    assert_array_equal(Y, Y.T)


def test_third_cumulants_match_brute_force_oracle():
    rng = np.random.default_rng(5)
    samples = rng.standard_normal((60, 4)) ** 3
    tensor = third_cumulants(MeasurementEnsemble(samples)).tensor
    assert_allclose(tensor, brute_third_cumulants(samples), rtol=0, atol=1e-13)


def test_third_cumulants_trilinear_symmetry_exact():
    rng = np.random.default_rng(6)
    tensor = third_cumulants(MeasurementEnsemble(rng.standard_normal((50, 5)))).tensor
    for perm in [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]:
        assert_array_equal(tensor, tensor.transpose(perm))


def test_pooled_cumulants_weighted():
    rng = np.random.default_rng(12)
    cset = third_cumulants(MeasurementEnsemble(rng.standard_normal((40, 3)) ** 3))
    assert_allclose(cset.pooled(), sum(cset.matrix(i) for i in range(3)), atol=1e-15)
    w = np.array([0.5, -1.0, 2.0])
    assert_allclose(
        cset.pooled(w), sum(w[i] * cset.matrix(i) for i in range(3)), atol=1e-14
    )
    with pytest.raises(DimensionError):
        cset.pooled(np.ones(4))


def test_third_cumulants_rank_one_closed_form():
    # y(t) = s(t) a with deterministic scalar s of known third moment
    s = np.array([2.0, -1.0, -1.0, 0.5, -0.5, 0.0] * 5)
    a = np.array([1.0, -2.0, 0.5])
    mu3 = float(np.mean((s - s.mean()) ** 3))
    assert abs(mu3) > 0.1
    cset = third_cumulants(MeasurementEnsemble(np.outer(s, a)))
    for i in range(3):
        assert_allclose(cset.matrix(i), mu3 * a[i] * np.outer(a, a), rtol=0, atol=1e-13)
    assert_allclose(cset.pooled(), mu3 * a.sum() * np.outer(a, a), atol=1e-12)


def test_symmetric_sources_have_vanishing_cumulants():
    rng = np.random.default_rng(7)
    t = 20000
    samples = (rng.integers(0, 2, size=(t, 3)) * 2 - 1).astype(float)
    tensor = third_cumulants(MeasurementEnsemble(samples)).tensor
    m6 = float(np.max(np.mean(samples**6, axis=0)))
    assert np.max(np.abs(tensor)) <= 5.0 * np.sqrt(m6 / t)


def test_gaussian_cumulants_vanish_statistically():
    rng = np.random.default_rng(8)
    t = 20000
    samples = rng.normal(0.0, 1.3, size=(t, 3))
    tensor = third_cumulants(MeasurementEnsemble(samples)).tensor
    m6 = float(np.max(np.mean((samples - samples.mean(0)) ** 6, axis=0)))
    assert np.max(np.abs(tensor)) <= 5.0 * np.sqrt(m6 / t)


def test_sample_size_guards():
    two = MeasurementEnsemble(np.array([[1.0, 2.0], [3.0, 4.0]]))
    correlation(two)  # fine
    with pytest.raises(SampleSizeError):
        third_cumulants(two)
    acc = MomentAccumulator(2).update(two.samples)
    with pytest.raises(SampleSizeError):
        acc.third_cumulants()


def test_statistics_invariant_under_reordering():
    rng = np.random.default_rng(9)
    samples = rng.standard_normal((200, 4))
    shuffled = samples[rng.permutation(200)]
    a, b = MeasurementEnsemble(samples), MeasurementEnsemble(shuffled)
    assert_allclose(correlation(a).matrix, correlation(b).matrix, atol=1e-12)
    assert_allclose(third_cumulants(a).tensor, third_cumulants(b).tensor, atol=1e-12)


@pytest.mark.parametrize("splits", [2, 3, 5])
def test_accumulator_merge_equals_concatenated(splits):
    rng = np.random.default_rng(10)
    samples = rng.standard_normal((240, 3)) + 0.7
    chunks = np.array_split(samples, splits)
    acc = MomentAccumulator(3)
    for chunk in chunks:
        acc = acc.merge(MomentAccumulator(3).update(chunk))
    whole = MeasurementEnsemble(samples)
    assert_allclose(acc.correlation(center=False).matrix, correlation(whole).matrix, atol=1e-12)
    assert_allclose(
        acc.correlation(center=True).matrix, correlation(whole, center=True).matrix, atol=1e-12
    )
    assert_allclose(acc.third_cumulants().tensor, third_cumulants(whole).tensor, atol=1e-12)


def test_accumulator_merge_shape_guard():
    with pytest.raises(DimensionError):
        MomentAccumulator(3).merge(MomentAccumulator(4))
    with pytest.raises(DimensionError):
        MomentAccumulator(3).update(np.zeros((5, 2)))


def test_ensemble_csv_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    ens = MeasurementEnsemble(rng.standard_normal((20, 4)))
    path = tmp_path / "ens.csv"
    save_ensemble(ens, path, header_lines=("demo",))
    again = load_ensemble(path)
    assert_array_equal(again.samples, ens.samples)
    assert path.read_text().splitlines()[1] == "y0,y1,y2,y3"


def test_ensemble_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        load_ensemble(path)
    path.write_text("y0,y1\n1,2\n3\n")
    with pytest.raises(FormatError) as err:
        load_ensemble(path)
    assert err.value.line_no == 3
    path.write_text("y0,y1\n1,2\n")
    with pytest.raises(SampleSizeError):
        load_ensemble(path)
