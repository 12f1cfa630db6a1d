import numpy as np
import pytest
from numpy.testing import assert_array_equal

from eitkit import (
    AssumptionViolationError,
    DomainError,
    Inclusion,
    NoiseSpec,
    SourceSpec,
    correlation,
    generate_ensemble,
    generate_noise_ensemble,
    load_phantom_spec,
    make_demo_fixture,
    make_phantom,
    save_phantom_spec,
    third_cumulants,
)

WHITE = NoiseSpec("white", 0.0)


def test_demo_fixture_dimensions_and_exact_statistic():
    A, generator = make_demo_fixture()
    assert A.shape == (4, 3)
    ens = generator()
    assert ens.samples.shape == (4, 4)
    # raw correlation is exactly diagonal with distinct signal powers
    assert_array_equal(correlation(ens).matrix, np.diag([9.0, 4.0, 1.0, 0.0]))
    assert_array_equal(correlation(generator(repeats=6)).matrix, np.diag([9.0, 4.0, 1.0, 0.0]))


def test_demo_fixture_samples_lie_in_mixing_span():
    A, generator = make_demo_fixture()
    samples = generator(repeats=2).samples
    residual = samples.T - A @ np.linalg.lstsq(A, samples.T, rcond=None)[0]
    assert np.max(np.abs(residual)) <= 1e-12


def test_generate_ensemble_deterministic_per_seed():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 2))
    spec = SourceSpec(2, "skewed")
    noise = NoiseSpec("white", 0.1)
    a = generate_ensemble(A, spec, noise, T=200, seed=42)
    b = generate_ensemble(A, spec, noise, T=200, seed=42)
    c = generate_ensemble(A, spec, noise, T=200, seed=43)
    assert_array_equal(a.samples, b.samples)
    assert np.max(np.abs(a.samples - c.samples)) > 1e-3


def test_generate_ensemble_noiseless_stays_in_span():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 3))
    ens = generate_ensemble(A, SourceSpec(3, "symmetric-binary"), WHITE, T=64, seed=7)
    proj = A @ np.linalg.pinv(A)
    assert np.max(np.abs(ens.samples.T - proj @ ens.samples.T)) <= 1e-12


def test_generate_ensemble_rejects_dependent_columns():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(AssumptionViolationError, match="independent"):
        generate_ensemble(A, SourceSpec(2, "skewed"), WHITE, T=16, seed=0)


def test_symmetric_binary_sources_hit_exact_levels():
    A = np.eye(2)
    ens = generate_ensemble(A, SourceSpec(2, "symmetric-binary", variance=4.0), WHITE, T=500, seed=3)
    assert set(np.unique(ens.samples)) == {-2.0, 2.0}


def test_skewed_sources_match_requested_moments():
    t = 200_000
    spec = SourceSpec(1, "skewed", variance=1.0, third_moment=2.0)
    ens = generate_ensemble(np.array([[1.0]]), spec, WHITE, T=t, seed=5)
    x = ens.samples[:, 0]
    centered = x - x.mean()
    assert np.var(x) == pytest.approx(1.0, abs=0.05)
    assert np.mean(centered**3) == pytest.approx(2.0, abs=0.15)
    flipped = SourceSpec(1, "skewed", variance=1.0, third_moment=-2.0)
    y = generate_ensemble(np.array([[1.0]]), flipped, WHITE, T=t, seed=5).samples[:, 0]
    assert np.mean((y - y.mean()) ** 3) == pytest.approx(-2.0, abs=0.15)


def test_white_noise_correlation_near_identity():
    t = 100_000
    std = 0.7
    ens = generate_noise_ensemble(3, NoiseSpec("white", std), T=t, seed=11)
    cov = correlation(ens, center=True).matrix
    stderr = std**2 / np.sqrt(t)
    assert np.max(np.abs(cov - std**2 * np.eye(3))) <= 5 * np.sqrt(2) * stderr


def test_colored_noise_is_stationary_ar1():
    t = 200_000
    a, std = 0.6, 1.2
    ens = generate_noise_ensemble(1, NoiseSpec("colored", std, (a,)), T=t, seed=13)
    x = ens.samples[:, 0]
    assert np.std(x) == pytest.approx(std, rel=0.02)
    lag1 = np.mean(x[1:] * x[:-1]) / np.mean(x * x)
    assert lag1 == pytest.approx(a, abs=0.02)


def test_noise_spec_validation():
    with pytest.raises(DomainError):
        NoiseSpec("colored", 1.0, (1.0,))  # unstable
    with pytest.raises(DomainError):
        NoiseSpec("colored", 1.0, ())  # missing coefficient
    with pytest.raises(DomainError):
        NoiseSpec("white", 1.0, (0.5,))  # stray coefficient
    with pytest.raises(DomainError):
        NoiseSpec("white", -1.0)
    with pytest.raises(DomainError):
        NoiseSpec("pink", 1.0)


def test_source_spec_validation():
    with pytest.raises(DomainError):
        SourceSpec(0, "skewed")
    with pytest.raises(DomainError):
        SourceSpec(1, "uniform")
    with pytest.raises(DomainError):
        SourceSpec(1, "skewed", third_moment=0.0)
    with pytest.raises(DomainError):
        SourceSpec(1, "skewed", variance=0.0)


def test_sources_and_noise_independent_streams():
    t = 100_000
    A = np.array([[1.0], [0.0]])
    ens = generate_ensemble(
        A, SourceSpec(1, "symmetric-binary"), NoiseSpec("white", 1.0), T=t, seed=17
    )
    # channel 1 carries pure noise; its correlation with the source-dominated
    # channel 0 is the cross term
    x, n = ens.samples[:, 0], ens.samples[:, 1]
    cross = np.mean((x - x.mean()) * (n - n.mean()))
    assert abs(cross) <= 5 * np.sqrt(np.var(x) * np.var(n) / t)


def test_colored_noise_cumulants_vanish():
    t = 100_000
    ens = generate_noise_ensemble(3, NoiseSpec("colored", 0.8, (0.5,)), T=t, seed=19)
    tensor = third_cumulants(ens).tensor
    centered = ens.samples - ens.samples.mean(axis=0)
    m6 = float(np.max(np.mean(centered**6, axis=0)))
    inflation = (1 + 0.5) / (1 - 0.5)  # correlated samples shrink the effective T
    assert np.max(np.abs(tensor)) <= 5 * np.sqrt(inflation * m6 / t)


def test_make_phantom_uniform_and_single_element(disk_r1):
    uniform = make_phantom(disk_r1, 2.5)
    assert_array_equal(uniform.sigma, np.full(disk_r1.n_elements, 2.5))
    assert uniform.warnings == ()

    centroids = disk_r1.coords[disk_r1.triangles].mean(axis=1)
    spacing = np.min(
        [np.min(np.delete(np.hypot(*(centroids - c).T), k)) for k, c in enumerate(centroids)]
    )
    target = 5
    inc = Inclusion(tuple(centroids[target]), 0.4 * spacing, 10.0)
    phantom = make_phantom(disk_r1, 1.0, [inc])
    covered = np.flatnonzero(phantom.sigma != 1.0)
    assert_array_equal(covered, [target])
    assert phantom.sigma[target] == 10.0
    assert phantom.warnings == ()


def test_make_phantom_outside_inclusion_warns(disk_r1):
    phantom = make_phantom(disk_r1, 1.0, [Inclusion((5.0, 5.0), 0.1, 10.0)])
    assert_array_equal(phantom.sigma, np.ones(disk_r1.n_elements))
    assert len(phantom.warnings) == 1
    assert "covers no elements" in phantom.warnings[0]


def test_make_phantom_validation(disk_r1):
    with pytest.raises(DomainError):
        make_phantom(disk_r1, 0.0)
    with pytest.raises(DomainError):
        Inclusion((0.0, 0.0), -1.0, 2.0)
    with pytest.raises(DomainError):
        Inclusion((0.0, 0.0), 0.1, 0.0)


def test_phantom_spec_round_trip(tmp_path, disk_r1):
    phantom = make_phantom(
        disk_r1, 1.5, [Inclusion((0.3, 0.1), 0.2, 4.0), Inclusion((-0.4, -0.2), 0.15, 0.5)]
    )
    path = tmp_path / "phantom.txt"
    save_phantom_spec(phantom, path, header_lines=("case",))
    again = load_phantom_spec(path, disk_r1)
    assert_array_equal(again.sigma, phantom.sigma)
    assert again.inclusions == phantom.inclusions
    assert again.background == phantom.background
