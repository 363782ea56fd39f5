import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from hardivox.errors import NumericalError, ValidationError
from hardivox.features import (
    LEGENDRE_AT_ZERO,
    ShBasis,
    fit_sh,
    fit_tensor_eigenvalues,
    legendre_at_zero,
    rotation_invariant_features,
    sh_index_degrees,
    sh_to_odf,
)
from hardivox.phantom import (
    WM_EIGENVALUES,
    PhantomSpec,
    default_fibercup_geometry,
    generate_phantom,
)
from hardivox.sphere import unit_sphere_directions
from hardivox.volumes import WMSF, CSF, DwiVolume, GradientTable


@pytest.fixture(scope="module")
def dirs64():
    return unit_sphere_directions(64)


def constant_dwi(dirs, value, s0=1000.0, dims=(2, 2, 1)):
    sig = np.full(dims + (len(dirs),), value * s0)
    return DwiVolume(dims=dims, voxel_size=2.0, s0=np.full(dims, s0), signal=sig,
                     gradients=GradientTable(directions=dirs, b_value=1500.0))


def test_sh_index_degrees():
    assert sh_index_degrees(4).tolist() == [0] + [2] * 5 + [4] * 9
    assert len(sh_index_degrees(8)) == 45


def test_basis_counts_and_conditioning(dirs64):
    b4 = ShBasis.for_directions(dirs64, 4)
    b8 = ShBasis.for_directions(dirs64, 8)
    assert b4.design_matrix.shape == (64, 15)
    assert b8.design_matrix.shape == (64, 45)
    assert np.linalg.cond(b8.design_matrix) < 2.0


def test_basis_rejects_odd_order(dirs64):
    with pytest.raises(ValidationError):
        ShBasis.for_directions(dirs64, 6)


def test_constant_signal_recovers_dc_coefficient(dirs64):
    c = 0.37
    vol = constant_dwi(dirs64, c)
    feats = fit_sh(vol, 8, lam=0.0)
    coeffs = feats.values[0, 0, 0]
    assert abs(coeffs[0] - c * 2.0 * np.sqrt(np.pi)) < 1e-10
    assert np.abs(coeffs[1:]).max() < 1e-10


def test_synthesized_coefficients_recovered(dirs64):
    rng = np.random.default_rng(5)
    basis = ShBasis.for_directions(dirs64, 8, regularization=0.0)
    c_true = rng.normal(size=45)
    sig = basis.design_matrix @ c_true
    sig -= sig.min() - 0.1  # keep the stored signal non-negative
    c_shift = sig - basis.design_matrix @ c_true
    s0 = 1000.0
    vol = DwiVolume(dims=(1, 1, 1), voxel_size=2.0, s0=np.full((1, 1, 1), s0),
                    signal=(sig * s0).reshape(1, 1, 1, -1),
                    gradients=GradientTable(directions=dirs64, b_value=1500.0))
    feats = fit_sh(vol, 8, lam=0.0)
    expected = c_true.copy()
    expected[0] += c_shift[0] * 2.0 * np.sqrt(np.pi)
    np.testing.assert_allclose(feats.values[0, 0, 0], expected, atol=1e-10)


def test_regularization_shrinks_high_degrees(dirs64):
    rng = np.random.default_rng(6)
    sig = rng.uniform(0.2, 1.0, size=(1, 1, 1, 64)) * 1000.0
    vol = DwiVolume(dims=(1, 1, 1), voxel_size=2.0, s0=np.full((1, 1, 1), 1000.0),
                    signal=sig, gradients=GradientTable(directions=dirs64, b_value=1500.0))
    free = fit_sh(vol, 8, lam=0.0).values[0, 0, 0]
    reg = fit_sh(vol, 8, lam=0.1).values[0, 0, 0]
    degrees = sh_index_degrees(8)
    hi = degrees == 8
    assert np.abs(reg[hi]).sum() < np.abs(free[hi]).sum()


def test_rotation_invariant_features_are_rotation_invariant(dirs64):
    rng = np.random.default_rng(7)
    basis = ShBasis.for_directions(dirs64, 8, regularization=0.0)
    c_true = rng.normal(size=45) * 0.1
    c_true[0] = 3.0  # keep signal positive
    rot = Rotation.from_rotvec([0.3, -0.7, 0.5]).as_matrix()

    def make_vol(directions):
        b = ShBasis.for_directions(directions, 8, regularization=0.0)
        # sample the same angular function at the rotated directions by
        # fitting in the rotated frame
        sig = basis.design_matrix @ c_true
        vol = DwiVolume(dims=(1, 1, 1), voxel_size=2.0,
                        s0=np.full((1, 1, 1), 1000.0),
                        signal=(sig * 1000.0).reshape(1, 1, 1, -1),
                        gradients=GradientTable(directions=directions, b_value=1500.0))
        return vol

    vol_a = make_vol(dirs64)
    vol_b = make_vol((dirs64 @ rot.T))
    ri_a = rotation_invariant_features(fit_sh(vol_a, 8, lam=0.0)).values[0, 0, 0]
    ri_b = rotation_invariant_features(fit_sh(vol_b, 8, lam=0.0)).values[0, 0, 0]
    np.testing.assert_allclose(ri_a, ri_b, rtol=1e-8, atol=1e-12)
    assert ri_a.shape == (5,)


def test_funk_radon_scales_by_legendre_at_zero(dirs64):
    for l in (0, 2, 4, 6, 8):
        assert abs(legendre_at_zero(l) - LEGENDRE_AT_ZERO[l]) < 1e-15
    rng = np.random.default_rng(8)
    sig = rng.uniform(0.2, 1.0, size=(1, 1, 1, 64)) * 1000.0
    vol = DwiVolume(dims=(1, 1, 1), voxel_size=2.0, s0=np.full((1, 1, 1), 1000.0),
                    signal=sig, gradients=GradientTable(directions=dirs64, b_value=1500.0))
    sh = fit_sh(vol, 8)
    odf = sh_to_odf(sh)
    degrees = sh_index_degrees(8)
    expected = sh.values[0, 0, 0] * (
        2.0 * np.pi * np.array([LEGENDRE_AT_ZERO[l] for l in degrees])
    )
    np.testing.assert_allclose(odf.values[0, 0, 0], expected, rtol=1e-12)
    assert odf.feature_kind == "ODF8"


def test_tensor_eigenvalues_on_noiseless_phantom():
    # edge_sigma=0 keeps compartments pure, and dropping the grazing secant
    # removes the sub-threshold overlaps, so every WMSF voxel holds exactly
    # one tensor and the linear fit must recover its eigenvalues
    geometry = default_fibercup_geometry()[:4]
    dwi, labels = generate_phantom(
        PhantomSpec(dims=(64, 64, 1), snr=0.0, seed=42, edge_sigma=0.0,
                    geometry=geometry)
    )
    feats = fit_tensor_eigenvalues(dwi)
    assert feats.feature_kind == "EIG"
    sf = feats.values[labels.labels == WMSF]
    np.testing.assert_allclose(sf, np.broadcast_to(WM_EIGENVALUES, sf.shape), atol=1e-9)
    csf = feats.values[labels.labels == CSF]
    np.testing.assert_allclose(csf, 3.0e-3, atol=1e-9)


def test_tensor_rejects_too_few_directions():
    dirs = unit_sphere_directions(6)
    # six directions all on a hemisphere can still be rank 6; drop to 5 rows
    sig = np.full((1, 1, 1, 5), 500.0)
    with pytest.raises(ValidationError):
        vol = DwiVolume(dims=(1, 1, 1), voxel_size=2.0,
                        s0=np.full((1, 1, 1), 1000.0), signal=sig,
                        gradients=GradientTable(directions=dirs[:5], b_value=1500.0))
        fit_tensor_eigenvalues(vol)


def test_eigenvalues_sorted_descending(dirs64):
    dwi, _ = generate_phantom(PhantomSpec(dims=(64, 64, 1), snr=20.0, seed=9))
    vals = fit_tensor_eigenvalues(dwi).values.reshape(-1, 3)
    assert (np.diff(vals, axis=1) <= 1e-15).all()


def test_fit_matrix_requires_full_rank():
    # 10 directions cannot identify 45 coefficients without regularization
    dirs = unit_sphere_directions(10)
    with pytest.raises(NumericalError):
        ShBasis.for_directions(dirs, 8, regularization=0.0).fit_matrix()
