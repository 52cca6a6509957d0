import numpy as np
import pytest

from groundattn.bbm import MergeError, bias_interaction, merge, run_bbm, ssim
from groundattn.extraction import ActivationMap, minmax


def reference_ssim(a, b, window=7, k1=0.01, k2=0.03):
    """Brute-force sliding-window SSIM with population statistics."""
    c1, c2 = (k1 * 1.0) ** 2, (k2 * 1.0) ** 2
    h, w = a.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = a[i : i + window, j : j + window]
            pb = b[i : i + window, j : j + window]
            mu_a, mu_b = pa.mean(), pb.mean()
            va, vb = pa.var(), pb.var()
            cov = ((pa - mu_a) * (pb - mu_b)).mean()
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
            )
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def test_ssim_identity():
    rng = np.random.default_rng(0)
    m = rng.random((16, 16))
    assert ssim(m, m) == pytest.approx(1.0, abs=1e-9)


def test_ssim_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.random((12, 12)), rng.random((12, 12))
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_ssim_checkerboard_inversion():
    m = np.indices((8, 8)).sum(axis=0) % 2.0
    val = ssim(m, 1.0 - m, window=7)
    assert val < 0.1
    assert val == pytest.approx(reference_ssim(m, 1.0 - m), abs=1e-9)


def test_ssim_matches_reference_on_random_pairs():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-9)


def test_ssim_errors():
    with pytest.raises(MergeError):
        ssim(np.zeros((4, 4)), np.zeros((5, 5)))
    with pytest.raises(MergeError):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)), window=5)


def brute_matmul(a, b):
    n = a.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_bias_interaction_identity_pattern():
    m = np.random.default_rng(3).random((8, 8))
    m = minmax(m)
    eye = np.eye(8)
    out = bias_interaction(ActivationMap(eye, "img"), ActivationMap(m, "txt"))
    assert np.allclose(out.grid, minmax(m), atol=1e-12)
    assert out.provenance == "mult"


def test_bias_interaction_rank_one_and_brute_force():
    rng = np.random.default_rng(4)
    u, v = rng.random(8), rng.random(8)
    r1 = minmax(np.outer(u, v))
    out = bias_interaction(ActivationMap(r1, "img"), ActivationMap(r1, "txt"))
    ref = minmax(brute_matmul(r1, r1))
    assert np.allclose(out.grid, ref, atol=1e-9)


def test_bias_interaction_brute_force_random_16():
    rng = np.random.default_rng(5)
    a, b = minmax(rng.random((16, 16))), minmax(rng.random((16, 16)))
    out = bias_interaction(ActivationMap(a, "img"), ActivationMap(b, "txt"))
    assert np.allclose(out.grid, minmax(brute_matmul(a, b)), atol=1e-9)


def test_bias_interaction_gaussian_blobs_peak():
    # two smooth blob maps: peak located by brute-force argmax of the product
    yy, xx = np.mgrid[0:16, 0:16]
    g1 = np.exp(-((yy - 5) ** 2 + (xx - 5) ** 2) / 8.0)
    g2 = np.exp(-((yy - 5) ** 2 + (xx - 6) ** 2) / 8.0)
    out = bias_interaction(ActivationMap(minmax(g1), "img"), ActivationMap(minmax(g2), "txt"))
    ref = brute_matmul(minmax(g1), minmax(g2))
    assert np.argmax(out.grid) == np.argmax(ref)


@pytest.mark.parametrize("variant", ["linear", "quadratic", "mixture"])
def test_merge_endpoints(variant):
    rng = np.random.default_rng(6)
    c = ActivationMap(minmax(rng.random((8, 8))), "comb")
    m = ActivationMap(minmax(rng.random((8, 8))), "mult")
    at0 = merge(c, m, 0.0, variant, renormalize=False)
    at1 = merge(c, m, 1.0, variant, renormalize=False)
    assert np.max(np.abs(at0.grid - c.grid)) <= 1e-12
    assert np.max(np.abs(at1.grid - m.grid)) <= 1e-12


def test_merge_mixture_scalar_value():
    c = ActivationMap(np.full((4, 4), 0.4), "comb")
    m = ActivationMap(np.full((4, 4), 0.8), "mult")
    out = merge(c, m, 0.5, "mixture", renormalize=False)
    assert np.allclose(out.grid, 0.68, atol=1e-12)


def test_merge_validates_inputs():
    c = ActivationMap(np.zeros((4, 4)), "comb")
    with pytest.raises(MergeError):
        merge(c, c, 1.5, "linear")
    with pytest.raises(MergeError):
        merge(c, c, 0.5, "cubic")
    with pytest.raises(MergeError):
        merge(c, ActivationMap(np.zeros((5, 5)), "mult"), 0.5)


def test_quadratic_below_linear_pointwise():
    # for values in [0,1], M*C <= (M+C)/2 so the quadratic control point
    # never exceeds the linear one
    rng = np.random.default_rng(7)
    for _ in range(10):
        c = ActivationMap(rng.random((8, 8)), "comb")
        m = ActivationMap(rng.random((8, 8)), "mult")
        s = float(rng.random())
        q = merge(c, m, s, "quadratic", renormalize=False).grid
        l = merge(c, m, s, "linear", renormalize=False).grid
        assert np.all(q <= l + 1e-12)


def test_constant_maps_reduce_to_scalar_bezier():
    c = ActivationMap(np.full((6, 6), 0.3), "comb")
    m = ActivationMap(np.full((6, 6), 0.9), "mult")
    s = 0.25
    expect = 2 * (1 - s) * s * (0.3 * 0.9) + (1 - s) ** 2 * 0.3 + s**2 * 0.9
    out = merge(c, m, s, "quadratic", renormalize=False)
    assert np.allclose(out.grid, expect, atol=1e-12)


def test_run_bbm_identical_bias_slices(tokens4):
    # dump whose start-token and lexical-token maps coincide: s = 1 and
    # the merged map equals the bias product
    from groundattn.attnstore import AttentionDump, LayerInfo

    rng = np.random.default_rng(8)
    base = rng.random((8, 8)) * 0.4 + 0.1
    v = np.zeros((1, 1, 4, 8, 8))
    v[0, 0, 0] = base
    v[0, 0, 1] = base
    rest = (1.0 - 2 * base) / 2
    v[0, 0, 2] = rest
    v[0, 0, 3] = rest
    dump = AttentionDump([10], [LayerInfo(0, 8, 8)], 4, [v.astype(np.float32)])
    from groundattn.extraction import ExtractionSpec

    spec = ExtractionSpec(upsample_target=8)
    res = run_bbm(dump, dump, tokens4, spec, 0, "mixture")
    assert res.s == pytest.approx(1.0, abs=1e-7)
    assert np.allclose(res.p_bbm.grid, minmax(res.p_mult.grid), atol=1e-9)
