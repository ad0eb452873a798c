import numpy as np
from scipy import stats

from msest.rng import fill_normals, philox4x64, stream_key, trajectory_normals


def test_philox_matches_numpy_reference():
    # numpy pre-increments its counter, so its first block is our block ctr+1
    for key in [(0, 0), (123456789, 987654321), (2**64 - 1, 2**63 + 5)]:
        for ctr in [0, 1, 41]:
            ref = np.random.Philox(key=np.array(key, dtype=np.uint64),
                                   counter=np.array([ctr, 0, 0, 0], dtype=np.uint64))
            expect = ref.random_raw(4)
            got = philox4x64(np.uint64(ctr + 1), np.uint64(0), np.uint64(0), np.uint64(0),
                             np.uint64(key[0]), np.uint64(key[1]))
            assert [int(v) for v in got] == [int(v) for v in expect]


def test_stream_keys_distinct():
    keys = {tuple(int(k) for k in stream_key(np.uint64(7), np.uint64(i), np.uint64(p)))
            for i in range(40) for p in range(40)}
    assert len(keys) == 1600
    assert stream_key(np.uint64(1), np.uint64(0), np.uint64(0)) != stream_key(
        np.uint64(2), np.uint64(0), np.uint64(0))


def test_normals_are_deterministic_and_prefix_stable():
    a = trajectory_normals(5, 3, 9, 1000)
    b = trajectory_normals(5, 3, 9, 10)
    np.testing.assert_array_equal(a[:10], b)
    k0, k1 = stream_key(np.uint64(5), np.uint64(3), np.uint64(9))
    buf = np.empty(256)
    ctr = fill_normals(np.uint64(k0), np.uint64(k1), np.uint64(0), buf)
    assert int(ctr) == 64
    np.testing.assert_array_equal(buf, a[:256])


def test_normals_distribution():
    z = np.concatenate([trajectory_normals(11, i, 0, 20000) for i in range(5)])
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1.0) < 5 * np.sqrt(2.0 / z.size)
    assert stats.kstest(z, "norm").pvalue > 1e-4
    # neighbouring streams are uncorrelated
    a = trajectory_normals(11, 0, 0, 20000)
    b = trajectory_normals(11, 0, 1, 20000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 5 / np.sqrt(a.size)
