import numpy as np
import pytest

import voxquad as vq


@pytest.fixture(scope="session")
def disk4():
    return vq.generate_disk_mesh(4)


@pytest.fixture(scope="session")
def disk4_dual(disk4):
    return vq.barycentric_dual(disk4)


@pytest.fixture(scope="session")
def disk8():
    return vq.generate_disk_mesh(8)


@pytest.fixture(scope="session")
def disk8_dual(disk8):
    return vq.barycentric_dual(disk8)


@pytest.fixture(scope="session")
def interval7():
    return vq.generate_interval_mesh(7, 0.0, 1.0, pinned=[np.pi / 5])
