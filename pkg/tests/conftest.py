"""Shared fixtures: the kernel table is expensive and immutable, build it once."""

import pytest

from muskat.kernels import build_kernel_table


@pytest.fixture(scope="session")
def kernel_table():
    return build_kernel_table()
