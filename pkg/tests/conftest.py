import numpy as np
import pytest

from eitkit import Electrode, Element, Mesh, Node, build_disk_mesh


@pytest.fixture(scope="session")
def disk_r1() -> Mesh:
    return build_disk_mesh(1.0, 1)


@pytest.fixture
def triangle_mesh() -> Mesh:
    """Single right triangle: nodes 1,2,3 at (0,0), (1,0), (0,1)."""
    return Mesh(
        nodes=(Node(1, 0.0, 0.0), Node(2, 1.0, 0.0), Node(3, 0.0, 1.0)),
        elements=(Element(0, (1, 2, 3)),),
        boundary_nodes=(1, 2, 3),
        electrodes=(Electrode(0, 1), Electrode(1, 2), Electrode(2, 3)),
    )


@pytest.fixture
def square_mesh() -> Mesh:
    """Unit square split along one diagonal: four nodes, two triangles."""
    return Mesh(
        nodes=(Node(0, 0.0, 0.0), Node(1, 1.0, 0.0), Node(2, 1.0, 1.0), Node(3, 0.0, 1.0)),
        elements=(Element(0, (0, 1, 2)), Element(1, (0, 2, 3))),
        boundary_nodes=(0, 1, 2, 3),
        electrodes=(Electrode(0, 0), Electrode(1, 1), Electrode(2, 2), Electrode(3, 3)),
    )


def random_orthonormal(m: int, d: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((m, d)))
    return q[:, :d]
