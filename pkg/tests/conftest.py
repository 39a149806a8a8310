import pytest

from evstream import _pykernels
from evstream.server import Node, ServerThread

try:
    from evstream import _ckernels
except ImportError:  # extension not built
    _ckernels = None

IMPLS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    IMPLS.append(pytest.param(_ckernels, id="cython"))


@pytest.fixture(params=IMPLS)
def impl(request):
    """Each kernel test runs against both the compiled core and the fallback."""
    return request.param


@pytest.fixture
def server():
    with ServerThread(Node()) as srv:
        yield srv
