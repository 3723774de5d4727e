"""Shared BLAS threadpool control.

Threaded BLAS kernels split long reductions across threads for some shapes,
which makes results depend on the thread count. Code that must be
bit-reproducible runs inside `single_thread()`. The controller is built once:
probing the loaded libraries on every call costs more than the pinned work.
"""

from threadpoolctl import ThreadpoolController

_controller = ThreadpoolController()


def single_thread():
    return _controller.limit(limits=1)
