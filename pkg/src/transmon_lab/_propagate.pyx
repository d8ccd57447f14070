# cython: language_level=3, boundscheck=False, wraparound=False
"""Thin wrapper around the C product-formula kernel."""

cdef extern from "_kernel.c":
    int LANES
    int tl_run_steps(double *data, int K, int N1, int N2, long nsteps, double tau,
                     const double *ng, const double *n1, const double *n2,
                     double ec1, double ec2, const double *v1, const double *v2,
                     const double *diag, const double *w) nogil

BATCH = LANES


def run_steps(double[:, :, :, :, ::1] state, double tau, const double[:, :, ::1] ng,
              const double[::1] n1, const double[::1] n2, double ec1, double ec2,
              const double[::1] v1, const double[::1] v2,
              const double[:, :, ::1] diag, const double[:, :, ::1] w):
    """Advance ``state`` (K, N1, N2, 2, BATCH) in place by ``len(ng)`` steps."""
    cdef int K = state.shape[0], N1 = state.shape[1], N2 = state.shape[2]
    cdef long nsteps = ng.shape[0]
    cdef int rc
    if state.shape[3] != 2 or state.shape[4] != LANES:
        raise ValueError("state must have shape (K, N1, N2, 2, %d)" % LANES)
    if ng.shape[1] != 2 or ng.shape[2] != LANES:
        raise ValueError("drive array must have shape (nsteps, 2, %d)" % LANES)
    if v1.shape[0] != N1 - 1 or v2.shape[0] != N2 - 1:
        raise ValueError("off-diagonal lengths do not match the charge windows")
    if (diag.shape[0] != K or diag.shape[1] != N1 or diag.shape[2] != N2
            or w.shape[0] != K - 1 or w.shape[1] != N1 or w.shape[2] != N2):
        raise ValueError("diagonal / coupling arrays do not match the basis")
    if nsteps == 0:
        return
    with nogil:
        rc = tl_run_steps(&state[0, 0, 0, 0, 0], K, N1, N2, nsteps, tau,
                          &ng[0, 0, 0], &n1[0], &n2[0], ec1, ec2,
                          &v1[0] if N1 > 1 else NULL, &v2[0] if N2 > 1 else NULL,
                          &diag[0, 0, 0], &w[0, 0, 0] if K > 1 else NULL)
    if rc != 0:
        raise MemoryError("kernel workspace allocation failed")
