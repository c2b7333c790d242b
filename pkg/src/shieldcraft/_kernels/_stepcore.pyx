# cython: language_level=3
"""Compiled lane of the flight-dynamics step kernel.

Must stay arithmetically identical to step_py (same operations, same
association order). Compiled with -ffp-contract=off so the C compiler
cannot fuse multiply-adds and break bit-parity with the numpy lane.
"""

from libc.math cimport fmax, fmin


def step_batch(double[::1] rate, double[::1] wheel, double[::1] charge,
               double[::1] err, const double[::1] sun,
               const long long[::1] action,
               const double[::1] e_w, const double[::1] e_r,
               const double[::1] e_a, const double[::1] par):
    """Advance state arrays in place (one decision step per element)."""
    cdef Py_ssize_t i, a
    cdef Py_ssize_t n = rate.shape[0]
    with nogil:
        for i in range(n):
            a = <Py_ssize_t> action[i]
            charge[i] = fmin(1.0, (charge[i] + par[a] * sun[i]) - par[4 + a])
            wheel[i] = fmax(0.0, (wheel[i] + par[8 + a]) + par[12 + a] * e_w[i])
            rate[i] = fmax(0.0, (rate[i] + par[16 + a] * (par[20 + a] - rate[i]))
                           + par[24 + a] * e_r[i])
            err[i] = fmax(0.0, (par[28 + a] * err[i] + par[32 + a])
                          + par[36 + a] * e_a[i])


def step_one(double rate, double wheel, double charge, double err,
             double sun, long action, double e_w, double e_r, double e_a,
             const double[::1] par):
    """Scalar step; returns (rate, wheel, charge, err)."""
    cdef Py_ssize_t a = <Py_ssize_t> action
    charge = fmin(1.0, (charge + par[a] * sun) - par[4 + a])
    wheel = fmax(0.0, (wheel + par[8 + a]) + par[12 + a] * e_w)
    rate = fmax(0.0, (rate + par[16 + a] * (par[20 + a] - rate)) + par[24 + a] * e_r)
    err = fmax(0.0, (par[28 + a] * err + par[32 + a]) + par[36 + a] * e_a)
    return rate, wheel, charge, err
