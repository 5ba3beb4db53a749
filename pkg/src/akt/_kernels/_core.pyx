# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of `akt._kernels.numpy_backend`.

Matrix products go through the same BLAS scipy links against; the elementwise
kernels, losses and SGD updates are fused single-pass loops. Signatures and
numerical conventions match the NumPy backend (strict IEEE double precision,
no fast-math).
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm
from libc.math cimport exp, fabs, log, log1p


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def affine_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    """y[i] = x[i] . w^T + b for each row i."""
    cdef int rows = x.shape[0], in_dim = x.shape[1], out_dim = w.shape[0]
    y_arr = np.empty((rows, out_dim), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef int i, j
    cdef double one = 1.0
    cdef char ta = b'T', tn = b'N'
    for i in range(rows):
        for j in range(out_dim):
            y[i, j] = b[j]
    if in_dim > 0:
        # Row-major y += x.w^T via the Fortran view: y^T = w.x^T.
        dgemm(&ta, &tn, &out_dim, &rows, &in_dim, &one,
              &w[0, 0], &in_dim, &x[0, 0], &in_dim, &one, &y[0, 0], &out_dim)
    return y_arr


def affine_backward(double[:, ::1] grad_y, double[:, ::1] x, double[:, ::1] w,
                    double[:, ::1] grad_w, double[::1] grad_b):
    """Accumulate grad_w += grad_y^T.x and grad_b += column sums; return grad_x."""
    cdef int rows = grad_y.shape[0], out_dim = grad_y.shape[1], in_dim = x.shape[1]
    cdef int i, j
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N', tt = b'T'
    if in_dim > 0:
        # grad_w^T = x^T.grad_y in the Fortran view, beta=1 accumulates.
        dgemm(&tn, &tt, &in_dim, &out_dim, &rows, &one,
              &x[0, 0], &in_dim, &grad_y[0, 0], &out_dim, &one, &grad_w[0, 0], &in_dim)
    for i in range(rows):
        for j in range(out_dim):
            grad_b[j] += grad_y[i, j]
    grad_x_arr = np.empty((rows, in_dim), dtype=np.float64)
    cdef double[:, ::1] grad_x = grad_x_arr
    if in_dim > 0:
        dgemm(&tn, &tn, &in_dim, &rows, &out_dim, &one,
              &w[0, 0], &in_dim, &grad_y[0, 0], &out_dim, &zero, &grad_x[0, 0], &in_dim)
    return grad_x_arr


def affine_backward_input(double[:, ::1] grad_y, double[:, ::1] w):
    """Input gradient only (parameter buffers untouched)."""
    cdef int rows = grad_y.shape[0], out_dim = grad_y.shape[1], in_dim = w.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N'
    grad_x_arr = np.empty((rows, in_dim), dtype=np.float64)
    cdef double[:, ::1] grad_x = grad_x_arr
    if in_dim > 0:
        dgemm(&tn, &tn, &in_dim, &rows, &out_dim, &one,
              &w[0, 0], &in_dim, &grad_y[0, 0], &out_dim, &zero, &grad_x[0, 0], &in_dim)
    return grad_x_arr


def relu_forward(double[:, ::1] x):
    cdef int rows = x.shape[0], cols = x.shape[1]
    y_arr = np.empty((rows, cols), dtype=np.float64)
    mask_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] y = y_arr, mask = mask_arr
    cdef int i, j
    for i in range(rows):
        for j in range(cols):
            if x[i, j] > 0.0:
                y[i, j] = x[i, j]
                mask[i, j] = 1.0
            else:
                y[i, j] = 0.0
                mask[i, j] = 0.0
    return y_arr, mask_arr


def relu_backward(double[:, ::1] grad_y, double[:, ::1] mask):
    cdef int rows = grad_y.shape[0], cols = grad_y.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int i, j
    for i in range(rows):
        for j in range(cols):
            out[i, j] = grad_y[i, j] * mask[i, j]
    return out_arr


def softmax_xent(double[:, ::1] logits, double[:, ::1] onehot):
    """Mean stable cross-entropy over rows and its gradient (softmax - y)/b."""
    cdef int rows = logits.shape[0], cols = logits.shape[1]
    grad_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef int i, j
    cdef double shift, acc, lse, dot, loss = 0.0, inv_rows = 1.0 / rows
    for i in range(rows):
        shift = logits[i, 0]
        for j in range(1, cols):
            if logits[i, j] > shift:
                shift = logits[i, j]
        acc = 0.0
        dot = 0.0
        for j in range(cols):
            acc += exp(logits[i, j] - shift)
            dot += logits[i, j] * onehot[i, j]
        lse = log(acc) + shift
        loss += lse - dot
        for j in range(cols):
            grad[i, j] = (exp(logits[i, j] - lse) - onehot[i, j]) * inv_rows
    return loss / rows, grad_arr


def sigmoid_bce(double[:, ::1] logits, double[:, ::1] targets):
    """Mean stable binary cross-entropy over all entries and its gradient."""
    cdef int rows = logits.shape[0], cols = logits.shape[1]
    grad_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef int i, j
    cdef double z, t, loss = 0.0
    cdef double inv_n = 1.0 / (rows * cols)
    for i in range(rows):
        for j in range(cols):
            z = logits[i, j]
            t = targets[i, j]
            loss += (z if z > 0.0 else 0.0) - z * t + log1p(exp(-fabs(z)))
            grad[i, j] = (_sigmoid(z) - t) * inv_n
    return loss * inv_n, grad_arr


def sgd_update(double[::1] param, double[::1] grad, double[::1] velocity,
               double lr, double momentum, double weight_decay):
    """v <- mu*v + (g + wd*p); p <- p - lr*v, in place on flat views."""
    cdef Py_ssize_t i, n = param.shape[0]
    if weight_decay != 0.0:
        for i in range(n):
            velocity[i] = momentum * velocity[i] + (grad[i] + weight_decay * param[i])
            param[i] -= lr * velocity[i]
    else:
        for i in range(n):
            velocity[i] = momentum * velocity[i] + grad[i]
            param[i] -= lr * velocity[i]
