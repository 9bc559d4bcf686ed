# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the dense ReLU/softmax MLP.

Same contract and edge-case semantics as fairshift.nn._kernels_np (clip
constants, ReLU'(0)=0, regularizer skipped when gamma == 0 or the group is
empty). Hand-rolled loops beat BLAS-backed numpy here because training
batches are tiny (K ~ 5..10 rows) and per-call overhead dominates.
"""

from libc.math cimport exp, log
from libc.stdlib cimport free, malloc

import numpy as np

REG_NONE, REG_DP, REG_EOP = 0, 1, 2
CLIP_LO = 1e-12
CLIP_HI = 1.0 - 1e-12

cdef double _LO = 1e-12
cdef double _HI = 1.0 - 1e-12


cdef void mm_nn(const double* A, const double* B, double* C,
                Py_ssize_t n, Py_ssize_t k, Py_ssize_t m) noexcept nogil:
    # C(n,m) = A(n,k) @ B(k,m)
    cdef Py_ssize_t i, j, t
    cdef double av
    for i in range(n * m):
        C[i] = 0.0
    for i in range(n):
        for t in range(k):
            av = A[i * k + t]
            if av != 0.0:
                for j in range(m):
                    C[i * m + j] += av * B[t * m + j]


cdef void mm_tn_acc(const double* A, const double* B, double* C,
                    Py_ssize_t n, Py_ssize_t k, Py_ssize_t m,
                    bint accumulate) noexcept nogil:
    # C(k,m) (+)= A(n,k).T @ B(n,m)
    cdef Py_ssize_t i, j, t
    cdef double av
    if not accumulate:
        for i in range(k * m):
            C[i] = 0.0
    for i in range(n):
        for t in range(k):
            av = A[i * k + t]
            if av != 0.0:
                for j in range(m):
                    C[t * m + j] += av * B[i * m + j]


cdef void mm_nt(const double* A, const double* B, double* C,
                Py_ssize_t n, Py_ssize_t m, Py_ssize_t k,
                bint accumulate) noexcept nogil:
    # C(n,k) (+)= A(n,m) @ B(k,m).T
    cdef Py_ssize_t i, j, o
    cdef double s
    for i in range(n):
        for o in range(k):
            s = 0.0
            for j in range(m):
                s += A[i * m + j] * B[o * m + j]
            if accumulate:
                C[i * k + o] += s
            else:
                C[i * k + o] = s


cdef void add_bias(double* Z, const double* b, Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            Z[i * m + j] += b[j]


cdef void relu_inplace(double* Z, Py_ssize_t size) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(size):
        if Z[i] < 0.0:
            Z[i] = 0.0


cdef void softmax_rows(double* Z, Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(n):
        mx = Z[i * m]
        for j in range(1, m):
            if Z[i * m + j] > mx:
                mx = Z[i * m + j]
        s = 0.0
        for j in range(m):
            Z[i * m + j] = exp(Z[i * m + j] - mx)
            s += Z[i * m + j]
        for j in range(m):
            Z[i * m + j] /= s


cdef struct Net:
    Py_ssize_t n_layers
    Py_ssize_t n
    Py_ssize_t* dims          # n_layers + 1 entries
    double** W                # per-layer weight pointers
    double** b


cdef int net_init(Net* net, double[:, ::1] x, list Ws, list bs) except -1:
    cdef Py_ssize_t L = len(Ws)
    cdef double[:, ::1] wv
    cdef double[::1] bv
    net.n_layers = L
    net.n = x.shape[0]
    net.dims = <Py_ssize_t*> malloc((L + 1) * sizeof(Py_ssize_t))
    net.W = <double**> malloc(L * sizeof(double*))
    net.b = <double**> malloc(L * sizeof(double*))
    if net.dims == NULL or net.W == NULL or net.b == NULL:
        raise MemoryError()
    net.dims[0] = x.shape[1]
    cdef Py_ssize_t l
    for l in range(L):
        wv = Ws[l]
        bv = bs[l]
        if wv.shape[0] != net.dims[l]:
            raise ValueError(f"layer {l}: expected fan-in {net.dims[l]}, got {wv.shape[0]}")
        net.dims[l + 1] = wv.shape[1]
        net.W[l] = &wv[0, 0]
        net.b[l] = &bv[0]
    return 0


cdef void net_free(Net* net) noexcept:
    free(net.dims)
    free(net.W)
    free(net.b)


cdef Py_ssize_t act_total(Net* net) noexcept nogil:
    cdef Py_ssize_t l, tot = 0
    for l in range(1, net.n_layers + 1):
        tot += net.n * net.dims[l]
    return tot


cdef void run_forward(Net* net, const double* x, double* acts) noexcept nogil:
    """Fill acts with hidden activations and final-layer probabilities."""
    cdef Py_ssize_t l, off = 0
    cdef const double* src = x
    cdef Py_ssize_t n = net.n
    for l in range(net.n_layers):
        mm_nn(src, net.W[l], acts + off, n, net.dims[l], net.dims[l + 1])
        add_bias(acts + off, net.b[l], n, net.dims[l + 1])
        if l < net.n_layers - 1:
            relu_inplace(acts + off, n * net.dims[l + 1])
        else:
            softmax_rows(acts + off, n, net.dims[l + 1])
        src = acts + off
        off += n * net.dims[l + 1]


def forward(double[:, ::1] x, list Ws, list bs):
    cdef Net net
    net_init(&net, x, Ws, bs)
    cdef Py_ssize_t tot = act_total(&net)
    cdef double* acts = <double*> malloc(tot * sizeof(double))
    if acts == NULL:
        net_free(&net)
        raise MemoryError()
    out = np.empty((net.n, net.dims[net.n_layers]), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i
    try:
        with nogil:
            run_forward(&net, &x[0, 0], acts)
            for i in range(net.n * net.dims[net.n_layers]):
                (&ov[0, 0])[i] = acts[tot - net.n * net.dims[net.n_layers] + i]
    finally:
        free(acts)
        net_free(&net)
    return out


cdef double fill_output_delta(Net* net, const double* p,
                              const signed char* y, const signed char* a,
                              int reg_kind, double gamma,
                              double* delta) noexcept nogil:
    """Write d(loss)/d(logits) into delta; return the loss value."""
    cdef Py_ssize_t n = net.n
    cdef Py_ssize_t c = net.dims[net.n_layers]
    cdef Py_ssize_t i, j, m
    cdef double py, loss, inv, coef, p1
    loss = 0.0
    for i in range(n):
        py = p[i * c + y[i]]
        if py < _LO:
            loss += -log(_LO)
        elif py > _HI:
            loss += -log(_HI)
        else:
            loss += -log(py)
        if _LO < py < _HI:
            inv = 1.0 / n
        else:
            inv = 0.0
        for j in range(c):
            delta[i * c + j] = (p[i * c + j] - (1.0 if j == y[i] else 0.0)) * inv
    loss /= n
    if reg_kind != 0 and gamma != 0.0:
        m = 0
        for i in range(n):
            if a[i] == 0 and (reg_kind == 1 or y[i] == 1):
                m += 1
        if m > 0:
            coef = gamma / m
            inv = 0.0
            for i in range(n):
                if a[i] == 0 and (reg_kind == 1 or y[i] == 1):
                    p1 = p[i * c + 1]
                    inv += p1
                    for j in range(c):
                        delta[i * c + j] += coef * p1 * p[i * c + j]
                    delta[i * c + 1] -= coef * p1
            loss += gamma * (1.0 - inv / m)
    return loss


def loss_and_grad(double[:, ::1] x, const signed char[::1] y, const signed char[::1] a,
                  list Ws, list bs, int reg_kind, double gamma):
    cdef Net net
    net_init(&net, x, Ws, bs)
    cdef Py_ssize_t n = net.n, L = net.n_layers
    cdef Py_ssize_t l, i, maxd = 0, tot = act_total(&net)
    for l in range(L + 1):
        if net.dims[l] > maxd:
            maxd = net.dims[l]

    gws = [np.empty((net.dims[l], net.dims[l + 1]), dtype=np.float64) for l in range(L)]
    gbs = [np.empty(net.dims[l + 1], dtype=np.float64) for l in range(L)]
    cdef double** gw = <double**> malloc(L * sizeof(double*))
    cdef double** gb = <double**> malloc(L * sizeof(double*))
    cdef double* acts = <double*> malloc(tot * sizeof(double))
    cdef double* dcur = <double*> malloc(n * maxd * sizeof(double))
    cdef double* dnext = <double*> malloc(n * maxd * sizeof(double))
    if gw == NULL or gb == NULL or acts == NULL or dcur == NULL or dnext == NULL:
        free(gw); free(gb); free(acts); free(dcur); free(dnext)
        net_free(&net)
        raise MemoryError()
    cdef double[:, ::1] wv2
    cdef double[::1] bv1
    for l in range(L):
        wv2 = gws[l]
        gw[l] = &wv2[0, 0]
        bv1 = gbs[l]
        gb[l] = &bv1[0]

    cdef double loss
    cdef Py_ssize_t off, din, dout
    cdef const double* below
    cdef double* tmp
    try:
        with nogil:
            run_forward(&net, &x[0, 0], acts)
            off = tot - n * net.dims[L]
            loss = fill_output_delta(&net, acts + off, &y[0], &a[0],
                                     reg_kind, gamma, dcur)
            for l in range(L - 1, -1, -1):
                din = net.dims[l]
                dout = net.dims[l + 1]
                if l == 0:
                    below = &x[0, 0]
                else:
                    off = 0
                    for i in range(1, l):
                        off += n * net.dims[i]
                    below = acts + off
                mm_tn_acc(below, dcur, gw[l], n, din, dout, False)
                for i in range(dout):
                    gb[l][i] = 0.0
                for i in range(n):
                    for off in range(dout):
                        gb[l][off] += dcur[i * dout + off]
                if l > 0:
                    mm_nt(dcur, net.W[l], dnext, n, dout, din, False)
                    for i in range(n * din):
                        if below[i] <= 0.0:
                            dnext[i] = 0.0
                    tmp = dcur
                    dcur = dnext
                    dnext = tmp
    finally:
        free(gw); free(gb); free(acts); free(dcur); free(dnext)
        net_free(&net)
    return loss, gws, gbs


def hvp(double[:, ::1] x, const signed char[::1] y, const signed char[::1] a,
        list Ws, list bs, list vWs, list vbs, int reg_kind, double gamma):
    cdef Net net, vnet
    net_init(&net, x, Ws, bs)
    net_init(&vnet, x, vWs, vbs)
    cdef Py_ssize_t n = net.n, L = net.n_layers
    cdef Py_ssize_t l, i, j, maxd = 0, tot = act_total(&net)
    for l in range(L + 1):
        if net.dims[l] > maxd:
            maxd = net.dims[l]

    hws = [np.empty((net.dims[l], net.dims[l + 1]), dtype=np.float64) for l in range(L)]
    hbs = [np.empty(net.dims[l + 1], dtype=np.float64) for l in range(L)]
    cdef double** hw = <double**> malloc(L * sizeof(double*))
    cdef double** hb = <double**> malloc(L * sizeof(double*))
    cdef double* acts = <double*> malloc(tot * sizeof(double))
    cdef double* tang = <double*> malloc(tot * sizeof(double))
    cdef double* dcur = <double*> malloc(n * maxd * sizeof(double))
    cdef double* dnext = <double*> malloc(n * maxd * sizeof(double))
    cdef double* rcur = <double*> malloc(n * maxd * sizeof(double))
    cdef double* rnext = <double*> malloc(n * maxd * sizeof(double))
    if (hw == NULL or hb == NULL or acts == NULL or tang == NULL or
            dcur == NULL or dnext == NULL or rcur == NULL or rnext == NULL):
        free(hw); free(hb); free(acts); free(tang)
        free(dcur); free(dnext); free(rcur); free(rnext)
        net_free(&net); net_free(&vnet)
        raise MemoryError()
    cdef double[:, ::1] wv2
    cdef double[::1] bv1
    for l in range(L):
        wv2 = hws[l]
        hw[l] = &wv2[0, 0]
        bv1 = hbs[l]
        hb[l] = &bv1[0]

    cdef Py_ssize_t off, din, dout, c
    cdef const double* below
    cdef const double* rbelow
    cdef double* tmp
    cdef double s, py, inv, coef, p1, rp1
    cdef Py_ssize_t m
    try:
        with nogil:
            # forward pass with directional tangents
            off = 0
            below = &x[0, 0]
            rbelow = NULL  # tangent of the input is zero
            for l in range(L):
                din = net.dims[l]
                dout = net.dims[l + 1]
                mm_nn(below, net.W[l], acts + off, n, din, dout)
                add_bias(acts + off, net.b[l], n, dout)
                mm_nn(below, vnet.W[l], tang + off, n, din, dout)
                add_bias(tang + off, vnet.b[l], n, dout)
                if rbelow != NULL:
                    mm_nn_acc_into(rbelow, net.W[l], tang + off, n, din, dout)
                if l < L - 1:
                    for i in range(n * dout):
                        if (acts + off)[i] <= 0.0:
                            (acts + off)[i] = 0.0
                            (tang + off)[i] = 0.0
                else:
                    softmax_rows(acts + off, n, dout)
                    # rp = p * (rz - sum_k p_k rz_k)
                    c = dout
                    for i in range(n):
                        s = 0.0
                        for j in range(c):
                            s += (acts + off)[i * c + j] * (tang + off)[i * c + j]
                        for j in range(c):
                            (tang + off)[i * c + j] = (acts + off)[i * c + j] * ((tang + off)[i * c + j] - s)
                below = acts + off
                rbelow = tang + off
                off += n * dout

            # output-layer delta and its tangent
            c = net.dims[L]
            off = tot - n * c
            for i in range(n):
                py = (acts + off)[i * c + y[i]]
                if _LO < py < _HI:
                    inv = 1.0 / n
                else:
                    inv = 0.0
                for j in range(c):
                    dcur[i * c + j] = ((acts + off)[i * c + j] - (1.0 if j == y[i] else 0.0)) * inv
                    rcur[i * c + j] = (tang + off)[i * c + j] * inv
            if reg_kind != 0 and gamma != 0.0:
                m = 0
                for i in range(n):
                    if a[i] == 0 and (reg_kind == 1 or y[i] == 1):
                        m += 1
                if m > 0:
                    coef = gamma / m
                    for i in range(n):
                        if a[i] == 0 and (reg_kind == 1 or y[i] == 1):
                            p1 = (acts + off)[i * c + 1]
                            rp1 = (tang + off)[i * c + 1]
                            for j in range(c):
                                dcur[i * c + j] += coef * p1 * (acts + off)[i * c + j]
                                rcur[i * c + j] += coef * (rp1 * (acts + off)[i * c + j]
                                                           + p1 * (tang + off)[i * c + j])
                            dcur[i * c + 1] -= coef * p1
                            rcur[i * c + 1] -= coef * rp1

            # backward pass, primal delta and tangent together
            for l in range(L - 1, -1, -1):
                din = net.dims[l]
                dout = net.dims[l + 1]
                if l == 0:
                    below = &x[0, 0]
                    rbelow = NULL
                else:
                    off = 0
                    for i in range(1, l):
                        off += n * net.dims[i]
                    below = acts + off
                    rbelow = tang + off
                # hW_l = Racts[l-1].T @ delta + acts[l-1].T @ rdelta
                if rbelow != NULL:
                    mm_tn_acc(rbelow, dcur, hw[l], n, din, dout, False)
                    mm_tn_acc(below, rcur, hw[l], n, din, dout, True)
                else:
                    mm_tn_acc(below, rcur, hw[l], n, din, dout, False)
                for i in range(dout):
                    hb[l][i] = 0.0
                for i in range(n):
                    for j in range(dout):
                        hb[l][j] += rcur[i * dout + j]
                if l > 0:
                    mm_nt(rcur, net.W[l], rnext, n, dout, din, False)
                    mm_nt(dcur, vnet.W[l], rnext, n, dout, din, True)
                    mm_nt(dcur, net.W[l], dnext, n, dout, din, False)
                    for i in range(n * din):
                        if below[i] <= 0.0:
                            dnext[i] = 0.0
                            rnext[i] = 0.0
                    tmp = dcur; dcur = dnext; dnext = tmp
                    tmp = rcur; rcur = rnext; rnext = tmp
    finally:
        free(hw); free(hb); free(acts); free(tang)
        free(dcur); free(dnext); free(rcur); free(rnext)
        net_free(&net); net_free(&vnet)
    return hws, hbs


cdef void mm_nn_acc_into(const double* A, const double* B, double* C,
                         Py_ssize_t n, Py_ssize_t k, Py_ssize_t m) noexcept nogil:
    # C(n,m) += A(n,k) @ B(k,m)
    cdef Py_ssize_t i, j, t
    cdef double av
    for i in range(n):
        for t in range(k):
            av = A[i * k + t]
            if av != 0.0:
                for j in range(m):
                    C[i * m + j] += av * B[t * m + j]
