#include "seer/kernels.hpp"

#include <atomic>
#include <cmath>

namespace seer::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
} // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------
namespace ref {

void affine(const double* Wt, const double* b, const double* x, double* y, int in, int out) {
    for (int o = 0; o < out; ++o) y[o] = b[o];
    for (int k = 0; k < in; ++k) {
        const double xk = x[k];
        const double* row = Wt + static_cast<std::size_t>(k) * out;
        for (int o = 0; o < out; ++o) y[o] += xk * row[o];
    }
}

void affine_grad_input(const double* Wt, const double* dy, double* dx, int in, int out) {
    for (int k = 0; k < in; ++k) {
        const double* row = Wt + static_cast<std::size_t>(k) * out;
        double acc = 0.0;
        for (int o = 0; o < out; ++o) acc += row[o] * dy[o];
        dx[k] = acc;
    }
}

void affine_grad_params(const double* x, const double* dy, double* dWt, double* db, int in,
                        int out) {
    for (int k = 0; k < in; ++k) {
        const double xk = x[k];
        double* row = dWt + static_cast<std::size_t>(k) * out;
        for (int o = 0; o < out; ++o) row[o] += xk * dy[o];
    }
    for (int o = 0; o < out; ++o) db[o] += dy[o];
}

void conv1d(const double* x, const double* W, const double* b, double* y, int len, int cin,
            int cout, int K) {
    const int pad = K / 2;
    for (int p = 0; p < len; ++p) {
        double* yp = y + static_cast<std::size_t>(p) * cout;
        for (int o = 0; o < cout; ++o) yp[o] = b[o];
        for (int d = 0; d < K; ++d) {
            const int q = p + d - pad;
            if (q < 0 || q >= len) continue;
            const double* xq = x + static_cast<std::size_t>(q) * cin;
            const double* Wd = W + static_cast<std::size_t>(d) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const double xv = xq[ci];
                const double* wrow = Wd + static_cast<std::size_t>(ci) * cout;
                for (int o = 0; o < cout; ++o) yp[o] += xv * wrow[o];
            }
        }
    }
}

void conv1d_grad_input(const double* dy, const double* W, double* dx, int len, int cin,
                       int cout, int K) {
    const int pad = K / 2;
    for (int q = 0; q < len; ++q) {
        double* dxq = dx + static_cast<std::size_t>(q) * cin;
        for (int ci = 0; ci < cin; ++ci) dxq[ci] = 0.0;
        for (int d = 0; d < K; ++d) {
            const int p = q - d + pad;
            if (p < 0 || p >= len) continue;
            const double* dyp = dy + static_cast<std::size_t>(p) * cout;
            const double* Wd = W + static_cast<std::size_t>(d) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const double* wrow = Wd + static_cast<std::size_t>(ci) * cout;
                double acc = 0.0;
                for (int o = 0; o < cout; ++o) acc += wrow[o] * dyp[o];
                dxq[ci] += acc;
            }
        }
    }
}

void conv1d_grad_params(const double* x, const double* dy, double* dW, double* db, int len,
                        int cin, int cout, int K) {
    const int pad = K / 2;
    for (int d = 0; d < K; ++d) {
        double* Wd = dW + static_cast<std::size_t>(d) * cin * cout;
        for (int ci = 0; ci < cin; ++ci) {
            double* wrow = Wd + static_cast<std::size_t>(ci) * cout;
            for (int p = 0; p < len; ++p) {
                const int q = p + d - pad;
                if (q < 0 || q >= len) continue;
                const double xv = x[static_cast<std::size_t>(q) * cin + ci];
                const double* dyp = dy + static_cast<std::size_t>(p) * cout;
                for (int o = 0; o < cout; ++o) wrow[o] += xv * dyp[o];
            }
        }
    }
    for (int p = 0; p < len; ++p) {
        const double* dyp = dy + static_cast<std::size_t>(p) * cout;
        for (int o = 0; o < cout; ++o) db[o] += dyp[o];
    }
}

void avgpool2(const double* x, double* y, int len, int chan) {
    const int olen = (len + 1) / 2;
    for (int p = 0; p < olen; ++p) {
        const int a = 2 * p, b2 = 2 * p + 1;
        double* yp = y + static_cast<std::size_t>(p) * chan;
        const double* xa = x + static_cast<std::size_t>(a) * chan;
        if (b2 < len) {
            const double* xb = x + static_cast<std::size_t>(b2) * chan;
            for (int c = 0; c < chan; ++c) yp[c] = 0.5 * (xa[c] + xb[c]);
        } else {
            for (int c = 0; c < chan; ++c) yp[c] = xa[c];
        }
    }
}

void avgpool2_grad(const double* dy, double* dx, int len, int chan) {
    const int olen = (len + 1) / 2;
    for (int p = 0; p < olen; ++p) {
        const int a = 2 * p, b2 = 2 * p + 1;
        const double* dyp = dy + static_cast<std::size_t>(p) * chan;
        double* dxa = dx + static_cast<std::size_t>(a) * chan;
        if (b2 < len) {
            double* dxb = dx + static_cast<std::size_t>(b2) * chan;
            for (int c = 0; c < chan; ++c) {
                dxa[c] = 0.5 * dyp[c];
                dxb[c] = 0.5 * dyp[c];
            }
        } else {
            for (int c = 0; c < chan; ++c) dxa[c] = dyp[c];
        }
    }
}

void relu(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad(const double* y, const double* dy, double* dx, int n) {
    for (int i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

void tanh_act(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_grad(const double* y, const double* dy, double* dx, int n) {
    for (int i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void lstm_cell_forward(double* z, const double* c_prev, double* c, double* tanh_c, double* h,
                       int H) {
    double* zi = z;
    double* zf = z + H;
    double* zg = z + 2 * H;
    double* zo = z + 3 * H;
    for (int j = 0; j < H; ++j) {
        const double i = sigmoid(zi[j]);
        const double f = sigmoid(zf[j]);
        const double g = std::tanh(zg[j]);
        const double o = sigmoid(zo[j]);
        zi[j] = i;
        zf[j] = f;
        zg[j] = g;
        zo[j] = o;
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = std::tanh(c[j]);
        h[j] = o * tanh_c[j];
    }
}

void lstm_cell_backward(const double* z, const double* c_prev, const double* tanh_c,
                        const double* dh, double* dc, double* dz, int H) {
    const double* i = z;
    const double* f = z + H;
    const double* g = z + 2 * H;
    const double* o = z + 3 * H;
    double* dzi = dz;
    double* dzf = dz + H;
    double* dzg = dz + 2 * H;
    double* dzo = dz + 3 * H;
    for (int j = 0; j < H; ++j) {
        const double d_o = dh[j] * tanh_c[j];
        const double dcj = dc[j] + dh[j] * o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
        const double d_i = dcj * g[j];
        const double d_g = dcj * i[j];
        const double d_f = dcj * c_prev[j];
        dzi[j] = d_i * i[j] * (1.0 - i[j]);
        dzf[j] = d_f * f[j] * (1.0 - f[j]);
        dzg[j] = d_g * (1.0 - g[j] * g[j]);
        dzo[j] = d_o * o[j] * (1.0 - o[j]);
        dc[j] = dcj * f[j]; // becomes dc_prev
    }
}

void softmax(const double* x, double* y, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) y[i] *= inv;
}

void sgd_momentum(double* p, const double* g, double* v, double lr, double momentum,
                  std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        p[i] += v[i];
    }
}

void add_inplace(double* dst, const double* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

} // namespace ref

// ---------------------------------------------------------------------------
// OpenMP implementations. Each output element is accumulated in the same
// order as in the reference, so results match bit for bit.
// ---------------------------------------------------------------------------
namespace omp {

void affine(const double* Wt, const double* b, const double* x, double* y, int in, int out) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
        double acc = b[o];
        for (int k = 0; k < in; ++k) acc += x[k] * Wt[static_cast<std::size_t>(k) * out + o];
        y[o] = acc;
    }
}

void affine_grad_input(const double* Wt, const double* dy, double* dx, int in, int out) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < in; ++k) {
        const double* row = Wt + static_cast<std::size_t>(k) * out;
        double acc = 0.0;
        for (int o = 0; o < out; ++o) acc += row[o] * dy[o];
        dx[k] = acc;
    }
}

void affine_grad_params(const double* x, const double* dy, double* dWt, double* db, int in,
                        int out) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < in; ++k) {
        const double xk = x[k];
        double* row = dWt + static_cast<std::size_t>(k) * out;
        for (int o = 0; o < out; ++o) row[o] += xk * dy[o];
    }
    for (int o = 0; o < out; ++o) db[o] += dy[o];
}

void conv1d(const double* x, const double* W, const double* b, double* y, int len, int cin,
            int cout, int K) {
    const int pad = K / 2;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < len; ++p) {
        double* yp = y + static_cast<std::size_t>(p) * cout;
        for (int o = 0; o < cout; ++o) yp[o] = b[o];
        for (int d = 0; d < K; ++d) {
            const int q = p + d - pad;
            if (q < 0 || q >= len) continue;
            const double* xq = x + static_cast<std::size_t>(q) * cin;
            const double* Wd = W + static_cast<std::size_t>(d) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const double xv = xq[ci];
                const double* wrow = Wd + static_cast<std::size_t>(ci) * cout;
                for (int o = 0; o < cout; ++o) yp[o] += xv * wrow[o];
            }
        }
    }
}

void conv1d_grad_input(const double* dy, const double* W, double* dx, int len, int cin,
                       int cout, int K) {
    const int pad = K / 2;
#pragma omp parallel for schedule(static)
    for (int q = 0; q < len; ++q) {
        double* dxq = dx + static_cast<std::size_t>(q) * cin;
        for (int ci = 0; ci < cin; ++ci) dxq[ci] = 0.0;
        for (int d = 0; d < K; ++d) {
            const int p = q - d + pad;
            if (p < 0 || p >= len) continue;
            const double* dyp = dy + static_cast<std::size_t>(p) * cout;
            const double* Wd = W + static_cast<std::size_t>(d) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const double* wrow = Wd + static_cast<std::size_t>(ci) * cout;
                double acc = 0.0;
                for (int o = 0; o < cout; ++o) acc += wrow[o] * dyp[o];
                dxq[ci] += acc;
            }
        }
    }
}

void conv1d_grad_params(const double* x, const double* dy, double* dW, double* db, int len,
                        int cin, int cout, int K) {
    const int pad = K / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int d = 0; d < K; ++d) {
        for (int ci = 0; ci < cin; ++ci) {
            double* wrow = dW + (static_cast<std::size_t>(d) * cin + ci) * cout;
            for (int p = 0; p < len; ++p) {
                const int q = p + d - pad;
                if (q < 0 || q >= len) continue;
                const double xv = x[static_cast<std::size_t>(q) * cin + ci];
                const double* dyp = dy + static_cast<std::size_t>(p) * cout;
                for (int o = 0; o < cout; ++o) wrow[o] += xv * dyp[o];
            }
        }
    }
    for (int p = 0; p < len; ++p) {
        const double* dyp = dy + static_cast<std::size_t>(p) * cout;
        for (int o = 0; o < cout; ++o) db[o] += dyp[o];
    }
}

void avgpool2(const double* x, double* y, int len, int chan) {
    const int olen = (len + 1) / 2;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < olen; ++p) {
        const int a = 2 * p, b2 = 2 * p + 1;
        double* yp = y + static_cast<std::size_t>(p) * chan;
        const double* xa = x + static_cast<std::size_t>(a) * chan;
        if (b2 < len) {
            const double* xb = x + static_cast<std::size_t>(b2) * chan;
            for (int c = 0; c < chan; ++c) yp[c] = 0.5 * (xa[c] + xb[c]);
        } else {
            for (int c = 0; c < chan; ++c) yp[c] = xa[c];
        }
    }
}

void avgpool2_grad(const double* dy, double* dx, int len, int chan) {
    const int olen = (len + 1) / 2;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < olen; ++p) {
        const int a = 2 * p, b2 = 2 * p + 1;
        const double* dyp = dy + static_cast<std::size_t>(p) * chan;
        double* dxa = dx + static_cast<std::size_t>(a) * chan;
        if (b2 < len) {
            double* dxb = dx + static_cast<std::size_t>(b2) * chan;
            for (int c = 0; c < chan; ++c) {
                dxa[c] = 0.5 * dyp[c];
                dxb[c] = 0.5 * dyp[c];
            }
        } else {
            for (int c = 0; c < chan; ++c) dxa[c] = dyp[c];
        }
    }
}

void relu(const double* x, double* y, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad(const double* y, const double* dy, double* dx, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

void tanh_act(const double* x, double* y, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_grad(const double* y, const double* dy, double* dx, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void lstm_cell_forward(double* z, const double* c_prev, double* c, double* tanh_c, double* h,
                       int H) {
    double* zi = z;
    double* zf = z + H;
    double* zg = z + 2 * H;
    double* zo = z + 3 * H;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < H; ++j) {
        const double i = sigmoid(zi[j]);
        const double f = sigmoid(zf[j]);
        const double g = std::tanh(zg[j]);
        const double o = sigmoid(zo[j]);
        zi[j] = i;
        zf[j] = f;
        zg[j] = g;
        zo[j] = o;
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = std::tanh(c[j]);
        h[j] = o * tanh_c[j];
    }
}

void lstm_cell_backward(const double* z, const double* c_prev, const double* tanh_c,
                        const double* dh, double* dc, double* dz, int H) {
    const double* i = z;
    const double* f = z + H;
    const double* g = z + 2 * H;
    const double* o = z + 3 * H;
    double* dzi = dz;
    double* dzf = dz + H;
    double* dzg = dz + 2 * H;
    double* dzo = dz + 3 * H;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < H; ++j) {
        const double d_o = dh[j] * tanh_c[j];
        const double dcj = dc[j] + dh[j] * o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
        const double d_i = dcj * g[j];
        const double d_g = dcj * i[j];
        const double d_f = dcj * c_prev[j];
        dzi[j] = d_i * i[j] * (1.0 - i[j]);
        dzf[j] = d_f * f[j] * (1.0 - f[j]);
        dzg[j] = d_g * (1.0 - g[j] * g[j]);
        dzo[j] = d_o * o[j] * (1.0 - o[j]);
        dc[j] = dcj * f[j];
    }
}

void softmax(const double* x, double* y, int n) { ref::softmax(x, y, n); }

void sgd_momentum(double* p, const double* g, double* v, double lr, double momentum,
                  std::size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        p[i] += v[i];
    }
}

void add_inplace(double* dst, const double* src, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) dst[i] += src[i];
}

} // namespace omp

// ---------------------------------------------------------------------------
// Dispatchers.
// ---------------------------------------------------------------------------
#define SEER_DISPATCH(fn, ...) \
    (parallel_enabled() ? omp::fn(__VA_ARGS__) : ref::fn(__VA_ARGS__))

void affine(const double* Wt, const double* b, const double* x, double* y, int in, int out) {
    SEER_DISPATCH(affine, Wt, b, x, y, in, out);
}
void affine_grad_input(const double* Wt, const double* dy, double* dx, int in, int out) {
    SEER_DISPATCH(affine_grad_input, Wt, dy, dx, in, out);
}
void affine_grad_params(const double* x, const double* dy, double* dWt, double* db, int in,
                        int out) {
    SEER_DISPATCH(affine_grad_params, x, dy, dWt, db, in, out);
}
void conv1d(const double* x, const double* W, const double* b, double* y, int len, int cin,
            int cout, int K) {
    SEER_DISPATCH(conv1d, x, W, b, y, len, cin, cout, K);
}
void conv1d_grad_input(const double* dy, const double* W, double* dx, int len, int cin,
                       int cout, int K) {
    SEER_DISPATCH(conv1d_grad_input, dy, W, dx, len, cin, cout, K);
}
void conv1d_grad_params(const double* x, const double* dy, double* dW, double* db, int len,
                        int cin, int cout, int K) {
    SEER_DISPATCH(conv1d_grad_params, x, dy, dW, db, len, cin, cout, K);
}
void avgpool2(const double* x, double* y, int len, int chan) {
    SEER_DISPATCH(avgpool2, x, y, len, chan);
}
void avgpool2_grad(const double* dy, double* dx, int len, int chan) {
    SEER_DISPATCH(avgpool2_grad, dy, dx, len, chan);
}
void relu(const double* x, double* y, int n) { SEER_DISPATCH(relu, x, y, n); }
void relu_grad(const double* y, const double* dy, double* dx, int n) {
    SEER_DISPATCH(relu_grad, y, dy, dx, n);
}
void tanh_act(const double* x, double* y, int n) { SEER_DISPATCH(tanh_act, x, y, n); }
void tanh_grad(const double* y, const double* dy, double* dx, int n) {
    SEER_DISPATCH(tanh_grad, y, dy, dx, n);
}
void lstm_cell_forward(double* z, const double* c_prev, double* c, double* tanh_c, double* h,
                       int H) {
    SEER_DISPATCH(lstm_cell_forward, z, c_prev, c, tanh_c, h, H);
}
void lstm_cell_backward(const double* z, const double* c_prev, const double* tanh_c,
                        const double* dh, double* dc, double* dz, int H) {
    SEER_DISPATCH(lstm_cell_backward, z, c_prev, tanh_c, dh, dc, dz, H);
}
void softmax(const double* x, double* y, int n) { SEER_DISPATCH(softmax, x, y, n); }
void sgd_momentum(double* p, const double* g, double* v, double lr, double momentum,
                  std::size_t n) {
    SEER_DISPATCH(sgd_momentum, p, g, v, lr, momentum, n);
}
void add_inplace(double* dst, const double* src, std::size_t n) {
    SEER_DISPATCH(add_inplace, dst, src, n);
}

#undef SEER_DISPATCH

} // namespace seer::kernels
