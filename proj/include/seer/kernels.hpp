#pragma once

#include <cstddef>

// Dense kernels behind the predictor. Every kernel exists twice: a serial
// reference under kernels::ref and an OpenMP version under kernels::omp.
// Both accumulate each output element in the same fixed order, so results
// are bit-identical across the two variants and across thread counts.
//
// Layout conventions (row-major throughout):
//   fully-connected weights  Wt[in][out]   (transposed: output index contiguous)
//   conv activations         a[pos][chan]  (position-major)
//   conv weights             W[k][cin][cout]
//   LSTM gate order          [i | f | g | o], each H wide

namespace seer::kernels {

bool parallel_enabled();
void set_parallel(bool on);

namespace ref {

// y[o] = b[o] + sum_k x[k] * Wt[k*out + o]
void affine(const double* Wt, const double* b, const double* x, double* y, int in, int out);
// dx[k] = sum_o Wt[k*out + o] * dy[o]
void affine_grad_input(const double* Wt, const double* dy, double* dx, int in, int out);
// dWt[k*out + o] += x[k] * dy[o];  db[o] += dy[o]
void affine_grad_params(const double* x, const double* dy, double* dWt, double* db, int in,
                        int out);

// Same-padded 1-D convolution, kernel width K, over a (len, cin) buffer.
void conv1d(const double* x, const double* W, const double* b, double* y, int len, int cin,
            int cout, int K);
void conv1d_grad_input(const double* dy, const double* W, double* dx, int len, int cin,
                       int cout, int K);
void conv1d_grad_params(const double* x, const double* dy, double* dW, double* db, int len,
                        int cin, int cout, int K);

// Average pooling by 2 along the position axis; odd tails pass through.
void avgpool2(const double* x, double* y, int len, int chan);
void avgpool2_grad(const double* dy, double* dx, int len, int chan);

void relu(const double* x, double* y, int n);
void relu_grad(const double* y, const double* dy, double* dx, int n);
void tanh_act(const double* x, double* y, int n);
void tanh_grad(const double* y, const double* dy, double* dx, int n);

// In: gate pre-activations z[4H] and c_prev[H]. Out: activated gates in z,
// new cell state c, tanh(c), and h.
void lstm_cell_forward(double* z, const double* c_prev, double* c, double* tanh_c, double* h,
                       int H);
// In: activated gates z[4H], c_prev, tanh_c, dh, dc (carried). Out: gate
// pre-activation grads dz[4H] and dc_prev (overwrites dc).
void lstm_cell_backward(const double* z, const double* c_prev, const double* tanh_c,
                        const double* dh, double* dc, double* dz, int H);

// Numerically stable softmax (serial in both variants; the class count is small).
void softmax(const double* x, double* y, int n);

// v = momentum*v - lr*g;  p += v
void sgd_momentum(double* p, const double* g, double* v, double lr, double momentum,
                  std::size_t n);

// dst[i] += src[i]
void add_inplace(double* dst, const double* src, std::size_t n);

} // namespace ref

namespace omp {
void affine(const double* Wt, const double* b, const double* x, double* y, int in, int out);
void affine_grad_input(const double* Wt, const double* dy, double* dx, int in, int out);
void affine_grad_params(const double* x, const double* dy, double* dWt, double* db, int in,
                        int out);
void conv1d(const double* x, const double* W, const double* b, double* y, int len, int cin,
            int cout, int K);
void conv1d_grad_input(const double* dy, const double* W, double* dx, int len, int cin,
                       int cout, int K);
void conv1d_grad_params(const double* x, const double* dy, double* dW, double* db, int len,
                        int cin, int cout, int K);
void avgpool2(const double* x, double* y, int len, int chan);
void avgpool2_grad(const double* dy, double* dx, int len, int chan);
void relu(const double* x, double* y, int n);
void relu_grad(const double* y, const double* dy, double* dx, int n);
void tanh_act(const double* x, double* y, int n);
void tanh_grad(const double* y, const double* dy, double* dx, int n);
void lstm_cell_forward(double* z, const double* c_prev, double* c, double* tanh_c, double* h,
                       int H);
void lstm_cell_backward(const double* z, const double* c_prev, const double* tanh_c,
                        const double* dh, double* dc, double* dz, int H);
void softmax(const double* x, double* y, int n);
void sgd_momentum(double* p, const double* g, double* v, double lr, double momentum,
                  std::size_t n);
void add_inplace(double* dst, const double* src, std::size_t n);
} // namespace omp

// Dispatchers honoring set_parallel().
void affine(const double* Wt, const double* b, const double* x, double* y, int in, int out);
void affine_grad_input(const double* Wt, const double* dy, double* dx, int in, int out);
void affine_grad_params(const double* x, const double* dy, double* dWt, double* db, int in,
                        int out);
void conv1d(const double* x, const double* W, const double* b, double* y, int len, int cin,
            int cout, int K);
void conv1d_grad_input(const double* dy, const double* W, double* dx, int len, int cin,
                       int cout, int K);
void conv1d_grad_params(const double* x, const double* dy, double* dW, double* db, int len,
                        int cin, int cout, int K);
void avgpool2(const double* x, double* y, int len, int chan);
void avgpool2_grad(const double* dy, double* dx, int len, int chan);
void relu(const double* x, double* y, int n);
void relu_grad(const double* y, const double* dy, double* dx, int n);
void tanh_act(const double* x, double* y, int n);
void tanh_grad(const double* y, const double* dy, double* dx, int n);
void lstm_cell_forward(double* z, const double* c_prev, double* c, double* tanh_c, double* h,
                       int H);
void lstm_cell_backward(const double* z, const double* c_prev, const double* tanh_c,
                        const double* dh, double* dc, double* dz, int H);
void softmax(const double* x, double* y, int n);
void sgd_momentum(double* p, const double* g, double* v, double lr, double momentum,
                  std::size_t n);
void add_inplace(double* dst, const double* src, std::size_t n);

} // namespace seer::kernels
