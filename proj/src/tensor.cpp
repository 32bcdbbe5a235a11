#include "ugr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ugr/rng.hpp"

namespace ugr {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// ---- Tensor ----------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  for (int64_t d : shape)
    if (d <= 0) throw Error(ErrorCode::invalid_argument, "tensor dims must be positive, got " + shape_str(shape));
  Tensor t;
  t.n_ = std::make_shared<Node>();
  t.n_->shape = shape;
  t.n_->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  t.n_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(const Shape& shape, float v, bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  std::fill(t.n_->value.begin(), t.n_->value.end(), v);
  return t;
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw Error(ErrorCode::shape_mismatch,
                "data size " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  Tensor t;
  t.n_ = std::make_shared<Node>();
  t.n_->shape = shape;
  t.n_->value = std::move(data);
  t.n_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(float v, bool requires_grad) { return from_data({1}, {v}, requires_grad); }

Tensor Tensor::zeros_like(const Tensor& t, bool requires_grad) { return zeros(t.shape(), requires_grad); }

std::span<float> Tensor::grad() {
  if (n_->grad.empty()) n_->grad.assign(n_->value.size(), 0.0f);
  return n_->grad;
}

std::span<const float> Tensor::grad() const {
  const_cast<Tensor*>(this)->grad();
  return n_->grad;
}

void Tensor::zero_grad() {
  if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0f);
}

float Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::shape_mismatch, "item() requires a scalar, got " + shape_str(shape()));
  return n_->value[0];
}

// ---- Tape ------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

TapePause::TapePause() : prev_(g_active_tape) { g_active_tape = nullptr; }
TapePause::~TapePause() { g_active_tape = prev_; }

void Tape::record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

void Tape::register_participant(const Tensor& t) {
  if (!t.requires_grad()) return;
  if (std::find(participant_ids_.begin(), participant_ids_.end(), t.id()) != participant_ids_.end()) return;
  participant_ids_.push_back(t.id());
  participants_.push_back(t);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw Error(ErrorCode::shape_mismatch, "backward requires a scalar loss");
  if (ops_.empty()) throw Error(ErrorCode::invalid_state, "backward on an empty tape");
  if (!loss.requires_grad())
    throw Error(ErrorCode::invalid_state, "loss does not depend on any recorded op");
  for (Tensor& t : participants_) {
    t.grad();  // ensure allocated
    t.zero_grad();
  }
  Tensor seed = loss;
  seed.grad()[0] = 1.0f;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void Tape::clear() {
  ops_.clear();
  participants_.clear();
  participant_ids_.clear();
}

// ---- op helpers --------------------------------------------------------

namespace {

bool taping(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void finish_record(Tensor& out, std::initializer_list<const Tensor*> inputs, std::function<void()> fn) {
  Tape* tape = Tape::active();
  out.set_requires_grad(true);
  for (const Tensor* t : inputs) tape->register_participant(*t);
  tape->register_participant(out);
  tape->record(std::move(fn));
}

void check_4d(const Tensor& t, const char* name) {
  if (t.ndim() != 4)
    throw Error(ErrorCode::shape_mismatch, std::string(name) + " must be 4-D, got " + shape_str(t.shape()));
}

}  // namespace

// ---- conv2d ------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int padding) {
  check_4d(input, "conv2d input");
  check_4d(kernel, "conv2d kernel");
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t F = kernel.dim(0), KC = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (C != KC)
    throw Error(ErrorCode::shape_mismatch, "conv2d: input has " + std::to_string(C) + " channels, kernel expects " +
                                               std::to_string(KC));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw Error(ErrorCode::invalid_argument, "conv2d: kernel dims must be odd, got " + shape_str(kernel.shape()));
  if (padding < 0) throw Error(ErrorCode::invalid_argument, "conv2d: padding must be >= 0");
  if (bias.ndim() != 1 || bias.dim(0) != F)
    throw Error(ErrorCode::shape_mismatch, "conv2d: bias must be [" + std::to_string(F) + "]");
  const int64_t OH = H + 2 * padding - kh + 1;
  const int64_t OW = W + 2 * padding - kw + 1;
  if (OH < 1 || OW < 1)
    throw Error(ErrorCode::invalid_argument, "conv2d: output would be empty for input " + shape_str(input.shape()));

  Tensor out = Tensor::zeros({N, F, OH, OW});
  const float* in = input.data();
  const float* k = kernel.data();
  const float* b = bias.data();
  float* o = out.data();
  const int64_t p = padding;

  for (int64_t n = 0; n < N; ++n) {
#pragma omp parallel for schedule(static)
    for (int64_t f = 0; f < F; ++f) {
      float* oplane = o + ((n * F) + f) * OH * OW;
      std::fill(oplane, oplane + OH * OW, b[f]);
      for (int64_t c = 0; c < C; ++c) {
        const float* iplane = in + ((n * C) + c) * H * W;
        const float* kplane = k + (f * C + c) * kh * kw;
        for (int64_t ky = 0; ky < kh; ++ky) {
          for (int64_t kx = 0; kx < kw; ++kx) {
            const float wv = kplane[ky * kw + kx];
            if (wv == 0.0f) continue;
            const int64_t x0 = std::max<int64_t>(0, p - kx);
            const int64_t x1 = std::min<int64_t>(OW, W + p - kx);
            if (x0 >= x1) continue;
            for (int64_t y = 0; y < OH; ++y) {
              const int64_t yi = y + ky - p;
              if (yi < 0 || yi >= H) continue;
              const float* irow = iplane + yi * W + (x0 + kx - p);
              float* orow = oplane + y * OW + x0;
              const int64_t len = x1 - x0;
              for (int64_t x = 0; x < len; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }

  if (taping({&input, &kernel, &bias})) {
    Tensor in_t = input, k_t = kernel, b_t = bias;
    finish_record(out, {&input, &kernel, &bias}, [in_t, k_t, b_t, out, N, C, H, W, F, kh, kw, OH, OW, p]() mutable {
      const float* go = out.grad().data();
      // d/d input
      if (in_t.requires_grad()) {
        float* gi = in_t.grad().data();
        const float* k = k_t.data();
        for (int64_t n = 0; n < N; ++n) {
#pragma omp parallel for schedule(static)
          for (int64_t c = 0; c < C; ++c) {
            float* giplane = gi + ((n * C) + c) * H * W;
            for (int64_t f = 0; f < F; ++f) {
              const float* goplane = go + ((n * F) + f) * OH * OW;
              const float* kplane = k + (f * C + c) * kh * kw;
              for (int64_t ky = 0; ky < kh; ++ky) {
                for (int64_t kx = 0; kx < kw; ++kx) {
                  const float wv = kplane[ky * kw + kx];
                  if (wv == 0.0f) continue;
                  const int64_t x0 = std::max<int64_t>(0, p - kx);
                  const int64_t x1 = std::min<int64_t>(OW, W + p - kx);
                  if (x0 >= x1) continue;
                  for (int64_t y = 0; y < OH; ++y) {
                    const int64_t yi = y + ky - p;
                    if (yi < 0 || yi >= H) continue;
                    float* girow = giplane + yi * W + (x0 + kx - p);
                    const float* gorow = goplane + y * OW + x0;
                    const int64_t len = x1 - x0;
                    for (int64_t x = 0; x < len; ++x) girow[x] += wv * gorow[x];
                  }
                }
              }
            }
          }
        }
      }
      // d/d kernel and d/d bias
      if (k_t.requires_grad() || b_t.requires_grad()) {
        float* gk = k_t.requires_grad() ? k_t.grad().data() : nullptr;
        float* gb = b_t.requires_grad() ? b_t.grad().data() : nullptr;
        const float* in = in_t.data();
#pragma omp parallel for schedule(static)
        for (int64_t f = 0; f < F; ++f) {
          for (int64_t n = 0; n < N; ++n) {
            const float* goplane = go + ((n * F) + f) * OH * OW;
            if (gb) {
              float acc = 0.0f;
              for (int64_t i = 0; i < OH * OW; ++i) acc += goplane[i];
              gb[f] += acc;
            }
            if (!gk) continue;
            for (int64_t c = 0; c < C; ++c) {
              const float* iplane = in + ((n * C) + c) * H * W;
              float* gkplane = gk + (f * C + c) * kh * kw;
              for (int64_t ky = 0; ky < kh; ++ky) {
                for (int64_t kx = 0; kx < kw; ++kx) {
                  const int64_t x0 = std::max<int64_t>(0, p - kx);
                  const int64_t x1 = std::min<int64_t>(OW, W + p - kx);
                  if (x0 >= x1) continue;
                  float acc = 0.0f;
                  for (int64_t y = 0; y < OH; ++y) {
                    const int64_t yi = y + ky - p;
                    if (yi < 0 || yi >= H) continue;
                    const float* irow = iplane + yi * W + (x0 + kx - p);
                    const float* gorow = goplane + y * OW + x0;
                    const int64_t len = x1 - x0;
                    for (int64_t x = 0; x < len; ++x) acc += irow[x] * gorow[x];
                  }
                  gkplane[ky * kw + kx] += acc;
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---- pointwise ---------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros_like(x);
  const float* xv = x.data();
  float* ov = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, n]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      const float* xv = xt.data();
      for (int64_t i = 0; i < n; ++i)
        if (xv[i] > 0.0f) gx[i] += go[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros_like(x);
  const float* xv = x.data();
  float* ov = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = 1.0f / (1.0f + std::exp(-xv[i]));
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, n]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      const float* ov = out.data();
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * ov[i] * (1.0f - ov[i]);
    });
  }
  return out;
}

Tensor softmax_channel(const Tensor& x) {
  if (x.ndim() < 2)
    throw Error(ErrorCode::shape_mismatch, "softmax_channel needs >= 2 dims, got " + shape_str(x.shape()));
  const int64_t N = x.dim(0), M = x.dim(1);
  int64_t S = 1;
  for (size_t i = 2; i < x.ndim(); ++i) S *= x.dim(i);

  Tensor out = Tensor::zeros_like(x);
  const float* xv = x.data();
  float* ov = out.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t s = 0; s < S; ++s) {
      const int64_t base = n * M * S + s;
      float mx = xv[base];
      for (int64_t c = 1; c < M; ++c) mx = std::max(mx, xv[base + c * S]);
      float z = 0.0f;
      for (int64_t c = 0; c < M; ++c) {
        const float e = std::exp(xv[base + c * S] - mx);
        ov[base + c * S] = e;
        z += e;
      }
      const float inv = 1.0f / z;
      for (int64_t c = 0; c < M; ++c) ov[base + c * S] *= inv;
    }
  }
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, N, M, S]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      const float* ov = out.data();
      for (int64_t n = 0; n < N; ++n) {
        for (int64_t s = 0; s < S; ++s) {
          const int64_t base = n * M * S + s;
          float dot = 0.0f;
          for (int64_t c = 0; c < M; ++c) dot += go[base + c * S] * ov[base + c * S];
          for (int64_t c = 0; c < M; ++c) {
            const int64_t i = base + c * S;
            gx[i] += ov[i] * (go[i] - dot);
          }
        }
      }
    });
  }
  return out;
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* opname) {
  if (a.shape() != b.shape())
    throw Error(ErrorCode::shape_mismatch,
                std::string(opname) + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros_like(a);
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  if (taping({&a, &b})) {
    Tensor at = a, bt = b;
    finish_record(out, {&a, &b}, [at, bt, out, n]() mutable {
      const float* go = out.grad().data();
      if (at.requires_grad()) {
        float* ga = at.grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
      }
      if (bt.requires_grad()) {
        float* gb = bt.grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros_like(a);
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  if (taping({&a, &b})) {
    Tensor at = a, bt = b;
    finish_record(out, {&a, &b}, [at, bt, out, n]() mutable {
      const float* go = out.grad().data();
      if (at.requires_grad()) {
        float* ga = at.grad().data();
        const float* bv = bt.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
      }
      if (bt.requires_grad()) {
        float* gb = bt.grad().data();
        const float* av = at.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += go[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, float c) {
  Tensor out = Tensor::zeros_like(x);
  const float* xv = x.data();
  float* ov = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = xv[i] * c;
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, n, c]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * c;
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, float p, bool train_mode, uint64_t seed, uint64_t stream) {
  if (!(p >= 0.0f && p < 1.0f))
    throw Error(ErrorCode::invalid_argument, "dropout: p must be in [0,1), got " + std::to_string(p));
  if (!train_mode || p == 0.0f) return x;  // identity in eval mode

  Tensor out = Tensor::zeros_like(x);
  const float* xv = x.data();
  float* ov = out.data();
  const int64_t n = x.numel();
  const float inv_keep = 1.0f / (1.0f - p);
  for (int64_t i = 0; i < n; ++i) {
    const bool keep = counter_uniform(seed, stream, static_cast<uint64_t>(i)) >= p;
    ov[i] = keep ? xv[i] * inv_keep : 0.0f;
  }
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, n, p, seed, stream, inv_keep]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      for (int64_t i = 0; i < n; ++i) {
        const bool keep = counter_uniform(seed, stream, static_cast<uint64_t>(i)) >= p;
        if (keep) gx[i] += go[i] * inv_keep;
      }
    });
  }
  return out;
}

Tensor maxpool2(const Tensor& x) {
  check_4d(x, "maxpool2 input");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw Error(ErrorCode::invalid_argument, "maxpool2: spatial dims must be even, got " + shape_str(x.shape()));
  const int64_t OH = H / 2, OW = W / 2;
  Tensor out = Tensor::zeros({N, C, OH, OW});
  std::vector<int32_t> argmax(static_cast<size_t>(N * C * OH * OW));
  const float* xv = x.data();
  float* ov = out.data();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const float* plane = xv + nc * H * W;
    float* oplane = ov + nc * OH * OW;
    int32_t* aplane = argmax.data() + nc * OH * OW;
    for (int64_t y = 0; y < OH; ++y) {
      for (int64_t x2 = 0; x2 < OW; ++x2) {
        const int64_t i00 = (2 * y) * W + 2 * x2;
        // ties resolve to the first index in scan order
        float best = plane[i00];
        int32_t bi = static_cast<int32_t>(i00);
        const int64_t cand[3] = {i00 + 1, i00 + W, i00 + W + 1};
        for (int64_t k = 0; k < 3; ++k)
          if (plane[cand[k]] > best) {
            best = plane[cand[k]];
            bi = static_cast<int32_t>(cand[k]);
          }
        oplane[y * OW + x2] = best;
        aplane[y * OW + x2] = bi;
      }
    }
  }
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, argmax = std::move(argmax), N, C, H, W, OH, OW]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      for (int64_t nc = 0; nc < N * C; ++nc) {
        float* gplane = gx + nc * H * W;
        const float* goplane = go + nc * OH * OW;
        const int32_t* aplane = argmax.data() + nc * OH * OW;
        for (int64_t i = 0; i < OH * OW; ++i) gplane[aplane[i]] += goplane[i];
      }
    });
  }
  return out;
}

Tensor upsample_nearest2(const Tensor& x) {
  check_4d(x, "upsample_nearest2 input");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = Tensor::zeros({N, C, 2 * H, 2 * W});
  const float* xv = x.data();
  float* ov = out.data();
  const int64_t OW = 2 * W;
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const float* plane = xv + nc * H * W;
    float* oplane = ov + nc * 4 * H * W;
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x2 = 0; x2 < W; ++x2) {
        const float v = plane[y * W + x2];
        float* o0 = oplane + (2 * y) * OW + 2 * x2;
        o0[0] = v;
        o0[1] = v;
        o0[OW] = v;
        o0[OW + 1] = v;
      }
    }
  }
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, N, C, H, W, OW]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      for (int64_t nc = 0; nc < N * C; ++nc) {
        float* gplane = gx + nc * H * W;
        const float* goplane = go + nc * 4 * H * W;
        for (int64_t y = 0; y < H; ++y) {
          for (int64_t x2 = 0; x2 < W; ++x2) {
            const float* g0 = goplane + (2 * y) * OW + 2 * x2;
            gplane[y * W + x2] += g0[0] + g0[1] + g0[OW] + g0[OW + 1];
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_4d(a, "concat_channels a");
  check_4d(b, "concat_channels b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw Error(ErrorCode::shape_mismatch,
                "concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  Tensor out = Tensor::zeros({N, Ca + Cb, H, W});
  const int64_t plane = H * W;
  for (int64_t n = 0; n < N; ++n) {
    std::memcpy(out.data() + n * (Ca + Cb) * plane, a.data() + n * Ca * plane, sizeof(float) * Ca * plane);
    std::memcpy(out.data() + (n * (Ca + Cb) + Ca) * plane, b.data() + n * Cb * plane, sizeof(float) * Cb * plane);
  }
  if (taping({&a, &b})) {
    Tensor at = a, bt = b;
    finish_record(out, {&a, &b}, [at, bt, out, N, Ca, Cb, plane]() mutable {
      const float* go = out.grad().data();
      for (int64_t n = 0; n < N; ++n) {
        if (at.requires_grad()) {
          float* ga = at.grad().data() + n * Ca * plane;
          const float* g0 = go + n * (Ca + Cb) * plane;
          for (int64_t i = 0; i < Ca * plane; ++i) ga[i] += g0[i];
        }
        if (bt.requires_grad()) {
          float* gb = bt.grad().data() + n * Cb * plane;
          const float* g1 = go + (n * (Ca + Cb) + Ca) * plane;
          for (int64_t i = 0; i < Cb * plane; ++i) gb[i] += g1[i];
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw Error(ErrorCode::shape_mismatch, "concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t Na = a.dim(0), Nb = b.dim(0), F = a.dim(1);
  Tensor out = Tensor::zeros({Na + Nb, F});
  std::memcpy(out.data(), a.data(), sizeof(float) * Na * F);
  std::memcpy(out.data() + Na * F, b.data(), sizeof(float) * Nb * F);
  if (taping({&a, &b})) {
    Tensor at = a, bt = b;
    finish_record(out, {&a, &b}, [at, bt, out, Na, Nb, F]() mutable {
      const float* go = out.grad().data();
      if (at.requires_grad()) {
        float* ga = at.grad().data();
        for (int64_t i = 0; i < Na * F; ++i) ga[i] += go[i];
      }
      if (bt.requires_grad()) {
        float* gb = bt.grad().data();
        for (int64_t i = 0; i < Nb * F; ++i) gb[i] += go[Na * F + i];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t count) {
  if (x.ndim() != 2)
    throw Error(ErrorCode::shape_mismatch, "slice_rows: expected [N,F], got " + shape_str(x.shape()));
  if (start < 0 || count < 1 || start + count > x.dim(0))
    throw Error(ErrorCode::invalid_argument, "slice_rows: range [" + std::to_string(start) + "," +
                                                 std::to_string(start + count) + ") out of bounds");
  const int64_t F = x.dim(1);
  Tensor out = Tensor::zeros({count, F});
  std::memcpy(out.data(), x.data() + start * F, sizeof(float) * count * F);
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, start, count, F]() mutable {
      float* gx = xt.grad().data() + start * F;
      const float* go = out.grad().data();
      for (int64_t i = 0; i < count * F; ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw Error(ErrorCode::shape_mismatch, "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t N = a.dim(0), K = a.dim(1), M = b.dim(0) == K ? b.dim(1) : 0;
  Tensor out = Tensor::zeros({N, M});
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    float* orow = ov + n * M;
    const float* arow = av + n * K;
    for (int64_t k = 0; k < K; ++k) {
      const float s = arow[k];
      if (s == 0.0f) continue;
      const float* brow = bv + k * M;
      for (int64_t m = 0; m < M; ++m) orow[m] += s * brow[m];
    }
  }
  if (taping({&a, &b})) {
    Tensor at = a, bt = b;
    finish_record(out, {&a, &b}, [at, bt, out, N, K, M]() mutable {
      const float* go = out.grad().data();
      if (at.requires_grad()) {
        float* ga = at.grad().data();
        const float* bv = bt.data();
#pragma omp parallel for schedule(static)
        for (int64_t n = 0; n < N; ++n) {
          const float* gorow = go + n * M;
          float* garow = ga + n * K;
          for (int64_t k = 0; k < K; ++k) {
            const float* brow = bv + k * M;
            float acc = 0.0f;
            for (int64_t m = 0; m < M; ++m) acc += gorow[m] * brow[m];
            garow[k] += acc;
          }
        }
      }
      if (bt.requires_grad()) {
        float* gb = bt.grad().data();
        const float* av = at.data();
#pragma omp parallel for schedule(static)
        for (int64_t k = 0; k < K; ++k) {
          float* gbrow = gb + k * M;
          for (int64_t n = 0; n < N; ++n) {
            const float s = av[n * K + k];
            if (s == 0.0f) continue;
            const float* gorow = go + n * M;
            for (int64_t m = 0; m < M; ++m) gbrow[m] += s * gorow[m];
          }
        }
      }
    });
  }
  return out;
}

Tensor add_rowbias(const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != x.dim(1))
    throw Error(ErrorCode::shape_mismatch,
                "add_rowbias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  const int64_t N = x.dim(0), M = x.dim(1);
  Tensor out = Tensor::zeros_like(x);
  const float* xv = x.data();
  const float* bv = bias.data();
  float* ov = out.data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t m = 0; m < M; ++m) ov[n * M + m] = xv[n * M + m] + bv[m];
  if (taping({&x, &bias})) {
    Tensor xt = x, bt = bias;
    finish_record(out, {&x, &bias}, [xt, bt, out, N, M]() mutable {
      const float* go = out.grad().data();
      if (xt.requires_grad()) {
        float* gx = xt.grad().data();
        for (int64_t i = 0; i < N * M; ++i) gx[i] += go[i];
      }
      if (bt.requires_grad()) {
        float* gb = bt.grad().data();
        for (int64_t n = 0; n < N; ++n)
          for (int64_t m = 0; m < M; ++m) gb[m] += go[n * M + m];
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_rowbias(matmul(x, w), b); }

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  const float* xv = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += xv[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (taping({&x})) {
    Tensor xt = x;
    finish_record(out, {&x}, [xt, out, n]() mutable {
      float* gx = xt.grad().data();
      const float g = out.grad()[0];
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const int64_t n = x.numel();
  Tensor s = sum(x);
  return scale(s, 1.0f / static_cast<float>(n));
}

}  // namespace ugr
