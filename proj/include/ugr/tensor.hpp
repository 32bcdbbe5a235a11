#ifndef UGR_TENSOR_HPP
#define UGR_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ugr/error.hpp"

namespace ugr {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense 32-bit float tensor with an optional gradient buffer.
/// Copying a Tensor copies the handle; the buffers are shared.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, float v, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float v, bool requires_grad = false);
  static Tensor zeros_like(const Tensor& t, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }
  int64_t dim(size_t i) const { return n_->shape[i]; }
  size_t ndim() const { return n_->shape.size(); }

  std::span<float> values() { return n_->value; }
  std::span<const float> values() const { return n_->value; }
  float* data() { return n_->value.data(); }
  const float* data() const { return n_->value.data(); }

  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  // Allocates the buffer on first use; same shape as the value buffer.
  std::span<float> grad();
  std::span<const float> grad() const;
  bool has_grad() const { return n_ && !n_->grad.empty(); }
  void zero_grad();

  float item() const;  // scalar tensors only

  // Identity of the underlying buffer (for participant dedup).
  const void* id() const { return n_.get(); }

 private:
  struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> n_;
};

/// Records one backward closure per forward op, replayed in reverse order.
/// Single-owner: a tape must not be shared across threads during backward.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Replays the tape in reverse. `loss` must be scalar; grads of every
  // participating tensor are zeroed first, then loss.grad is seeded with 1.
  void backward(const Tensor& loss);

  void record(std::function<void()> backward_fn);
  void register_participant(const Tensor& t);

  size_t op_count() const { return ops_.size(); }
  void clear();

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> ops_;
  std::vector<Tensor> participants_;
  std::vector<const void*> participant_ids_;
};

/// Makes a tape the active recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

/// Suspends recording for its lifetime (no-grad region).
class TapePause {
 public:
  TapePause();
  ~TapePause();
  TapePause(const TapePause&) = delete;
  TapePause& operator=(const TapePause&) = delete;

 private:
  Tape* prev_;
};

// ---- ops -------------------------------------------------------------
// All ops read the active tape; with no tape in scope they run forward only.

// input [N,C,H,W], kernel [F,C,kh,kw] (kh,kw odd), bias [F]; cross-correlation.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int padding);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Softmax over axis 1 of [N,M,...]; outputs sum to 1 along that axis.
Tensor softmax_channel(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);   // same shape
Tensor mul(const Tensor& a, const Tensor& b);   // same shape, elementwise
Tensor scale(const Tensor& x, float c);

// Zeroes each element with probability p and scales survivors by 1/(1-p).
// The mask is a pure function of (seed, stream, element index).
Tensor dropout(const Tensor& x, float p, bool train_mode, uint64_t seed, uint64_t stream);

Tensor maxpool2(const Tensor& x);           // [N,C,H,W], H and W even
Tensor upsample_nearest2(const Tensor& x);  // [N,C,H,W] -> [N,C,2H,2W]

Tensor concat_channels(const Tensor& a, const Tensor& b);  // along axis 1
Tensor concat_rows(const Tensor& a, const Tensor& b);      // [N1,F]+[N2,F]
Tensor slice_rows(const Tensor& x, int64_t start, int64_t count);  // [N,F] -> [count,F]

Tensor matmul(const Tensor& a, const Tensor& b);           // [N,K]x[K,M]
Tensor add_rowbias(const Tensor& x, const Tensor& bias);   // [N,M] + [M]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar

}  // namespace ugr

#endif
