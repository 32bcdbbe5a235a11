#include "ugr/segnet.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "ugr/io.hpp"
#include "ugr/rng.hpp"

namespace ugr {

using nlohmann::json;

SliceBatch SliceBatch::from_volume(const Volume& v, int64_t slice_k) {
  if (slice_k < 0 || slice_k >= v.depth)
    throw Error(ErrorCode::invalid_argument, "slice index out of range");
  SliceBatch b;
  const float* src = v.intensities.data() + slice_k * v.height * v.width;
  b.intensities = Tensor::from_data({1, 1, v.height, v.width},
                                    std::vector<float>(src, src + v.height * v.width));
  if (v.has_labels()) {
    std::vector<float> lab(static_cast<size_t>(v.height * v.width));
    const uint8_t* ls = v.labels.data() + slice_k * v.height * v.width;
    for (size_t i = 0; i < lab.size(); ++i) lab[i] = static_cast<float>(ls[i]);
    b.labels = Tensor::from_data({v.height, v.width}, std::move(lab));
  }
  return b;
}

SegNet::Conv SegNet::make_conv(int64_t out_c, int64_t in_c, int64_t k, Rng& rng) {
  // He initialization
  const float stddev = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
  std::vector<float> w(static_cast<size_t>(out_c * in_c * k * k));
  for (float& v : w) v = stddev * rng.normal_f();
  Conv c;
  c.w = Tensor::from_data({out_c, in_c, k, k}, std::move(w), true);
  c.b = Tensor::zeros({out_c}, true);
  return c;
}

SegNet::SegNet(const SegNetConfig& cfg, uint64_t seed) : cfg_(cfg), init_seed_(seed) {
  if (cfg.levels < 1) throw Error(ErrorCode::invalid_argument, "segnet: levels must be >= 1");
  if (!(cfg.dropout_p > 0.0f && cfg.dropout_p < 1.0f))
    throw Error(ErrorCode::invalid_argument, "segnet: dropout_p must be in (0,1) for MCDO");
  Rng rng(key_combine(seed, 0x5e97e7u));
  const int64_t base = cfg.base_channels;
  int64_t in_c = cfg.in_channels;
  for (int l = 0; l < cfg.levels; ++l) {
    const int64_t w = base << l;
    enc_a_.push_back(make_conv(w, in_c, 3, rng));
    enc_b_.push_back(make_conv(w, w, 3, rng));
    in_c = w;
  }
  const int64_t bw = base << cfg.levels;
  bott_a_ = make_conv(bw, in_c, 3, rng);
  bott_b_ = make_conv(bw, bw, 3, rng);
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const int64_t w = base << l;
    up_.push_back(make_conv(w, w * 2, 1, rng));
    dec_a_.push_back(make_conv(w, w * 2, 3, rng));
    dec_b_.push_back(make_conv(w, w, 3, rng));
  }
  head_ = make_conv(cfg.classes, base, 1, rng);
}

Tensor SegNet::forward(const Tensor& slice, bool stochastic, uint64_t seed) const {
  if (slice.ndim() != 4 || slice.dim(0) != 1 || slice.dim(1) != cfg_.in_channels)
    throw Error(ErrorCode::shape_mismatch, "segnet forward: expected [1," +
                                               std::to_string(cfg_.in_channels) + ",H,W], got " +
                                               shape_str(slice.shape()));
  const int64_t H = slice.dim(2), W = slice.dim(3);
  const int64_t div = int64_t{1} << cfg_.levels;
  if (H % div != 0 || W % div != 0)
    throw Error(ErrorCode::invalid_argument, "segnet forward: slice dims " + shape_str(slice.shape()) +
                                                 " not divisible by " + std::to_string(div));

  uint64_t stream = 0;  // one dropout stream per block, in forward order
  Tensor h = slice;
  std::vector<Tensor> skips;
  for (int l = 0; l < cfg_.levels; ++l) {
    h = relu(conv2d(h, enc_a_[l].w, enc_a_[l].b, 1));
    h = relu(conv2d(h, enc_b_[l].w, enc_b_[l].b, 1));
    h = dropout(h, cfg_.dropout_p, stochastic, seed, stream++);
    skips.push_back(h);
    h = maxpool2(h);
  }
  h = relu(conv2d(h, bott_a_.w, bott_a_.b, 1));
  h = relu(conv2d(h, bott_b_.w, bott_b_.b, 1));
  h = dropout(h, cfg_.dropout_p, stochastic, seed, stream++);
  for (int d = 0; d < cfg_.levels; ++d) {
    const int l = cfg_.levels - 1 - d;
    h = upsample_nearest2(h);
    h = relu(conv2d(h, up_[d].w, up_[d].b, 0));
    h = concat_channels(h, skips[static_cast<size_t>(l)]);
    h = relu(conv2d(h, dec_a_[d].w, dec_a_[d].b, 1));
    h = relu(conv2d(h, dec_b_[d].w, dec_b_[d].b, 1));
    h = dropout(h, cfg_.dropout_p, stochastic, seed, stream++);
  }
  Tensor logits = conv2d(h, head_.w, head_.b, 0);
  return softmax_channel(logits);
}

std::vector<Tensor> SegNet::parameters() const {
  std::vector<Tensor> out;
  auto push = [&](const Conv& c) {
    out.push_back(c.w);
    out.push_back(c.b);
  };
  for (size_t l = 0; l < enc_a_.size(); ++l) {
    push(enc_a_[l]);
    push(enc_b_[l]);
  }
  push(bott_a_);
  push(bott_b_);
  for (size_t d = 0; d < up_.size(); ++d) {
    push(up_[d]);
    push(dec_a_[d]);
    push(dec_b_[d]);
  }
  push(head_);
  return out;
}

int64_t SegNet::param_count() const {
  int64_t n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

void SegNet::copy_params_from(const SegNet& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size())
    throw Error(ErrorCode::shape_mismatch, "segnet copy: architecture mismatch");
  for (size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape())
      throw Error(ErrorCode::shape_mismatch, "segnet copy: parameter shape mismatch");
    std::memcpy(dst[i].data(), src[i].data(), sizeof(float) * dst[i].numel());
  }
}

void SegNet::load_params(const std::vector<float>& payload) {
  auto params = parameters();
  int64_t total = 0;
  for (const Tensor& t : params) total += t.numel();
  if (static_cast<int64_t>(payload.size()) != total)
    throw Error(ErrorCode::shape_mismatch, "segnet payload: expected " + std::to_string(total) +
                                               " floats, got " + std::to_string(payload.size()));
  size_t off = 0;
  for (Tensor& t : params) {
    std::memcpy(t.data(), payload.data() + off, sizeof(float) * t.numel());
    off += static_cast<size_t>(t.numel());
  }
}

Tensor dice_loss(const Tensor& pred_probs, const Tensor& target) {
  if (pred_probs.ndim() != 4 || pred_probs.dim(0) != 1 || pred_probs.dim(1) < 2)
    throw Error(ErrorCode::shape_mismatch, "dice_loss: pred must be [1,M,H,W] with M >= 2");
  const int64_t H = pred_probs.dim(2), W = pred_probs.dim(3);
  if (target.numel() != H * W)
    throw Error(ErrorCode::shape_mismatch, "dice_loss: target " + shape_str(target.shape()) +
                                               " does not match prediction " + shape_str(pred_probs.shape()));
  constexpr float kEps = 1e-6f;
  const float* p = pred_probs.data() + H * W;  // foreground channel
  const float* g = target.data();
  double spg = 0.0, sp = 0.0, sg = 0.0;
  for (int64_t i = 0; i < H * W; ++i) {
    spg += static_cast<double>(p[i]) * static_cast<double>(g[i]);
    sp += p[i];
    sg += g[i];
  }
  const double num = 2.0 * spg + kEps;
  const double den = sp + sg + kEps;
  Tensor out = Tensor::scalar(static_cast<float>(1.0 - num / den));

  if (Tape* tape = Tape::active(); tape && pred_probs.requires_grad()) {
    Tensor pt = pred_probs, gt = target;
    out.set_requires_grad(true);
    tape->register_participant(pred_probs);
    tape->register_participant(out);
    const float fnum = static_cast<float>(num), fden = static_cast<float>(den);
    tape->record([pt, gt, out, H, W, fnum, fden]() mutable {
      const float go = out.grad()[0];
      float* gp = pt.grad().data() + H * W;
      const float* gv = gt.data();
      const float inv_den2 = 1.0f / (fden * fden);
      for (int64_t i = 0; i < H * W; ++i)
        gp[i] += go * (-(2.0f * gv[i] * fden - fnum) * inv_den2);
    });
  }
  return out;
}

SegNetTrainer::SegNetTrainer(SegNet& net, uint64_t seed)
    : net_(net), adam_(net.parameters()), seed_(seed) {}

float SegNetTrainer::train_step(const SliceBatch& batch, float lr) {
  if (!batch.labels.defined())
    throw Error(ErrorCode::invalid_argument, "train_step: batch has no labels");
  Tape tape;
  float loss_value = 0.0f;
  {
    TapeScope scope(tape);
    Tensor probs = net_.forward(batch.intensities, true, key_combine(seed_, static_cast<uint64_t>(step_)));
    Tensor loss = dice_loss(probs, batch.labels);
    loss_value = loss.item();
    tape.backward(loss);
  }
  adam_.step(lr);
  ++step_;
  return loss_value;
}

BinaryVolume segment_volume(const SegNet& net, const Volume& vol) {
  BinaryVolume mask = BinaryVolume::zeros(vol.depth, vol.height, vol.width);
  for (int64_t k = 0; k < vol.depth; ++k) {
    SliceBatch b = SliceBatch::from_volume(vol, k);
    Tensor probs = net.forward(b.intensities, false, 0);
    const int64_t plane = vol.height * vol.width;
    const float* fg = probs.data() + plane;  // channel 1
    uint8_t* out = mask.values.data() + k * plane;
    for (int64_t i = 0; i < plane; ++i) out[i] = fg[i] > 0.5f ? 1 : 0;
  }
  return mask;
}

std::string segnet_header_json(const SegNet& net, uint64_t seed, int64_t epoch) {
  json j;
  j["kind"] = "segnet";
  j["config"] = {{"levels", net.config().levels},
                 {"base_channels", net.config().base_channels},
                 {"dropout_p", net.config().dropout_p},
                 {"classes", net.config().classes},
                 {"in_channels", net.config().in_channels}};
  j["seed"] = seed;
  j["epoch"] = epoch;
  j["param_count"] = net.param_count();
  return j.dump();
}

void save_segnet(const std::filesystem::path& p, const SegNet& net, uint64_t seed, int64_t epoch) {
  save_checkpoint(p, segnet_header_json(net, seed, epoch), net.parameters());
}

SegNet load_segnet(const std::filesystem::path& p) {
  Checkpoint ck = load_checkpoint(p);
  json j;
  try {
    j = json::parse(ck.header_json);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "segnet header: " + std::string(e.what()), static_cast<int64_t>(e.byte));
  }
  if (j.value("kind", "") != "segnet")
    throw Error(ErrorCode::parse_error, "checkpoint is not a segnet: kind=" + j.value("kind", "?"));
  SegNetConfig cfg;
  const auto& c = j.at("config");
  cfg.levels = c.at("levels").get<int>();
  cfg.base_channels = c.at("base_channels").get<int>();
  cfg.dropout_p = c.at("dropout_p").get<float>();
  cfg.classes = c.at("classes").get<int>();
  cfg.in_channels = c.at("in_channels").get<int>();
  SegNet net(cfg, j.value("seed", uint64_t{0}));
  net.load_params(ck.payload);
  return net;
}

}  // namespace ugr
