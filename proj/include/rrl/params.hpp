#pragma once

// Named parameter tensors, the Adam optimizer and the checkpoint file format
// shared by the QA environment and the rewriter policy.

#include "rrl/ad.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rrl {

struct Tensor {
  std::string name;
  ad::Mat value;
  ad::Mat grad;
};

class ParamSet {
 public:
  // Registers a zero-initialized tensor and returns its index.
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  std::size_t index_of(const std::string& name) const;
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t size() const { return tensors_.size(); }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  // Places tensor `i` on the tape. With `train` the backward pass accumulates
  // into the tensor's grad buffer; otherwise it is a constant view.
  ad::Var bind(ad::Tape& tape, std::size_t i, bool train) const;

  void zero_grad();
  double grad_norm() const;
  void scale_grad(double factor);
  std::size_t count() const;
  bool all_finite() const;
  bool grads_finite() const;
  // Rounds every value to float32 precision (what a checkpoint stores).
  void round_to_float();
  // Exact equality of names, shapes and values.
  bool operator==(const ParamSet& other) const;

 private:
  std::vector<Tensor> tensors_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW-style) decay.
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig cfg);
  void step(ParamSet& params, double lr);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<ad::Mat> m_;
  std::vector<ad::Mat> v_;
  long t_ = 0;
};

// Scales gradients so their global L2 norm is at most `max_norm` (if > 0).
// Returns the norm before clipping.
double clip_grad_norm(ParamSet& params, double max_norm);

// Linear warmup then constant.
double warmup_lr(double base_lr, long step, long warmup_steps);

// Checkpoint file: 8-byte magic "RRLCKPT1", little-endian uint64 header
// length, JSON header {"format","tensors":[{"name","shape"}],"meta"},
// then the little-endian float32 payload of each tensor (row-major) in
// header order.
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, const nlohmann::json& meta);
ParamSet load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

// Hex SHA-256 digests used for manifests and vocab fingerprints.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace rrl
