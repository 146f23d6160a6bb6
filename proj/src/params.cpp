#include "rrl/params.hpp"

#include "rrl/errors.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rrl {

namespace {

constexpr char kMagic[8] = {'R', 'R', 'L', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

}  // namespace

std::size_t ParamSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  for (const Tensor& t : tensors_) {
    if (t.name == name) throw std::logic_error("duplicate parameter name: " + name);
  }
  tensors_.push_back(Tensor{name, ad::Mat::Zero(rows, cols), ad::Mat::Zero(rows, cols)});
  return tensors_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw ValidationError("unknown parameter: " + name);
}

ad::Var ParamSet::bind(ad::Tape& tape, std::size_t i, bool train) const {
  Tensor& t = const_cast<Tensor&>(tensors_[i]);
  return tape.param(t.value, train ? &t.grad : nullptr);
}

void ParamSet::zero_grad() {
  for (Tensor& t : tensors_) t.grad.setZero();
}

double ParamSet::grad_norm() const {
  double s = 0.0;
  for (const Tensor& t : tensors_) s += t.grad.squaredNorm();
  return std::sqrt(s);
}

void ParamSet::scale_grad(double factor) {
  for (Tensor& t : tensors_) t.grad *= factor;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool ParamSet::all_finite() const {
  for (const Tensor& t : tensors_) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

bool ParamSet::grads_finite() const {
  for (const Tensor& t : tensors_) {
    if (!t.grad.allFinite()) return false;
  }
  return true;
}

void ParamSet::round_to_float() {
  for (Tensor& t : tensors_) {
    t.value = t.value.cast<float>().cast<double>();
  }
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const Tensor& a = tensors_[i];
    const Tensor& b = other.tensors_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
    if (a.value != b.value) return false;
  }
  return true;
}

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const Tensor& t : params.tensors()) {
    m_.push_back(ad::Mat::Zero(t.value.rows(), t.value.cols()));
    v_.push_back(ad::Mat::Zero(t.value.rows(), t.value.cols()));
  }
}

void Adam::step(ParamSet& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    if (cfg_.weight_decay > 0.0) p.value *= (1.0 - lr * cfg_.weight_decay);
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  const double norm = params.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) params.scale_grad(max_norm / norm);
  return norm;
}

double warmup_lr(double base_lr, long step, long warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, const nlohmann::json& meta) {
  nlohmann::ordered_json header;
  header["format"] = "rrl-ckpt-v1";
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const Tensor& t : params.tensors()) {
    tensors.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
  }
  header["tensors"] = std::move(tensors);
  header["meta"] = nlohmann::ordered_json::parse(meta.dump());
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor& t : params.tensors()) {
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        const float f = static_cast<float>(t.value(r, c));
        out.write(reinterpret_cast<const char*>(&f), sizeof(f));
      }
    }
  }
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

ParamSet load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a checkpoint file: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 30)) throw ValidationError("corrupt checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError("truncated checkpoint header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "rrl-ckpt-v1") throw ValidationError("unsupported checkpoint format");

  ParamSet params;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    std::size_t i = params.add(t.at("name").get<std::string>(), rows, cols);
    ad::Mat& v = params[i].value;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        float f = 0.0f;
        in.read(reinterpret_cast<char*>(&f), sizeof(f));
        v(r, c) = f;
      }
    }
  }
  if (!in) throw ValidationError("truncated checkpoint payload: " + path.string());
  if (meta != nullptr) *meta = header.value("meta", nlohmann::json::object());
  return params;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &n, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (unsigned int i = 0; i < n; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace rrl
