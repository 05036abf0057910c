#include "igds/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "igds/error.hpp"

namespace igds::ckpt {
namespace {

constexpr char kMagic[8] = {'I', 'G', 'D', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kMaxLength = 1ull << 32;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(bytes));
}

template <typename T>
T get(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(bytes))) throw StructuralError("checkpoint: truncated file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > kMaxLength) throw StructuralError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw StructuralError("checkpoint: truncated file");
  return s;
}

template <typename Map, typename Fn>
void put_map(std::ostream& out, const Map& m, Fn put_value) {
  put<std::uint64_t>(out, m.size());
  for (const auto& [k, v] : m) {
    put_string(out, k);
    put_value(v);
  }
}

void put_mlp(Checkpoint& c, const std::string& prefix, const nn::Mlp& mlp) {
  c.ints[prefix + ".layers"] = static_cast<std::int64_t>(mlp.layers.size());
  c.ints[prefix + ".activation"] = mlp.activation == nn::Activation::Relu ? 0 : 1;
  c.reals[prefix + ".sharpness"] = mlp.sharpness;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    c.tensors[prefix + "." + std::to_string(l) + ".weight"] = mlp.layers[l].weight;
    c.tensors[prefix + "." + std::to_string(l) + ".bias"] = mlp.layers[l].bias;
  }
}

nn::Mlp get_mlp(const Checkpoint& c, const std::string& prefix) {
  nn::Mlp mlp;
  mlp.activation = c.integer(prefix + ".activation") == 0 ? nn::Activation::Relu : nn::Activation::Softplus;
  mlp.sharpness = c.real(prefix + ".sharpness");
  const auto layers = c.integer(prefix + ".layers");
  for (std::int64_t l = 0; l < layers; ++l) {
    mlp.layers.push_back({c.tensor(prefix + "." + std::to_string(l) + ".weight"),
                          c.tensor(prefix + "." + std::to_string(l) + ".bias")});
  }
  return mlp;
}

std::size_t as_size(std::int64_t v, const char* what) {
  if (v < 0) throw StructuralError(std::string("checkpoint: negative ") + what);
  return static_cast<std::size_t>(v);
}

void expect_kind(const Checkpoint& c, const std::string& kind) {
  if (c.kind != kind) throw StructuralError("checkpoint: expected kind '" + kind + "', found '" + c.kind + "'");
}

}  // namespace

const nd::Tensor& Checkpoint::tensor(const std::string& key) const {
  auto it = tensors.find(key);
  if (it == tensors.end()) throw StructuralError("checkpoint: missing tensor '" + key + "'");
  return it->second;
}

double Checkpoint::real(const std::string& key) const {
  auto it = reals.find(key);
  if (it == reals.end()) throw StructuralError("checkpoint: missing real '" + key + "'");
  return it->second;
}

std::int64_t Checkpoint::integer(const std::string& key) const {
  auto it = ints.find(key);
  if (it == ints.end()) throw StructuralError("checkpoint: missing integer '" + key + "'");
  return it->second;
}

const std::string& Checkpoint::string(const std::string& key) const {
  auto it = strings.find(key);
  if (it == strings.end()) throw StructuralError("checkpoint: missing string '" + key + "'");
  return it->second;
}

void write(std::ostream& out, const Checkpoint& c) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put_string(out, c.kind);
  put_map(out, c.tensors, [&](const nd::Tensor& t) {
    put<std::uint64_t>(out, t.rank());
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  });
  put_map(out, c.reals, [&](double v) { put<double>(out, v); });
  put_map(out, c.ints, [&](std::int64_t v) { put<std::int64_t>(out, v); });
  put_map(out, c.strings, [&](const std::string& v) { put_string(out, v); });
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw StructuralError("checkpoint: bad magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw StructuralError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.kind = get_string(in);
  for (auto n = get<std::uint64_t>(in); n > 0; --n) {
    std::string key = get_string(in);
    const auto rank = get<std::uint64_t>(in);
    if (rank > 8) throw StructuralError("checkpoint: implausible tensor rank");
    nd::Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    if (nd::shape_size(shape) > kMaxLength) throw StructuralError("checkpoint: implausible tensor size");
    nd::Tensor t(shape);
    for (double& v : t.data()) v = get<double>(in);
    c.tensors.emplace(std::move(key), std::move(t));
  }
  for (auto n = get<std::uint64_t>(in); n > 0; --n) {
    std::string key = get_string(in);
    c.reals[key] = get<double>(in);
  }
  for (auto n = get<std::uint64_t>(in); n > 0; --n) {
    std::string key = get_string(in);
    c.ints[key] = get<std::int64_t>(in);
  }
  for (auto n = get<std::uint64_t>(in); n > 0; --n) {
    std::string key = get_string(in);
    c.strings[key] = get_string(in);
  }
  return c;
}

void save(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write(out, c);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("checkpoint: cannot open " + path.string());
  return read(in);
}

Checkpoint from_ve(const ve::VeModel& m, const ve::ClassifierHead* head) {
  Checkpoint c;
  c.kind = "ve";
  const auto& cfg = m.config;
  c.ints["input_dim"] = static_cast<std::int64_t>(cfg.input_dim);
  c.ints["hidden"] = static_cast<std::int64_t>(cfg.hidden);
  c.ints["feature_dim"] = static_cast<std::int64_t>(cfg.feature_dim);
  c.ints["queue_size"] = static_cast<std::int64_t>(cfg.queue_size);
  c.ints["kl_target"] = cfg.kl_target == ve::KlTarget::ClassCentroid ? 0 : 1;
  c.ints["normalize_contrastive"] = cfg.normalize_contrastive ? 1 : 0;
  c.reals["softplus_sharpness"] = cfg.softplus_sharpness;
  c.reals["lambda"] = cfg.lambda;
  c.reals["momentum"] = cfg.momentum;
  c.reals["temperature"] = cfg.temperature;
  c.reals["learning_rate"] = cfg.learning_rate;
  c.reals["centroid_decay"] = cfg.centroid_decay;
  c.reals["jitter_std"] = cfg.jitter_std;
  c.reals["scale_lo"] = cfg.scale_lo;
  c.reals["scale_hi"] = cfg.scale_hi;

  put_mlp(c, "encoder", m.encoder);
  put_mlp(c, "momentum_encoder", m.momentum_encoder);

  c.tensors["queue.storage"] = m.queue.storage();
  c.ints["queue.head"] = static_cast<std::int64_t>(m.queue.head());
  c.ints["queue.count"] = static_cast<std::int64_t>(m.queue.size());

  c.ints["centroids.dim"] = static_cast<std::int64_t>(m.centroids.dim());
  c.ints["centroids.mode"] = m.centroids.mode() == ve::CentroidMode::Batch ? 0 : 1;
  c.reals["centroids.decay"] = m.centroids.decay();
  for (const auto& [y, entry] : m.centroids.entries()) {
    c.tensors["centroids." + std::to_string(y)] = nd::Tensor::vector(entry.q);
    c.ints["centroids." + std::to_string(y) + ".count"] = static_cast<std::int64_t>(entry.count);
  }
  if (head) c.tensors["head.psi"] = head->psi;
  return c;
}

ve::VeModel to_ve(const Checkpoint& c) {
  expect_kind(c, "ve");
  ve::VeModel m;
  auto& cfg = m.config;
  cfg.input_dim = as_size(c.integer("input_dim"), "input_dim");
  cfg.hidden = as_size(c.integer("hidden"), "hidden");
  cfg.feature_dim = as_size(c.integer("feature_dim"), "feature_dim");
  cfg.queue_size = as_size(c.integer("queue_size"), "queue_size");
  cfg.kl_target = c.integer("kl_target") == 0 ? ve::KlTarget::ClassCentroid : ve::KlTarget::TwoViewMean;
  cfg.normalize_contrastive = c.integer("normalize_contrastive") != 0;
  cfg.softplus_sharpness = c.real("softplus_sharpness");
  cfg.lambda = c.real("lambda");
  cfg.momentum = c.real("momentum");
  cfg.temperature = c.real("temperature");
  cfg.learning_rate = c.real("learning_rate");
  cfg.centroid_decay = c.real("centroid_decay");
  cfg.jitter_std = c.real("jitter_std");
  cfg.scale_lo = c.real("scale_lo");
  cfg.scale_hi = c.real("scale_hi");

  m.encoder = get_mlp(c, "encoder");
  m.momentum_encoder = get_mlp(c, "momentum_encoder");
  m.queue = ve::FeatureQueue::restore(c.tensor("queue.storage"), as_size(c.integer("queue.head"), "queue head"),
                                      as_size(c.integer("queue.count"), "queue count"));
  const auto mode = c.integer("centroids.mode") == 0 ? ve::CentroidMode::Batch : ve::CentroidMode::Ema;
  m.centroids = ve::CentroidTable(as_size(c.integer("centroids.dim"), "centroid dim"), mode, c.real("centroids.decay"));
  for (const auto& [key, t] : c.tensors) {
    if (key.rfind("centroids.", 0) != 0) continue;
    const std::size_t y = std::stoull(key.substr(std::string("centroids.").size()));
    ve::CentroidTable::Entry e;
    e.q = t.values();
    e.count = as_size(c.integer(key + ".count"), "centroid count");
    m.centroids.set_entry(y, std::move(e));
  }
  return m;
}

ve::ClassifierHead head_from(const Checkpoint& c) {
  expect_kind(c, "ve");
  return ve::ClassifierHead{c.tensor("head.psi")};
}

Checkpoint from_denoiser(const diffusion::DenoiserNet& net, const diffusion::Schedule& sched) {
  Checkpoint c;
  c.kind = "denoiser";
  c.ints["data_dim"] = static_cast<std::int64_t>(net.config.data_dim);
  c.ints["classes"] = static_cast<std::int64_t>(net.config.classes);
  c.ints["hidden"] = static_cast<std::int64_t>(net.config.hidden);
  c.ints["time_features"] = static_cast<std::int64_t>(net.config.time_features);
  put_mlp(c, "mlp", net.mlp);
  c.tensors["time_projection"] = net.time_projection;
  c.tensors["class_embedding"] = net.class_embedding;
  c.tensors["schedule.betas"] = nd::Tensor::vector(sched.betas());
  return c;
}

diffusion::DenoiserNet to_denoiser(const Checkpoint& c) {
  expect_kind(c, "denoiser");
  diffusion::DenoiserNet net;
  net.config.data_dim = as_size(c.integer("data_dim"), "data_dim");
  net.config.classes = as_size(c.integer("classes"), "classes");
  net.config.hidden = as_size(c.integer("hidden"), "hidden");
  net.config.time_features = as_size(c.integer("time_features"), "time_features");
  net.mlp = get_mlp(c, "mlp");
  net.time_projection = c.tensor("time_projection");
  net.class_embedding = c.tensor("class_embedding");
  return net;
}

diffusion::Schedule schedule_from(const Checkpoint& c) {
  expect_kind(c, "denoiser");
  return diffusion::Schedule::from_betas(c.tensor("schedule.betas").values());
}

}  // namespace igds::ckpt
